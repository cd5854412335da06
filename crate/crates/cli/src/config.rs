//! Layered run settings: a `key = value` defaults file, overridden by
//! command-line flags, resolved into one provenance record per run.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use trifact_core::{Error, Result, TensorShape};

/// Every key any subcommand understands. A shared defaults file may set
/// keys for several subcommands at once; unknown keys are typos.
const KNOWN_KEYS: &[&str] = &[
    "data",
    "out",
    "model",
    "rank",
    "eta",
    "lambda",
    "gamma",
    "epochs",
    "patience",
    "seed",
    "seeds",
    "split",
    "k-slots",
    "reg-mode",
    "duplicate-policy",
    "init-scale",
    "delimiter",
    "dims",
    "true-rank",
    "entries",
    "noise-sd",
    "cases",
    "on",
    "mutation",
];

/// Parsed defaults file.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected \"key = value\", got {line:?}",
                    path.display(),
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{}:{}: unknown key {key:?}",
                    path.display(),
                    idx + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Flag wins over file value wins over default.
pub fn resolve<T>(cli: Option<T>, file: &FileConfig, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    match cli {
        Some(v) => Ok(v),
        None => match file.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| Error::Config(format!("config key {key:?}: {e}"))),
            None => Ok(default),
        },
    }
}

/// A value that has no default and must come from a flag or the file.
pub fn resolve_required<T>(cli: Option<T>, file: &FileConfig, key: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    match cli {
        Some(v) => Ok(v),
        None => match file.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| Error::Config(format!("config key {key:?}: {e}"))),
            None => Err(Error::Config(format!("missing required setting {key:?}"))),
        },
    }
}

/// Required input path; must exist before the command runs.
pub fn resolve_input_path(cli: Option<PathBuf>, file: &FileConfig, key: &str) -> Result<PathBuf> {
    let path: PathBuf = resolve_required(cli, file, key)?;
    if !path.exists() {
        return Err(Error::Config(format!(
            "input path {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

/// `a,b,c` ratio triple.
pub fn parse_ratios(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "split must be three comma-separated ratios, got {text:?}"
        )));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Config(format!("invalid ratio {s:?}")))
    };
    Ok((num(parts[0])?, num(parts[1])?, num(parts[2])?))
}

/// `I,J,K` dimension triple.
pub fn parse_dims(text: &str) -> Result<TensorShape> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "dims must be three comma-separated sizes, got {text:?}"
        )));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Config(format!("invalid dimension {s:?}")))
    };
    TensorShape::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
}

pub fn parse_delimiter(text: &str) -> Result<char> {
    match text {
        "tab" | "\\t" | "\t" => Ok('\t'),
        s if s.chars().count() == 1 => Ok(s.chars().next().unwrap()),
        other => Err(Error::Config(format!(
            "delimiter must be a single character or \"tab\", got {other:?}"
        ))),
    }
}

/// Resolved settings of one run, written next to its outputs.
pub struct RunSpec {
    command: &'static str,
    entries: Vec<(String, String)>,
}

impl RunSpec {
    pub fn new(command: &'static str) -> Self {
        RunSpec {
            command,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("command = {}\n", self.command);
        for (key, value) in &self.entries {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("runspec.conf");
        fs::write(&path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
