//! Subcommand implementations: thin orchestration over the core crate.
//! Every command resolves its settings once, writes all artifacts under
//! its output directory, and records the resolved settings there.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use trifact_core::gradcheck::{self, GradCheckConfig, Mutation};
use trifact_core::model::{self, RegMode};
use trifact_core::solver::{self, TrainConfig, TrainTrace};
use trifact_core::tensor::{DuplicatePolicy, Entry, SparseTensorCOO};
use trifact_core::{Error, Result, ingest, metrics};

use crate::cli::{CompareArgs, EvalArgs, GradCheckArgs, IngestArgs, SynthArgs, TrainArgs};
use crate::config::{
    FileConfig, RunSpec, parse_delimiter, parse_dims, parse_ratios, resolve, resolve_input_path,
    resolve_required,
};

fn ensure_out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn gather(tensor: &SparseTensorCOO, idxs: &[usize]) -> Vec<Entry> {
    idxs.iter().map(|&idx| tensor.entries()[idx]).collect()
}

pub fn run_ingest(args: IngestArgs, file: &FileConfig) -> Result<()> {
    let data = resolve_input_path(args.data, file, "data")?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let k_slots = resolve(args.k_slots, file, "k-slots", 165)?;
    let delimiter = parse_delimiter(&resolve(args.delimiter, file, "delimiter", ",".to_string())?)?;
    let policy: DuplicatePolicy = resolve(
        args.duplicate_policy.map(|p| p.parse()).transpose()?,
        file,
        "duplicate-policy",
        DuplicatePolicy::Mean,
    )?;

    let records = ingest::read_edge_file(&data, delimiter)?;
    let (tensor, manifest) = ingest::build_tensor(&records, k_slots, policy)?;

    ensure_out_dir(&out)?;
    tensor.write_file(out.join("tensor.tsv"))?;
    manifest.write_files(&out)?;

    let mut spec = RunSpec::new("ingest");
    spec.push("data", data.display());
    spec.push("k-slots", k_slots);
    spec.push("delimiter", if delimiter == '\t' { "tab".into() } else { delimiter.to_string() });
    spec.push("duplicate-policy", policy);
    spec.write(&out)?;

    let shape = tensor.shape();
    println!(
        "ingested {} records into {} entries, shape ({}, {}, {}), density {:.3e}",
        records.len(),
        tensor.len(),
        shape.dim_i,
        shape.dim_j,
        shape.dim_k,
        tensor.density()
    );
    Ok(())
}

pub fn run_synth(args: SynthArgs, file: &FileConfig) -> Result<()> {
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let dims = parse_dims(&resolve(args.dims, file, "dims", "200,200,20".to_string())?)?;
    let true_rank = resolve(args.true_rank, file, "true-rank", 4)?;
    let entries = resolve(args.entries, file, "entries", 50_000)?;
    let noise_sd = resolve(args.noise_sd, file, "noise-sd", 0.0)?;
    let seed = resolve(args.seed, file, "seed", 0)?;

    let (tensor, truth) = metrics::synth_tensor(dims, true_rank, entries, noise_sd, seed)?;

    ensure_out_dir(&out)?;
    tensor.write_file(out.join("tensor.tsv"))?;
    model::save_factors(&truth, seed, out.join("truth.tsv"))?;

    let mut spec = RunSpec::new("synth");
    spec.push("dims", format!("{},{},{}", dims.dim_i, dims.dim_j, dims.dim_k));
    spec.push("true-rank", true_rank);
    spec.push("entries", entries);
    spec.push("noise-sd", noise_sd);
    spec.push("seed", seed);
    spec.write(&out)?;

    println!(
        "synthesized {} entries at density {:.3e} (ground truth saved alongside)",
        tensor.len(),
        tensor.density()
    );
    Ok(())
}

/// Shared resolution for the solver settings of `train` and `compare`.
struct SolverSettings {
    config: TrainConfig,
    ratios: (f64, f64, f64),
}

#[allow(clippy::too_many_arguments)]
fn resolve_solver_settings(
    file: &FileConfig,
    rank: Option<usize>,
    eta: Option<f64>,
    lambda: Option<f64>,
    gamma: Option<f64>,
    epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    split: Option<String>,
    reg_mode: Option<String>,
    init_scale: Option<f64>,
) -> Result<SolverSettings> {
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        rank: resolve(rank, file, "rank", defaults.rank)?,
        eta: resolve(eta, file, "eta", defaults.eta)?,
        lambda: resolve(lambda, file, "lambda", defaults.lambda)?,
        gamma: resolve(gamma, file, "gamma", defaults.gamma)?,
        max_epochs: resolve(epochs, file, "epochs", defaults.max_epochs)?,
        patience: resolve(patience, file, "patience", defaults.patience)?,
        seed: resolve(seed, file, "seed", defaults.seed)?,
        reg_mode: resolve(
            reg_mode.map(|m| m.parse()).transpose()?,
            file,
            "reg-mode",
            RegMode::Exact,
        )?,
        init_scale: resolve(init_scale, file, "init-scale", defaults.init_scale)?,
    };
    config.validate()?;
    let ratios = parse_ratios(&resolve(split, file, "split", "0.7,0.1,0.2".to_string())?)?;
    Ok(SolverSettings { config, ratios })
}

fn push_solver_settings(spec: &mut RunSpec, settings: &SolverSettings) {
    let c = &settings.config;
    spec.push("rank", c.rank);
    spec.push("eta", c.eta);
    spec.push("lambda", c.lambda);
    spec.push("gamma", c.gamma);
    spec.push("epochs", c.max_epochs);
    spec.push("patience", c.patience);
    spec.push("seed", c.seed);
    spec.push("reg-mode", c.reg_mode);
    spec.push("init-scale", c.init_scale);
    spec.push(
        "split",
        format!("{},{},{}", settings.ratios.0, settings.ratios.1, settings.ratios.2),
    );
}

pub fn run_train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let data = resolve_input_path(args.data, file, "data")?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let settings = resolve_solver_settings(
        file,
        args.rank,
        args.eta,
        args.lambda,
        args.gamma,
        args.epochs,
        args.patience,
        args.seed,
        args.split,
        args.reg_mode,
        args.init_scale,
    )?;

    let tensor = SparseTensorCOO::read_file(&data)?;
    let split = tensor.split(settings.ratios, settings.config.seed)?;
    let (state, trace) = solver::train(&tensor, &split, &settings.config)?;

    ensure_out_dir(&out)?;
    model::save_factors(&state, settings.config.seed, out.join("model.tsv"))?;
    trace.write_csv(out.join("trace.csv"))?;

    let mut spec = RunSpec::new("train");
    spec.push("data", data.display());
    push_solver_settings(&mut spec, &settings);
    spec.write(&out)?;

    println!(
        "trained {} epochs (stopped: {}); best validation rmse {} at epoch {}",
        trace.epochs.len(),
        trace.stopped,
        trace.best_val_rmse,
        trace.best_epoch
    );
    Ok(())
}

pub fn run_eval(args: EvalArgs, file: &FileConfig) -> Result<()> {
    let model_path = resolve_input_path(args.model, file, "model")?;
    let data = resolve_input_path(args.data, file, "data")?;
    let split_name: String = resolve(args.on, file, "on", "test".to_string())?;
    let seed = resolve(args.seed, file, "seed", 0)?;
    let ratios = parse_ratios(&resolve(args.split, file, "split", "0.7,0.1,0.2".to_string())?)?;

    let (state, _) = model::load_factors(&model_path)?;
    let tensor = SparseTensorCOO::read_file(&data)?;
    if !state.matches_shape(tensor.shape()) {
        return Err(Error::Config(format!(
            "model dims {:?} do not match tensor shape {:?}",
            state.dims(),
            tensor.shape()
        )));
    }
    let split = tensor.split(ratios, seed)?;
    let idxs = match split_name.as_str() {
        "train" => &split.train,
        "validation" => &split.validation,
        "test" => &split.test,
        other => {
            return Err(Error::Config(format!(
                "unknown split {other:?} (expected train, validation or test)"
            )));
        }
    };
    let report = metrics::evaluate(&state, &gather(&tensor, idxs), &split_name)?;
    println!(
        "{}: {} entries, rmse {}, mae {}",
        report.split_name, report.entry_count, report.rmse, report.mae
    );

    if let Some(out) = args.out.or_else(|| file.get("out").map(PathBuf::from)) {
        ensure_out_dir(&out)?;
        let csv = format!(
            "split,entry_count,rmse,mae\n{},{},{},{}\n",
            report.split_name, report.entry_count, report.rmse, report.mae
        );
        let path = out.join("eval.csv");
        fs::write(&path, csv).map_err(|e| Error::io(path, e))?;

        let mut spec = RunSpec::new("eval");
        spec.push("model", model_path.display());
        spec.push("data", data.display());
        spec.push("on", &split_name);
        spec.push("seed", seed);
        spec.push("split", format!("{},{},{}", ratios.0, ratios.1, ratios.2));
        spec.write(&out)?;
    }
    Ok(())
}

pub fn run_compare(args: CompareArgs, file: &FileConfig) -> Result<()> {
    let data = resolve_input_path(args.data, file, "data")?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let n_seeds: u64 = resolve(args.seeds, file, "seeds", 10)?;
    if n_seeds == 0 {
        return Err(Error::Config("seeds must be at least 1".into()));
    }
    let settings = resolve_solver_settings(
        file,
        args.rank,
        args.eta,
        args.lambda,
        args.gamma,
        args.epochs,
        args.patience,
        args.seed,
        args.split,
        args.reg_mode,
        args.init_scale,
    )?;
    if settings.config.gamma == 0.0 {
        return Err(Error::Config(
            "compare needs a positive gamma for its momentum arm".into(),
        ));
    }

    let tensor = SparseTensorCOO::read_file(&data)?;

    // Each pair shares one seed end to end; the two arms differ only in
    // gamma. Pairs are independent, so they run in parallel.
    let pair_results: Vec<(u64, Result<TrainTrace>, Option<Result<TrainTrace>>)> = (0..n_seeds)
        .into_par_iter()
        .map(|offset| {
            let seed = settings.config.seed.wrapping_add(offset);
            let mut momentum_cfg = settings.config.clone();
            momentum_cfg.seed = seed;
            let mut plain_cfg = momentum_cfg.clone();
            plain_cfg.gamma = 0.0;

            let split = match tensor.split(settings.ratios, seed) {
                Ok(split) => split,
                Err(err) => return (seed, Err(err), None),
            };
            let momentum = solver::train(&tensor, &split, &momentum_cfg).map(|(_, t)| t);
            if momentum.is_err() {
                return (seed, momentum, None);
            }
            let plain = solver::train(&tensor, &split, &plain_cfg).map(|(_, t)| t);
            (seed, momentum, Some(plain))
        })
        .collect();

    ensure_out_dir(&out)?;
    let mut labelled: Vec<(String, TrainTrace)> = Vec::new();
    let mut first_error: Option<Error> = None;
    let mut momentum_faster = 0usize;
    let mut completed_pairs = 0usize;
    for (seed, momentum, plain) in pair_results {
        let mut keep = |label: String, result: Result<TrainTrace>| -> Result<Option<TrainTrace>> {
            match result {
                Ok(trace) => {
                    trace.write_csv(out.join(format!("trace_{label}.csv")))?;
                    labelled.push((label, trace.clone()));
                    Ok(Some(trace))
                }
                Err(err) => {
                    if first_error.is_none() {
                        first_error = Some(err);
                    }
                    Ok(None)
                }
            }
        };
        let momentum = keep(format!("momentum-seed{seed}"), momentum)?;
        let plain = match plain {
            Some(plain) => keep(format!("plain-seed{seed}"), plain)?,
            None => None,
        };
        if let (Some(m), Some(p)) = (momentum, plain) {
            completed_pairs += 1;
            if m.best_epoch < p.best_epoch {
                momentum_faster += 1;
            }
        }
    }

    if let Some(err) = first_error {
        return Err(err);
    }

    let rows = metrics::compare_runs(&labelled);
    metrics::write_comparison_csv(&rows, out.join("compare.csv"))?;

    let mut spec = RunSpec::new("compare");
    spec.push("data", data.display());
    spec.push("seeds", n_seeds);
    push_solver_settings(&mut spec, &settings);
    spec.write(&out)?;

    println!(
        "momentum reached its best epoch sooner in {momentum_faster} of {completed_pairs} paired runs"
    );
    for row in &rows {
        println!("{}: best rmse {} at epoch {}", row.label, row.best_rmse, row.epochs_to_best);
    }
    Ok(())
}

/// Returns false when the check failed; the caller maps that to exit 2.
pub fn run_grad_check(args: GradCheckArgs, file: &FileConfig) -> Result<bool> {
    let cases = resolve(args.cases, file, "cases", 1000)?;
    let seed = resolve(args.seed, file, "seed", 1)?;
    let lambda = match args.lambda {
        Some(v) => Some(v),
        None => file
            .get("lambda")
            .map(|raw| {
                raw.parse::<f64>()
                    .map_err(|e| Error::Config(format!("config key \"lambda\": {e}")))
            })
            .transpose()?,
    };
    let mutation = match resolve(args.mutation, file, "mutation", "none".to_string())?.as_str() {
        "none" => Mutation::None,
        "sign-flip" => Mutation::SignFlip,
        other => {
            return Err(Error::Config(format!(
                "unknown mutation {other:?} (expected \"none\" or \"sign-flip\")"
            )));
        }
    };
    let reg_mode: RegMode = resolve(
        args.reg_mode.map(|m| m.parse()).transpose()?,
        file,
        "reg-mode",
        RegMode::Exact,
    )?;

    let report = gradcheck::check_gradients(&GradCheckConfig {
        cases,
        seed,
        lambda,
        reg_mode,
        mutation,
    })?;
    print!("{report}");

    if let Some(out) = args.out.or_else(|| file.get("out").map(PathBuf::from)) {
        ensure_out_dir(&out)?;
        let path = out.join("gradcheck.txt");
        fs::write(&path, report.to_string()).map_err(|e| Error::io(path, e))?;

        let mut spec = RunSpec::new("grad-check");
        spec.push("cases", cases);
        spec.push("seed", seed);
        if let Some(lambda) = lambda {
            spec.push("lambda", lambda);
        }
        spec.push("reg-mode", reg_mode);
        spec.push("mutation", if mutation == Mutation::None { "none" } else { "sign-flip" });
        spec.write(&out)?;
    }
    Ok(report.passed)
}
