//! Benchmark-only crate; see `benches/factorization.rs`.
