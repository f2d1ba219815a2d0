//! Microbenchmark-only crate; see `benches/checks.rs`.
