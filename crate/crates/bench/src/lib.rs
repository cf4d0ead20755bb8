//! Benchmarks for the solver crates live under `benches/`.
