//! Benchmarks for the pathwit pipeline live in `benches/`.
