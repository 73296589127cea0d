//! Criterion benchmarks for the operator kernels live under `benches/`.
