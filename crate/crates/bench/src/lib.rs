//! Criterion benchmarks for edda-core; see `benches/`.
