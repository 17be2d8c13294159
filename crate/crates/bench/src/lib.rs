//! Criterion benchmarks for `condkit-core`; see `benches/`.
