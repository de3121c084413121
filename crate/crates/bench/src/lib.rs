//! Criterion benchmarks for `hqc-core`; see `benches/pipeline.rs`.
