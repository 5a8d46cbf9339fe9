//! Benchmark crate: see `benches/pipeline.rs` for the criterion targets.
