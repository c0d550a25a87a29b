//! Benchmark-only package; see `benches/closed_loop.rs`.
