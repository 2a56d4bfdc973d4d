//! Benchmarks live in `benches/`; this crate only hosts shared fixtures.

pub mod fixtures;
