//! Criterion benchmarks for the simulation and analysis hot paths live in
//! `benches/`. This library is intentionally empty.
