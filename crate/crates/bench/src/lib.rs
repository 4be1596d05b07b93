//! Benchmarks for the flow field and the integrator live in `benches/`.
