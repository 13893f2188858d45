//! Criterion benchmarks for the solvers and the attractor fit; run with
//! `cargo bench -p cubicwave-bench`.
