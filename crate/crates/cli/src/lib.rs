//! Library side of the CLI: synthetic suite generation, the benchmark
//! harness, and the command implementations the binary wires to flags.

pub mod bench;
pub mod commands;
pub mod synth;

pub use bench::{run_benchmark, BenchmarkReport, BenchmarkSpec, TestMix};
pub use synth::{generate_synthetic_suite, Category, Scenario, ScenarioState, SuiteManifest};
