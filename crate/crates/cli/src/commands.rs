//! Command implementations behind the CLI subcommands. Kept in the library
//! so the test suites can drive them directly.

use crate::bench::{run_benchmark, BenchmarkSpec};
use crate::synth::resolve_manifest_path;
use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};
use tracedom_core::equivalence::{ClassifierPolicy, EquivalenceClassifier, EquivalenceThresholds};
use tracedom_core::judge::{JudgeConfig, JudgeMode, MockJudge, RemoteJudge, SemanticJudge};
use tracedom_core::model::{learn_model, Model};
use tracedom_core::trace::load_trace;
use tracedom_core::validation::{
    classify_root_cause, validate_execution, MatchOptions, ValidationResult, Verdict,
};

pub fn build_judge(mode: JudgeMode) -> Result<Box<dyn SemanticJudge>> {
    match mode {
        JudgeMode::Mock => Ok(Box::new(MockJudge::default())),
        JudgeMode::Remote => {
            let cfg = JudgeConfig::remote_from_env()
                .context("remote judge needs JUDGE_ENDPOINT (and optionally JUDGE_TOKEN_VAR)")?;
            Ok(Box::new(RemoteJudge::new(cfg)?))
        }
    }
}

fn load_thresholds(path: Option<&Path>) -> Result<EquivalenceThresholds> {
    match path {
        Some(p) => Ok(EquivalenceThresholds::from_file(p)
            .with_context(|| format!("loading thresholds {}", p.display()))?),
        None => Ok(EquivalenceThresholds::default()),
    }
}

/// Learns a model from training trace directories and writes it out.
/// Warns outside the recommended 2..=10 trace range but proceeds with one.
pub fn cmd_learn(
    trace_dirs: &[PathBuf],
    out: &Path,
    thresholds_path: Option<&Path>,
    judge_mode: JudgeMode,
) -> Result<()> {
    if trace_dirs.is_empty() {
        bail!("learning needs at least one training trace");
    }
    if !(2..=10).contains(&trace_dirs.len()) {
        log::warn!(
            "{} training trace(s) given; 2 to 10 are recommended for a trustworthy model",
            trace_dirs.len()
        );
        eprintln!(
            "warning: {} training trace(s) given; 2 to 10 are recommended",
            trace_dirs.len()
        );
    }

    let thresholds = load_thresholds(thresholds_path)?;
    let mut traces = Vec::with_capacity(trace_dirs.len());
    for dir in trace_dirs {
        let manifest = resolve_manifest_path(dir);
        traces.push(
            load_trace(&manifest)
                .with_context(|| format!("loading trace {}", manifest.display()))?,
        );
    }

    let classifier =
        EquivalenceClassifier::new(thresholds, build_judge(judge_mode)?, ClassifierPolicy::learning())?;
    let (model, graph, tree) = learn_model(&traces, &classifier)?;
    model.save(out)?;

    println!(
        "Learned model from {} traces: {} states observed, {} essential.",
        traces.len(),
        graph.nodes.len(),
        tree.nodes.len()
    );
    println!("Essential states in order:");
    for (i, &idx) in tree.topo_order.iter().enumerate() {
        let node = &tree.nodes[idx];
        let marker = if node.is_terminal { " (terminal)" } else { "" };
        println!("  {}. {}{}", i + 1, tree.display_name(idx), marker);
    }
    let optional = model.optional_nodes();
    if !optional.is_empty() {
        let names: Vec<String> = optional
            .iter()
            .map(|&i| graph.node(tracedom_core::NodeId(i)).display_name())
            .collect();
        println!("Optional states: {}", names.join(", "));
    }
    println!("Model written to {}", out.display());
    Ok(())
}

/// Validates one test trace against a model. Returns the result; the binary
/// maps PASS/FAIL to exit codes 0/1.
pub fn cmd_validate(
    model_path: &Path,
    trace_dir: &Path,
    threshold: f64,
    json_out: Option<&Path>,
    judge_mode: JudgeMode,
) -> Result<ValidationResult> {
    let model = Model::load(model_path)?;
    let tree = model.dominator_tree()?;
    let graph = model.execution_graph()?;

    let manifest = resolve_manifest_path(trace_dir);
    let trace =
        load_trace(&manifest).with_context(|| format!("loading trace {}", manifest.display()))?;

    let classifier = EquivalenceClassifier::new(
        model.thresholds,
        build_judge(judge_mode)?,
        ClassifierPolicy::validation(),
    )?;
    model.seed_classifier(&classifier)?;

    let opts = MatchOptions {
        coverage_threshold: threshold,
    };
    let mut result = validate_execution(&trace, &tree, &opts, &classifier)?;
    if result.verdict == Verdict::Fail {
        result.root_cause = Some(classify_root_cause(&trace, &tree, &graph, &result)?);
    }

    print_validation(&result);
    if let Some(path) = json_out {
        let mut bytes = serde_json::to_vec_pretty(&result)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)
            .with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(result)
}

fn print_validation(result: &ValidationResult) {
    match result.verdict {
        Verdict::Pass => println!("PASS ({:.1}% coverage)", result.coverage),
        Verdict::Fail => println!("FAIL ({:.1}% coverage)", result.coverage),
    }
    println!("{}", result.explanation);
    if !result.matched.is_empty() {
        println!("Matched states:");
        for m in &result.matched {
            println!("  {} at test index {}", m.ref_state, m.test_index);
        }
    }
    if !result.missing.is_empty() {
        println!("Missing states: {}", result.missing.join(", "));
    }
    println!("Terminal match: {}", result.terminal_match);
    if let Some(rc) = &result.root_cause {
        let kind = match rc.classification {
            tracedom_core::RootCauseKind::AgentIssue => "agent issue",
            tracedom_core::RootCauseKind::ProductBug => "product bug",
        };
        println!("Root cause: {kind} (divergence at test index {})", rc.divergence_index);
        println!("  {}", rc.rationale);
    }
}

/// Prints essential states, branch points and optional states of a model.
pub fn cmd_inspect(model_path: &Path) -> Result<()> {
    let model = Model::load(model_path)?;
    let tree = model.dominator_tree()?;
    let graph = model.execution_graph()?;

    println!(
        "Model: {} observed states, {} essential, {} terminals.",
        graph.nodes.len(),
        tree.nodes.len(),
        tree.terminals.len()
    );
    println!("Essential states (topological order):");
    for (i, &idx) in tree.topo_order.iter().enumerate() {
        let node = &tree.nodes[idx];
        let marker = if node.is_terminal { " (terminal)" } else { "" };
        println!("  {}. {}{}", i + 1, tree.display_name(idx), marker);
    }

    let succs = graph.successor_table();
    let mut any_branch = false;
    for node in &graph.nodes {
        if succs[node.id.0].len() > 1 {
            if !any_branch {
                println!("Branches:");
                any_branch = true;
            }
            let mut names: Vec<String> = succs[node.id.0]
                .iter()
                .map(|&s| graph.node(tracedom_core::NodeId(s)).display_name())
                .collect();
            names.sort();
            println!("  {} -> {}", node.display_name(), names.join(" | "));
        }
    }
    if !any_branch {
        println!("Branches: none");
    }

    let optional = model.optional_nodes();
    if optional.is_empty() {
        println!("Optional states: none");
    } else {
        let names: Vec<String> = optional
            .iter()
            .map(|&i| graph.node(tracedom_core::NodeId(i)).display_name())
            .collect();
        println!("Optional states: {}", names.join(", "));
    }
    Ok(())
}

/// Generates and runs the synthetic benchmark, writing the report JSON.
pub fn cmd_bench(spec_path: Option<&Path>, report_out: &Path) -> Result<()> {
    let spec = match spec_path {
        Some(p) => BenchmarkSpec::from_file(p)?,
        None => BenchmarkSpec::default(),
    };
    let work = tempfile::tempdir().context("creating benchmark working directory")?;
    let report = run_benchmark(&spec, work.path())?;

    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    std::fs::write(report_out, bytes)
        .with_context(|| format!("writing report {}", report_out.display()))?;

    println!(
        "Benchmark complete: {} training traces, {} test traces.",
        report.n_training, report.n_tests
    );
    println!("Detection per category:");
    for (category, d) in &report.detection {
        println!("  {category}: {}/{}", d.detected, d.total);
    }
    let v = &report.validation;
    println!(
        "Validation vs ground truth: accuracy {:.1}%, precision {:.1}%, recall {:.1}%, F1 {:.1}%",
        v.accuracy * 100.0,
        v.precision * 100.0,
        v.recall * 100.0,
        v.f1 * 100.0
    );
    let s = &report.self_assessment;
    println!(
        "Agent self-assessment:      accuracy {:.1}%, precision {:.1}%, recall {:.1}%, F1 {:.1}%",
        s.accuracy * 100.0,
        s.precision * 100.0,
        s.recall * 100.0,
        s.f1 * 100.0
    );
    for (category, rc) in &report.root_cause {
        println!("Root-cause accuracy ({category}): {}/{}", rc.correct, rc.total);
    }
    println!("Report written to {}", report_out.display());
    Ok(())
}
