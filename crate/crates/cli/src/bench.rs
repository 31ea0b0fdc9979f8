//! The benchmark harness: generate a synthetic suite, learn from its
//! training split, validate every test trace, and report detection counts,
//! pass/fail confusion metrics (ours and the simulated agent
//! self-assessment) and root-cause accuracy.

use crate::synth::{self, Category, Scenario, SuiteManifest};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use tracedom_core::equivalence::{ClassifierPolicy, EquivalenceClassifier, EquivalenceThresholds};
use tracedom_core::judge::MockJudge;
use tracedom_core::model::learn_model;
use tracedom_core::trace::load_trace;
use tracedom_core::validation::{
    classify_root_cause, validate_execution, MatchOptions, RootCauseKind, Verdict,
};

/// Test-trace counts per category. `false_success` and `missed_bug` are the
/// numbers of failing and passing traces whose simulated self-report lies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestMix {
    pub passing: u32,
    pub false_success: u32,
    pub agent_issue: u32,
    pub product_bug: u32,
    pub missed_bug: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n_training: u32,
    pub test_mix: TestMix,
    pub seed: u64,
    #[serde(default = "Scenario::default_flow")]
    pub scenario: Scenario,
}

impl Default for BenchmarkSpec {
    /// Mirrors the default case study: 3 training traces and 25 test traces
    /// (11 passing, 3 agent issues, 11 product bugs), with one lying
    /// self-report on each side.
    fn default() -> Self {
        BenchmarkSpec {
            n_training: 3,
            test_mix: TestMix {
                passing: 11,
                false_success: 1,
                agent_issue: 3,
                product_bug: 11,
                missed_bug: 1,
            },
            seed: 42,
            scenario: Scenario::default_flow(),
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_training < 2 {
            bail!("n_training must be at least 2 (got {})", self.n_training);
        }
        self.scenario.validate()?;
        if self.test_mix.false_success > self.test_mix.agent_issue + self.test_mix.product_bug {
            bail!("false_success exceeds the number of failing traces");
        }
        if self.test_mix.missed_bug > self.test_mix.passing {
            bail!("missed_bug exceeds the number of passing traces");
        }
        if self.test_mix.agent_issue > 0 && self.scenario.agent_mutation_points().is_empty() {
            bail!("scenario has no eligible agent-issue mutation points");
        }
        if self.test_mix.product_bug > 0 && self.scenario.product_mutation_points().is_empty() {
            bail!("scenario has no eligible product-bug mutation points");
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading benchmark spec {}", path.display()))?;
        let spec: BenchmarkSpec = serde_json::from_str(&text)
            .with_context(|| format!("parsing benchmark spec {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Pass/fail confusion metrics with "failure detected" as the positive
/// class. When a denominator is empty the metric reports 0 with its
/// `*_defined` flag cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub true_positives: u32,
    pub false_positives: u32,
    pub true_negatives: u32,
    pub false_negatives: u32,
    pub accuracy: f64,
    pub precision: f64,
    pub precision_defined: bool,
    pub recall: f64,
    pub recall_defined: bool,
    pub f1: f64,
}

impl ConfusionMetrics {
    pub fn from_counts(tp: u32, fp: u32, tn: u32, fn_: u32) -> Self {
        let total = tp + fp + tn + fn_;
        let accuracy = if total > 0 {
            f64::from(tp + tn) / f64::from(total)
        } else {
            0.0
        };
        let precision_defined = tp + fp > 0;
        let precision = if precision_defined {
            f64::from(tp) / f64::from(tp + fp)
        } else {
            0.0
        };
        let recall_defined = tp + fn_ > 0;
        let recall = if recall_defined {
            f64::from(tp) / f64::from(tp + fn_)
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ConfusionMetrics {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
            accuracy,
            precision,
            precision_defined,
            recall,
            recall_defined,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryDetection {
    pub total: u32,
    pub detected: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCauseAccuracy {
    pub total: u32,
    pub correct: u32,
}

/// Outcome of one test trace in the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub id: String,
    pub category: Category,
    pub ground_truth_pass: bool,
    pub self_report_pass: bool,
    pub verdict: Verdict,
    pub coverage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_cause: Option<RootCauseKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub n_training: u32,
    pub n_tests: u32,
    /// Detection per category. Passing and missed-bug traces count as
    /// detected when validation PASSes them; the failing categories when it
    /// FAILs them.
    pub detection: BTreeMap<String, CategoryDetection>,
    /// Our validator against ground truth.
    pub validation: ConfusionMetrics,
    /// The simulated agent self-assessment against ground truth.
    pub self_assessment: ConfusionMetrics,
    /// Heuristic root-cause accuracy over the failing categories.
    pub root_cause: BTreeMap<String, RootCauseAccuracy>,
    pub per_trace: Vec<TraceOutcome>,
}

fn mock_classifier(policy: ClassifierPolicy) -> Result<EquivalenceClassifier> {
    Ok(EquivalenceClassifier::new(
        EquivalenceThresholds::default(),
        Box::new(MockJudge::default()),
        policy,
    )?)
}

/// Runs the whole closed loop inside `work_dir`: generate, learn, validate,
/// tally. Identical specs give identical reports.
pub fn run_benchmark(spec: &BenchmarkSpec, work_dir: &Path) -> Result<BenchmarkReport> {
    spec.validate()?;
    let suite = synth::generate_synthetic_suite(spec, work_dir)?;
    run_benchmark_on_suite(spec, &suite, work_dir)
}

/// Benchmark over an already-generated suite.
pub fn run_benchmark_on_suite(
    spec: &BenchmarkSpec,
    suite: &SuiteManifest,
    suite_dir: &Path,
) -> Result<BenchmarkReport> {
    let training: Vec<_> = suite
        .training
        .iter()
        .map(|dir| load_trace(&suite_dir.join(dir).join("trace.json")))
        .collect::<Result<_, _>>()?;

    let learn_cls = mock_classifier(ClassifierPolicy::learning())?;
    let (model, graph, tree) = learn_model(&training, &learn_cls)?;

    let mut per_trace = Vec::with_capacity(suite.tests.len());
    let mut detection: BTreeMap<String, CategoryDetection> = BTreeMap::new();
    let mut root_cause: BTreeMap<String, RootCauseAccuracy> = BTreeMap::new();
    let (mut tp, mut fp, mut tn, mut fn_) = (0u32, 0u32, 0u32, 0u32);
    let (mut cua_tp, mut cua_fp, mut cua_tn, mut cua_fn) = (0u32, 0u32, 0u32, 0u32);

    for test in &suite.tests {
        let trace = load_trace(&suite_dir.join(&test.dir).join("trace.json"))?;
        let cls = mock_classifier(ClassifierPolicy::validation())?;
        model.seed_classifier(&cls)?;
        let result = validate_execution(&trace, &tree, &MatchOptions::default(), &cls)?;

        let cause = if result.verdict == Verdict::Fail {
            Some(classify_root_cause(&trace, &tree, &graph, &result)?)
        } else {
            None
        };

        // Detection bookkeeping: a verdict "detects" its category when it
        // agrees with ground truth.
        let verdict_pass = result.verdict == Verdict::Pass;
        let agrees = verdict_pass == test.ground_truth_pass;
        let category_key = match test.category {
            Category::Passing => "passing",
            Category::AgentIssue => "agent_issue",
            Category::ProductBug => "product_bug",
        };
        let entry = detection
            .entry(category_key.to_string())
            .or_insert(CategoryDetection {
                total: 0,
                detected: 0,
            });
        entry.total += 1;
        entry.detected += u32::from(agrees);
        // Overlapping report-mismatch categories.
        if test.self_report_pass != test.ground_truth_pass {
            let key = if test.ground_truth_pass {
                "missed_bug"
            } else {
                "false_success"
            };
            let entry = detection.entry(key.to_string()).or_insert(CategoryDetection {
                total: 0,
                detected: 0,
            });
            entry.total += 1;
            entry.detected += u32::from(agrees);
        }

        match (test.ground_truth_pass, verdict_pass) {
            (false, false) => tp += 1,
            (true, false) => fp += 1,
            (true, true) => tn += 1,
            (false, true) => fn_ += 1,
        }
        match (test.ground_truth_pass, test.self_report_pass) {
            (false, false) => cua_tp += 1,
            (true, false) => cua_fp += 1,
            (true, true) => cua_tn += 1,
            (false, true) => cua_fn += 1,
        }

        if !test.ground_truth_pass {
            if let Some(cause) = &cause {
                let expected = match test.category {
                    Category::AgentIssue => RootCauseKind::AgentIssue,
                    Category::ProductBug => RootCauseKind::ProductBug,
                    Category::Passing => unreachable!("failing trace with passing category"),
                };
                let entry = root_cause
                    .entry(category_key.to_string())
                    .or_insert(RootCauseAccuracy {
                        total: 0,
                        correct: 0,
                    });
                entry.total += 1;
                entry.correct += u32::from(cause.classification == expected);
            }
        }

        per_trace.push(TraceOutcome {
            id: test.id.clone(),
            category: test.category,
            ground_truth_pass: test.ground_truth_pass,
            self_report_pass: test.self_report_pass,
            verdict: result.verdict,
            coverage: result.coverage,
            root_cause: cause.map(|c| c.classification),
        });
    }

    Ok(BenchmarkReport {
        seed: spec.seed,
        n_training: spec.n_training,
        n_tests: suite.tests.len() as u32,
        detection,
        validation: ConfusionMetrics::from_counts(tp, fp, tn, fn_),
        self_assessment: ConfusionMetrics::from_counts(cua_tp, cua_fp, cua_tn, cua_fn),
        root_cause,
        per_trace,
    })
}
