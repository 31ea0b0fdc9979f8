//! Learns a ground-truth model of "essential" states from a small set of
//! passing execution traces and validates new traces against it.
//!
//! The pipeline has three stages:
//!
//! 1. Each trace (an ordered list of screenshots plus the actions between
//!    them) becomes a prefix-tree acceptor, a simple path graph.
//! 2. The paths are merged into a single execution graph using tiered
//!    state-equivalence detection (byte identity, visual metrics, then a
//!    semantic judge), and the dominator tree of that graph is extracted.
//!    Nodes of the dominator tree are the states every successful run must
//!    visit; everything else (loading screens, transient popups) is optional.
//! 3. A new trace passes if it contains the dominator-tree states as an
//!    ordered subsequence and ends in a recognized terminal state.
//!
//! See the `model` module for the persisted artifact and the `validation`
//! module for verdict semantics.

pub mod dominators;
pub mod equivalence;
pub mod graph;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod trace;
pub mod validation;

#[cfg(test)]
pub(crate) mod testutil;

pub use equivalence::{
    states_equivalent, tier1_compare, ClassifierPolicy, Decision, EquivalenceClassifier,
    EquivalenceThresholds, EquivalenceVerdict,
};
pub use graph::{
    construct_pta, extract_dominator_tree, merge_ptas, DominatorTree, ExecutionGraph, NodeId,
    PtaGraph,
};
pub use judge::{JudgeConfig, JudgeMode, MockJudge, RemoteJudge, SemanticJudge, SemanticJudgment};
pub use metrics::VisualMetrics;
pub use model::{learn_model, Model};
pub use trace::{
    load_trace, trace_digest_sequence, ActionRecord, Digest, ImageRef, StateObservation, Trace,
    TraceRole,
};
pub use validation::{
    classify_root_cause, compute_coverage, topological_order, topological_subsequence_match,
    validate_execution, MatchOptions, RootCause, RootCauseKind, ValidationResult, Verdict,
};
pub use dominators::{brute_force_dominators, compute_dominators, DominatorInfo};
