//! Validation of test traces against a learned dominator tree.
//!
//! The test trace passes when the reference states appear in it, in order,
//! with arbitrary extra states interleaved, and its final state matches a
//! learned terminal. Matching is a greedy leftmost scan: for each reference
//! state we take the first equivalent unconsumed test state after the
//! previous match. Greedy is complete for subsequence containment and its
//! failures are easy to explain, which is the point of the verdict.
//!
//! Trees with several terminals are validated path by path; the reported
//! result is the path with maximal coverage (ties prefer a path whose own
//! terminal matched, then smaller terminal digest).

use crate::equivalence::{EquivalenceClassifier, EquivalenceError};
use crate::graph::{DominatorTree, ExecutionGraph};
use crate::trace::{StateObservation, Trace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("test trace is empty")]
    EmptyTestTrace,
    #[error("reference state list is empty; the model has no states")]
    EmptyReference,
    #[error("coverage threshold {0} is outside [0, 100]")]
    InvalidThreshold(f64),
    #[error("root-cause classification requires a FAIL verdict")]
    RootCauseOnPass,
    #[error("validation result carries no diagnostics; classify in the same process as validate_execution")]
    MissingDiagnostics,
    #[error(transparent)]
    Equivalence(#[from] EquivalenceError),
}

/// Options for one validation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Coverage threshold θ in percent; PASS requires coverage >= θ.
    pub coverage_threshold: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            coverage_threshold: 100.0,
        }
    }
}

impl MatchOptions {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(0.0..=100.0).contains(&self.coverage_threshold) {
            return Err(ValidationError::InvalidThreshold(self.coverage_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

/// A reference state that matched, and where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedState {
    pub ref_state: String,
    pub test_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootCauseKind {
    AgentIssue,
    ProductBug,
}

/// Heuristic classification of why a FAIL happened: the agent went
/// off-script, or the product answered a known action with the wrong state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCause {
    pub classification: RootCauseKind,
    pub rationale: String,
    /// Test-trace index of the first deviation from the model.
    pub divergence_index: usize,
}

/// Where the matcher ended up, kept out of the serialized report so the
/// root-cause pass can reuse it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationDiagnostics {
    /// Tree-local indices of the selected root-to-terminal path.
    pub path: Vec<usize>,
    /// (position in path, test index) for each match, ascending in both.
    pub matched_pairs: Vec<(usize, usize)>,
    /// Path positions that went unmatched.
    pub missing_positions: Vec<usize>,
}

/// The validation report. Serializes to the wire format
/// `{verdict, coverage, matched, missing, terminal_match, explanation,
/// root_cause?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub verdict: Verdict,
    pub coverage: f64,
    pub matched: Vec<MatchedState>,
    pub missing: Vec<String>,
    pub terminal_match: bool,
    pub explanation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_cause: Option<RootCause>,
    #[serde(skip)]
    pub diagnostics: Option<ValidationDiagnostics>,
}

/// The canonical topological order of the tree's reference states
/// (tree-local indices): parents before descendants, ties broken by
/// representative digest.
pub fn topological_order(d: &DominatorTree) -> Vec<usize> {
    d.topo_order.clone()
}

/// Matched (ref index, test index) pairs and missing ref indices.
pub type MatchOutcome = (Vec<(usize, usize)>, Vec<usize>);

/// Greedy leftmost ordered matching of `s_ref` inside `s_test`.
///
/// Returns (matched (ref index, test index) pairs, missing ref indices).
/// Extra test states are skipped over; a reference state that cannot be
/// found after the previous match goes to missing and the scan continues
/// from the same cursor.
pub fn topological_subsequence_match(
    s_test: &[StateObservation],
    s_ref: &[&StateObservation],
    cls: &EquivalenceClassifier,
) -> Result<MatchOutcome, EquivalenceError> {
    let mut matched = Vec::new();
    let mut missing = Vec::new();
    let mut cursor = 0usize;
    for (ri, reference) in s_ref.iter().enumerate() {
        let mut found = None;
        for (ti, test_state) in s_test.iter().enumerate().skip(cursor) {
            if cls.states_equivalent(test_state, reference)? {
                found = Some(ti);
                break;
            }
        }
        match found {
            Some(ti) => {
                matched.push((ri, ti));
                cursor = ti + 1;
            }
            None => missing.push(ri),
        }
    }
    Ok((matched, missing))
}

/// Coverage in percent: matched / total * 100 (exact IEEE division).
pub fn compute_coverage(matched: usize, total: usize) -> Result<f64, ValidationError> {
    if total == 0 {
        return Err(ValidationError::EmptyReference);
    }
    Ok(matched as f64 / total as f64 * 100.0)
}

/// Validates a test trace against the dominator tree.
///
/// PASS iff the selected path's coverage meets the threshold and the final
/// test state is equivalent to some learned terminal.
pub fn validate_execution(
    t_test: &Trace,
    d: &DominatorTree,
    opts: &MatchOptions,
    cls: &EquivalenceClassifier,
) -> Result<ValidationResult, ValidationError> {
    opts.validate()?;
    let s_test = &t_test.states;
    let last = s_test.last().ok_or(ValidationError::EmptyTestTrace)?;
    if d.nodes.is_empty() {
        return Err(ValidationError::EmptyReference);
    }

    // Terminal match: the final test state is equivalent to any terminal.
    let mut matched_terminals = Vec::new();
    for &t in &d.terminals {
        if cls.states_equivalent(last, &d.nodes[t].representative)? {
            matched_terminals.push(t);
        }
    }
    let terminal_match = !matched_terminals.is_empty();

    struct PathOutcome {
        path: Vec<usize>,
        matched: Vec<(usize, usize)>,
        missing: Vec<usize>,
        coverage: f64,
        own_terminal_matched: bool,
    }

    let mut best: Option<PathOutcome> = None;
    for &terminal in &d.terminals {
        let path = d.root_to_terminal_path(terminal);
        let refs: Vec<&StateObservation> =
            path.iter().map(|&i| &d.nodes[i].representative).collect();
        let (matched, missing) = topological_subsequence_match(s_test, &refs, cls)?;
        let coverage = compute_coverage(matched.len(), refs.len())?;
        let outcome = PathOutcome {
            path,
            matched,
            missing,
            coverage,
            own_terminal_matched: matched_terminals.contains(&terminal),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (outcome.coverage, outcome.own_terminal_matched)
                    > (b.coverage, b.own_terminal_matched)
            }
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("tree has at least one terminal");

    let matched: Vec<MatchedState> = best
        .matched
        .iter()
        .map(|&(ri, ti)| MatchedState {
            ref_state: d.display_name(best.path[ri]),
            test_index: ti,
        })
        .collect();
    let missing: Vec<String> = best
        .missing
        .iter()
        .map(|&ri| d.display_name(best.path[ri]))
        .collect();

    let verdict = if best.coverage >= opts.coverage_threshold && terminal_match {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let explanation = match verdict {
        Verdict::Pass => format!(
            "All required states matched in order ({} of {}). Coverage: {:.1}%",
            matched.len(),
            best.path.len(),
            best.coverage
        ),
        Verdict::Fail => {
            let listed = if missing.is_empty() {
                "(none)".to_string()
            } else {
                missing.join(", ")
            };
            let mut s = format!(
                "Missing essential states: {listed}. Coverage: {:.1}%",
                best.coverage
            );
            if !terminal_match {
                s.push_str(". Final state does not match any learned terminal");
            }
            s
        }
    };

    Ok(ValidationResult {
        verdict,
        coverage: best.coverage,
        matched,
        missing,
        terminal_match,
        explanation,
        root_cause: None,
        diagnostics: Some(ValidationDiagnostics {
            path: best.path,
            matched_pairs: best.matched,
            missing_positions: best.missing,
        }),
    })
}

/// Heuristic root-cause classification for a FAIL verdict.
///
/// Anchored at the last matched state before the first miss: if the action
/// leaving that state has a kind seen in training there, the product
/// responded wrongly to a correct action (product bug); if the action kind
/// was never observed there, the agent went off-script (agent issue).
pub fn classify_root_cause(
    t_test: &Trace,
    d: &DominatorTree,
    g: &ExecutionGraph,
    result: &ValidationResult,
) -> Result<RootCause, ValidationError> {
    if result.verdict == Verdict::Pass {
        return Err(ValidationError::RootCauseOnPass);
    }
    let diag = result
        .diagnostics
        .as_ref()
        .ok_or(ValidationError::MissingDiagnostics)?;

    let first_missing = diag.missing_positions.iter().copied().min();

    // The anchor is the last matched path position before the first missing
    // one (or the last match overall when only the terminal check failed).
    let anchor = match first_missing {
        Some(p) => diag
            .matched_pairs
            .iter()
            .rev()
            .find(|&&(pos, _)| pos < p)
            .copied(),
        None => diag.matched_pairs.last().copied(),
    };

    let (anchor_node, anchor_test_idx) = match anchor {
        Some((pos, ti)) => (diag.path[pos], ti),
        // Even the initial state went unmatched: anchor at the root.
        None => (d.initial, 0),
    };
    let anchor_name = d.display_name(anchor_node);
    let trained_kinds = g.outgoing_action_kinds(d.nodes[anchor_node].graph_node);
    let divergence_index = match anchor {
        Some((_, ti)) => (ti + 1).min(t_test.len() - 1),
        None => 0,
    };

    let next_expectation = first_missing
        .map(|p| d.display_name(diag.path[p]))
        .unwrap_or_else(|| "a learned terminal".to_string());

    let Some(action) = t_test.actions.get(anchor_test_idx) else {
        return Ok(RootCause {
            classification: RootCauseKind::AgentIssue,
            rationale: format!(
                "trace ended at {anchor_name:?} (test index {anchor_test_idx}) without acting; \
                 {next_expectation} was never reached"
            ),
            divergence_index,
        });
    };

    if trained_kinds.contains(&action.kind) {
        Ok(RootCause {
            classification: RootCauseKind::ProductBug,
            rationale: format!(
                "action {:?} at {anchor_name:?} matches the training signature but led to an \
                 unrecognized state instead of {next_expectation} (divergence at test index \
                 {divergence_index})",
                action.kind
            ),
            divergence_index,
        })
    } else {
        Ok(RootCause {
            classification: RootCauseKind::AgentIssue,
            rationale: format!(
                "action {:?} at {anchor_name:?} was never observed in training (expected one \
                 of {:?}); the agent went off-script at test index {divergence_index}",
                action.kind,
                trained_kinds.iter().cloned().collect::<Vec<_>>()
            ),
            divergence_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dominators::compute_dominators;
    use crate::graph::{construct_pta, extract_dominator_tree, merge_ptas};
    use crate::testutil::{
        learning_classifier, obs, trace_of, trace_with_role, validation_classifier,
    };
    use crate::trace::TraceRole;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn learn_tree(traces: &[&Trace]) -> (DominatorTree, ExecutionGraph) {
        let cls = learning_classifier();
        let ptas: Vec<_> = traces.iter().map(|t| construct_pta(t)).collect();
        let g = merge_ptas(&ptas, &cls).unwrap();
        let dom = compute_dominators(&g).unwrap();
        let tree = extract_dominator_tree(&g, &dom);
        (tree, g)
    }

    fn names_of(d: &DominatorTree, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| d.display_name(i)).collect()
    }

    #[test]
    fn topological_order_of_path_tree_is_the_path() {
        let t = trace_of("t", &["s0", "a", "b"], 1);
        let (tree, _) = learn_tree(&[&t]);
        let order = topological_order(&tree);
        assert_eq!(names_of(&tree, &order), vec!["s0", "a", "b"]);
    }

    #[test]
    fn topological_order_branching_is_valid_and_stable() {
        let t1 = trace_of("t1", &["s0", "left", "l-end"], 1);
        let t2 = trace_of("t2", &["s0", "right", "r-end"], 1);
        let (tree, _) = learn_tree(&[&t1, &t2]);
        let order = topological_order(&tree);
        assert_eq!(order.len(), 5);

        // Every node appears after its parent (valid topological order).
        let position: std::collections::HashMap<usize, usize> =
            order.iter().enumerate().map(|(pos, &n)| (n, pos)).collect();
        for (i, node) in tree.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                assert!(position[&p] < position[&i], "parent after child");
            }
        }

        // Children of the root are ordered by representative digest.
        let kids = tree.children(tree.initial);
        let first_kid_pos = position[&kids[0]];
        let second_kid_pos = position[&kids[1]];
        assert!(first_kid_pos < second_kid_pos);

        // Stable across recomputation.
        assert_eq!(order, topological_order(&tree));
    }

    #[test]
    fn greedy_match_tolerates_interleaved_extras() {
        // S_ref = A,B,C,D; S_test = A,X,B,Y,Z,C,D: everything matches.
        let refs_owned: Vec<_> = ["A", "B", "C", "D"]
            .iter()
            .enumerate()
            .map(|(i, n)| obs(n, 0, i))
            .collect();
        let refs: Vec<&StateObservation> = refs_owned.iter().collect();
        let test: Vec<_> = ["A", "X", "B", "Y", "Z", "C", "D"]
            .iter()
            .enumerate()
            .map(|(i, n)| obs(n, 0, i))
            .collect();
        let cls = validation_classifier();
        let (matched, missing) = topological_subsequence_match(&test, &refs, &cls).unwrap();
        assert_eq!(matched, vec![(0, 0), (1, 2), (2, 5), (3, 6)]);
        assert!(missing.is_empty());
    }

    #[test]
    fn greedy_match_identical_sequences() {
        let refs_owned: Vec<_> = ["A", "B", "C"]
            .iter()
            .enumerate()
            .map(|(i, n)| obs(n, 0, i))
            .collect();
        let refs: Vec<&StateObservation> = refs_owned.iter().collect();
        let cls = validation_classifier();
        let (matched, missing) =
            topological_subsequence_match(&refs_owned, &refs, &cls).unwrap();
        assert_eq!(matched, vec![(0, 0), (1, 1), (2, 2)]);
        assert!(missing.is_empty());
    }

    /// Exhaustive ordered matcher over label equality: maximum number of
    /// reference states embeddable in order, and whether a given assignment
    /// is realizable. Independent check on the greedy scan.
    fn exhaustive_max_match(test: &[&str], refs: &[&str]) -> usize {
        fn go(test: &[&str], refs: &[&str], ti: usize, ri: usize) -> usize {
            if ri == refs.len() || ti == test.len() {
                return 0;
            }
            let skip_test = go(test, refs, ti + 1, ri);
            let skip_ref = go(test, refs, ti, ri + 1);
            let take = if test[ti] == refs[ri] {
                1 + go(test, refs, ti + 1, ri + 1)
            } else {
                0
            };
            skip_test.max(skip_ref).max(take)
        }
        go(test, refs, 0, 0)
    }

    #[test]
    fn greedy_match_out_of_order_states() {
        // S_ref = A,B,C,D; S_test = A,C,B,D: greedy finds B after A at index
        // 2, then cannot find C after it; C is the single miss.
        let refs_owned: Vec<_> = ["A", "B", "C", "D"]
            .iter()
            .enumerate()
            .map(|(i, n)| obs(n, 0, i))
            .collect();
        let refs: Vec<&StateObservation> = refs_owned.iter().collect();
        let test: Vec<_> = ["A", "C", "B", "D"]
            .iter()
            .enumerate()
            .map(|(i, n)| obs(n, 0, i))
            .collect();
        let cls = validation_classifier();
        let (matched, missing) = topological_subsequence_match(&test, &refs, &cls).unwrap();
        assert_eq!(matched, vec![(0, 0), (1, 2), (3, 3)]);
        assert_eq!(missing, vec![2]);

        // The exhaustive matcher agrees that only three states fit in order.
        assert_eq!(
            exhaustive_max_match(&["A", "C", "B", "D"], &["A", "B", "C", "D"]),
            3
        );
    }

    #[test]
    fn coverage_formula_is_exact() {
        assert_eq!(compute_coverage(4, 4).unwrap(), 100.0);
        assert_eq!(compute_coverage(3, 4).unwrap(), 75.0);
        assert_eq!(compute_coverage(0, 5).unwrap(), 0.0);
        assert!(matches!(
            compute_coverage(0, 0),
            Err(ValidationError::EmptyReference)
        ));
    }

    const FLOW: [&str; 6] = ["startmenu", "launch", "loading", "mainwindow", "searchdialog", "results"];
    const FLOW_NO_LOADING: [&str; 5] = ["startmenu", "launch", "mainwindow", "searchdialog", "results"];

    fn learned_flow() -> &'static (DominatorTree, ExecutionGraph) {
        static MODEL: OnceLock<(DominatorTree, ExecutionGraph)> = OnceLock::new();
        MODEL.get_or_init(|| {
            let t1 = trace_of("t1", &FLOW, 1);
            let t2 = trace_of("t2", &FLOW_NO_LOADING, 2);
            let t3 = trace_of("t3", &FLOW, 3);
            learn_tree(&[&t1, &t2, &t3])
        })
    }

    #[test]
    fn trace_without_optional_state_passes() {
        let (tree, _) = learned_flow();
        let test = trace_with_role("probe", &FLOW_NO_LOADING, 0, TraceRole::Test);
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.coverage, 100.0);
        assert!(r.terminal_match);
        assert!(r.missing.is_empty());
    }

    #[test]
    fn skipping_essential_state_fails_with_it_reported() {
        let (tree, _) = learned_flow();
        let test = trace_with_role(
            "probe",
            &["startmenu", "launch", "searchdialog", "results"],
            0,
            TraceRole::Test,
        );
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.missing, vec!["mainwindow".to_string()]);
        assert_eq!(r.coverage, 80.0);
        assert!(r.terminal_match, "results still matches the terminal");
        assert!(r.explanation.contains("Missing essential states: mainwindow"));
    }

    #[test]
    fn noise_states_do_not_affect_pass() {
        let (tree, _) = learned_flow();
        let noisy = [
            "startmenu", "popup1", "launch", "loading", "mainwindow", "popup2", "popup3",
            "searchdialog", "results",
        ];
        let test = trace_with_role("probe", &noisy, 0, TraceRole::Test);
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.coverage, 100.0);
    }

    #[test]
    fn wrong_terminal_fails_even_at_full_coverage() {
        let (tree, _) = learned_flow();
        let test = trace_with_role(
            "probe",
            &["startmenu", "launch", "mainwindow", "searchdialog", "results", "crash"],
            0,
            TraceRole::Test,
        );
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.coverage, 100.0);
        assert!(!r.terminal_match);
        assert!(r.missing.is_empty());
        assert!(r.explanation.contains("does not match any learned terminal"));
    }

    #[test]
    fn threshold_below_100_tolerates_a_miss() {
        let (tree, _) = learned_flow();
        let test = trace_with_role(
            "probe",
            &["startmenu", "launch", "searchdialog", "results"],
            0,
            TraceRole::Test,
        );
        let cls = validation_classifier();
        let opts = MatchOptions {
            coverage_threshold: 75.0,
        };
        let r = validate_execution(&test, tree, &opts, &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "80% coverage clears θ=75");
    }

    #[test]
    fn deleting_each_essential_state_is_detected_exactly(){
        let (tree, _) = learned_flow();
        let cls = validation_classifier();
        for skip in FLOW_NO_LOADING {
            let names: Vec<&str> = FLOW_NO_LOADING.iter().copied().filter(|&n| n != skip).collect();
            let test = trace_with_role("probe", &names, 0, TraceRole::Test);
            let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
            assert_eq!(r.verdict, Verdict::Fail, "dropping {skip} must fail");
            assert_eq!(r.missing, vec![skip.to_string()], "exactly {skip} missing");
        }
    }

    #[test]
    fn multi_terminal_tree_selects_best_path() {
        let t1 = trace_of("t1", &["s0", "left", "l-end"], 1);
        let t2 = trace_of("t2", &["s0", "right", "r-end"], 1);
        let (tree, _) = learn_tree(&[&t1, &t2]);
        let cls = validation_classifier();

        let test = trace_with_role("probe", &["s0", "right", "r-end"], 0, TraceRole::Test);
        let r = validate_execution(&test, &tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.coverage, 100.0);
        let matched_names: Vec<&str> = r.matched.iter().map(|m| m.ref_state.as_str()).collect();
        assert_eq!(matched_names, vec!["s0", "right", "r-end"]);
    }

    #[test]
    fn results_are_deterministic() {
        let (tree, _) = learned_flow();
        let test = trace_with_role("probe", &FLOW_NO_LOADING, 2, TraceRole::Test);
        let run = || {
            let cls = validation_classifier();
            validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn agent_going_off_script_is_an_agent_issue() {
        let (tree, g) = learned_flow();
        // Correct prefix, then a never-trained action kind into detour states.
        let mut test = trace_with_role(
            "probe",
            &["startmenu", "launch", "detour-a", "detour-b"],
            0,
            TraceRole::Test,
        );
        test.actions[1].kind = "misclick".into();
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let rc = classify_root_cause(&test, tree, g, &r).unwrap();
        assert_eq!(rc.classification, RootCauseKind::AgentIssue);
        assert_eq!(rc.divergence_index, 2);
        assert!(rc.rationale.contains("misclick"));
    }

    #[test]
    fn correct_action_into_wrong_state_is_a_product_bug() {
        let (tree, g) = learned_flow();
        // The trained "click" kind leaves launch, but the next state is wrong.
        let test = trace_with_role(
            "probe",
            &["startmenu", "launch", "brokenscreen"],
            0,
            TraceRole::Test,
        );
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let rc = classify_root_cause(&test, tree, g, &r).unwrap();
        assert_eq!(rc.classification, RootCauseKind::ProductBug);
        assert_eq!(rc.divergence_index, 2);
    }

    #[test]
    fn root_cause_rejects_pass_results() {
        let (tree, g) = learned_flow();
        let test = trace_with_role("probe", &FLOW_NO_LOADING, 0, TraceRole::Test);
        let cls = validation_classifier();
        let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(matches!(
            classify_root_cause(&test, tree, g, &r),
            Err(ValidationError::RootCauseOnPass)
        ));
    }

    #[test]
    fn invalid_threshold_is_rejected() {
        let (tree, _) = learned_flow();
        let test = trace_with_role("probe", &FLOW_NO_LOADING, 0, TraceRole::Test);
        let cls = validation_classifier();
        let opts = MatchOptions {
            coverage_threshold: 150.0,
        };
        assert!(matches!(
            validate_execution(&test, tree, &opts, &cls),
            Err(ValidationError::InvalidThreshold(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Matched test indices are strictly increasing and coverage stays
        /// within bounds, with coverage == 100 iff nothing is missing.
        #[test]
        fn matched_indices_increase_and_coverage_bounds(
            extras in proptest::collection::vec(0usize..8, 0..6),
            drop_mask in 0u8..32,
        ) {
            let (tree, _) = learned_flow();
            let cls = validation_classifier();

            // Build a test sequence from the essential flow with random
            // extras, dropping essential states per the mask.
            let extra_names = ["x1", "x2", "x3", "x4", "popup1", "popup2", "detour-a", "loading"];
            let mut names: Vec<&str> = Vec::new();
            for (i, n) in FLOW_NO_LOADING.iter().enumerate() {
                if drop_mask & (1 << i) == 0 {
                    names.push(n);
                }
                if let Some(&e) = extras.get(i) {
                    names.push(extra_names[e]);
                }
            }
            if names.is_empty() {
                names.push("x1");
            }
            let test = trace_with_role("probe", &names, 0, TraceRole::Test);
            let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();

            let indices: Vec<usize> = r.matched.iter().map(|m| m.test_index).collect();
            prop_assert!(indices.windows(2).all(|w| w[0] < w[1]), "indices {indices:?}");
            prop_assert!((0.0..=100.0).contains(&r.coverage));
            prop_assert_eq!(r.coverage == 100.0, r.missing.is_empty());
            prop_assert_eq!(r.matched.len() + r.missing.len(), 5);
        }

        /// Inserting states strictly between matched positions of a passing
        /// trace (terminal unchanged) preserves PASS.
        #[test]
        fn insertion_between_matches_preserves_pass(
            inserts in proptest::collection::vec((1usize..5, 0usize..8), 0..5),
        ) {
            let (tree, _) = learned_flow();
            let cls = validation_classifier();
            let pool = ["x1", "x2", "popup1", "loading", "startmenu", "launch", "mainwindow", "searchdialog"];

            let mut names: Vec<&str> = FLOW_NO_LOADING.to_vec();
            // Insert between positions, never before the first or after the
            // last; later inserts shift earlier offsets, which is fine --
            // positions stay strictly interior.
            for &(pos, which) in &inserts {
                let at = pos.min(names.len() - 1);
                names.insert(at, pool[which]);
            }
            let test = trace_with_role("probe", &names, 0, TraceRole::Test);
            let r = validate_execution(&test, tree, &MatchOptions::default(), &cls).unwrap();
            prop_assert_eq!(r.verdict, Verdict::Pass, "names {:?} -> {}", names, r.explanation);
            prop_assert_eq!(r.coverage, 100.0);
        }
    }
}
