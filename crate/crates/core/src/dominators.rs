//! Immediate-dominator computation over execution graphs.
//!
//! `compute_dominators` is the iterative dataflow algorithm over reverse
//! postorder (Cooper, Harvey and Kennedy's "A Simple, Fast Dominance
//! Algorithm"); it handles arbitrary reachable flowgraphs, cycles included.
//! `brute_force_dominators` recomputes the same mapping from the definition
//! (d dominates s iff deleting d disconnects s from the entry) and exists
//! solely as an independent oracle for small graphs.

use crate::graph::{ExecutionGraph, NodeId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DominatorError {
    #[error("node {0:?} is not reachable from the initial state")]
    Unreachable(NodeId),
    #[error("graph has {nodes} nodes; the brute-force oracle is capped at {max}")]
    TooLargeForOracle { nodes: usize, max: usize },
}

/// Map from node to immediate dominator; the initial node maps to itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominatorInfo {
    pub idom: BTreeMap<NodeId, NodeId>,
}

impl DominatorInfo {
    /// The full dominator set of `n`, recovered by walking the idom chain
    /// (includes `n` itself and the initial node).
    pub fn dominator_set(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = vec![n];
        let mut cur = n;
        while let Some(&parent) = self.idom.get(&cur) {
            if parent == cur {
                break;
            }
            out.push(parent);
            cur = parent;
        }
        out
    }
}

/// Iterative dataflow computation of immediate dominators.
///
/// Every node must be reachable from `g.initial`; an unreachable node is an
/// error because dominance is undefined for it.
pub fn compute_dominators(g: &ExecutionGraph) -> Result<DominatorInfo, DominatorError> {
    let n = g.nodes.len();
    let succs = g.successor_table();
    let preds = g.predecessor_table();
    let root = g.initial.0;

    // Postorder DFS from the root.
    let mut postorder = Vec::with_capacity(n);
    let mut post_index = vec![usize::MAX; n];
    {
        let mut visited = vec![false; n];
        let mut stack = vec![(root, 0usize)];
        visited[root] = true;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < succs[node].len() {
                let s = succs[node][*next];
                *next += 1;
                if !visited[s] {
                    visited[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post_index[node] = postorder.len();
                postorder.push(node);
                stack.pop();
            }
        }
        if let Some(unreached) = visited.iter().position(|&v| !v) {
            return Err(DominatorError::Unreachable(NodeId(unreached)));
        }
    }

    // idom in postorder-index space; undefined entries are usize::MAX.
    const UNDEFINED: usize = usize::MAX;
    let mut idom = vec![UNDEFINED; n];
    idom[post_index[root]] = post_index[root];

    let intersect = |idom: &[usize], mut a: usize, mut b: usize| -> usize {
        while a != b {
            while a < b {
                a = idom[a];
            }
            while b < a {
                b = idom[b];
            }
        }
        a
    };

    let mut changed = true;
    while changed {
        changed = false;
        // Reverse postorder, skipping the root.
        for &node in postorder.iter().rev() {
            if node == root {
                continue;
            }
            let mut new_idom = UNDEFINED;
            for &p in &preds[node] {
                let pi = post_index[p];
                if idom[pi] == UNDEFINED {
                    continue;
                }
                new_idom = if new_idom == UNDEFINED {
                    pi
                } else {
                    intersect(&idom, pi, new_idom)
                };
            }
            debug_assert_ne!(new_idom, UNDEFINED, "reachable node with no processed pred");
            let ni = post_index[node];
            if idom[ni] != new_idom {
                idom[ni] = new_idom;
                changed = true;
            }
        }
    }

    let mut map = BTreeMap::new();
    for node in 0..n {
        map.insert(NodeId(node), NodeId(postorder[idom[post_index[node]]]));
    }
    Ok(DominatorInfo { idom: map })
}

/// Definition-based oracle: `d` dominates `s` (for `d != s`) iff removing
/// `d` makes `s` unreachable from the initial node. The immediate dominator
/// of `s` is its strict dominator that every other strict dominator of `s`
/// dominates. Guarded to small graphs; quadratic reachability passes.
pub fn brute_force_dominators(g: &ExecutionGraph) -> Result<DominatorInfo, DominatorError> {
    const MAX_NODES: usize = 16;
    let n = g.nodes.len();
    if n > MAX_NODES {
        return Err(DominatorError::TooLargeForOracle {
            nodes: n,
            max: MAX_NODES,
        });
    }
    let succs = g.successor_table();
    let root = g.initial.0;

    let reachable_without = |removed: Option<usize>| -> Vec<bool> {
        let mut seen = vec![false; n];
        if removed == Some(root) {
            return seen;
        }
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &v in &succs[u] {
                if Some(v) != removed && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };

    let base = reachable_without(None);
    if let Some(unreached) = base.iter().position(|&r| !r) {
        return Err(DominatorError::Unreachable(NodeId(unreached)));
    }

    // strict_dom[s] = set of d != s dominating s.
    let mut strict_dom: Vec<Vec<usize>> = vec![Vec::new(); n];
    for d in 0..n {
        let seen = reachable_without(Some(d));
        for (s, &seen_s) in seen.iter().enumerate() {
            if s != d && !seen_s {
                strict_dom[s].push(d);
            }
        }
    }

    let dominates = |d: usize, s: usize| -> bool { d == s || strict_dom[s].contains(&d) };

    let mut map = BTreeMap::new();
    map.insert(NodeId(root), NodeId(root));
    for s in 0..n {
        if s == root {
            continue;
        }
        let candidates: Vec<usize> = strict_dom[s]
            .iter()
            .copied()
            .filter(|&d| strict_dom[s].iter().all(|&other| dominates(other, d)))
            .collect();
        assert_eq!(
            candidates.len(),
            1,
            "node {s} must have exactly one immediate dominator, found {candidates:?}"
        );
        map.insert(NodeId(s), NodeId(candidates[0]));
    }
    Ok(DominatorInfo { idom: map })
}
