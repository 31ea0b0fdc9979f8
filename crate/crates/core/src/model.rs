//! The persisted model: dominator tree, execution-graph summary, classifier
//! class table and threshold snapshot, versioned and byte-stable.
//!
//! Identical inputs produce byte-identical model files: all maps are sorted,
//! node order is the graph's deterministic creation order, and the
//! representative image of every essential node is embedded as base64 PNG so
//! a model validates without the original training directories.

use crate::equivalence::{EquivalenceClassifier, EquivalenceThresholds};
use crate::graph::{
    ClassMember, DomTreeNode, DominatorTree, ExecutionGraph, GraphNode, NodeId,
};
use crate::trace::{Digest, StateObservation};
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read model {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write model {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse model: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("failed to read representative image for node {node}: {source}")]
    RepresentativeImage {
        node: usize,
        source: std::io::Error,
    },
    #[error("model is internally inconsistent: {0}")]
    Inconsistent(String),
}

/// A node of the serialized execution-graph summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: usize,
    /// Label of the representative observation, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub digest: Digest,
    /// Representative frame as base64 PNG.
    pub image_png_base64: String,
    pub is_terminal: bool,
    pub members: Vec<ClassMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub from: usize,
    pub to: usize,
    /// Multiset of action kinds observed on this edge.
    pub actions: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: Vec<NodeSummary>,
    pub edges: Vec<EdgeSummary>,
    pub initial: usize,
    pub terminals: Vec<usize>,
}

/// Dominator tree in graph-node-id space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub nodes: Vec<usize>,
    /// (immediate dominator, node) pairs.
    pub edges: Vec<(usize, usize)>,
    pub initial: usize,
    pub terminals: Vec<usize>,
    pub topo_order: Vec<usize>,
}

/// The persisted artifact produced by learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u32,
    pub thresholds: EquivalenceThresholds,
    pub graph: GraphSummary,
    pub tree: TreeSummary,
    /// Every training observation digest, mapped to its class node id.
    pub classes: BTreeMap<String, usize>,
}

impl Model {
    /// Assembles the persistable model from the learning outputs, embedding
    /// each essential node's representative PNG.
    pub fn assemble(
        graph: &ExecutionGraph,
        tree: &DominatorTree,
        thresholds: &EquivalenceThresholds,
    ) -> Result<Self, ModelError> {
        let engine = base64::engine::general_purpose::STANDARD;
        let mut nodes = Vec::with_capacity(graph.nodes.len());
        for n in &graph.nodes {
            let bytes = n
                .representative
                .image
                .read_bytes()
                .map_err(|source| ModelError::RepresentativeImage {
                    node: n.id.0,
                    source,
                })?;
            nodes.push(NodeSummary {
                id: n.id.0,
                label: n.representative.label.clone(),
                digest: n.representative.digest,
                image_png_base64: engine.encode(bytes),
                is_terminal: n.is_terminal,
                members: n.members.clone(),
            });
        }
        let edges = graph
            .edges
            .iter()
            .map(|(&(u, v), kinds)| EdgeSummary {
                from: u.0,
                to: v.0,
                actions: kinds.clone(),
            })
            .collect();

        let mut classes = BTreeMap::new();
        for n in &graph.nodes {
            for m in &n.members {
                classes.insert(m.digest.to_hex(), n.id.0);
            }
        }

        Ok(Model {
            format_version: MODEL_FORMAT_VERSION,
            thresholds: *thresholds,
            graph: GraphSummary {
                nodes,
                edges,
                initial: graph.initial.0,
                terminals: graph.terminals.iter().map(|t| t.0).collect(),
            },
            tree: TreeSummary {
                nodes: tree.nodes.iter().map(|n| n.graph_node.0).collect(),
                edges: tree.edge_pairs().iter().map(|&(p, c)| (p.0, c.0)).collect(),
                initial: tree.nodes[tree.initial].graph_node.0,
                terminals: tree
                    .terminals
                    .iter()
                    .map(|&t| tree.nodes[t].graph_node.0)
                    .collect(),
                topo_order: tree
                    .topo_order
                    .iter()
                    .map(|&i| tree.nodes[i].graph_node.0)
                    .collect(),
            },
            classes,
        })
    }

    /// Serializes with sorted keys and a stable layout; identical models
    /// give identical bytes.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let bytes = self.to_json_bytes()?;
        std::fs::write(path, bytes).map_err(|source| ModelError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        // Check the version before strict parsing so an old file gets the
        // clear error rather than a schema one.
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: probe.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model: Model = serde_json::from_str(text)?;
        model.check_consistency()?;
        Ok(model)
    }

    fn check_consistency(&self) -> Result<(), ModelError> {
        let n = self.graph.nodes.len();
        for (i, node) in self.graph.nodes.iter().enumerate() {
            if node.id != i {
                return Err(ModelError::Inconsistent(format!(
                    "node {i} has id {}",
                    node.id
                )));
            }
        }
        for e in &self.graph.edges {
            if e.from >= n || e.to >= n {
                return Err(ModelError::Inconsistent(format!(
                    "edge ({}, {}) out of range",
                    e.from, e.to
                )));
            }
        }
        if self.graph.initial >= n {
            return Err(ModelError::Inconsistent("initial out of range".into()));
        }
        for &t in self.tree.nodes.iter().chain(&self.tree.terminals) {
            if t >= n {
                return Err(ModelError::Inconsistent(format!(
                    "tree references node {t} outside the graph"
                )));
            }
        }
        if self.tree.topo_order.len() != self.tree.nodes.len() {
            return Err(ModelError::Inconsistent(
                "topo order does not cover the tree".into(),
            ));
        }
        Ok(())
    }

    /// Rebuilds the in-memory execution graph (bytes-backed representatives).
    pub fn execution_graph(&self) -> Result<ExecutionGraph, ModelError> {
        let engine = base64::engine::general_purpose::STANDARD;
        let mut nodes = Vec::with_capacity(self.graph.nodes.len());
        for n in &self.graph.nodes {
            let bytes = engine
                .decode(&n.image_png_base64)
                .map_err(|e| ModelError::Inconsistent(format!("node {}: bad base64: {e}", n.id)))?;
            let rep_index = n.members.first().map(|m| m.index).unwrap_or(0);
            nodes.push(GraphNode {
                id: NodeId(n.id),
                representative: StateObservation {
                    index: rep_index,
                    image: crate::trace::ImageRef::Bytes(std::sync::Arc::new(bytes)),
                    label: n.label.clone(),
                    digest: n.digest,
                },
                members: n.members.clone(),
                is_terminal: n.is_terminal,
            });
        }
        let mut edges = BTreeMap::new();
        for e in &self.graph.edges {
            edges.insert((NodeId(e.from), NodeId(e.to)), e.actions.clone());
        }
        Ok(ExecutionGraph {
            nodes,
            edges,
            initial: NodeId(self.graph.initial),
            terminals: self.graph.terminals.iter().map(|&t| NodeId(t)).collect(),
        })
    }

    /// Rebuilds the dominator tree with embedded representatives.
    pub fn dominator_tree(&self) -> Result<DominatorTree, ModelError> {
        let graph = self.execution_graph()?;
        let local: BTreeMap<usize, usize> = self
            .tree
            .nodes
            .iter()
            .enumerate()
            .map(|(local_idx, &graph_id)| (graph_id, local_idx))
            .collect();
        let parent_of: BTreeMap<usize, usize> =
            self.tree.edges.iter().map(|&(p, c)| (c, p)).collect();

        let mut nodes = Vec::with_capacity(self.tree.nodes.len());
        for &graph_id in &self.tree.nodes {
            let gn = graph.node(NodeId(graph_id));
            nodes.push(DomTreeNode {
                graph_node: NodeId(graph_id),
                representative: gn.representative.clone(),
                is_terminal: gn.is_terminal,
                parent: parent_of.get(&graph_id).map(|p| local[p]),
            });
        }
        let initial = *local
            .get(&self.tree.initial)
            .ok_or_else(|| ModelError::Inconsistent("initial missing from tree".into()))?;
        let terminals = self
            .tree
            .terminals
            .iter()
            .map(|t| {
                local
                    .get(t)
                    .copied()
                    .ok_or_else(|| ModelError::Inconsistent("terminal missing from tree".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let topo_order = self
            .tree
            .topo_order
            .iter()
            .map(|t| {
                local
                    .get(t)
                    .copied()
                    .ok_or_else(|| ModelError::Inconsistent("topo node missing from tree".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(DominatorTree {
            nodes,
            initial,
            terminals,
            topo_order,
        })
    }

    /// Seeds a fresh classifier with the learned classes and representative
    /// images, so byte-identical test frames resolve without metric work.
    pub fn seed_classifier(&self, cls: &EquivalenceClassifier) -> Result<(), ModelError> {
        let mut by_class: BTreeMap<usize, Vec<Digest>> = BTreeMap::new();
        for (hex, &class) in &self.classes {
            let digest = Digest::from_hex(hex)
                .ok_or_else(|| ModelError::Inconsistent(format!("bad digest {hex}")))?;
            by_class.entry(class).or_default().push(digest);
        }
        for digests in by_class.values() {
            cls.seed_class(digests);
        }
        Ok(())
    }

    /// Graph node ids that are not part of the dominator tree: states seen
    /// in training that no successful run is required to visit.
    pub fn optional_nodes(&self) -> Vec<usize> {
        let essential: std::collections::BTreeSet<usize> =
            self.tree.nodes.iter().copied().collect();
        (0..self.graph.nodes.len())
            .filter(|i| !essential.contains(i))
            .collect()
    }
}

/// End-to-end learning: PTAs, merge, dominators, tree, assembled model.
pub fn learn_model(
    traces: &[crate::trace::Trace],
    cls: &EquivalenceClassifier,
) -> Result<(Model, ExecutionGraph, DominatorTree), crate::graph::GraphError> {
    let ptas: Vec<_> = traces.iter().map(crate::graph::construct_pta).collect();
    let graph = crate::graph::merge_ptas(&ptas, cls)?;
    let dom = crate::dominators::compute_dominators(&graph)?;
    let tree = crate::graph::extract_dominator_tree(&graph, &dom);
    let model = Model::assemble(&graph, &tree, cls.thresholds())
        .map_err(|e| crate::graph::GraphError::Model(e.to_string()))?;
    Ok((model, graph, tree))
}
