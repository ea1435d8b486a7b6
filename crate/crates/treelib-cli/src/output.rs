//! File formats emitted by a run: the JSON tree, the DOT topology, the
//! convergence and partition CSVs, and the summary record.
//!
//! CSV floats are printed with 17 significant digits so runs can be
//! audited bit-for-bit; JSON floats use the shortest representation that
//! round-trips exactly.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use treelib_core::tree_library::{HistoryEntry, LibraryTree, NodeIndex, ReductionBackend, TreeKind};

/// Serialized library tree; carries everything needed to reconstruct the
/// leaf spaces (snapshot training indices in append order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub config_hash: String,
    /// "plain", "ycart", or "mbased".
    pub kind: String,
    pub problem: String,
    /// How parameters map to leaves: "whole-domain", "dyadic", or
    /// "nearest-training".
    pub assignment: String,
    pub epsilon: f64,
    pub n_max: Option<usize>,
    pub parameter_box: Vec<[f64; 2]>,
    pub converged: bool,
    pub depth: usize,
    pub nodes: Vec<NodeFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeFile {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cart_levels: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cart_cells: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<Vec<u8>>,
    pub subset: Vec<usize>,
    pub dim: usize,
    pub snapshot_ids: Vec<usize>,
    pub error: f64,
    pub converged: bool,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub children: Option<[usize; 2]>,
}

impl TreeFile {
    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.children.is_none())
            .map(|n| n.id)
            .collect()
    }

    pub fn from_library<B: ReductionBackend>(
        tree: &LibraryTree<B::Space>,
        problem: &str,
        config_hash: &str,
    ) -> Self {
        let (kind, assignment) = match tree.kind {
            TreeKind::CartSplit => ("ycart", "dyadic"),
            TreeKind::MBased => ("mbased", "nearest-training"),
        };
        TreeFile {
            config_hash: config_hash.to_owned(),
            kind: kind.into(),
            problem: problem.into(),
            assignment: assignment.into(),
            epsilon: tree.epsilon,
            n_max: tree.n_max,
            parameter_box: tree
                .parameter_box
                .bounds()
                .iter()
                .map(|&(lo, hi)| [lo, hi])
                .collect(),
            converged: tree.converged,
            depth: tree.depth,
            nodes: tree
                .nodes
                .iter()
                .map(|n| {
                    let (cart_levels, cart_cells, path) = match &n.index {
                        NodeIndex::Cart { levels, cells } => {
                            (Some(levels.clone()), Some(cells.clone()), None)
                        }
                        NodeIndex::Binary { path } => (None, None, Some(path.clone())),
                    };
                    NodeFile {
                        id: n.id,
                        parent: n.parent,
                        depth: n.depth,
                        cart_levels,
                        cart_cells,
                        path,
                        subset: n.subset.clone(),
                        dim: n.dim,
                        snapshot_ids: n.snapshot_ids.clone(),
                        error: n.error,
                        converged: n.converged,
                        failed: n.failed,
                        note: n.note.clone(),
                        children: n.children,
                    }
                })
                .collect(),
        }
    }
}

/// Table-1-style aggregate of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub problem: String,
    pub algorithm: String,
    pub epsilon: f64,
    pub n_max: Option<usize>,
    pub training_size: usize,
    pub leaf_count: usize,
    pub depth: usize,
    /// Sorted distinct leaf dimensions.
    pub dims: Vec<usize>,
    /// Leaves per dimension, aligned with `dims` (sums to `leaf_count`).
    pub dim_counts: Vec<usize>,
    pub snapshot_count: usize,
    pub converged: bool,
    pub max_error: f64,
    pub seed: u64,
    /// Value of the thread-count environment variable, when set. Sweeps
    /// run sequentially either way, so results never depend on it.
    pub threads: Option<String>,
    pub config_hash: String,
    pub runtime_seconds: f64,
}

/// Per-node sweep histories feeding convergence.csv.
#[derive(Debug, Clone)]
pub struct ConvergenceLog {
    /// `(node id, history)` in node order.
    pub entries: Vec<(usize, Vec<HistoryEntry>)>,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_convergence_csv(
    path: &Path,
    log: &ConvergenceLog,
    points: &[Vec<f64>],
) -> std::io::Result<()> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut out = String::new();
    out.push_str("node_id,iteration,dim,max_error,selected_index");
    for d in 0..dim {
        let _ = write!(out, ",selected_y{d}");
    }
    out.push('\n');
    for (node_id, history) in &log.entries {
        for (iteration, entry) in history.iter().enumerate() {
            let _ = write!(
                out,
                "{node_id},{iteration},{},{}",
                entry.dim,
                fmt_float(entry.error)
            );
            match entry.selected {
                Some(i) => {
                    let _ = write!(out, ",{i}");
                    for v in &points[i] {
                        let _ = write!(out, ",{}", fmt_float(*v));
                    }
                }
                None => {
                    out.push(',');
                    for _ in 0..dim {
                        out.push(',');
                    }
                }
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)
}

/// Writes the partition and checks it is one: every training index in
/// exactly one leaf.
pub fn write_partition_csv(
    path: &Path,
    tree: &TreeFile,
    points: &[Vec<f64>],
) -> std::io::Result<()> {
    let mut owner = vec![usize::MAX; points.len()];
    for &leaf in &tree.leaves() {
        for &i in &tree.nodes[leaf].subset {
            assert_eq!(
                owner[i],
                usize::MAX,
                "partition violation: training index {i} in two leaves"
            );
            owner[i] = leaf;
        }
    }
    assert!(
        owner.iter().all(|&l| l != usize::MAX),
        "partition violation: unassigned training index"
    );
    let dim = points.first().map_or(0, |p| p.len());
    let mut out = String::new();
    out.push_str("training_index");
    for d in 0..dim {
        let _ = write!(out, ",y{d}");
    }
    out.push_str(",leaf_id\n");
    for (i, p) in points.iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in p {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        let _ = writeln!(out, ",{}", owner[i]);
    }
    std::fs::write(path, out)
}

pub fn write_tree_json(path: &Path, tree: &TreeFile) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(tree).expect("tree serializes");
    text.push('\n');
    std::fs::write(path, text)
}

pub fn write_tree_dot(path: &Path, tree: &TreeFile) -> std::io::Result<()> {
    let mut out = String::from("digraph library {\n  node [shape=box];\n");
    for n in &tree.nodes {
        let shape = if n.children.is_none() {
            ", style=filled, fillcolor=lightgrey"
        } else {
            ""
        };
        let flag = if n.failed {
            " FAILED"
        } else if !n.converged && n.children.is_none() {
            " (not converged)"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "  n{} [label=\"{} | dim={} | err={:.3e}{}\"{}];",
            n.id, n.id, n.dim, n.error, flag, shape
        );
    }
    for n in &tree.nodes {
        if let Some([a, b]) = n.children {
            let _ = writeln!(out, "  n{} -> n{};", n.id, a);
            let _ = writeln!(out, "  n{} -> n{};", n.id, b);
        }
    }
    out.push_str("}\n");
    std::fs::write(path, out)
}

pub fn write_summary_json(path: &Path, summary: &SummaryRecord) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text)
}

/// Distinct sorted dims with counts, from per-leaf dims.
pub fn dim_histogram(leaf_dims: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut sorted = leaf_dims.to_vec();
    sorted.sort_unstable();
    let mut dims = Vec::new();
    let mut counts = Vec::new();
    for d in sorted {
        if dims.last() == Some(&d) {
            *counts.last_mut().expect("nonempty") += 1;
        } else {
            dims.push(d);
            counts.push(1);
        }
    }
    (dims, counts)
}
