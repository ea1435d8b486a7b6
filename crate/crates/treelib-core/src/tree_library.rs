//! Binary-tree libraries of local reduced spaces.
//!
//! Two splitting strategies produce a partition of the training set, each
//! cell carrying its own reduced space:
//!
//! * parameter-domain splitting (`y_cart_split`): dyadic bisection of the
//!   parameter box, choosing the split direction that minimizes the worse
//!   of the two child errors;
//! * solution-driven splitting (`m_based_split`): a restarted greedy adds a
//!   fixed number of snapshots, the last two selections seed the children,
//!   and every training element follows whichever child approximates it
//!   better.
//!
//! Both work through [`ReductionBackend`], so the same trees serve the
//! Hilbert reduced-basis setting and the Wasserstein barycentric setting.

use crate::fem1d::UniformMesh1D;
use crate::hilbert_rb::{GreedyConfig, HilbertGreedyDriver, ReducedBasis};
use crate::math::sqrt;
use crate::problems::ParameterBox;
use crate::rng::derive_seed;
use crate::wasserstein1d::{
    gram_matrix, project_quadratic, projection_data, quantile_transform, BarycentricGreedyConfig,
    BarycentricGreedyDriver, DiscreteMeasure, QuantileFunction,
};
use crate::{Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// What the tree algorithms need from a model-reduction method.
pub trait ReductionBackend {
    /// A reduced space (basis or generator set).
    type Space: Clone;

    fn training_len(&self) -> usize;

    /// Number of snapshots the plain greedy starts from (1 for the Hilbert
    /// greedy, 2 for the farthest-pair barycentric greedy).
    fn init_snapshot_count(&self) -> usize;

    /// Plain greedy over `subset`, stopping at `epsilon` or `n_max`.
    fn greedy(
        &mut self,
        subset: &[usize],
        epsilon: f64,
        n_max: Option<usize>,
        seed: u64,
    ) -> Result<BackendRun<Self::Space>>;

    /// Greedy continuation from `start` up to dimension `n_max`.
    fn restarted(
        &mut self,
        subset: &[usize],
        start: &Self::Space,
        epsilon: f64,
        n_max: usize,
    ) -> Result<BackendRun<Self::Space>>;

    /// Appends the given training snapshots to a space.
    fn extend(&mut self, start: &Self::Space, extra: &[usize]) -> Result<Self::Space>;

    /// Per-element approximation errors of `subset` in `space`.
    fn element_errors(&mut self, subset: &[usize], space: &Self::Space) -> Result<Vec<f64>>;

    fn dim(&self, space: &Self::Space) -> usize;

    /// Training indices of the snapshots the space was built from.
    fn snapshots(&self, space: &Self::Space) -> Vec<usize>;

    /// Error of an arbitrary in-box parameter against `space`.
    fn evaluate(&mut self, space: &Self::Space, y: &[f64]) -> Result<f64>;
}

/// Uniform greedy output consumed by the tree algorithms.
#[derive(Debug, Clone)]
pub struct BackendRun<S> {
    pub space: S,
    /// Snapshots appended by this run, in selection order.
    pub new_snapshots: Vec<usize>,
    /// Final per-element errors, aligned with the subset.
    pub errors: Vec<f64>,
    pub error: f64,
    pub converged: bool,
    pub stagnated: bool,
    /// One entry per sweep.
    pub history: Vec<HistoryEntry>,
}

/// One greedy sweep: dimension reached, worst error over the subset, and
/// the training index selected just before the sweep (if any).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub dim: usize,
    pub error: f64,
    pub selected: Option<usize>,
}

/// [`ReductionBackend`] over the Hilbert reduced-basis greedy.
pub struct HilbertBackend<'a> {
    driver: HilbertGreedyDriver<'a>,
}

impl<'a> HilbertBackend<'a> {
    pub fn new(driver: HilbertGreedyDriver<'a>) -> Self {
        HilbertBackend { driver }
    }

    pub fn driver(&mut self) -> &mut HilbertGreedyDriver<'a> {
        &mut self.driver
    }

    pub fn mesh(&self) -> UniformMesh1D {
        self.driver.mesh()
    }
}

impl ReductionBackend for HilbertBackend<'_> {
    type Space = ReducedBasis;

    fn training_len(&self) -> usize {
        self.driver.training_len()
    }

    fn init_snapshot_count(&self) -> usize {
        1
    }

    fn greedy(
        &mut self,
        subset: &[usize],
        epsilon: f64,
        n_max: Option<usize>,
        seed: u64,
    ) -> Result<BackendRun<ReducedBasis>> {
        let result = self.driver.greedy_on(
            subset,
            &GreedyConfig {
                epsilon,
                n_max,
                seed,
            },
        )?;
        Ok(BackendRun {
            space: result.basis,
            new_snapshots: result.new_indices,
            errors: result.errors,
            error: result.error,
            converged: result.converged,
            stagnated: result.stagnated,
            history: result
                .history
                .iter()
                .map(|r| HistoryEntry {
                    dim: r.dim,
                    error: r.max_estimator,
                    selected: r.selected,
                })
                .collect(),
        })
    }

    fn restarted(
        &mut self,
        subset: &[usize],
        start: &ReducedBasis,
        epsilon: f64,
        n_max: usize,
    ) -> Result<BackendRun<ReducedBasis>> {
        let result = self.driver.restarted_on(
            subset,
            start,
            &GreedyConfig {
                epsilon,
                n_max: Some(n_max),
                seed: 0,
            },
        )?;
        Ok(BackendRun {
            space: result.basis,
            new_snapshots: result.new_indices,
            errors: result.errors,
            error: result.error,
            converged: result.converged,
            stagnated: result.stagnated,
            history: result
                .history
                .iter()
                .map(|r| HistoryEntry {
                    dim: r.dim,
                    error: r.max_estimator,
                    selected: r.selected,
                })
                .collect(),
        })
    }

    fn extend(&mut self, start: &ReducedBasis, extra: &[usize]) -> Result<ReducedBasis> {
        let mut basis = start.clone();
        let vspace = self.driver.vspace().clone();
        for &i in extra {
            let u = self.driver.truth(i)?.clone();
            basis.orthonormalize_append(&u, &vspace, i)?;
        }
        Ok(basis)
    }

    fn element_errors(&mut self, subset: &[usize], space: &ReducedBasis) -> Result<Vec<f64>> {
        self.driver.estimator_errors(subset, space)
    }

    fn dim(&self, space: &ReducedBasis) -> usize {
        space.dim()
    }

    fn snapshots(&self, space: &ReducedBasis) -> Vec<usize> {
        space.origins().to_vec()
    }

    fn evaluate(&mut self, space: &ReducedBasis, y: &[f64]) -> Result<f64> {
        self.driver.evaluate(space, y)
    }
}

/// [`ReductionBackend`] over the barycentric greedy. Spaces are generator
/// index sets; evaluating an off-training parameter goes through the
/// supplied snapshot generator.
pub struct WassersteinBackend<G> {
    driver: BarycentricGreedyDriver,
    generator: G,
}

impl<G> WassersteinBackend<G>
where
    G: FnMut(&[f64]) -> Result<DiscreteMeasure>,
{
    pub fn new(driver: BarycentricGreedyDriver, generator: G) -> Self {
        WassersteinBackend { driver, generator }
    }

    pub fn driver(&self) -> &BarycentricGreedyDriver {
        &self.driver
    }

    fn to_run(result: crate::wasserstein1d::BarycentricGreedyResult) -> BackendRun<Vec<usize>> {
        BackendRun {
            space: result.generators,
            new_snapshots: result.new_generators,
            errors: result.errors,
            error: result.error,
            converged: result.converged,
            stagnated: result.stagnated,
            history: result
                .history
                .iter()
                .map(|r| HistoryEntry {
                    dim: r.dim,
                    error: r.max_error,
                    selected: r.selected,
                })
                .collect(),
        }
    }
}

impl<G> ReductionBackend for WassersteinBackend<G>
where
    G: FnMut(&[f64]) -> Result<DiscreteMeasure>,
{
    type Space = Vec<usize>;

    fn training_len(&self) -> usize {
        self.driver.len()
    }

    fn init_snapshot_count(&self) -> usize {
        2
    }

    fn greedy(
        &mut self,
        subset: &[usize],
        epsilon: f64,
        n_max: Option<usize>,
        _seed: u64,
    ) -> Result<BackendRun<Vec<usize>>> {
        if subset.len() == 1 {
            // a single element is represented exactly by itself
            return Ok(BackendRun {
                space: vec![subset[0]],
                new_snapshots: vec![subset[0]],
                errors: vec![0.0],
                error: 0.0,
                converged: true,
                stagnated: false,
                history: vec![HistoryEntry {
                    dim: 1,
                    error: 0.0,
                    selected: Some(subset[0]),
                }],
            });
        }
        let result = self
            .driver
            .greedy_on(subset, &BarycentricGreedyConfig { epsilon, n_max })?;
        Ok(Self::to_run(result))
    }

    fn restarted(
        &mut self,
        subset: &[usize],
        start: &Vec<usize>,
        epsilon: f64,
        n_max: usize,
    ) -> Result<BackendRun<Vec<usize>>> {
        let result = self.driver.restarted_on(
            subset,
            start,
            &BarycentricGreedyConfig {
                epsilon,
                n_max: Some(n_max),
            },
        )?;
        Ok(Self::to_run(result))
    }

    fn extend(&mut self, start: &Vec<usize>, extra: &[usize]) -> Result<Vec<usize>> {
        let mut out = start.clone();
        for &i in extra {
            if !out.contains(&i) {
                out.push(i);
            }
        }
        Ok(out)
    }

    fn element_errors(&mut self, subset: &[usize], space: &Vec<usize>) -> Result<Vec<f64>> {
        Ok(self.driver.projection_errors(subset, space))
    }

    fn dim(&self, space: &Vec<usize>) -> usize {
        space.len()
    }

    fn snapshots(&self, space: &Vec<usize>) -> Vec<usize> {
        space.clone()
    }

    fn evaluate(&mut self, space: &Vec<usize>, y: &[f64]) -> Result<f64> {
        let measure = (self.generator)(y)?;
        let target = quantile_transform(&measure, self.driver.s_count())?;
        let quantiles: Vec<QuantileFunction> = space
            .iter()
            .map(|&g| self.driver.quantile(g).clone())
            .collect();
        let gram = gram_matrix(&quantiles);
        let (b, c) = projection_data(&target, &quantiles);
        Ok(project_quadratic(&gram, &b, c, None).distance)
    }
}

/// How `y_cart_split` chooses the split direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// Try every direction, keep the one whose worse child error is least.
    Best,
    /// Cycle through the directions level by level.
    Alternate,
}

/// Which algorithm built a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    CartSplit,
    MBased,
}

/// Geometric (dyadic cell) or combinatorial (left/right path) node label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeIndex {
    /// Dyadic box: per direction, refinement level and cell index.
    Cart { levels: Vec<u32>, cells: Vec<u64> },
    /// Root-to-node path of 0/1 child choices.
    Binary { path: Vec<u8> },
}

/// One tree node with its training cell and local reduced space.
#[derive(Debug, Clone)]
pub struct TreeNode<S> {
    pub id: usize,
    pub parent: Option<usize>,
    /// Level of the node; the root is at depth 1.
    pub depth: usize,
    pub index: NodeIndex,
    /// Training indices assigned to this node.
    pub subset: Vec<usize>,
    pub space: Option<S>,
    pub dim: usize,
    pub snapshot_ids: Vec<usize>,
    /// Per-element errors aligned with `subset`.
    pub errors: Vec<f64>,
    pub error: f64,
    pub converged: bool,
    /// Set when a split could not proceed (stagnation, degenerate split).
    pub failed: bool,
    pub note: Option<String>,
    pub children: Option<[usize; 2]>,
    /// Sweep history of the greedy run at this node.
    pub history: Vec<HistoryEntry>,
}

impl<S> TreeNode<S> {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary tree of local reduced spaces over a partition of the training set.
#[derive(Debug, Clone)]
pub struct LibraryTree<S> {
    pub kind: TreeKind,
    pub parameter_box: ParameterBox,
    pub epsilon: f64,
    pub n_max: Option<usize>,
    pub nodes: Vec<TreeNode<S>>,
    /// Number of levels actually present.
    pub depth: usize,
    pub converged: bool,
}

impl<S> LibraryTree<S> {
    pub fn root(&self) -> &TreeNode<S> {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.id)
            .collect()
    }

    /// Leaf whose training cell contains the given training index.
    pub fn leaf_of_training(&self, idx: usize) -> Option<usize> {
        let mut id = 0usize;
        if !self.nodes[0].subset.contains(&idx) {
            return None;
        }
        while let Some([a, b]) = self.nodes[id].children {
            id = if self.nodes[a].subset.contains(&idx) {
                a
            } else if self.nodes[b].subset.contains(&idx) {
                b
            } else {
                return None;
            };
        }
        Some(id)
    }
}

/// Parameters of a `y_cart_split` run.
#[derive(Debug, Clone)]
pub struct CartConfig {
    pub epsilon: f64,
    pub n_max: Option<usize>,
    pub max_depth: usize,
    pub rule: SplitRule,
    pub seed: u64,
}

/// Parameters of an `m_based_split` run.
#[derive(Debug, Clone)]
pub struct MBasedConfig {
    pub epsilon: f64,
    /// Snapshots the restarted greedy adds before a split; the last two
    /// seed the children, so each child gains `extra_steps - 1` snapshots.
    pub extra_steps: usize,
    pub max_depth: usize,
    pub n_max: Option<usize>,
    pub seed: u64,
}

fn normalized_points(parameter_box: &ParameterBox, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    points
        .iter()
        .map(|y| {
            if !parameter_box.contains(y) {
                return Err(Error::OutOfDomain);
            }
            Ok(parameter_box.normalize(y))
        })
        .collect()
}

/// Splits the parameter box dyadically until every cell is approximable
/// within `epsilon` at dimension `n_max` (or `max_depth` is reached).
pub fn y_cart_split<B: ReductionBackend>(
    backend: &mut B,
    parameter_box: &ParameterBox,
    points: &[Vec<f64>],
    config: &CartConfig,
) -> Result<LibraryTree<B::Space>> {
    if points.len() != backend.training_len() || points.is_empty() {
        return Err(Error::EmptySubset);
    }
    if config.max_depth == 0 {
        return Err(Error::Config("max_depth must be at least 1".into()));
    }
    let p = parameter_box.dim();
    let coords = normalized_points(parameter_box, points)?;
    let subset: Vec<usize> = (0..points.len()).collect();
    let run = backend.greedy(
        &subset,
        config.epsilon,
        config.n_max,
        derive_seed(config.seed, 0),
    )?;
    let mut tree = LibraryTree {
        kind: TreeKind::CartSplit,
        parameter_box: parameter_box.clone(),
        epsilon: config.epsilon,
        n_max: config.n_max,
        nodes: vec![node_from_run(
            backend,
            0,
            None,
            1,
            NodeIndex::Cart {
                levels: vec![0; p],
                cells: vec![0; p],
            },
            subset,
            run,
        )],
        depth: 1,
        converged: false,
    };
    let mut depth = 1usize;
    loop {
        let open: Vec<usize> = tree
            .leaves()
            .into_iter()
            .filter(|&id| !tree.nodes[id].converged && !tree.nodes[id].failed)
            .collect();
        if open.is_empty() {
            tree.converged = true;
            break;
        }
        if depth >= config.max_depth {
            tree.converged = false;
            break;
        }
        for id in open {
            let node_seed = derive_seed(config.seed, tree.nodes[id].id as u64 + 1);
            let (levels, cells) = match &tree.nodes[id].index {
                NodeIndex::Cart { levels, cells } => (levels.clone(), cells.clone()),
                NodeIndex::Binary { .. } => unreachable!("cart tree"),
            };
            let dirs: Vec<usize> = match config.rule {
                SplitRule::Best => (0..p).collect(),
                SplitRule::Alternate => vec![(depth - 1) % p],
            };
            // a split that sends every element to one child cannot improve
            // the cell; prefer directions that actually separate the points
            let mut best: Option<(bool, f64, usize, [CandidateChild<B::Space>; 2])> = None;
            for &dir in &dirs {
                let mid = (2 * cells[dir] + 1) as f64 / (1u64 << (levels[dir] + 1)) as f64;
                let mut subsets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
                for &i in &tree.nodes[id].subset {
                    let side = usize::from(coords[i][dir] > mid);
                    subsets[side].push(i);
                }
                let degenerate = subsets.iter().any(Vec::is_empty);
                let mut children: Vec<CandidateChild<B::Space>> = Vec::with_capacity(2);
                let mut score = 0.0f64;
                for (side, child_subset) in subsets.into_iter().enumerate() {
                    let child = if child_subset.is_empty() {
                        CandidateChild {
                            subset: child_subset,
                            run: None,
                        }
                    } else {
                        let run = backend.greedy(
                            &child_subset,
                            config.epsilon,
                            config.n_max,
                            derive_seed(node_seed, (2 * dir + side) as u64),
                        )?;
                        score = score.max(run.error);
                        CandidateChild {
                            subset: child_subset,
                            run: Some(run),
                        }
                    };
                    children.push(child);
                }
                let pair: [CandidateChild<B::Space>; 2] =
                    children.try_into().ok().expect("two children");
                let better = match &best {
                    None => true,
                    Some((b_deg, b_score, _, _)) => {
                        (!degenerate && *b_deg) || (degenerate == *b_deg && score < *b_score)
                    }
                };
                if better {
                    best = Some((degenerate, score, dir, pair));
                }
            }
            let (_, _, dir, pair) = best.expect("at least one direction");
            let mut child_ids = [0usize; 2];
            for (side, child) in pair.into_iter().enumerate() {
                let mut c_levels = levels.clone();
                let mut c_cells = cells.clone();
                c_levels[dir] += 1;
                c_cells[dir] = 2 * cells[dir] + side as u64;
                let child_id = tree.nodes.len();
                child_ids[side] = child_id;
                let node = match child.run {
                    Some(run) => node_from_run(
                        backend,
                        child_id,
                        Some(id),
                        depth + 1,
                        NodeIndex::Cart {
                            levels: c_levels,
                            cells: c_cells,
                        },
                        child.subset,
                        run,
                    ),
                    // empty cell: nothing to approximate
                    None => TreeNode {
                        id: child_id,
                        parent: Some(id),
                        depth: depth + 1,
                        index: NodeIndex::Cart {
                            levels: c_levels,
                            cells: c_cells,
                        },
                        subset: Vec::new(),
                        space: None,
                        dim: 0,
                        snapshot_ids: Vec::new(),
                        errors: Vec::new(),
                        error: 0.0,
                        converged: true,
                        failed: false,
                        note: None,
                        children: None,
                        history: Vec::new(),
                    },
                };
                tree.nodes.push(node);
            }
            tree.nodes[id].children = Some(child_ids);
        }
        depth += 1;
        tree.depth = depth;
    }
    tree.depth = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(1);
    Ok(tree)
}

struct CandidateChild<S> {
    subset: Vec<usize>,
    run: Option<BackendRun<S>>,
}

fn node_from_run<B: ReductionBackend>(
    backend: &B,
    id: usize,
    parent: Option<usize>,
    depth: usize,
    index: NodeIndex,
    subset: Vec<usize>,
    run: BackendRun<B::Space>,
) -> TreeNode<B::Space> {
    TreeNode {
        id,
        parent,
        depth,
        index,
        subset,
        dim: backend.dim(&run.space),
        snapshot_ids: backend.snapshots(&run.space),
        space: Some(run.space),
        errors: run.errors,
        error: run.error,
        converged: run.converged,
        failed: run.stagnated && !run.converged,
        note: (run.stagnated && !run.converged).then(|| String::from("greedy stagnated")),
        children: None,
        history: run.history,
    }
}

/// Splits the training set by snapshot affinity: a restarted greedy adds
/// `extra_steps` snapshots, the last two seed the children, and each
/// element goes to the child that approximates it better.
pub fn m_based_split<B: ReductionBackend>(
    backend: &mut B,
    parameter_box: &ParameterBox,
    points: &[Vec<f64>],
    config: &MBasedConfig,
) -> Result<LibraryTree<B::Space>> {
    if points.len() != backend.training_len() || points.is_empty() {
        return Err(Error::EmptySubset);
    }
    if config.max_depth == 0 || config.extra_steps < 2 {
        return Err(Error::Config(
            "max_depth must be >= 1 and extra_steps >= 2".into(),
        ));
    }
    normalized_points(parameter_box, points)?;
    let subset: Vec<usize> = (0..points.len()).collect();
    let init = backend.init_snapshot_count();
    let run = backend.greedy(
        &subset,
        config.epsilon,
        Some(init),
        derive_seed(config.seed, 0),
    )?;
    let mut tree = LibraryTree {
        kind: TreeKind::MBased,
        parameter_box: parameter_box.clone(),
        epsilon: config.epsilon,
        n_max: config.n_max,
        nodes: vec![node_from_run(
            backend,
            0,
            None,
            1,
            NodeIndex::Binary { path: Vec::new() },
            subset,
            run,
        )],
        depth: 1,
        converged: false,
    };
    let mut depth = 1usize;
    loop {
        let open: Vec<usize> = tree
            .leaves()
            .into_iter()
            .filter(|&id| !tree.nodes[id].converged && !tree.nodes[id].failed)
            .collect();
        if open.is_empty() {
            break;
        }
        if depth >= config.max_depth {
            break;
        }
        for id in open {
            let parent_dim = tree.nodes[id].dim;
            if let Some(cap) = config.n_max {
                if parent_dim + config.extra_steps - 1 > cap {
                    tree.nodes[id].failed = true;
                    tree.nodes[id].note = Some(String::from("n_max reached before convergence"));
                    continue;
                }
            }
            let parent_space = tree.nodes[id].space.clone().expect("non-empty node");
            let subset = tree.nodes[id].subset.clone();
            // epsilon 0 forces exactly `extra_steps` additions even when the
            // cell is already below tolerance mid-run
            let run = backend.restarted(&subset, &parent_space, 0.0, parent_dim + config.extra_steps)?;
            if run.new_snapshots.len() < 2 {
                // out of fresh snapshots for this cell: keep whatever the
                // run appended and accept the node if it is now within
                // tolerance, otherwise it genuinely stagnated
                let node = &mut tree.nodes[id];
                node.dim = backend.dim(&run.space);
                node.snapshot_ids = backend.snapshots(&run.space);
                node.space = Some(run.space);
                node.errors = run.errors;
                node.error = run.error;
                if run.error <= config.epsilon {
                    node.converged = true;
                    node.note = Some(String::from("extended in place to convergence"));
                } else {
                    node.failed = true;
                    node.note = Some(String::from("greedy stagnated during split"));
                }
                continue;
            }
            let n_new = run.new_snapshots.len();
            let shared = &run.new_snapshots[..n_new - 2];
            let seeds = [run.new_snapshots[n_new - 2], run.new_snapshots[n_new - 1]];
            let base = backend.extend(&parent_space, shared)?;
            let spaces = [
                backend.extend(&base, &seeds[..1])?,
                backend.extend(&base, &seeds[1..])?,
            ];
            let errors = [
                backend.element_errors(&subset, &spaces[0])?,
                backend.element_errors(&subset, &spaces[1])?,
            ];
            let mut subsets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            let mut child_errors: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for (pos, &i) in subset.iter().enumerate() {
                // ties go to the first child
                let side = usize::from(errors[1][pos] < errors[0][pos]);
                subsets[side].push(i);
                child_errors[side].push(errors[side][pos]);
            }
            if subsets[0].is_empty() || subsets[1].is_empty() {
                tree.nodes[id].failed = true;
                tree.nodes[id].note = Some(String::from("degenerate split: one child is empty"));
                continue;
            }
            let mut child_ids = [0usize; 2];
            let parent_path = match &tree.nodes[id].index {
                NodeIndex::Binary { path } => path.clone(),
                NodeIndex::Cart { .. } => unreachable!("binary tree"),
            };
            for side in 0..2 {
                let child_id = tree.nodes.len();
                child_ids[side] = child_id;
                let mut path = parent_path.clone();
                path.push(side as u8);
                let error = child_errors[side]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                let space = spaces[side].clone();
                tree.nodes.push(TreeNode {
                    id: child_id,
                    parent: Some(id),
                    depth: depth + 1,
                    index: NodeIndex::Binary { path },
                    subset: core::mem::take(&mut subsets[side]),
                    dim: backend.dim(&space),
                    snapshot_ids: backend.snapshots(&space),
                    space: Some(space),
                    errors: core::mem::take(&mut child_errors[side]),
                    error,
                    converged: error <= config.epsilon,
                    failed: false,
                    note: None,
                    children: None,
                    history: vec![HistoryEntry {
                        dim: backend.dim(&spaces[side]),
                        error,
                        selected: Some(seeds[side]),
                    }],
                });
            }
            tree.nodes[id].children = Some(child_ids);
        }
        depth += 1;
        tree.depth = depth;
    }
    tree.depth = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(1);
    tree.converged = tree
        .leaves()
        .iter()
        .all(|&id| tree.nodes[id].converged && !tree.nodes[id].failed);
    Ok(tree)
}

/// Leaf of a cart tree containing `y`: descend by comparing the split
/// coordinate with the child-cell boundary.
pub fn assign_cart<S>(tree: &LibraryTree<S>, y: &[f64]) -> Result<usize> {
    if tree.kind != TreeKind::CartSplit {
        return Err(Error::Config("assign_cart needs a cart-split tree".into()));
    }
    if !tree.parameter_box.contains(y) {
        return Err(Error::OutOfDomain);
    }
    let t = tree.parameter_box.normalize(y);
    let mut id = 0usize;
    while let Some([a, b]) = tree.nodes[id].children {
        let (NodeIndex::Cart { levels, cells }, NodeIndex::Cart { levels: pl, .. }) =
            (&tree.nodes[a].index, &tree.nodes[id].index)
        else {
            unreachable!("cart tree")
        };
        let dir = levels
            .iter()
            .zip(pl)
            .position(|(c, p)| c != p)
            .expect("children refine one direction");
        // upper edge of the low child cell
        let mid = (cells[dir] + 1) as f64 / (1u64 << levels[dir]) as f64;
        id = if t[dir] <= mid { a } else { b };
    }
    Ok(id)
}

/// Leaf of an m-based tree for `y`: the leaf of the nearest training point
/// (in the box-normalized Euclidean metric; ties take the lowest index).
pub fn assign_mbased<S>(tree: &LibraryTree<S>, y: &[f64], points: &[Vec<f64>]) -> Result<usize> {
    if tree.kind != TreeKind::MBased {
        return Err(Error::Config("assign_mbased needs an m-based tree".into()));
    }
    if !tree.parameter_box.contains(y) {
        return Err(Error::OutOfDomain);
    }
    let t = tree.parameter_box.normalize(y);
    let mut best = (f64::INFINITY, 0usize);
    for (i, p) in points.iter().enumerate() {
        let tp = tree.parameter_box.normalize(p);
        let d: f64 = t
            .iter()
            .zip(&tp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    tree.leaf_of_training(best.1).ok_or(Error::OutOfDomain)
}

/// Error of `y` against the local space selected by the tree's assignment
/// rule.
pub fn evaluate_library<B: ReductionBackend>(
    tree: &LibraryTree<B::Space>,
    backend: &mut B,
    y: &[f64],
    points: &[Vec<f64>],
) -> Result<f64> {
    let leaf = match tree.kind {
        TreeKind::CartSplit => assign_cart(tree, y)?,
        TreeKind::MBased => assign_mbased(tree, y, points)?,
    };
    // empty cart cells carry no space; fall back to the nearest ancestor
    let mut id = leaf;
    while tree.nodes[id].space.is_none() {
        id = tree.nodes[id].parent.ok_or(Error::EmptySubset)?;
    }
    backend.evaluate(tree.nodes[id].space.as_ref().expect("checked"), y)
}

/// Aggregate description of a library.
#[derive(Debug, Clone)]
pub struct LibrarySummary {
    /// Number of leaves `|L|`.
    pub size: usize,
    /// Tree depth `K` (root at 1).
    pub depth: usize,
    /// Leaf dimensions, in leaf order.
    pub dims: Vec<usize>,
    /// Leaf training-cell sizes.
    pub cell_sizes: Vec<usize>,
    /// Worst error per leaf.
    pub errors: Vec<f64>,
    /// Total snapshot cost: distinct snapshots for m-based trees (children
    /// share their ancestors' snapshots), summed dimensions for cart trees.
    pub snapshot_count: usize,
    pub converged: bool,
}

pub fn library_summary<S>(tree: &LibraryTree<S>) -> LibrarySummary {
    let leaves = tree.leaves();
    let dims: Vec<usize> = leaves.iter().map(|&id| tree.nodes[id].dim).collect();
    let cell_sizes: Vec<usize> = leaves.iter().map(|&id| tree.nodes[id].subset.len()).collect();
    let errors: Vec<f64> = leaves.iter().map(|&id| tree.nodes[id].error).collect();
    let snapshot_count = match tree.kind {
        TreeKind::CartSplit => dims.iter().sum(),
        TreeKind::MBased => {
            let mut all: Vec<usize> = leaves
                .iter()
                .flat_map(|&id| tree.nodes[id].snapshot_ids.iter().copied())
                .collect();
            all.sort_unstable();
            all.dedup();
            all.len()
        }
    };
    LibrarySummary {
        size: leaves.len(),
        depth: tree.depth,
        dims,
        cell_sizes,
        errors,
        snapshot_count,
        converged: tree.converged,
    }
}

/// Normalized Euclidean distance helper shared by diagnostics.
pub fn normalized_distance(parameter_box: &ParameterBox, a: &[f64], b: &[f64]) -> f64 {
    let ta = parameter_box.normalize(a);
    let tb = parameter_box.normalize(b);
    sqrt(
        ta.iter()
            .zip(&tb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>(),
    )
}
