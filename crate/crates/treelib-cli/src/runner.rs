//! Orchestration: builds the problem and backend a configuration asks
//! for, runs the requested algorithm, and emits/consumes the artifact
//! files.

use crate::config::{AlgorithmConfig, ProblemConfig, RunConfig, SplitRuleConfig};
use crate::output::{
    dim_histogram, write_convergence_csv, write_partition_csv, write_summary_json, write_tree_dot,
    write_tree_json, ConvergenceLog, NodeFile, SummaryRecord, TreeFile,
};
use std::path::{Path, PathBuf};
use std::time::Instant;
use treelib_core::fem1d::build_mesh;
use treelib_core::hilbert_rb::{best_fit_error, HilbertGreedyDriver, ReducedBasis};
use treelib_core::problems::{kdv_density_for, make_training_set, ParameterBox, TrainingSet};
use treelib_core::tree_library::{
    m_based_split, y_cart_split, CartConfig, HilbertBackend, LibraryTree, MBasedConfig,
    ReductionBackend, SplitRule, WassersteinBackend,
};
use treelib_core::wasserstein1d::{BarycentricGreedyDriver, DiscreteMeasure};

pub type CliResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Exit code for a run whose stopping criterion was not met.
pub const EXIT_NOT_CONVERGED: i32 = 3;

fn training_points(config: &RunConfig) -> CliResult<TrainingSet> {
    make_training_set(&config.parameter_box(), config.training_spec()).map_err(err)
}

fn split_rule(rule: SplitRuleConfig) -> SplitRule {
    match rule {
        SplitRuleConfig::Best => SplitRule::Best,
        SplitRuleConfig::Alternate => SplitRule::Alternate,
    }
}

/// Runs the configured algorithm through any backend and returns the
/// serialized tree plus per-node convergence histories.
fn run_backend<B: ReductionBackend>(
    backend: &mut B,
    config: &RunConfig,
    points: &[Vec<f64>],
    hash: &str,
) -> CliResult<(TreeFile, ConvergenceLog)> {
    let parameter_box = config.parameter_box();
    let epsilon = config.run.epsilon;
    match &config.algorithm {
        AlgorithmConfig::Plain { n_max } => {
            let subset: Vec<usize> = (0..points.len()).collect();
            let run = backend
                .greedy(&subset, epsilon, *n_max, config.run.seed)
                .map_err(err)?;
            let tree = TreeFile {
                config_hash: hash.to_owned(),
                kind: "plain".into(),
                problem: config.problem_id().into(),
                assignment: "whole-domain".into(),
                epsilon,
                n_max: *n_max,
                parameter_box: parameter_box.bounds().iter().map(|&(a, b)| [a, b]).collect(),
                converged: run.converged,
                depth: 1,
                nodes: vec![NodeFile {
                    id: 0,
                    parent: None,
                    depth: 1,
                    cart_levels: None,
                    cart_cells: None,
                    path: None,
                    subset,
                    dim: backend.dim(&run.space),
                    snapshot_ids: backend.snapshots(&run.space),
                    error: run.error,
                    converged: run.converged,
                    failed: run.stagnated && !run.converged,
                    note: None,
                    children: None,
                }],
            };
            let log = ConvergenceLog {
                entries: vec![(0, run.history)],
            };
            Ok((tree, log))
        }
        AlgorithmConfig::Ycart { n_max, rule } => {
            let tree = y_cart_split(
                backend,
                &parameter_box,
                points,
                &CartConfig {
                    epsilon,
                    n_max: Some(*n_max),
                    max_depth: config.run.max_depth,
                    rule: split_rule(*rule),
                    seed: config.run.seed,
                },
            )
            .map_err(err)?;
            Ok(tree_outputs::<B>(&tree, config, hash))
        }
        AlgorithmConfig::Mbased { extra_steps, n_max } => {
            let tree = m_based_split(
                backend,
                &parameter_box,
                points,
                &MBasedConfig {
                    epsilon,
                    extra_steps: *extra_steps,
                    max_depth: config.run.max_depth,
                    n_max: *n_max,
                    seed: config.run.seed,
                },
            )
            .map_err(err)?;
            Ok(tree_outputs::<B>(&tree, config, hash))
        }
    }
}

fn tree_outputs<B: ReductionBackend>(
    tree: &LibraryTree<B::Space>,
    config: &RunConfig,
    hash: &str,
) -> (TreeFile, ConvergenceLog) {
    let file = TreeFile::from_library::<B>(tree, config.problem_id(), hash);
    let log = ConvergenceLog {
        entries: tree
            .nodes
            .iter()
            .filter(|n| !n.history.is_empty())
            .map(|n| (n.id, n.history.clone()))
            .collect(),
    };
    (file, log)
}

/// `(max leaf error, total snapshot cost)`; m-based leaves share ancestor
/// snapshots, so their cost counts distinct snapshot indices.
fn tree_stats(tree: &TreeFile) -> (f64, usize) {
    let leaves = tree.leaves();
    let max_error = leaves
        .iter()
        .map(|&id| tree.nodes[id].error)
        .fold(0.0f64, f64::max);
    let snapshot_count = if tree.kind == "mbased" {
        let mut all: Vec<usize> = leaves
            .iter()
            .flat_map(|&id| tree.nodes[id].snapshot_ids.iter().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    } else {
        leaves.iter().map(|&id| tree.nodes[id].dim).sum()
    };
    (max_error, snapshot_count)
}

fn emit(
    dir: &Path,
    config: &RunConfig,
    tree: &TreeFile,
    log: &ConvergenceLog,
    points: &[Vec<f64>],
    elapsed: f64,
) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(err)?;
    write_tree_json(&dir.join("tree.json"), tree).map_err(err)?;
    write_tree_dot(&dir.join("tree.dot"), tree).map_err(err)?;
    write_convergence_csv(&dir.join("convergence.csv"), log, points).map_err(err)?;
    write_partition_csv(&dir.join("partition.csv"), tree, points).map_err(err)?;
    let leaf_dims: Vec<usize> = tree.leaves().iter().map(|&id| tree.nodes[id].dim).collect();
    let (dims, dim_counts) = dim_histogram(&leaf_dims);
    let (max_error, snapshot_count) = tree_stats(tree);
    let summary = SummaryRecord {
        problem: config.problem_id().into(),
        algorithm: config.algorithm_id().into(),
        epsilon: config.run.epsilon,
        n_max: tree.n_max,
        training_size: points.len(),
        leaf_count: leaf_dims.len(),
        depth: tree.depth,
        dims,
        dim_counts,
        snapshot_count,
        converged: tree.converged,
        max_error,
        seed: config.run.seed,
        threads: std::env::var("TREELIB_THREADS").ok(),
        config_hash: tree.config_hash.clone(),
        runtime_seconds: elapsed,
    };
    write_summary_json(&dir.join("summary.json"), &summary).map_err(err)
}

/// Executes `run` for a configuration; returns the process exit code.
pub fn run(config: &RunConfig) -> CliResult<i32> {
    config.validate()?;
    let started = Instant::now();
    let hash = config.hash();
    let training = training_points(config)?;
    let points = training.points();
    let (tree, log) = match &config.problem {
        ProblemConfig::Kdv => {
            let grid = config.kdv_grid()?;
            let measures: Vec<DiscreteMeasure> = points
                .iter()
                .map(|y| kdv_density_for(y, grid))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            let driver = BarycentricGreedyDriver::new(&measures, config.kdv.s).map_err(err)?;
            let mut backend =
                WassersteinBackend::new(driver, move |y: &[f64]| kdv_density_for(y, grid));
            run_backend(&mut backend, config, points, &hash)?
        }
        _ => {
            let problem = config.hilbert_problem().expect("hilbert problem");
            let mesh = build_mesh(config.mesh.cells).map_err(err)?;
            let driver = HilbertGreedyDriver::new(&problem, &training, mesh).map_err(err)?;
            let mut backend = HilbertBackend::new(driver);
            run_backend(&mut backend, config, points, &hash)?
        }
    };
    let dir = PathBuf::from(&config.run.output_dir);
    emit(&dir, config, &tree, &log, points, started.elapsed().as_secs_f64())?;
    let (max_error, _) = tree_stats(&tree);
    println!(
        "{} {} | leaves {} depth {} max_error {:.3e} | {}",
        config.problem_id(),
        config.algorithm_id(),
        tree.leaves().len(),
        tree.depth,
        max_error,
        if tree.converged { "converged" } else { "NOT CONVERGED" },
    );
    Ok(if tree.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn load_tree(dir: &Path, expected_hash: &str) -> CliResult<TreeFile> {
    let path = dir.join("tree.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let tree: TreeFile = serde_json::from_str(&text).map_err(err)?;
    if tree.config_hash != expected_hash {
        return Err(format!(
            "stale artifacts: {} was produced by config {} but the given config hashes to {}; rerun first",
            path.display(),
            tree.config_hash,
            expected_hash
        ));
    }
    Ok(tree)
}

/// Descends the serialized tree to the leaf owning `y`.
fn assign_tree_file(
    tree: &TreeFile,
    parameter_box: &ParameterBox,
    points: &[Vec<f64>],
    y: &[f64],
) -> CliResult<usize> {
    if !parameter_box.contains(y) {
        return Err("parameter is outside the problem's parameter box".into());
    }
    match tree.kind.as_str() {
        "plain" => Ok(0),
        "ycart" => {
            let t = parameter_box.normalize(y);
            let mut id = 0usize;
            while let Some([a, b]) = tree.nodes[id].children {
                let (cl, cc, pl) = (
                    tree.nodes[a].cart_levels.as_ref().ok_or("missing cart index")?,
                    tree.nodes[a].cart_cells.as_ref().ok_or("missing cart index")?,
                    tree.nodes[id].cart_levels.as_ref().ok_or("missing cart index")?,
                );
                let dir = cl
                    .iter()
                    .zip(pl)
                    .position(|(c, p)| c != p)
                    .ok_or("children refine no direction")?;
                let mid = (cc[dir] + 1) as f64 / (1u64 << cl[dir]) as f64;
                id = if t[dir] <= mid { a } else { b };
            }
            Ok(id)
        }
        "mbased" => {
            let t = parameter_box.normalize(y);
            let mut best = (f64::INFINITY, 0usize);
            for (i, p) in points.iter().enumerate() {
                let tp = parameter_box.normalize(p);
                let d: f64 = t.iter().zip(&tp).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            let mut id = 0usize;
            while let Some([a, b]) = tree.nodes[id].children {
                id = if tree.nodes[a].subset.contains(&best.1) {
                    a
                } else if tree.nodes[b].subset.contains(&best.1) {
                    b
                } else {
                    return Err("training index missing from both children".into());
                };
            }
            Ok(id)
        }
        other => Err(format!("unknown tree kind '{other}'")),
    }
}

/// Evaluates a stored library at one parameter: locates the leaf, rebuilds
/// its local space from the recorded snapshot indices, and reports the
/// error of the query against it.
pub fn eval(config: &RunConfig, y: &[f64], diagnostic: bool) -> CliResult<i32> {
    config.validate()?;
    let parameter_box = config.parameter_box();
    if y.len() != parameter_box.dim() {
        return Err(format!(
            "expected {} parameter components, got {}",
            parameter_box.dim(),
            y.len()
        ));
    }
    let dir = PathBuf::from(&config.run.output_dir);
    let tree = load_tree(&dir, &config.hash())?;
    let training = training_points(config)?;
    let points = training.points();
    let mut leaf = assign_tree_file(&tree, &parameter_box, points, y)?;
    // empty cart cells carry no space; use the nearest ancestor's
    while tree.nodes[leaf].subset.is_empty() {
        leaf = tree.nodes[leaf].parent.ok_or("empty root")?;
    }
    let node = &tree.nodes[leaf];
    let error = match &config.problem {
        ProblemConfig::Kdv => {
            let grid = config.kdv_grid()?;
            let measures: Vec<DiscreteMeasure> = points
                .iter()
                .map(|p| kdv_density_for(p, grid))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            let driver = BarycentricGreedyDriver::new(&measures, config.kdv.s).map_err(err)?;
            let mut backend =
                WassersteinBackend::new(driver, move |p: &[f64]| kdv_density_for(p, grid));
            backend.evaluate(&node.snapshot_ids, y).map_err(err)?
        }
        _ => {
            let problem = config.hilbert_problem().expect("hilbert problem");
            let mesh = build_mesh(config.mesh.cells).map_err(err)?;
            let driver = HilbertGreedyDriver::new(&problem, &training, mesh).map_err(err)?;
            let mut backend = HilbertBackend::new(driver);
            let basis = backend
                .extend(&ReducedBasis::new(mesh), &node.snapshot_ids)
                .map_err(err)?;
            let e = backend.evaluate(&basis, y).map_err(err)?;
            if diagnostic {
                let u = treelib_core::fem1d::solve_truth(&problem, y, mesh).map_err(err)?;
                let best = best_fit_error(&u, &basis, backend.driver().vspace()).map_err(err)?;
                println!("best_fit_error {best:.6e}");
            }
            e
        }
    };
    println!(
        "leaf {} depth {} dim {} | error {error:.6e}",
        node.id, node.depth, node.dim
    );
    Ok(0)
}

/// Merges several summary.json files into one CSV table.
pub fn compare(summaries: &[PathBuf], out: &Path) -> CliResult<i32> {
    if summaries.is_empty() {
        return Err("compare needs at least one summary.json".into());
    }
    let mut records = Vec::new();
    for path in summaries {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let record: SummaryRecord = serde_json::from_str(&text).map_err(err)?;
        records.push(record);
    }
    let first_problem = records[0].problem.clone();
    let mut csv = String::from(
        "problem,algorithm,epsilon,n_max,training_size,leaf_count,depth,dims,snapshot_count,converged,max_error,config_hash,warning\n",
    );
    for r in &records {
        let warning = if r.problem != first_problem {
            "problem differs from first summary"
        } else {
            ""
        };
        let dims = r
            .dims
            .iter()
            .zip(&r.dim_counts)
            .map(|(d, c)| format!("{d}x{c}"))
            .collect::<Vec<_>>()
            .join(";");
        let n_max = r.n_max.map_or(String::new(), |n| n.to_string());
        csv.push_str(&format!(
            "{},{},{:.16e},{},{},{},{},{},{},{},{:.16e},{},{}\n",
            r.problem,
            r.algorithm,
            r.epsilon,
            n_max,
            r.training_size,
            r.leaf_count,
            r.depth,
            dims,
            r.snapshot_count,
            r.converged,
            r.max_error,
            r.config_hash,
            warning
        ));
    }
    std::fs::write(out, csv).map_err(err)?;
    println!("wrote {} ({} rows)", out.display(), records.len());
    Ok(0)
}
