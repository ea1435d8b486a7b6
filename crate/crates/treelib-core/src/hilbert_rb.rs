//! Reduced-basis machinery for the Hilbert setting `V = H^1_0`.
//!
//! Snapshots are truth solutions, orthonormalized in the `V`-inner product.
//! The error surrogate is the residual dual norm `Delta_n(y) = || f - A(y)
//! u_n(y) ||_{V'}`, computed through the Riesz representative; for each
//! problem it is equivalent to the true error with the problem's coercivity
//! and continuity constants.

use crate::fem1d::{
    assemble_load, assemble_system, solve_truth, GridFunction, TridiagonalMatrix, UniformMesh1D,
    VSpace,
};
use crate::linalg::lu_solve;
use crate::problems::{HilbertProblem, TrainingSet};
use crate::rng::SplitMix64;
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Threshold below which a candidate snapshot counts as linearly dependent
/// on the current basis (relative to its own norm).
const DEPENDENCE_TOL: f64 = 1e-10;

/// `V`-orthonormal reduced basis with the training index of every snapshot.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    mesh: UniformMesh1D,
    vectors: Vec<GridFunction>,
    origins: Vec<usize>,
}

impl ReducedBasis {
    pub fn new(mesh: UniformMesh1D) -> Self {
        ReducedBasis {
            mesh,
            vectors: Vec::new(),
            origins: Vec::new(),
        }
    }

    pub fn mesh(&self) -> UniformMesh1D {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, i: usize) -> &GridFunction {
        &self.vectors[i]
    }

    /// Training indices of the snapshots, in append order.
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    /// Gram-Schmidt append with one re-orthogonalization pass. Returns
    /// `false` (and leaves the basis unchanged) when the snapshot is
    /// numerically in the span already.
    pub fn orthonormalize_append(
        &mut self,
        snapshot: &GridFunction,
        vspace: &VSpace,
        origin: usize,
    ) -> Result<bool> {
        if snapshot.mesh() != self.mesh {
            return Err(Error::MeshMismatch);
        }
        let original = vspace.norm(snapshot)?;
        if original == 0.0 {
            return Ok(false);
        }
        let mut w = snapshot.clone();
        for _ in 0..2 {
            for b in &self.vectors {
                let c = vspace.inner(&w, b)?;
                w.axpy(-c, b);
            }
        }
        let norm = vspace.norm(&w)?;
        if norm <= DEPENDENCE_TOL * original {
            return Ok(false);
        }
        w.scale(1.0 / norm);
        self.vectors.push(w);
        self.origins.push(origin);
        Ok(true)
    }

    /// Linear combination `sum_i c_i b_i`.
    pub fn combination(&self, coefficients: &[f64]) -> Result<GridFunction> {
        if coefficients.len() != self.dim() {
            return Err(Error::MeshMismatch);
        }
        let mut out = GridFunction::zeros(self.mesh);
        for (c, b) in coefficients.iter().zip(&self.vectors) {
            out.axpy(*c, b);
        }
        Ok(out)
    }
}

/// Galerkin solve of `a(u_n, v) = f(v)` over the span of the basis: builds
/// the dense reduced system `B^T A B c = B^T f` and solves it.
pub fn reduced_solve(
    basis: &ReducedBasis,
    a: &TridiagonalMatrix,
    f: &[f64],
) -> Result<Vec<f64>> {
    let n = basis.dim();
    if n == 0 {
        return Err(Error::EmptySubset);
    }
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        let abk = a.matvec(basis.vector(k).values());
        for j in 0..n {
            gram[j * n + k] = dot(basis.vector(j).values(), &abk);
        }
        rhs[k] = dot(basis.vector(k).values(), f);
    }
    lu_solve(gram, rhs)
}

/// Residual dual-norm surrogate `Delta_n = || f - A u_n ||_{V'}`. With an
/// empty basis (and empty coefficients) this is `Delta_0 = || f ||_{V'}`.
pub fn residual_estimator(
    basis: &ReducedBasis,
    coefficients: &[f64],
    a: &TridiagonalMatrix,
    f: &[f64],
    vspace: &VSpace,
) -> Result<f64> {
    let u = basis.combination(coefficients)?;
    let au = a.matvec(u.values());
    let r: Vec<f64> = f.iter().zip(&au).map(|(fi, ai)| fi - ai).collect();
    vspace.riesz_dual_norm(&r)
}

/// `V`-distance from `u` to its best approximation in the span of the
/// (orthonormal) basis.
pub fn best_fit_error(u: &GridFunction, basis: &ReducedBasis, vspace: &VSpace) -> Result<f64> {
    let mut w = u.clone();
    for i in 0..basis.dim() {
        let c = vspace.inner(&w, basis.vector(i))?;
        w.axpy(-c, basis.vector(i));
    }
    vspace.norm(&w)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Configuration of a (restarted) greedy run.
#[derive(Debug, Clone)]
pub struct GreedyConfig {
    pub epsilon: f64,
    pub n_max: Option<usize>,
    pub seed: u64,
}

/// One greedy sweep record: basis dimension, worst estimator over the
/// subset, and the training index selected just before the sweep.
#[derive(Debug, Clone)]
pub struct GreedyIterRecord {
    pub dim: usize,
    pub max_estimator: f64,
    pub selected: Option<usize>,
}

/// Output of a greedy run.
#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub basis: ReducedBasis,
    pub history: Vec<GreedyIterRecord>,
    /// Per-element estimators from the final sweep, aligned with the subset.
    pub errors: Vec<f64>,
    pub error: f64,
    pub converged: bool,
    pub stagnated: bool,
    /// Training indices appended by this run (excludes a restart basis).
    pub new_indices: Vec<usize>,
}

/// Greedy driver over one parametric problem and training set. Assembled
/// systems and truth solutions are cached per training index, and the
/// reduced Gram matrices of a sweep grow incrementally with the basis.
pub struct HilbertGreedyDriver<'a> {
    problem: &'a HilbertProblem,
    training: &'a TrainingSet,
    mesh: UniformMesh1D,
    vspace: VSpace,
    load: Vec<f64>,
    systems: Vec<Option<TridiagonalMatrix>>,
    truths: Vec<Option<GridFunction>>,
}

impl<'a> HilbertGreedyDriver<'a> {
    pub fn new(
        problem: &'a HilbertProblem,
        training: &'a TrainingSet,
        mesh: UniformMesh1D,
    ) -> Result<Self> {
        let n = training.points().len();
        if n == 0 {
            return Err(Error::EmptySubset);
        }
        for y in training.points() {
            problem.check_parameter(y)?;
        }
        Ok(HilbertGreedyDriver {
            problem,
            training,
            mesh,
            vspace: VSpace::new(mesh),
            load: assemble_load(mesh),
            systems: vec![None; n],
            truths: vec![None; n],
        })
    }

    pub fn problem(&self) -> &HilbertProblem {
        self.problem
    }

    pub fn training(&self) -> &TrainingSet {
        self.training
    }

    pub fn training_len(&self) -> usize {
        self.training.points().len()
    }

    pub fn mesh(&self) -> UniformMesh1D {
        self.mesh
    }

    pub fn vspace(&self) -> &VSpace {
        &self.vspace
    }

    fn ensure_system(&mut self, i: usize) -> Result<()> {
        if self.systems[i].is_none() {
            let a = assemble_system(self.problem, &self.training.points()[i], self.mesh)?;
            self.systems[i] = Some(a);
        }
        Ok(())
    }

    fn ensure_truth(&mut self, i: usize) -> Result<()> {
        if self.truths[i].is_none() {
            let u = solve_truth(self.problem, &self.training.points()[i], self.mesh)?;
            self.truths[i] = Some(u);
        }
        Ok(())
    }

    /// Cached truth solution at training index `i`.
    pub fn truth(&mut self, i: usize) -> Result<&GridFunction> {
        self.ensure_truth(i)?;
        Ok(self.truths[i].as_ref().expect("just cached"))
    }

    /// True best-fit error of the truth at training index `i`.
    pub fn best_fit(&mut self, i: usize, basis: &ReducedBasis) -> Result<f64> {
        self.ensure_truth(i)?;
        let u = self.truths[i].as_ref().expect("just cached");
        best_fit_error(u, basis, &self.vspace)
    }

    /// True reduced-basis error `|| u(y_i) - u_n(y_i) ||_V` at index `i`.
    pub fn true_error(&mut self, i: usize, basis: &ReducedBasis) -> Result<f64> {
        self.ensure_system(i)?;
        self.ensure_truth(i)?;
        let a = self.systems[i].as_ref().expect("just cached");
        let c = reduced_solve(basis, a, &self.load)?;
        let un = basis.combination(&c)?;
        let u = self.truths[i].as_ref().expect("just cached");
        let mut diff = u.clone();
        diff.axpy(-1.0, &un);
        self.vspace.norm(&diff)
    }

    /// Estimator `Delta_n(y_i)` at training index `i`.
    pub fn estimator(&mut self, i: usize, basis: &ReducedBasis) -> Result<f64> {
        self.ensure_system(i)?;
        let a = self.systems[i].as_ref().expect("just cached");
        if basis.is_empty() {
            return self.vspace.riesz_dual_norm(&self.load);
        }
        let c = reduced_solve(basis, a, &self.load)?;
        residual_estimator(basis, &c, a, &self.load, &self.vspace)
    }

    /// One-shot estimator sweep of a subset against a fixed basis.
    pub fn estimator_errors(&mut self, subset: &[usize], basis: &ReducedBasis) -> Result<Vec<f64>> {
        subset.iter().map(|&i| self.estimator(i, basis)).collect()
    }

    /// Estimator at an arbitrary in-box parameter (assembled on the fly).
    pub fn evaluate(&self, basis: &ReducedBasis, y: &[f64]) -> Result<f64> {
        let a = assemble_system(self.problem, y, self.mesh)?;
        if basis.is_empty() {
            return self.vspace.riesz_dual_norm(&self.load);
        }
        let c = reduced_solve(basis, &a, &self.load)?;
        residual_estimator(basis, &c, &a, &self.load, &self.vspace)
    }

    /// Plain greedy over a subset: random (seeded) first snapshot, then
    /// argmax of the estimator until `epsilon` or `n_max`.
    pub fn greedy_on(&mut self, subset: &[usize], config: &GreedyConfig) -> Result<GreedyResult> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut rng = SplitMix64::new(config.seed);
        let first = subset[rng.next_below(subset.len())];
        let basis = ReducedBasis::new(self.mesh);
        self.run(subset, basis, Some(first), config)
    }

    /// Greedy over the full training set.
    pub fn greedy(&mut self, config: &GreedyConfig) -> Result<GreedyResult> {
        let subset: Vec<usize> = (0..self.training_len()).collect();
        self.greedy_on(&subset, config)
    }

    /// Continues the greedy from an existing basis; with `n_max` equal to
    /// the current dimension this just sweeps and reports.
    pub fn restarted_on(
        &mut self,
        subset: &[usize],
        start: &ReducedBasis,
        config: &GreedyConfig,
    ) -> Result<GreedyResult> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        self.run(subset, start.clone(), None, config)
    }

    fn run(
        &mut self,
        subset: &[usize],
        mut basis: ReducedBasis,
        first: Option<usize>,
        config: &GreedyConfig,
    ) -> Result<GreedyResult> {
        let mut new_indices = Vec::new();
        let mut history = Vec::new();
        if let Some(first) = first {
            self.ensure_truth(first)?;
            let u = self.truths[first].as_ref().expect("just cached").clone();
            if basis.orthonormalize_append(&u, &self.vspace, first)? {
                new_indices.push(first);
            }
        }
        // per-element sweep state: reduced Gram (row-major, grows with the
        // basis) and the reduced load, shared since f is parameter-free
        let mut grams: Vec<Vec<f64>> = vec![Vec::new(); subset.len()];
        let mut rhs: Vec<f64> = Vec::new();
        let mut built = 0usize; // basis columns already folded into the state
        let mut stagnated = false;
        let (errors, error) = loop {
            let n = basis.dim();
            // fold any new basis vectors into the sweep state
            while built < n {
                let b_new = basis.vector(built).clone();
                rhs.push(dot(b_new.values(), &self.load));
                for (pos, &i) in subset.iter().enumerate() {
                    self.ensure_system(i)?;
                    let a = self.systems[i].as_ref().expect("just cached");
                    let w = a.matvec(b_new.values());
                    let wt = a.matvec_transpose(b_new.values());
                    let old = &grams[pos];
                    let m = built; // previous dimension
                    let mut next = vec![0.0; (m + 1) * (m + 1)];
                    for j in 0..m {
                        for k in 0..m {
                            next[j * (m + 1) + k] = old[j * m + k];
                        }
                    }
                    for j in 0..m {
                        next[j * (m + 1) + m] = dot(basis.vector(j).values(), &w);
                        next[m * (m + 1) + j] = dot(basis.vector(j).values(), &wt);
                    }
                    next[m * (m + 1) + m] = dot(b_new.values(), &w);
                    grams[pos] = next;
                }
                built += 1;
            }
            // estimator sweep
            let mut errors = Vec::with_capacity(subset.len());
            for (pos, &i) in subset.iter().enumerate() {
                self.ensure_system(i)?;
                let a = self.systems[i].as_ref().expect("just cached");
                let e = if n == 0 {
                    self.vspace.riesz_dual_norm(&self.load)?
                } else {
                    let c = lu_solve(grams[pos].clone(), rhs.clone())?;
                    residual_estimator(&basis, &c, a, &self.load, &self.vspace)?
                };
                errors.push(e);
            }
            let max_err = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            history.push(GreedyIterRecord {
                dim: n,
                max_estimator: max_err,
                selected: new_indices.last().copied(),
            });
            if max_err <= config.epsilon {
                break (errors, max_err);
            }
            if let Some(cap) = config.n_max {
                if n >= cap {
                    break (errors, max_err);
                }
            }
            // append the worst element; skip candidates whose snapshot is
            // already (numerically) in the span
            let mut order: Vec<usize> = (0..subset.len()).collect();
            order.sort_by(|&a, &b| {
                errors[b].partial_cmp(&errors[a]).expect("finite estimators").then(
                    subset[a].cmp(&subset[b]),
                )
            });
            let mut appended = false;
            for pos in order {
                let i = subset[pos];
                if basis.origins().contains(&i) {
                    continue;
                }
                self.ensure_truth(i)?;
                let u = self.truths[i].as_ref().expect("just cached").clone();
                if basis.orthonormalize_append(&u, &self.vspace, i)? {
                    new_indices.push(i);
                    appended = true;
                    break;
                }
            }
            if !appended {
                stagnated = true;
                break (errors, max_err);
            }
            // reaching n_max stops the run at once; the achieved error is
            // the last sweep's, so a capped run is converged only if that
            // sweep was already within tolerance
            if let Some(cap) = config.n_max {
                if basis.dim() >= cap {
                    break (errors, max_err);
                }
            }
        };
        let converged = error <= config.epsilon;
        Ok(GreedyResult {
            basis,
            history,
            errors,
            error,
            converged,
            stagnated,
            new_indices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem1d::build_mesh;
    use crate::problems::{make_training_set, TrainingSpec};

    fn diff1_setup(cells: usize, per_dim: usize) -> (HilbertProblem, TrainingSet, UniformMesh1D) {
        let problem = HilbertProblem::diff1(1.0).unwrap();
        let training = make_training_set(
            &problem.parameter_box(),
            TrainingSpec::Grid {
                counts: vec![per_dim, per_dim],
            },
        )
        .unwrap();
        (problem, training, build_mesh(cells).unwrap())
    }

    #[test]
    fn orthonormalization_invariants() {
        let (problem, training, mesh) = diff1_setup(128, 5);
        let vspace = VSpace::new(mesh);
        let mut basis = ReducedBasis::new(mesh);
        for i in [0usize, 6, 12, 18, 24] {
            let u = solve_truth(&problem, &training.points()[i], mesh).unwrap();
            assert!(basis.orthonormalize_append(&u, &vspace, i).unwrap());
        }
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                let g = vspace.inner(basis.vector(i), basis.vector(j)).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-10, "G[{i}][{j}] = {g}");
            }
        }
        // re-appending a snapshot already in the span is rejected
        let u = solve_truth(&problem, &training.points()[6], mesh).unwrap();
        assert!(!basis.orthonormalize_append(&u, &vspace, 6).unwrap());
        assert_eq!(basis.dim(), 5);
    }

    #[test]
    fn zero_snapshot_is_rejected() {
        let mesh = build_mesh(16).unwrap();
        let vspace = VSpace::new(mesh);
        let mut basis = ReducedBasis::new(mesh);
        let zero = GridFunction::zeros(mesh);
        assert!(!basis.orthonormalize_append(&zero, &vspace, 0).unwrap());
    }

    #[test]
    fn snapshot_in_span_has_zero_errors() {
        let (problem, training, mesh) = diff1_setup(256, 3);
        let vspace = VSpace::new(mesh);
        let y = &training.points()[4];
        let u = solve_truth(&problem, y, mesh).unwrap();
        let mut basis = ReducedBasis::new(mesh);
        basis.orthonormalize_append(&u, &vspace, 4).unwrap();
        let a = assemble_system(&problem, y, mesh).unwrap();
        let f = assemble_load(mesh);
        let c = reduced_solve(&basis, &a, &f).unwrap();
        let delta = residual_estimator(&basis, &c, &a, &f, &vspace).unwrap();
        let norm = vspace.norm(&u).unwrap();
        assert!(delta < 1e-9 * norm, "estimator {delta}");
        assert!(best_fit_error(&u, &basis, &vspace).unwrap() < 1e-10 * norm);
    }

    #[test]
    fn delta_zero_is_load_dual_norm() {
        let (problem, training, mesh) = diff1_setup(128, 3);
        let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
        let basis = ReducedBasis::new(mesh);
        let d0 = driver.estimator(0, &basis).unwrap();
        let f = assemble_load(mesh);
        let expected = VSpace::new(mesh).riesz_dual_norm(&f).unwrap();
        assert_eq!(d0, expected);
        assert!(d0 > 0.0);
    }

    #[test]
    fn estimator_true_error_equivalence_band() {
        let alpha = 1.0;
        let problem = HilbertProblem::diff1(alpha).unwrap();
        let training = make_training_set(
            &problem.parameter_box(),
            TrainingSpec::Grid { counts: vec![7, 7] },
        )
        .unwrap();
        let mesh = build_mesh(512).unwrap();
        let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
        let vspace = VSpace::new(mesh);
        let mut basis = ReducedBasis::new(mesh);
        for i in [0usize, 24, 48] {
            let u = solve_truth(&problem, &training.points()[i], mesh).unwrap();
            basis.orthonormalize_append(&u, &vspace, i).unwrap();
        }
        let (r, big_r) = problem.constants();
        for i in 0..training.points().len() {
            let e = driver.true_error(i, &basis).unwrap();
            let d = driver.estimator(i, &basis).unwrap();
            if e < 1e-13 {
                continue; // both are roundoff
            }
            assert!(
                r * e <= d * (1.0 + 1e-8) && d <= big_r * e * (1.0 + 1e-8),
                "y_{i}: e = {e}, delta = {d}, band [{}, {}]",
                r * e,
                big_r * e
            );
        }
    }

    #[test]
    fn greedy_converges_and_is_reproducible() {
        let (problem, training, mesh) = diff1_setup(256, 6);
        let config = GreedyConfig {
            epsilon: 1e-6,
            n_max: Some(30),
            seed: 42,
        };
        let run1 = {
            let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
            driver.greedy(&config).unwrap()
        };
        let run2 = {
            let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
            driver.greedy(&config).unwrap()
        };
        assert!(run1.converged, "max estimator {}", run1.error);
        assert_eq!(run1.basis.origins(), run2.basis.origins());
        for (a, b) in run1.history.iter().zip(&run2.history) {
            assert_eq!(a.max_estimator, b.max_estimator);
        }
        // convergence history is nonincreasing
        for w in run1.history.windows(2) {
            assert!(w[1].max_estimator <= w[0].max_estimator * (1.0 + 1e-12));
        }
    }

    #[test]
    fn restarted_greedy_matches_cold_run() {
        let (problem, training, mesh) = diff1_setup(128, 5);
        let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
        let config = GreedyConfig {
            epsilon: 1e-8,
            n_max: Some(8),
            seed: 7,
        };
        let cold = driver.greedy(&config).unwrap();
        assert!(cold.basis.dim() >= 5);
        // rebuild the first 3 snapshots, then resume
        let vspace = VSpace::new(mesh);
        let mut prefix = ReducedBasis::new(mesh);
        for &i in &cold.basis.origins()[..3] {
            let u = driver.truth(i).unwrap().clone();
            prefix.orthonormalize_append(&u, &vspace, i).unwrap();
        }
        let subset: Vec<usize> = (0..training.points().len()).collect();
        let resumed = driver.restarted_on(&subset, &prefix, &config).unwrap();
        assert_eq!(resumed.basis.origins(), cold.basis.origins());
        assert_eq!(resumed.new_indices, cold.basis.origins()[3..].to_vec());
        // n_max at the current dimension: sweep only, no additions
        let frozen = driver
            .restarted_on(
                &subset,
                &cold.basis,
                &GreedyConfig {
                    epsilon: 0.0,
                    n_max: Some(cold.basis.dim()),
                    seed: 7,
                },
            )
            .unwrap();
        assert_eq!(frozen.basis.dim(), cold.basis.dim());
        assert!(frozen.new_indices.is_empty());
    }

    #[test]
    fn forced_extra_steps_append_exactly() {
        // epsilon = 0 with n_max = dim + 2 appends exactly two snapshots
        let (problem, training, mesh) = diff1_setup(128, 5);
        let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
        let subset: Vec<usize> = (0..training.points().len()).collect();
        let cold = driver
            .greedy(&GreedyConfig {
                epsilon: 1e-3,
                n_max: Some(4),
                seed: 3,
            })
            .unwrap();
        let k = cold.basis.dim();
        let extended = driver
            .restarted_on(
                &subset,
                &cold.basis,
                &GreedyConfig {
                    epsilon: 0.0,
                    n_max: Some(k + 2),
                    seed: 3,
                },
            )
            .unwrap();
        assert_eq!(extended.new_indices.len(), 2);
        assert_eq!(extended.basis.dim(), k + 2);
    }

    #[test]
    fn evaluate_at_off_training_parameter() {
        let (problem, training, mesh) = diff1_setup(256, 5);
        let mut driver = HilbertGreedyDriver::new(&problem, &training, mesh).unwrap();
        let run = driver
            .greedy(&GreedyConfig {
                epsilon: 1e-7,
                n_max: Some(25),
                seed: 1,
            })
            .unwrap();
        assert!(run.converged);
        // off-grid parameters stay within a modest factor of epsilon
        let d = driver.evaluate(&run.basis, &[0.123, -0.456]).unwrap();
        assert!(d < 1e-5, "off-training estimator {d}");
        assert!(driver.evaluate(&run.basis, &[2.0, 0.0]).is_err());
    }
}
