//! The metric backend for `V = (P_2(Omega), W_2)` in one spatial dimension.
//!
//! Everything runs in quantile space: the map `mu -> F_mu^{-1}` is an
//! isometry from `(P_2, W_2)` onto a convex cone of `L^2(0,1)`, distances
//! are quadrature norms of quantile differences, and a barycenter quantile
//! is the weighted average of the generator quantiles. Quantiles are
//! sampled at the `S` midpoint nodes `s_j = (j - 1/2) / S`.

use crate::math::sqrt;
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Uniform spatial grid with `len` nodes on `[x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1d {
    x_lo: f64,
    x_hi: f64,
    len: usize,
}

impl Grid1d {
    pub fn new(x_lo: f64, x_hi: f64, len: usize) -> Result<Self> {
        if !(x_lo < x_hi) || len < 2 {
            return Err(Error::Config(alloc::format!(
                "invalid grid [{x_lo}, {x_hi}] with {len} points"
            )));
        }
        Ok(Grid1d { x_lo, x_hi, len })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.len - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.node(i))
    }
}

/// Probability density sampled on a uniform grid, normalized so that
/// `sum(density) * dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid1d,
    density: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid1d, mut density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        for v in &mut density {
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::NotNormalized { mass: *v });
                }
                *v = 0.0;
            }
        }
        let mass: f64 = density.iter().sum::<f64>() * grid.dx();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NotNormalized { mass });
        }
        for v in &mut density {
            *v /= mass;
        }
        Ok(DiscreteMeasure { grid, density })
    }

    pub fn grid(&self) -> Grid1d {
        self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }
}

/// Inverse CDF sampled at the `S` midpoint quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFunction {
    values: Vec<f64>,
}

impl QuantileFunction {
    pub fn s_count(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Staircase quantile of a set of equal-weight atoms (must be sorted).
    pub fn from_atoms(sorted_atoms: &[f64], s: usize) -> Result<Self> {
        if sorted_atoms.is_empty() || s < 16 {
            return Err(Error::Config("need atoms and S >= 16".into()));
        }
        let m = sorted_atoms.len();
        let values = (0..s)
            .map(|j| {
                let pos = (j as f64 + 0.5) / s as f64 * m as f64;
                sorted_atoms[(pos as usize).min(m - 1)]
            })
            .collect();
        Ok(QuantileFunction { values })
    }
}

/// Quantile transform of a grid measure through its piecewise-linear
/// (trapezoidal) CDF, inverted at the midpoint nodes.
pub fn quantile_transform(measure: &DiscreteMeasure, s: usize) -> Result<QuantileFunction> {
    if s < 16 {
        return Err(Error::Config("quantile node count S must be >= 16".into()));
    }
    let grid = measure.grid();
    let d = measure.density();
    let mass: f64 = d.iter().sum::<f64>() * grid.dx();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { mass });
    }
    let n = d.len();
    let dx = grid.dx();
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * (d[i - 1] + d[i]) * dx;
    }
    let end = cdf[n - 1];
    if !(end > 0.0) {
        return Err(Error::NotNormalized { mass: end });
    }
    let mut values = Vec::with_capacity(s);
    let mut seg = 0usize;
    for j in 0..s {
        let target = (j as f64 + 0.5) / s as f64 * end;
        while seg + 2 < n && cdf[seg + 1] < target {
            seg += 1;
        }
        let (c0, c1) = (cdf[seg], cdf[seg + 1]);
        let x = if c1 > c0 {
            grid.node(seg) + dx * ((target - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            grid.node(seg)
        };
        values.push(x);
    }
    Ok(QuantileFunction { values })
}

/// `W_2` between two quantile functions on the same node set.
pub fn w2_from_quantiles(a: &QuantileFunction, b: &QuantileFunction) -> Result<f64> {
    if a.s_count() != b.s_count() {
        return Err(Error::GridMismatch);
    }
    let s = a.s_count() as f64;
    let sq: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(sqrt(sq / s))
}

/// Closed-form 1D `W_2` distance via quantiles.
pub fn w2_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure, s: usize) -> Result<f64> {
    if mu.grid() != nu.grid() {
        return Err(Error::GridMismatch);
    }
    w2_from_quantiles(&quantile_transform(mu, s)?, &quantile_transform(nu, s)?)
}

/// Barycentric weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    weights: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < -1e-10) || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidWeights);
        }
        let weights = weights.iter().map(|&w| w.max(0.0)).collect();
        Ok(SimplexWeights { weights })
    }

    pub fn uniform(n: usize) -> Self {
        SimplexWeights {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        SimplexWeights { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &val) in sorted.iter().enumerate() {
        cumsum += val;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if val - candidate > 0.0 {
            tau = candidate;
        }
    }
    (0..n).map(|i| (v[i] - tau).max(0.0)).collect()
}

/// Generator set of a barycentric approximation space, with quantiles and
/// their Gram matrix precomputed.
#[derive(Debug, Clone)]
pub struct BarycentricSpace {
    generators: Vec<DiscreteMeasure>,
    quantiles: Vec<QuantileFunction>,
    gram: Vec<f64>,
    s: usize,
}

/// Quadrature inner product `(1/S) sum_j a_j b_j` of quantile samples.
fn quad_dot(a: &[f64], b: &[f64]) -> f64 {
    let s = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / s
}

impl BarycentricSpace {
    pub fn new(generators: Vec<DiscreteMeasure>, s: usize) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::EmptySubset);
        }
        let grid = generators[0].grid();
        if generators.iter().any(|g| g.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let quantiles: Vec<QuantileFunction> = generators
            .iter()
            .map(|g| quantile_transform(g, s))
            .collect::<Result<_>>()?;
        let gram = gram_matrix(&quantiles);
        Ok(BarycentricSpace {
            generators,
            quantiles,
            gram,
            s,
        })
    }

    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn s_count(&self) -> usize {
        self.s
    }

    pub fn grid(&self) -> Grid1d {
        self.generators[0].grid()
    }

    pub fn generator(&self, i: usize) -> &DiscreteMeasure {
        &self.generators[i]
    }

    pub fn quantile(&self, i: usize) -> &QuantileFunction {
        &self.quantiles[i]
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }
}

pub(crate) fn gram_matrix(quantiles: &[QuantileFunction]) -> Vec<f64> {
    let n = quantiles.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = quad_dot(quantiles[i].values(), quantiles[j].values());
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    gram
}

/// Barycenter of the generators under the given weights: the quantile is
/// the weighted average, and the density is recovered by inverting the
/// averaged quantile back onto the grid.
pub fn barycenter(weights: &SimplexWeights, space: &BarycentricSpace) -> Result<DiscreteMeasure> {
    if weights.len() != space.dim() {
        return Err(Error::InvalidWeights);
    }
    let q = combined_quantile(weights.as_slice(), &space.quantiles);
    density_from_quantile(&q, space.grid())
}

pub(crate) fn combined_quantile(weights: &[f64], quantiles: &[QuantileFunction]) -> Vec<f64> {
    let s = quantiles[0].s_count();
    let mut q = vec![0.0; s];
    for (w, qf) in weights.iter().zip(quantiles) {
        if *w == 0.0 {
            continue;
        }
        for (acc, v) in q.iter_mut().zip(qf.values()) {
            *acc += w * v;
        }
    }
    q
}

/// Rebuilds a grid density from quantile samples: the CDF is the inverse
/// of the (nondecreasing) quantile graph, differenced per grid cell. Flat
/// quantile stretches (atoms) land inside a single cell.
pub(crate) fn density_from_quantile(q: &[f64], grid: Grid1d) -> Result<DiscreteMeasure> {
    let s = q.len();
    let n = grid.len();
    let dx = grid.dx();
    // knots of the CDF graph: (q_j, s_j) with end extensions to 0 and 1
    let cdf_at = |x: f64, hint: &mut usize| -> f64 {
        if x <= q[0] {
            return if x < q[0] { 0.0 } else { 0.5 / s as f64 };
        }
        if x >= q[s - 1] {
            return 1.0;
        }
        let mut j = *hint;
        while j + 1 < s && q[j + 1] < x {
            j += 1;
        }
        *hint = j;
        let (s0, s1) = ((j as f64 + 0.5) / s as f64, (j as f64 + 1.5) / s as f64);
        if q[j + 1] > q[j] {
            s0 + (s1 - s0) * (x - q[j]) / (q[j + 1] - q[j])
        } else {
            s1
        }
    };
    let mut hint = 0usize;
    let mut density = vec![0.0; n];
    let mut prev = cdf_at(grid.node(0) - 0.5 * dx, &mut hint);
    for (i, slot) in density.iter_mut().enumerate() {
        let next = cdf_at(grid.node(i) + 0.5 * dx, &mut hint);
        *slot = (next - prev).max(0.0) / dx;
        prev = next;
    }
    DiscreteMeasure::new(grid, density)
}

/// Result of a simplex-constrained projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub weights: SimplexWeights,
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
}

const PROJECTION_MAX_ITERS: usize = 5000;
const PROJECTION_GRAD_TOL: f64 = 1e-10;

/// Minimizes `|| q - sum_i w_i q_i ||_S^2` over the simplex by projected
/// gradient with Armijo backtracking; the objective is a convex quadratic,
/// so the method converges to the global minimum.
pub(crate) fn project_quadratic(
    gram: &[f64],
    b: &[f64],
    c: f64,
    init: Option<&[f64]>,
) -> Projection {
    let n = b.len();
    let mut w: Vec<f64> = match init {
        Some(start) if start.len() == n => simplex_project(start),
        _ => vec![1.0 / n as f64; n],
    };
    let objective = |w: &[f64]| -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..n {
            let mut gw = 0.0;
            for j in 0..n {
                gw += gram[i * n + j] * w[j];
            }
            quad += w[i] * gw;
            lin += b[i] * w[i];
        }
        quad - 2.0 * lin + c
    };
    let gradient = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut gw = 0.0;
                for j in 0..n {
                    gw += gram[i * n + j] * w[j];
                }
                2.0 * (gw - b[i])
            })
            .collect()
    };
    if n == 1 {
        let f = objective(&[1.0]);
        return Projection {
            weights: SimplexWeights { weights: vec![1.0] },
            distance: sqrt(f.max(0.0)),
            converged: true,
            iterations: 0,
        };
    }
    // vertex objectives are cheap and guarantee the optimality invariant
    // (returned distance never exceeds any single-generator distance);
    // they also rescue near-singular Gram matrices where the iteration
    // stalls short of an exact vertex solution
    let vertex_f = |i: usize| gram[i * n + i] - 2.0 * b[i] + c;
    let best_vertex = (0..n)
        .map(|i| (i, vertex_f(i)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objective"))
        .expect("n >= 1");
    let mut f = objective(&w);
    if best_vertex.1 < f {
        w = vec![0.0; n];
        w[best_vertex.0] = 1.0;
        f = best_vertex.1;
    }
    let mut step = 1.0;
    let mut converged = false;
    let mut iters = 0;
    // spectral (Barzilai-Borwein) trial step, safeguarded by Armijo below;
    // plain 1/L steps crawl on the near-collinear Gram matrices that show
    // up once the generator set grows
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    while iters < PROJECTION_MAX_ITERS {
        iters += 1;
        let g = gradient(&w);
        if let Some((pw, pg)) = &prev {
            let mut sy = 0.0;
            let mut ss = 0.0;
            for i in 0..n {
                let si = w[i] - pw[i];
                sy += si * (g[i] - pg[i]);
                ss += si * si;
            }
            if sy > 0.0 && ss > 0.0 {
                step = (ss / sy).clamp(1e-12, 1e12);
            }
        }
        prev = Some((w.clone(), g.clone()));
        // Armijo backtracking: sufficient decrease along the projected step
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - t * gi).collect();
            let next = simplex_project(&trial);
            let d: Vec<f64> = next.iter().zip(&w).map(|(a, b)| a - b).collect();
            let d_sq: f64 = d.iter().map(|v| v * v).sum();
            let f_next = objective(&next);
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if f_next <= f + 1e-4 * lin + 1e-30 {
                accepted = Some((next, f_next, d_sq, t));
                break;
            }
            t *= 0.5;
        }
        let Some((next, f_next, d_sq, t)) = accepted else {
            break;
        };
        let grad_map = sqrt(d_sq) / t;
        w = next;
        f = f_next;
        step = t;
        if grad_map <= PROJECTION_GRAD_TOL {
            converged = true;
            break;
        }
    }
    Projection {
        weights: SimplexWeights { weights: w },
        distance: sqrt(f.max(0.0)),
        converged,
        iterations: iters,
    }
}

pub(crate) fn projection_data(
    target: &QuantileFunction,
    quantiles: &[QuantileFunction],
) -> (Vec<f64>, f64) {
    let b: Vec<f64> = quantiles
        .iter()
        .map(|q| quad_dot(q.values(), target.values()))
        .collect();
    let c = quad_dot(target.values(), target.values());
    (b, c)
}

/// Projects `nu` onto the barycentric space: weights and achieved `W_2`.
pub fn project_to_barycentric(
    nu: &DiscreteMeasure,
    space: &BarycentricSpace,
) -> Result<Projection> {
    if nu.grid() != space.grid() {
        return Err(Error::GridMismatch);
    }
    let q = quantile_transform(nu, space.s)?;
    let (b, c) = projection_data(&q, &space.quantiles);
    Ok(project_quadratic(&space.gram, &b, c, None))
}

/// Configuration of the barycentric greedy run.
#[derive(Debug, Clone)]
pub struct BarycentricGreedyConfig {
    pub epsilon: f64,
    pub n_max: Option<usize>,
}

/// One record of the greedy history: dimension reached, max projection
/// error over the training subset, and the element selected at this step.
#[derive(Debug, Clone)]
pub struct BarycentricIterRecord {
    pub dim: usize,
    pub max_error: f64,
    pub selected: Option<usize>,
}

/// Output of the (restarted) barycentric greedy.
#[derive(Debug, Clone)]
pub struct BarycentricGreedyResult {
    /// Training indices of the generators, in selection order.
    pub generators: Vec<usize>,
    /// Generators appended by this run (excludes any starting set).
    pub new_generators: Vec<usize>,
    pub history: Vec<BarycentricIterRecord>,
    /// Per-element projection errors over the subset swept last.
    pub errors: Vec<f64>,
    pub error: f64,
    pub converged: bool,
    pub stagnated: bool,
}

/// Greedy driver over a fixed set of training measures; quantiles are
/// computed once up front.
pub struct BarycentricGreedyDriver {
    quantiles: Vec<QuantileFunction>,
    grid: Grid1d,
    s: usize,
}

impl BarycentricGreedyDriver {
    pub fn new(measures: &[DiscreteMeasure], s: usize) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::EmptySubset);
        }
        let grid = measures[0].grid();
        if measures.iter().any(|m| m.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let quantiles = measures
            .iter()
            .map(|m| quantile_transform(m, s))
            .collect::<Result<_>>()?;
        Ok(BarycentricGreedyDriver { quantiles, grid, s })
    }

    pub fn len(&self) -> usize {
        self.quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantiles.is_empty()
    }

    pub fn grid(&self) -> Grid1d {
        self.grid
    }

    pub fn s_count(&self) -> usize {
        self.s
    }

    pub fn quantile(&self, i: usize) -> &QuantileFunction {
        &self.quantiles[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        w2_from_quantiles(&self.quantiles[i], &self.quantiles[j]).expect("same S")
    }

    /// Exhaustive farthest pair over the subset; ties resolve to the
    /// lexicographically lowest index pair.
    pub fn farthest_pair(&self, subset: &[usize]) -> Result<(usize, usize)> {
        if subset.len() < 2 {
            return Err(Error::EmptySubset);
        }
        let mut best = (subset[0], subset[1]);
        let mut best_d = -1.0;
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                let d = self.distance(i, j);
                if d > best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        Ok(best)
    }

    /// Per-element projection errors of `subset` against the generator set.
    pub fn projection_errors(&self, subset: &[usize], generators: &[usize]) -> Vec<f64> {
        let gen_q: Vec<QuantileFunction> =
            generators.iter().map(|&g| self.quantiles[g].clone()).collect();
        let gram = gram_matrix(&gen_q);
        subset
            .iter()
            .map(|&i| {
                let (b, c) = projection_data(&self.quantiles[i], &gen_q);
                project_quadratic(&gram, &b, c, None).distance
            })
            .collect()
    }

    /// Plain barycentric greedy on a subset, initialized with the farthest
    /// pair.
    pub fn greedy_on(
        &self,
        subset: &[usize],
        config: &BarycentricGreedyConfig,
    ) -> Result<BarycentricGreedyResult> {
        let (u1, u2) = self.farthest_pair(subset)?;
        self.run(subset, vec![u1, u2], 2, config)
    }

    /// Continues the greedy from an existing generator set.
    pub fn restarted_on(
        &self,
        subset: &[usize],
        start: &[usize],
        config: &BarycentricGreedyConfig,
    ) -> Result<BarycentricGreedyResult> {
        if start.is_empty() {
            return Err(Error::EmptySubset);
        }
        self.run(subset, start.to_vec(), 0, config)
    }

    fn run(
        &self,
        subset: &[usize],
        mut generators: Vec<usize>,
        new_count: usize,
        config: &BarycentricGreedyConfig,
    ) -> Result<BarycentricGreedyResult> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut new_generators: Vec<usize> = generators[generators.len() - new_count..].to_vec();
        let mut history = Vec::new();
        // warm starts carried across iterations
        let mut warm: Vec<Vec<f64>> = vec![Vec::new(); subset.len()];
        let mut stagnated = false;
        // projection errors are non-increasing in the generator set, so a
        // sweep may skip any element whose previous error already sits at or
        // below the running max; stale entries are refreshed on exit
        let mut errors = vec![f64::INFINITY; subset.len()];
        let mut fresh_at = vec![usize::MAX; subset.len()];
        let mut order: Vec<usize> = (0..subset.len()).collect();
        let project_one = |gram: &[f64],
                           gen_q: &[QuantileFunction],
                           slot: &mut Vec<f64>,
                           i: usize|
         -> f64 {
            while slot.len() < gen_q.len() {
                slot.push(0.0);
            }
            let (b, c) = projection_data(&self.quantiles[i], gen_q);
            let proj = project_quadratic(gram, &b, c, Some(slot));
            *slot = proj.weights.as_slice().to_vec();
            proj.distance
        };
        let mut last_n;
        let error = loop {
            let gen_q: Vec<QuantileFunction> =
                generators.iter().map(|&g| self.quantiles[g].clone()).collect();
            let gram = gram_matrix(&gen_q);
            let n = generators.len();
            last_n = n;
            order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap().then(a.cmp(&b)));
            let (mut max_err, mut argmax) = (f64::NEG_INFINITY, 0);
            for &pos in &order {
                if errors[pos] <= max_err {
                    break;
                }
                let e = project_one(&gram, &gen_q, &mut warm[pos], subset[pos]);
                errors[pos] = e;
                fresh_at[pos] = n;
                if e > max_err || (e == max_err && pos < argmax) {
                    max_err = e;
                    argmax = pos;
                }
            }
            history.push(BarycentricIterRecord {
                dim: n,
                max_error: max_err,
                // generator appended just before this sweep, if any
                selected: new_generators.last().copied(),
            });
            if max_err <= config.epsilon {
                break max_err;
            }
            if let Some(cap) = config.n_max {
                if n >= cap {
                    break max_err;
                }
            }
            let candidate = subset[argmax];
            if generators.contains(&candidate) {
                stagnated = true;
                break max_err;
            }
            generators.push(candidate);
            new_generators.push(candidate);
            // reaching n_max stops the run at once; the achieved error is
            // the last sweep's, so a capped run is converged only if that
            // sweep was already within tolerance
            if let Some(cap) = config.n_max {
                if generators.len() >= cap {
                    break max_err;
                }
            }
        };
        if fresh_at.iter().any(|&f| f != last_n) {
            // refresh entries skipped in the final sweep, against the
            // generator prefix that sweep used
            let gen_q: Vec<QuantileFunction> =
                generators[..last_n].iter().map(|&g| self.quantiles[g].clone()).collect();
            let gram = gram_matrix(&gen_q);
            for pos in 0..subset.len() {
                if fresh_at[pos] != last_n {
                    errors[pos] = project_one(&gram, &gen_q, &mut warm[pos], subset[pos]);
                }
            }
        }
        let converged = error <= config.epsilon;
        Ok(BarycentricGreedyResult {
            generators,
            new_generators,
            history,
            errors,
            error,
            converged,
            stagnated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn unit_grid(n: usize) -> Grid1d {
        Grid1d::new(0.0, 1.0, n).unwrap()
    }

    fn gaussian(grid: Grid1d, center: f64, width: f64) -> DiscreteMeasure {
        let d: Vec<f64> = grid
            .nodes()
            .map(|x| (-(x - center) * (x - center) / (2.0 * width * width)).exp())
            .collect();
        DiscreteMeasure::new(grid, d).unwrap()
    }

    #[test]
    fn uniform_density_has_identity_quantile() {
        let grid = unit_grid(1024);
        let m = DiscreteMeasure::new(grid, vec![1.0; 1024]).unwrap();
        let q = quantile_transform(&m, 1024).unwrap();
        for (j, &v) in q.values().iter().enumerate() {
            assert!((v - q.node(j)).abs() < 1e-6, "s={} q={}", q.node(j), v);
        }
    }

    #[test]
    fn quantile_translation_equivariance() {
        let grid = Grid1d::new(-1.0, 3.0, 2048).unwrap();
        let a = gaussian(grid, 0.5, 0.08);
        let b = gaussian(grid, 1.25, 0.08);
        let qa = quantile_transform(&a, 512).unwrap();
        let qb = quantile_transform(&b, 512).unwrap();
        for (x, y) in qa.values().iter().zip(qb.values()) {
            assert!((y - x - 0.75).abs() < 1e-3);
        }
    }

    #[test]
    fn quantiles_are_monotone() {
        let mut rng = SplitMix64::new(31);
        let grid = unit_grid(256);
        for _ in 0..50 {
            let d: Vec<f64> = (0..256).map(|_| rng.next_f64()).collect();
            let m = DiscreteMeasure::new(grid, d).unwrap();
            let q = quantile_transform(&m, 128).unwrap();
            for w in q.values().windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert!(q.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn w2_identity_and_translation() {
        let grid = Grid1d::new(-1.0, 3.0, 2048).unwrap();
        let a = gaussian(grid, 0.3, 0.05);
        assert_eq!(w2_distance(&a, &a, 1024).unwrap(), 0.0);
        let b = gaussian(grid, 1.0, 0.05);
        let d = w2_distance(&a, &b, 1024).unwrap();
        assert!((d - 0.7).abs() < 1e-4, "translation distance {d}");
    }

    #[test]
    fn w2_matches_monotone_matching_on_atoms() {
        // exact 1D OT between equal-weight atom sets is the sorted matching
        let mut rng = SplitMix64::new(2024);
        for _ in 0..50 {
            let m = 1 + rng.next_below(8);
            let s = 1024 * m; // atom blocks divide S exactly
            let mut a: Vec<f64> = (0..m).map(|_| rng.next_f64()).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.next_f64()).collect();
            a.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
            let qa = QuantileFunction::from_atoms(&a, s).unwrap();
            let qb = QuantileFunction::from_atoms(&b, s).unwrap();
            let got = w2_from_quantiles(&qa, &qb).unwrap();
            let exact = (a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / m as f64)
                .sqrt();
            assert!(
                (got - exact).abs() <= 1e-8 * (1.0 + exact),
                "{got} vs {exact}"
            );
        }
    }

    #[test]
    fn simplex_projection_basics() {
        let p = simplex_project(&[0.5, 0.5]);
        assert!((p[0] - 0.5).abs() < 1e-14 && (p[1] - 0.5).abs() < 1e-14);
        let p = simplex_project(&[10.0, 0.0, -3.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = simplex_project(&[0.2, 0.9, 0.3]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn barycenter_vertex_weights_reproduce_generators() {
        let grid = Grid1d::new(-1.0, 3.0, 1024).unwrap();
        let gens = vec![gaussian(grid, 0.2, 0.07), gaussian(grid, 1.4, 0.07)];
        let space = BarycentricSpace::new(gens.clone(), 512).unwrap();
        for i in 0..2 {
            let bar = barycenter(&SimplexWeights::vertex(2, i), &space).unwrap();
            let d = w2_distance(&bar, &gens[i], 512).unwrap();
            assert!(d <= 2.0 * grid.dx(), "vertex {i}: {d}");
        }
    }

    #[test]
    fn barycenter_of_translates_is_midpoint_bump() {
        let grid = Grid1d::new(-1.0, 3.0, 2048).unwrap();
        let a = gaussian(grid, 0.3, 0.06);
        let b = gaussian(grid, 1.7, 0.06);
        let space = BarycentricSpace::new(vec![a, b], 1024).unwrap();
        let bar = barycenter(&SimplexWeights::new(vec![0.5, 0.5]).unwrap(), &space).unwrap();
        let mid = gaussian(grid, 1.0, 0.06);
        let d = w2_distance(&bar, &mid, 1024).unwrap();
        assert!(d <= 2.0 * grid.dx(), "midpoint error {d}");
    }

    #[test]
    fn near_dirac_barycenter_center() {
        let grid = Grid1d::new(0.0, 1.0, 4096).unwrap();
        let a = gaussian(grid, 0.2, 0.004);
        let b = gaussian(grid, 0.8, 0.004);
        let space = BarycentricSpace::new(vec![a, b], 1024).unwrap();
        let lam = 0.25;
        let bar = barycenter(&SimplexWeights::new(vec![lam, 1.0 - lam]).unwrap(), &space).unwrap();
        // mean of the barycenter sits at lam*0.2 + (1-lam)*0.8
        let mean: f64 = bar
            .density()
            .iter()
            .enumerate()
            .map(|(i, d)| grid.node(i) * d)
            .sum::<f64>()
            * grid.dx();
        assert!((mean - (lam * 0.2 + (1.0 - lam) * 0.8)).abs() < 1e-3);
    }

    #[test]
    fn projection_examples() {
        let grid = Grid1d::new(-1.0, 3.0, 1024).unwrap();
        let gens = vec![
            gaussian(grid, 0.2, 0.07),
            gaussian(grid, 0.9, 0.1),
            gaussian(grid, 1.6, 0.05),
        ];
        let space = BarycentricSpace::new(gens.clone(), 512).unwrap();
        // a generator projects onto its own vertex
        let p = project_to_barycentric(&gens[0], &space).unwrap();
        assert!(p.distance <= 1e-8, "distance {}", p.distance);
        assert!((p.weights.as_slice()[0] - 1.0).abs() < 1e-5);
        // n = 1: the only weight is 1 and the distance is plain W2
        let single = BarycentricSpace::new(vec![gens[1].clone()], 512).unwrap();
        let p = project_to_barycentric(&gens[2], &single).unwrap();
        assert_eq!(p.weights.as_slice(), &[1.0]);
        let d = w2_distance(&gens[2], &gens[1], 512).unwrap();
        assert!((p.distance - d).abs() < 1e-12);
    }

    #[test]
    fn projection_beats_vertices_and_uniform() {
        let grid = Grid1d::new(-1.0, 3.0, 1024).unwrap();
        let gens = vec![
            gaussian(grid, 0.1, 0.08),
            gaussian(grid, 0.8, 0.06),
            gaussian(grid, 1.9, 0.09),
        ];
        let space = BarycentricSpace::new(gens, 512).unwrap();
        let target = gaussian(grid, 1.1, 0.07);
        let p = project_to_barycentric(&target, &space).unwrap();
        for i in 0..3 {
            let bar = barycenter(&SimplexWeights::vertex(3, i), &space).unwrap();
            let d = w2_distance(&target, &bar, 512).unwrap();
            assert!(p.distance <= d + 1e-9);
        }
        let bar = barycenter(&SimplexWeights::uniform(3), &space).unwrap();
        let d = w2_distance(&target, &bar, 512).unwrap();
        assert!(p.distance <= d + 1e-9);
    }

    #[test]
    fn projection_matches_simplex_grid_bruteforce() {
        let grid = Grid1d::new(-1.0, 3.0, 1024).unwrap();
        let mut rng = SplitMix64::new(5);
        for trial in 0..3 {
            let gens: Vec<DiscreteMeasure> = (0..3)
                .map(|_| gaussian(grid, 0.2 + 1.6 * rng.next_f64(), 0.05 + 0.05 * rng.next_f64()))
                .collect();
            let space = BarycentricSpace::new(gens, 512).unwrap();
            let target = gaussian(grid, 0.2 + 1.6 * rng.next_f64(), 0.06);
            let q = quantile_transform(&target, 512).unwrap();
            let (b, c) = projection_data(&q, &space.quantiles);
            let p = project_quadratic(space.gram(), &b, c, None);
            // brute force over the simplex gridded at step 0.02
            let objective = |w: &[f64]| -> f64 {
                let mut quad = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        quad += w[i] * space.gram()[i * 3 + j] * w[j];
                    }
                }
                quad - 2.0 * (0..3).map(|i| b[i] * w[i]).sum::<f64>() + c
            };
            let step = 0.02;
            let mut best = f64::INFINITY;
            let mut k = 0;
            while k <= 50 {
                let mut l = 0;
                while k + l <= 50 {
                    let w = [
                        k as f64 * step,
                        l as f64 * step,
                        1.0 - (k + l) as f64 * step,
                    ];
                    best = best.min(objective(&w));
                    l += 1;
                }
                k += 1;
            }
            let f_pg = p.distance * p.distance;
            assert!(f_pg <= best + 1e-9, "trial {trial}: pg {f_pg} grid {best}");
            // grid minimum can exceed the true minimum only by O(step^2)
            let trace: f64 = (0..3).map(|i| space.gram()[i * 3 + i]).sum();
            assert!(best - f_pg <= 4.0 * trace * step * step + 1e-9);
        }
    }

    #[test]
    fn greedy_on_two_measures_terminates_at_init() {
        let grid = Grid1d::new(-1.0, 3.0, 512).unwrap();
        let measures = vec![gaussian(grid, 0.3, 0.07), gaussian(grid, 1.5, 0.07)];
        let driver = BarycentricGreedyDriver::new(&measures, 256).unwrap();
        let result = driver
            .greedy_on(&[0, 1], &BarycentricGreedyConfig { epsilon: 1e-6, n_max: None })
            .unwrap();
        assert!(result.converged);
        assert_eq!(result.generators.len(), 2);
        assert!(result.error <= 1e-6);
    }

    #[test]
    fn greedy_on_translate_family() {
        // translates of a fixed bump: quantiles are affine in the shift, so
        // the two extreme translates approximate everything
        let grid = Grid1d::new(-1.0, 3.0, 2048).unwrap();
        let measures: Vec<DiscreteMeasure> = (0..21)
            .map(|i| gaussian(grid, 0.2 + 1.6 * i as f64 / 20.0, 0.06))
            .collect();
        let driver = BarycentricGreedyDriver::new(&measures, 512).unwrap();
        let subset: Vec<usize> = (0..21).collect();
        let (a, b) = driver.farthest_pair(&subset).unwrap();
        assert_eq!((a, b), (0, 20));
        let errors = driver.projection_errors(&subset, &[0, 20]);
        let max = errors.iter().cloned().fold(0.0f64, f64::max);
        assert!(max <= 2.0 * grid.dx(), "max translate error {max}");
    }

    #[test]
    fn restarted_greedy_consistency() {
        let grid = Grid1d::new(-1.0, 3.0, 1024).unwrap();
        let mut rng = SplitMix64::new(77);
        let measures: Vec<DiscreteMeasure> = (0..12)
            .map(|_| gaussian(grid, 0.2 + 1.6 * rng.next_f64(), 0.04 + 0.06 * rng.next_f64()))
            .collect();
        let driver = BarycentricGreedyDriver::new(&measures, 256).unwrap();
        let subset: Vec<usize> = (0..12).collect();
        let cold = driver
            .greedy_on(&subset, &BarycentricGreedyConfig { epsilon: 1e-9, n_max: Some(6) })
            .unwrap();
        let k = 4;
        let resumed = driver
            .restarted_on(
                &subset,
                &cold.generators[..k],
                &BarycentricGreedyConfig { epsilon: 1e-9, n_max: Some(6) },
            )
            .unwrap();
        assert_eq!(resumed.generators, cold.generators);
        // n_max equal to current size leaves the set unchanged
        let frozen = driver
            .restarted_on(
                &subset,
                &cold.generators,
                &BarycentricGreedyConfig { epsilon: 0.0, n_max: Some(cold.generators.len()) },
            )
            .unwrap();
        assert_eq!(frozen.generators, cold.generators);
        assert!(frozen.new_generators.is_empty());
        // two extra steps append at most two generators
        let extended = driver
            .restarted_on(
                &subset,
                &cold.generators[..k],
                &BarycentricGreedyConfig { epsilon: 0.0, n_max: Some(k + 2) },
            )
            .unwrap();
        assert!(extended.new_generators.len() <= 2);
    }

    #[test]
    fn greedy_history_is_monotone() {
        let grid = Grid1d::new(-1.0, 3.0, 1024).unwrap();
        let mut rng = SplitMix64::new(3);
        let measures: Vec<DiscreteMeasure> = (0..15)
            .map(|_| gaussian(grid, 0.2 + 1.6 * rng.next_f64(), 0.05 + 0.04 * rng.next_f64()))
            .collect();
        let driver = BarycentricGreedyDriver::new(&measures, 256).unwrap();
        let subset: Vec<usize> = (0..15).collect();
        let result = driver
            .greedy_on(&subset, &BarycentricGreedyConfig { epsilon: 1e-8, n_max: Some(10) })
            .unwrap();
        for w in result.history.windows(2) {
            assert!(w[1].max_error <= w[0].max_error + 1e-12);
        }
    }

    #[test]
    fn geodesic_interpolation() {
        let grid = Grid1d::new(-1.0, 3.0, 2048).unwrap();
        let a = gaussian(grid, 0.3, 0.06);
        let b = gaussian(grid, 1.7, 0.06);
        let space = BarycentricSpace::new(vec![a.clone(), b.clone()], 1024).unwrap();
        let full = w2_distance(&a, &b, 1024).unwrap();
        for &t in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let bar =
                barycenter(&SimplexWeights::new(vec![1.0 - t, t]).unwrap(), &space).unwrap();
            let d = w2_distance(&bar, &a, 1024).unwrap();
            let expected = t * full;
            assert!(
                (d - expected).abs() <= 2.0 * grid.dx() + 1e-3 * full,
                "t={t}: {d} vs {expected}"
            );
        }
    }
}
