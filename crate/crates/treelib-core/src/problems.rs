//! The parametric test problems: coefficient definitions, coercivity
//! constants, parameter boxes, training-set generation, and the closed-form
//! KdV two-soliton snapshot generator.

use crate::math::{cos, exp};
use crate::rng::SplitMix64;
use crate::wasserstein1d::{DiscreteMeasure, Grid1d};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

const PI: f64 = core::f64::consts::PI;

/// Smallest admissible `alpha` for the first diffusion coefficient; the
/// problem is coercive only above this value.
pub const DIFF1_ALPHA_MIN: f64 = 4.0 / (4.0 * PI * PI - 1.0);

/// Axis-aligned parameter box `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    bounds: Vec<(f64, f64)>,
}

impl ParameterBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::Config(format!("invalid parameter box {bounds:?}")));
        }
        Ok(ParameterBox { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && y.iter()
                .zip(&self.bounds)
                .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    /// Per-coordinate affine map onto `[0, 1]^p`.
    pub fn normalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }
}

/// How a training set was generated; kept for provenance in run outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSpec {
    /// Tensor grid, equally spaced including endpoints, row-major ordering
    /// (first coordinate slowest).
    Grid { counts: Vec<usize> },
    /// Seeded uniform samples over the box (SplitMix64).
    Random { count: usize, seed: u64 },
}

/// Ordered list of training parameters `y_1 .. y_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    points: Vec<Vec<f64>>,
    spec: TrainingSpec,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn spec(&self) -> &TrainingSpec {
        &self.spec
    }
}

/// Generates a training set over the box, deterministically.
pub fn make_training_set(bx: &ParameterBox, spec: TrainingSpec) -> Result<TrainingSet> {
    let points = match &spec {
        TrainingSpec::Grid { counts } => {
            if counts.len() != bx.dim() {
                return Err(Error::Config(format!(
                    "grid counts {counts:?} do not match box dimension {}",
                    bx.dim()
                )));
            }
            if counts.iter().any(|&c| c < 2) {
                return Err(Error::Config("grid counts must be >= 2 per dimension".into()));
            }
            let total: usize = counts.iter().product();
            let mut points = Vec::with_capacity(total);
            let mut idx = vec![0usize; counts.len()];
            loop {
                let point: Vec<f64> = idx
                    .iter()
                    .zip(bx.bounds())
                    .zip(counts)
                    .map(|((&i, &(lo, hi)), &c)| lo + (hi - lo) * i as f64 / (c - 1) as f64)
                    .collect();
                points.push(point);
                // row-major increment: last coordinate fastest
                let mut m = counts.len();
                loop {
                    if m == 0 {
                        return Ok(TrainingSet { points, spec });
                    }
                    m -= 1;
                    idx[m] += 1;
                    if idx[m] < counts[m] {
                        break;
                    }
                    idx[m] = 0;
                }
            }
        }
        TrainingSpec::Random { count, seed } => {
            if *count < 2 {
                return Err(Error::Config("random training set needs N >= 2".into()));
            }
            let mut rng = SplitMix64::new(*seed);
            (0..*count)
                .map(|_| {
                    bx.bounds()
                        .iter()
                        .map(|&(lo, hi)| lo + (hi - lo) * rng.next_f64())
                        .collect()
                })
                .collect()
        }
    };
    Ok(TrainingSet { points, spec })
}

/// First diffusion coefficient:
/// `1 + cos(2 pi x) y_1 / (alpha pi^2) + cos(4 pi x) y_2 / (4 pi^2)`.
pub fn diff1_coefficient(x: f64, y: &[f64], alpha: f64) -> f64 {
    1.0 + cos(2.0 * PI * x) * y[0] / (alpha * PI * PI)
        + cos(4.0 * PI * x) * y[1] / (4.0 * PI * PI)
}

fn chi(x: f64, intervals: &[(bool, f64, f64, bool)]) -> f64 {
    for &(closed_lo, lo, hi, closed_hi) in intervals {
        let above = if closed_lo { x >= lo } else { x > lo };
        let below = if closed_hi { x <= hi } else { x < hi };
        if above && below {
            return 1.0;
        }
    }
    0.0
}

// A1 = [0, 0.2) u (0.4, 0.6) u (0.8, 1]
const DIFF2_A1: &[(bool, f64, f64, bool)] = &[
    (true, 0.0, 0.2, false),
    (false, 0.4, 0.6, false),
    (false, 0.8, 1.0, true),
];
// B1 = (-0.2, 0.4), B2 = (-0.7, -0.2) u (0.4, 1]
const DIFF2_B1: &[(bool, f64, f64, bool)] = &[(false, -0.2, 0.4, false)];
const DIFF2_B2: &[(bool, f64, f64, bool)] = &[(false, -0.7, -0.2, false), (false, 0.4, 1.0, true)];

pub fn diff2_g1(y1: f64) -> f64 {
    let s = (1.4 * y1) * (1.4 * y1) - 0.8;
    s * s - 1.0
}

pub fn diff2_g2(y2: f64) -> f64 {
    chi(y2, DIFF2_B1) - chi(y2, DIFF2_B2)
}

/// Second diffusion coefficient, with a smooth `y_1` part and a
/// piecewise-constant `y_2` part.
pub fn diff2_coefficient(x: f64, y: &[f64]) -> f64 {
    1.0 + 0.49 * cos(8.0 * PI * x) * diff2_g1(y[0]) + 0.49 * chi(x, DIFF2_A1) * diff2_g2(y[1])
}

/// Coercivity and continuity constants for the convection-diffusion
/// problem: `r = 1`, `R = 1 + C_P y_max` with the optimal Poincare constant
/// `C_P = 1/pi` on the unit interval.
pub fn cvdiff_constants(y_max: f64) -> (f64, f64) {
    (1.0, 1.0 + y_max / PI)
}

/// One of the Hilbert-space parametric problems of the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum HilbertProblem {
    Diff1 { alpha: f64 },
    Diff2,
    CvDiff { y_max: f64 },
}

impl HilbertProblem {
    pub fn diff1(alpha: f64) -> Result<Self> {
        if !(alpha > DIFF1_ALPHA_MIN) {
            return Err(Error::Config(format!(
                "alpha = {alpha} must exceed {DIFF1_ALPHA_MIN} for coercivity"
            )));
        }
        Ok(HilbertProblem::Diff1 { alpha })
    }

    pub fn diff2() -> Self {
        HilbertProblem::Diff2
    }

    pub fn cvdiff(y_max: f64) -> Result<Self> {
        if !(y_max > 0.0) {
            return Err(Error::Config(format!("y_max = {y_max} must be positive")));
        }
        Ok(HilbertProblem::CvDiff { y_max })
    }

    pub fn id(&self) -> &'static str {
        match self {
            HilbertProblem::Diff1 { .. } => "diff1",
            HilbertProblem::Diff2 => "diff2",
            HilbertProblem::CvDiff { .. } => "cvdiff",
        }
    }

    pub fn parameter_box(&self) -> ParameterBox {
        let bounds = match self {
            HilbertProblem::Diff1 { .. } | HilbertProblem::Diff2 => {
                vec![(-1.0, 1.0), (-1.0, 1.0)]
            }
            HilbertProblem::CvDiff { y_max } => vec![(0.0, *y_max)],
        };
        ParameterBox::new(bounds).expect("static bounds are valid")
    }

    /// Uniform coercivity / continuity constants `(r, R)` over the box.
    pub fn constants(&self) -> (f64, f64) {
        match self {
            HilbertProblem::Diff1 { alpha } => {
                // extremes of the coefficient: 1 -+ (1/(alpha pi^2) + 1/(4 pi^2))
                let spread = 1.0 / (alpha * PI * PI) + 1.0 / (4.0 * PI * PI);
                (1.0 - spread, 1.0 + spread)
            }
            HilbertProblem::Diff2 => (0.02, 1.98),
            HilbertProblem::CvDiff { y_max } => cvdiff_constants(*y_max),
        }
    }

    pub fn condition_number(&self) -> f64 {
        let (r, big_r) = self.constants();
        big_r / r
    }

    pub fn diffusion(&self, x: f64, y: &[f64]) -> f64 {
        match self {
            HilbertProblem::Diff1 { alpha } => diff1_coefficient(x, y, *alpha),
            HilbertProblem::Diff2 => diff2_coefficient(x, y),
            HilbertProblem::CvDiff { .. } => 1.0,
        }
    }

    pub fn convection(&self, y: &[f64]) -> f64 {
        match self {
            HilbertProblem::CvDiff { .. } => y[0],
            _ => 0.0,
        }
    }

    /// Jump locations of the coefficient in `x`; assembly splits cells here.
    pub fn breakpoints(&self) -> &'static [f64] {
        match self {
            HilbertProblem::Diff2 => &[0.2, 0.4, 0.6, 0.8],
            _ => &[],
        }
    }

    pub fn check_parameter(&self, y: &[f64]) -> Result<()> {
        if self.parameter_box().contains(y) {
            Ok(())
        } else {
            Err(Error::OutOfDomain)
        }
    }
}

/// Parameter box of the KdV two-soliton manifold: `(t, c1, c2, k2)`.
pub fn kdv_parameter_box() -> ParameterBox {
    ParameterBox::new(vec![
        (0.0, 2.5e-3),
        (0.9, 1.1),
        (0.2, 0.4),
        (16.0, 22.0),
    ])
    .expect("static bounds are valid")
}

/// Total mass of every KdV snapshot: `4 (k1 + k2)` with `k1 = 30 - k2`.
pub const KDV_MASS: f64 = 120.0;

/// Parameters of one KdV two-soliton snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdVParameters {
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
    pub k2: f64,
}

impl KdVParameters {
    pub fn new(t: f64, c1: f64, c2: f64, k2: f64) -> Result<Self> {
        let p = KdVParameters { t, c1, c2, k2 };
        if !kdv_parameter_box().contains(&[t, c1, c2, k2]) {
            return Err(Error::OutOfDomain);
        }
        Ok(p)
    }

    pub fn from_slice(y: &[f64]) -> Result<Self> {
        if y.len() != 4 {
            return Err(Error::OutOfDomain);
        }
        Self::new(y[0], y[1], y[2], y[3])
    }

    pub fn k1(&self) -> f64 {
        30.0 - self.k2
    }
}

/// Two-soliton solution evaluated through the tau function
/// `F = 1 + A1 e^{th1} + A2 e^{th2} + A12 e^{th1 + th2}`.
///
/// The largest exponent is factored out before summing, so the evaluation
/// stays finite even where `F` spans hundreds of orders of magnitude. The
/// second derivative of `log F` is taken analytically on the
/// exponential-sum form.
pub fn two_soliton(x: f64, t: f64, c1: f64, c2: f64, k1: f64, k2: f64) -> f64 {
    let a1 = c1 * c1 / (2.0 * k1);
    let a2 = c2 * c2 / (2.0 * k2);
    let ratio = (k1 - k2) / (k1 + k2);
    let a12 = a1 * a2 * ratio * ratio;
    let th1 = 2.0 * k1 * x - 2.0 * k1 * k1 * k1 * t;
    let th2 = 2.0 * k2 * x - 2.0 * k2 * k2 * k2 * t;
    let terms = [
        (1.0, 0.0, 0.0),
        (a1, th1, 2.0 * k1),
        (a2, th2, 2.0 * k2),
        (a12, th1 + th2, 2.0 * (k1 + k2)),
    ];
    let shift = terms
        .iter()
        .filter(|&&(amp, _, _)| amp > 0.0)
        .fold(f64::NEG_INFINITY, |m, &(_, th, _)| m.max(th));
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &(amp, th, rate) in &terms {
        if amp == 0.0 {
            continue;
        }
        let e = amp * exp(th - shift);
        s0 += e;
        s1 += rate * e;
        s2 += rate * rate * e;
    }
    2.0 * (s0 * s2 - s1 * s1) / (s0 * s0)
}

/// KdV snapshot value at `x`.
pub fn kdv_solution(x: f64, params: &KdVParameters) -> f64 {
    two_soliton(x, params.t, params.c1, params.c2, params.k1(), params.k2)
}

/// Normalized KdV density `u / m` sampled on the grid.
///
/// Fails when the window does not capture the snapshot: boundary density
/// above `1e-8` of the peak, or captured mass below `0.999 m`.
pub fn kdv_density(params: &KdVParameters, grid: Grid1d) -> Result<DiscreteMeasure> {
    let mut density: Vec<f64> = grid
        .nodes()
        .map(|x| kdv_solution(x, params) / KDV_MASS)
        .collect();
    for v in &mut density {
        // the closed form is nonnegative up to roundoff
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let peak = density.iter().cloned().fold(0.0f64, f64::max);
    let mass: f64 = density.iter().sum::<f64>() * grid.dx();
    let boundary = density[0].max(density[density.len() - 1]);
    if mass < 0.999 || (peak > 0.0 && boundary > 1e-8 * peak) {
        return Err(Error::WindowTooSmall { captured: mass });
    }
    DiscreteMeasure::new(grid, density)
}

/// KdV density for a raw parameter vector `(t, c1, c2, k2)`.
pub fn kdv_density_for(y: &[f64], grid: Grid1d) -> Result<DiscreteMeasure> {
    kdv_density(&KdVParameters::from_slice(y)?, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasserstein1d::{w2_distance, Grid1d};

    #[test]
    fn diff1_examples() {
        for x in [0.0, 0.13, 0.71, 1.0] {
            assert_eq!(diff1_coefficient(x, &[0.0, 0.0], 0.5), 1.0);
        }
        let (r, big_r) = HilbertProblem::diff1(0.105).unwrap().constants();
        assert!((r - 0.0097).abs() < 1e-3);
        assert!((big_r - 1.9903).abs() < 1e-3);
        let (r, big_r) = HilbertProblem::diff1(1.0).unwrap().constants();
        assert!((r - 0.8733).abs() < 1e-3);
        assert!((big_r - 1.1267).abs() < 1e-3);
        assert!(HilbertProblem::diff1(0.05).is_err());
    }

    #[test]
    fn diff1_bounds_match_sampled_extremes() {
        // The coefficient is linear in (y1, y2), so for each x the extremes
        // over the y-grid sit at the four corners.
        for &alpha in &[0.105, 1.0] {
            let problem = HilbertProblem::diff1(alpha).unwrap();
            let (r, big_r) = problem.constants();
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                for y in [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]] {
                    let a = diff1_coefficient(x, &y, alpha);
                    min = min.min(a);
                    max = max.max(a);
                }
            }
            assert!((min - r).abs() < 1e-2, "alpha={alpha}: min {min} vs r {r}");
            assert!((max - big_r).abs() < 1e-2);
        }
    }

    #[test]
    fn diff2_examples() {
        assert_eq!(diff2_g2(0.0), 1.0);
        assert_eq!(diff2_g2(-0.5), -1.0);
        assert_eq!(diff2_g2(-0.9), 0.0);
        assert!((diff2_g1(1.0) - 0.3456).abs() < 1e-12);
        assert!((diff2_g1(-1.0) - 0.3456).abs() < 1e-12);
        let expect = 1.0 + 0.49 * (0.8 * core::f64::consts::PI).cos() * (0.64 - 1.0) + 0.49;
        assert!((diff2_coefficient(0.1, &[0.0, 0.0]) - expect).abs() < 1e-12);
        // removed boundaries take value 0
        assert_eq!(diff2_g2(-0.2), 0.0);
        assert_eq!(diff2_g2(0.4), 0.0);
    }

    #[test]
    fn cvdiff_constant_examples() {
        let (r, big_r) = cvdiff_constants(10000.0);
        assert_eq!(r, 1.0);
        assert!((big_r - (1.0 + 10000.0 / core::f64::consts::PI)).abs() < 1e-9);
        let (r0, big_r0) = cvdiff_constants(0.0);
        assert_eq!((r0, big_r0), (1.0, 1.0));
        assert!(big_r / r > 1000.0);
    }

    #[test]
    fn training_grid() {
        let bx = ParameterBox::new(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let ts = make_training_set(&bx, TrainingSpec::Grid { counts: vec![200, 200] }).unwrap();
        assert_eq!(ts.len(), 40000);
        assert_eq!(ts.point(0), &[-1.0, -1.0]);
        assert_eq!(ts.point(199), &[-1.0, 1.0]);
        assert_eq!(ts.point(39999), &[1.0, 1.0]);

        let line = ParameterBox::new(vec![(0.0, 10000.0)]).unwrap();
        let ts = make_training_set(&line, TrainingSpec::Grid { counts: vec![10001] }).unwrap();
        assert_eq!(ts.len(), 10001);
        assert_eq!(ts.point(42), &[42.0]);
    }

    #[test]
    fn training_random_is_reproducible() {
        let bx = kdv_parameter_box();
        let spec = TrainingSpec::Random { count: 2000, seed: 99 };
        let a = make_training_set(&bx, spec.clone()).unwrap();
        let b = make_training_set(&bx, spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2000);
        assert!(a.points().iter().all(|p| bx.contains(p)));
    }

    #[test]
    fn training_rejects_bad_specs() {
        let bx = ParameterBox::new(vec![(0.0, 1.0)]).unwrap();
        assert!(make_training_set(&bx, TrainingSpec::Grid { counts: vec![] }).is_err());
        assert!(make_training_set(&bx, TrainingSpec::Grid { counts: vec![1] }).is_err());
        assert!(make_training_set(&bx, TrainingSpec::Random { count: 1, seed: 0 }).is_err());
    }

    fn default_grid() -> Grid1d {
        Grid1d::new(-2.0, 4.0, 4096).unwrap()
    }

    #[test]
    fn kdv_mass_on_window() {
        let grid = default_grid();
        let mut rng = SplitMix64::new(4242);
        let bx = kdv_parameter_box();
        for _ in 0..50 {
            let y: Vec<f64> = bx
                .bounds()
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.next_f64())
                .collect();
            let p = KdVParameters::from_slice(&y).unwrap();
            let mass: f64 = grid.nodes().map(|x| kdv_solution(x, &p)).sum::<f64>() * grid.dx();
            assert!((119.88..=120.12).contains(&mass), "mass {mass} at {y:?}");
        }
    }

    #[test]
    fn kdv_one_soliton_limit() {
        // c2 = 0 collapses to 2 k1^2 sech^2(k1 x - k1^3 t + phi)
        let (t, c1, k1, k2) = (2.0e-3, 1.0, 12.0, 18.0);
        let a1 = c1 * c1 / (2.0 * k1);
        let phi = 0.5 * f64::ln(a1);
        for i in 0..400 {
            let x = -1.0 + 3.0 * i as f64 / 399.0;
            let u = two_soliton(x, t, c1, 0.0, k1, k2);
            let arg = k1 * x - k1 * k1 * k1 * t + phi;
            let sech = 1.0 / arg.cosh();
            let exact = 2.0 * k1 * k1 * sech * sech;
            assert!((u - exact).abs() < 1e-8, "x={x}: {u} vs {exact}");
        }
    }

    #[test]
    fn kdv_nonnegative_on_window() {
        let grid = default_grid();
        let mut rng = SplitMix64::new(7);
        let bx = kdv_parameter_box();
        for _ in 0..100 {
            let y: Vec<f64> = bx
                .bounds()
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.next_f64())
                .collect();
            let p = KdVParameters::from_slice(&y).unwrap();
            for x in grid.nodes() {
                assert!(kdv_solution(x, &p) >= -1e-10);
            }
        }
    }

    #[test]
    fn kdv_density_normalization_and_injectivity() {
        let grid = default_grid();
        let a = kdv_density_for(&[1.0e-3, 1.0, 0.3, 18.0], grid).unwrap();
        let sum: f64 = a.density().iter().sum::<f64>() * grid.dx();
        assert!((sum - 1.0).abs() < 1e-12);
        let b = kdv_density_for(&[2.0e-3, 1.05, 0.25, 20.0], grid).unwrap();
        assert!(w2_distance(&a, &b, 1024).unwrap() > 0.0);
    }

    #[test]
    fn kdv_corner_has_two_bumps() {
        let grid = default_grid();
        let m = kdv_density_for(&[0.0, 0.9, 0.2, 16.0], grid).unwrap();
        // count strict local maxima above a tenth of the peak
        let d = m.density();
        let peak = d.iter().cloned().fold(0.0f64, f64::max);
        let mut bumps = 0;
        for i in 1..d.len() - 1 {
            if d[i] > d[i - 1] && d[i] > d[i + 1] && d[i] > 0.1 * peak {
                bumps += 1;
            }
        }
        assert_eq!(bumps, 2);
    }

    #[test]
    fn kdv_window_too_small() {
        let grid = Grid1d::new(-0.1, 0.3, 512).unwrap();
        let p = KdVParameters::new(1.0e-3, 1.0, 0.3, 18.0).unwrap();
        assert!(matches!(
            kdv_density(&p, grid),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn kdv_box_is_enforced() {
        assert!(KdVParameters::new(0.0, 1.0, 0.3, 13.1).is_err());
        assert!(KdVParameters::new(1.0e-3, 1.0, 0.3, 18.0).is_ok());
    }
}
