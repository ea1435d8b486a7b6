//! Uniform-mesh 1D P1 finite elements on `Omega = (0, 1)`.
//!
//! Homogeneous Dirichlet conditions are eliminated: every vector is indexed
//! by the interior nodes `x_j = j h`, `j = 1..num_cells-1`. The `V`-inner
//! product is `(u, v)_V = (u', v')_{L^2}`, realized through the
//! unit-coefficient stiffness matrix `K`, and dual norms are computed with
//! the Riesz representative `K z = r`.

use crate::math::{abs, sqrt};
use crate::problems::HilbertProblem;
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Uniform partition of `(0, 1)` into `num_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformMesh1D {
    num_cells: usize,
}

impl UniformMesh1D {
    pub fn new(num_cells: usize) -> Result<Self> {
        if num_cells < 2 {
            return Err(Error::InvalidMesh { num_cells });
        }
        Ok(UniformMesh1D { num_cells })
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.num_cells as f64
    }

    /// Number of interior nodes (the dimension of every vector on this mesh).
    pub fn interior_count(&self) -> usize {
        self.num_cells - 1
    }

    /// Coordinate of interior node `j` (0-based: `x = (j + 1) h`).
    pub fn interior_node(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.h()
    }
}

/// Builds a uniform mesh with `num_cells >= 2` cells.
pub fn build_mesh(num_cells: usize) -> Result<UniformMesh1D> {
    UniformMesh1D::new(num_cells)
}

/// Tridiagonal matrix sized to the interior nodes of a mesh.
///
/// Row `i` reads `lower[i-1] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn zeros(n: usize) -> Self {
        TridiagonalMatrix {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn bands(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.lower, &self.diag, &self.upper)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            out[i] = v;
        }
        out
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.upper[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.lower[i] * x[i + 1];
            }
            out[i] = v;
        }
        out
    }

    /// Banded LU without pivoting (Thomas algorithm). The assembled systems
    /// are positive definite, so elimination never needs row exchanges.
    pub fn factorize(&self) -> Result<TridiagonalFactor> {
        let n = self.n();
        let mut diag = self.diag.clone();
        let mut mult = vec![0.0; n.saturating_sub(1)];
        if n == 0 {
            return Err(Error::SingularSystem { pivot_index: 0 });
        }
        for i in 1..n {
            let pivot = diag[i - 1];
            if abs(pivot) < f64::MIN_POSITIVE {
                return Err(Error::SingularSystem { pivot_index: i - 1 });
            }
            let m = self.lower[i - 1] / pivot;
            mult[i - 1] = m;
            diag[i] -= m * self.upper[i - 1];
        }
        if abs(diag[n - 1]) < f64::MIN_POSITIVE {
            return Err(Error::SingularSystem { pivot_index: n - 1 });
        }
        Ok(TridiagonalFactor {
            mult,
            diag,
            upper: self.upper.clone(),
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factorize()?.solve(rhs))
    }
}

/// Prefactored form of a [`TridiagonalMatrix`] for repeated solves.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    mult: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        debug_assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for i in 1..n {
            let carry = self.mult[i - 1] * x[i - 1];
            x[i] -= carry;
        }
        x[n - 1] /= self.diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.upper[i] * x[i + 1]) / self.diag[i];
        }
        x
    }
}

/// Nodal values of a P1 function at the interior nodes; boundary values are
/// implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    mesh: UniformMesh1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(mesh: UniformMesh1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.interior_count() {
            return Err(Error::MeshMismatch);
        }
        Ok(GridFunction { mesh, values })
    }

    pub fn zeros(mesh: UniformMesh1D) -> Self {
        GridFunction {
            mesh,
            values: vec![0.0; mesh.interior_count()],
        }
    }

    /// Interpolant of `f` at the interior nodes.
    pub fn interpolate(mesh: UniformMesh1D, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..mesh.interior_count())
            .map(|j| f(mesh.interior_node(j)))
            .collect();
        GridFunction { mesh, values }
    }

    pub fn mesh(&self) -> UniformMesh1D {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn axpy(&mut self, alpha: f64, other: &GridFunction) {
        debug_assert_eq!(self.mesh, other.mesh);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.values {
            *a *= alpha;
        }
    }
}

/// Unit-coefficient stiffness matrix `K` (the `V`-inner-product matrix).
pub fn stiffness_matrix(mesh: UniformMesh1D) -> TridiagonalMatrix {
    let n = mesh.interior_count();
    let h = mesh.h();
    let mut k = TridiagonalMatrix::zeros(n);
    for d in &mut k.diag {
        *d = 2.0 / h;
    }
    for o in &mut k.lower {
        *o = -1.0 / h;
    }
    for o in &mut k.upper {
        *o = -1.0 / h;
    }
    k
}

/// Generic assembly of `a(u, v) = int a u' v' + b int u' v` with a per-cell
/// 2-point Gauss rule for the diffusion coefficient. Cells straddling a
/// coefficient jump are split at the jump points before quadrature.
pub fn assemble(
    mesh: UniformMesh1D,
    diffusion: impl Fn(f64) -> f64,
    convection: f64,
    breakpoints: &[f64],
) -> Result<TridiagonalMatrix> {
    let n = mesh.interior_count();
    let h = mesh.h();
    let nc = mesh.num_cells();
    let mut a = TridiagonalMatrix::zeros(n);
    const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
    for cell in 0..nc {
        let xl = cell as f64 * h;
        let xr = (cell + 1) as f64 * h;
        // integral of the diffusion coefficient over the cell
        let mut integral = 0.0;
        let mut seg_lo = xl;
        let push = |lo: f64, hi: f64, acc: &mut f64| -> Result<()> {
            if hi <= lo {
                return Ok(());
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let a0 = diffusion(mid - half * GAUSS);
            let a1 = diffusion(mid + half * GAUSS);
            if !a0.is_finite() || !a1.is_finite() {
                return Err(Error::Assembly { x: mid });
            }
            *acc += half * (a0 + a1);
            Ok(())
        };
        for &bp in breakpoints {
            if bp > xl && bp < xr {
                push(seg_lo, bp, &mut integral)?;
                seg_lo = bp;
            }
        }
        push(seg_lo, xr, &mut integral)?;
        let coeff = integral / (h * h);
        // hat gradients are +-1/h on the cell
        if cell >= 1 {
            a.diag[cell - 1] += coeff;
        }
        if cell + 1 <= nc - 1 {
            a.diag[cell] += coeff;
        }
        if cell >= 1 && cell + 1 <= nc - 1 {
            a.upper[cell - 1] -= coeff;
            a.lower[cell - 1] -= coeff;
        }
    }
    if convection != 0.0 {
        // exact for constant velocity: int phi_{i+1}' phi_i = 1/2
        for i in 0..n.saturating_sub(1) {
            a.upper[i] += 0.5 * convection;
            a.lower[i] -= 0.5 * convection;
        }
    }
    Ok(a)
}

/// Assembles the discrete operator `A(y)` for a parametric problem.
pub fn assemble_system(
    problem: &HilbertProblem,
    y: &[f64],
    mesh: UniformMesh1D,
) -> Result<TridiagonalMatrix> {
    problem.check_parameter(y)?;
    assemble(
        mesh,
        |x| problem.diffusion(x, y),
        problem.convection(y),
        problem.breakpoints(),
    )
}

/// Load vector for the constant right-hand side `f = 1`: entry `i` is
/// `int phi_i = h`.
pub fn assemble_load(mesh: UniformMesh1D) -> Vec<f64> {
    vec![mesh.h(); mesh.interior_count()]
}

/// Truth solve: Galerkin solution of the tridiagonal system via banded LU.
pub fn solve_truth(
    problem: &HilbertProblem,
    y: &[f64],
    mesh: UniformMesh1D,
) -> Result<GridFunction> {
    let a = assemble_system(problem, y, mesh)?;
    let f = assemble_load(mesh);
    let u = a.solve(&f)?;
    GridFunction::new(mesh, u)
}

/// The `H^1_0` space machinery shared by all reduced-basis computations:
/// the stiffness matrix `K` and its factorization.
#[derive(Debug, Clone)]
pub struct VSpace {
    mesh: UniformMesh1D,
    stiffness: TridiagonalMatrix,
    factor: TridiagonalFactor,
}

impl VSpace {
    pub fn new(mesh: UniformMesh1D) -> Self {
        let stiffness = stiffness_matrix(mesh);
        let factor = stiffness.factorize().expect("K is positive definite");
        VSpace {
            mesh,
            stiffness,
            factor,
        }
    }

    pub fn mesh(&self) -> UniformMesh1D {
        self.mesh
    }

    pub fn inner(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        if u.mesh != self.mesh || v.mesh != self.mesh {
            return Err(Error::MeshMismatch);
        }
        let kv = self.stiffness.matvec(v.values());
        Ok(u.values().iter().zip(&kv).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self, u: &GridFunction) -> Result<f64> {
        Ok(sqrt(self.inner(u, u)?.max(0.0)))
    }

    /// Discrete dual norm `|| r ||_{V_h'} = sqrt(r^T K^{-1} r)`.
    pub fn riesz_dual_norm(&self, residual: &[f64]) -> Result<f64> {
        if residual.len() != self.mesh.interior_count() {
            return Err(Error::MeshMismatch);
        }
        let z = self.factor.solve(residual);
        let sq: f64 = residual.iter().zip(&z).map(|(a, b)| a * b).sum();
        Ok(sqrt(sq.max(0.0)))
    }
}

/// `(u, v)_V = u^T K v` with `K` the unit-coefficient stiffness matrix.
pub fn v_inner(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    if u.mesh != v.mesh {
        return Err(Error::MeshMismatch);
    }
    VSpace::new(u.mesh).inner(u, v)
}

pub fn v_norm(u: &GridFunction) -> Result<f64> {
    VSpace::new(u.mesh).norm(u)
}

pub fn riesz_dual_norm(residual: &[f64], mesh: UniformMesh1D) -> Result<f64> {
    VSpace::new(mesh).riesz_dual_norm(residual)
}
