//! Tree-based libraries of reduced spaces for parametric PDEs.
//!
//! The crate provides two reduction backends and two tree constructions on
//! top of them:
//!
//! * [`fem1d`] — uniform-mesh 1D P1 finite elements: assembly, banded
//!   solves, the `H^1_0` inner product and Riesz dual norms.
//! * [`problems`] — the parametric test problems (two diffusion models, a
//!   convection-diffusion model, and a closed-form KdV two-soliton snapshot
//!   generator) together with training-set generation.
//! * [`hilbert_rb`] — reduced-basis machinery in `V = H^1_0`: orthonormal
//!   snapshot bases, reduced Galerkin solves, the residual dual-norm
//!   estimator and the (restarted) greedy drivers.
//! * [`wasserstein1d`] — the metric backend for `(P_2(Omega), W_2)` in one
//!   spatial dimension: quantile transforms, closed-form `W_2`, barycenters,
//!   simplex-constrained projection and the barycentric greedy.
//! * [`tree_library`] — the dyadic parameter-domain split and the
//!   manifold-based binary split, generic over a reduction backend, plus the
//!   leaf-assignment maps and library statistics.
//!
//! The crate is `no_std` (with `alloc`); all file IO, configuration and the
//! command line live in the companion `treelib-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod fem1d;
pub mod hilbert_rb;
pub(crate) mod linalg;
pub(crate) mod math;
pub mod problems;
pub mod rng;
pub mod tree_library;
pub mod wasserstein1d;

use alloc::string::String;
use core::fmt;

/// Errors produced by the numerical kernels and the tree builders.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Mesh with fewer than two cells.
    InvalidMesh { num_cells: usize },
    /// Two grid functions (or measures) that must live on the same
    /// discretization do not.
    MeshMismatch,
    /// A coefficient evaluated to a non-finite value during assembly.
    Assembly { x: f64 },
    /// A banded or dense linear solve hit a (near-)zero pivot.
    SingularSystem { pivot_index: usize },
    /// Invalid problem or algorithm configuration.
    Config(String),
    /// A measure handed to the quantile transform is not normalized.
    NotNormalized { mass: f64 },
    /// Two discrete measures live on different spatial grids.
    GridMismatch,
    /// Barycentric weights are off the probability simplex.
    InvalidWeights,
    /// The spatial window does not capture enough of the density mass.
    WindowTooSmall { captured: f64 },
    /// Greedy selection could not find a non-duplicate snapshot before
    /// reaching the target accuracy.
    Stagnation,
    /// A manifold-based split sent every training element to one child.
    DegenerateSplit { node: usize },
    /// A query parameter lies outside the parameter box.
    OutOfDomain,
    /// Operation on an empty training subset or empty leaf space.
    EmptySubset,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidMesh { num_cells } => {
                write!(f, "invalid mesh: num_cells = {num_cells} (need >= 2)")
            }
            Error::MeshMismatch => write!(f, "grid functions live on different meshes"),
            Error::Assembly { x } => {
                write!(f, "coefficient evaluated to a non-finite value near x = {x}")
            }
            Error::SingularSystem { pivot_index } => {
                write!(f, "singular system: zero pivot at index {pivot_index}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::NotNormalized { mass } => {
                write!(f, "measure is not normalized (mass = {mass})")
            }
            Error::GridMismatch => write!(f, "discrete measures live on different grids"),
            Error::InvalidWeights => write!(f, "weights are off the probability simplex"),
            Error::WindowTooSmall { captured } => {
                write!(f, "spatial window too small: captured mass {captured} < 0.999")
            }
            Error::Stagnation => {
                write!(f, "greedy stagnation: all candidates rejected as duplicates")
            }
            Error::DegenerateSplit { node } => {
                write!(f, "degenerate split at node {node}: a child received no training elements")
            }
            Error::OutOfDomain => write!(f, "parameter lies outside the parameter box"),
            Error::EmptySubset => write!(f, "operation on an empty training subset"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
