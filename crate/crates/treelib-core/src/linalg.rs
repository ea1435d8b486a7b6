//! Small dense solver for the reduced n-by-n systems.

use crate::math::abs;
use crate::{Error, Result};
use alloc::vec::Vec;

/// Solves `A x = b` by LU with partial pivoting. `a` is row-major `n x n`
/// and is consumed as scratch.
pub fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = abs(a[col * n + col]);
        for row in col + 1..n {
            let mag = abs(a[row * n + col]);
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == 0.0 {
            return Err(Error::SingularSystem { pivot_index: col });
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            a[row * n + col] = 0.0;
            for j in col + 1..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for j in col + 1..n {
            sum -= a[col * n + j] * b[j];
        }
        b[col] = sum / a[col * n + col];
    }
    Ok(b)
}
