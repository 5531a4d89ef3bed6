//! Discrete Lyapunov equation `AᵀPA − P = −W` by Kronecker vectorization.
//!
//! Only small systems appear in this crate (n ≤ 4), so the n²×n² dense
//! solve is cheap; one step of iterative refinement recovers the digits
//! lost to the conditioning of `I − Aᵀ⊗Aᵀ` when ρ(A) is close to 1.

use super::{check_finite, check_square, spectral_radius, symmetrize, Matrix, Vector};
use crate::error::{Error, Result};

pub fn solve_dlyap(acl: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = check_square(acl, "A")?;
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::Dimension(format!("W must be {n}x{n}")));
    }
    check_finite(acl, "A")?;
    check_finite(w, "W")?;
    let rho = spectral_radius(acl);
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let at = acl.transpose();
    // vec(AᵀPA) = (Aᵀ ⊗ Aᵀ) vec(P) in column-major vectorization.
    let kron = at.kronecker(&at);
    let lhs = Matrix::identity(n * n, n * n) - kron;
    let rhs = Vector::from_column_slice(symmetrize(w).as_slice());
    let lu = lhs.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("Lyapunov operator is singular".into()))?;
    for _ in 0..2 {
        let r = &rhs - &lhs * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    let p = Matrix::from_column_slice(n, n, x.as_slice());
    Ok(symmetrize(&p))
}

/// Frobenius norm of `AᵀPA − P + W`.
pub fn dlyap_residual(acl: &Matrix, w: &Matrix, p: &Matrix) -> f64 {
    (acl.transpose() * p * acl - p + w).norm()
}
