//! Dense linear-algebra and optimization kernels.
//!
//! Matrix storage and factorizations (LU, QR, Schur, symmetric
//! eigen-decomposition) come from `nalgebra`; the Riccati, Lyapunov,
//! LP and QP solvers are implemented here on top of them.

mod active_set;
mod dare;
mod lyap;

pub use active_set::{
    solve_lp, solve_qp, solve_qp_warm, LpProblem, LpSolution, LpStatus, QpProblem, QpSolution,
    QpStatus,
};
pub use dare::{
    dare_residual, solve_dare, solve_game_dare, DareSolution, GameDareSolution,
};
pub use lyap::{dlyap_residual, solve_dlyap};

use crate::error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let s = symmetrize(m);
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm; used as the reference scale in residual bounds.
pub fn norm(m: &Matrix) -> f64 {
    m.norm()
}

pub(crate) fn check_square(m: &Matrix, name: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{name} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn check_finite(m: &Matrix, name: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} has non-finite entries")))
    }
}

/// Build a matrix from row slices.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(nr, nc, |i, j| rows[i][j])
}

pub fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(values))
}
