//! Discrete algebraic Riccati equations via the structure-preserving
//! doubling algorithm, followed by one Newton–Kleinman refinement.

use super::{check_finite, check_square, solve_dlyap, spectral_radius, symmetric_eigenvalues, symmetrize, Matrix};
use crate::config::Tolerances;
use crate::error::{Error, Result};

/// Stabilizing solution of `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q`.
///
/// The gain follows the `u = K x` convention, i.e. `K = −(R + BᵀPB)⁻¹BᵀPA`.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    pub k: Matrix,
    pub iterations: usize,
    pub residual: f64,
}

/// Solution of the zero-sum game Riccati equation used for H∞ state feedback.
#[derive(Debug, Clone)]
pub struct GameDareSolution {
    pub x: Matrix,
    /// Control gain, `u = K x`.
    pub k: Matrix,
    /// Worst-case disturbance gain, `w = K_w x`.
    pub kw: Matrix,
    /// Smallest eigenvalue of `γ²I − B_wᵀXB_w`; must be positive.
    pub positivity_margin: f64,
    pub residual: f64,
}

pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    solve_dare_with(a, b, q, r, &Tolerances::default())
}

pub fn solve_dare_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: &Tolerances,
) -> Result<DareSolution> {
    let n = check_square(a, "A")?;
    let m = check_square(r, "R")?;
    if b.nrows() != n || b.ncols() != m || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "DARE expects A {n}x{n}, B {n}x{m}, Q {n}x{n}, R {m}x{m}"
        )));
    }
    for (mat, name) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        check_finite(mat, name)?;
    }
    let q_scale = 1.0 + q.norm();
    if symmetric_eigenvalues(q)[0] < -tol.psd * q_scale {
        return Err(Error::Invalid("Q must be positive semidefinite".into()));
    }
    if symmetric_eigenvalues(r)[0] <= 0.0 {
        return Err(Error::Invalid("R must be positive definite".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("R is singular".into()))?;
    let g = symmetrize(&(b * r_inv * b.transpose()));
    let (mut p, iterations) = doubling(a, &g, &symmetrize(q), tol.max_doubling_iter)?;

    let mut k = riccati_gain(a, b, r, &p)?;
    let rho = spectral_radius(&(a + b * &k));
    if rho >= 1.0 {
        return Err(Error::NotStabilizable(format!(
            "Riccati closed loop has spectral radius {rho:.6}"
        )));
    }
    // Newton–Kleinman step: polishes the doubling result to near machine precision.
    let acl = a + b * &k;
    let w = q + k.transpose() * r * &k;
    if let Ok(p_ref) = solve_dlyap(&acl, &w) {
        let k_ref = riccati_gain(a, b, r, &p_ref)?;
        if dare_residual(a, b, q, r, &p_ref) <= dare_residual(a, b, q, r, &p) {
            p = p_ref;
            k = k_ref;
        }
    }
    let residual = dare_residual(a, b, q, r, &p);
    if residual > tol.riccati_residual * (1.0 + p.norm()) {
        return Err(Error::Numeric(format!(
            "Riccati residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(DareSolution {
        p,
        k,
        iterations,
        residual,
    })
}

fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let m = r + b.transpose() * p * b;
    let rhs = b.transpose() * p * a;
    m.lu()
        .solve(&rhs)
        .map(|x| -x)
        .ok_or_else(|| Error::Numeric("R + BᵀPB is singular".into()))
}

/// Frobenius norm of the Riccati map residual at `p`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let m = r + b.transpose() * p * b;
    let bpa = b.transpose() * p * a;
    let Some(x) = m.lu().solve(&bpa) else {
        return f64::INFINITY;
    };
    let rhs = a.transpose() * p * a - bpa.transpose() * x + q;
    (rhs - p).norm()
}

/// Doubling iteration for `X = AᵀX(I + GX)⁻¹A + H`. Returns `(X, iterations)`.
fn doubling(a: &Matrix, g: &Matrix, h: &Matrix, max_iter: usize) -> Result<(Matrix, usize)> {
    let n = a.nrows();
    let eye = Matrix::identity(n, n);
    let (mut ak, mut gk, mut hk) = (a.clone(), g.clone(), h.clone());
    let blowup = 1e15 * (1.0 + h.norm() + a.norm().powi(2));
    for it in 1..=max_iter {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let (Some(w_a), Some(w_g)) = (lu.solve(&ak), lu.solve(&gk)) else {
            return Err(Error::Numeric("doubling step hit a singular I + GH".into()));
        };
        let a_next = &ak * &w_a;
        let g_next = symmetrize(&(&gk + &ak * w_g * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_a));
        if !h_next.iter().all(|x| x.is_finite()) || h_next.norm() > blowup {
            return Err(Error::NotStabilizable(
                "Riccati iteration diverged (unstable mode not reachable)".into(),
            ));
        }
        let diff = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if diff <= 1e-15 * (1.0 + hk.norm()) {
            return Ok((hk, it));
        }
    }
    // The doubling error contracts quadratically; a non-converged run means
    // the spectrum sits on the unit circle.
    Err(Error::Numeric(format!(
        "Riccati doubling did not converge in {max_iter} iterations"
    )))
}

/// Game Riccati equation for `x⁺ = Ax + Bu + B_w w` with stage payoff
/// `xᵀQx + uᵀRu − γ²wᵀw`.
pub fn solve_game_dare(
    a: &Matrix,
    b: &Matrix,
    bw: &Matrix,
    q: &Matrix,
    r: &Matrix,
    gamma: f64,
) -> Result<GameDareSolution> {
    let tol = Tolerances::default();
    let n = check_square(a, "A")?;
    let m = check_square(r, "R")?;
    let mw = bw.ncols();
    if b.nrows() != n || b.ncols() != m || bw.nrows() != n || q.nrows() != n {
        return Err(Error::Dimension("game DARE dimensions inconsistent".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Invalid(format!("gamma must be positive, got {gamma}")));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("R is singular".into()))?;
    let g = symmetrize(&(b * r_inv * b.transpose() - bw * bw.transpose() / (gamma * gamma)));
    let (x, _) = doubling(a, &g, &symmetrize(q), tol.max_doubling_iter)?;

    let bt = Matrix::from_fn(n, m + mw, |i, j| if j < m { b[(i, j)] } else { bw[(i, j - m)] });
    let mut rt = Matrix::zeros(m + mw, m + mw);
    rt.view_mut((0, 0), (m, m)).copy_from(r);
    for i in 0..mw {
        rt[(m + i, m + i)] = -gamma * gamma;
    }
    let mm = &rt + bt.transpose() * &x * &bt;
    let btxa = bt.transpose() * &x * a;
    let gains = mm
        .clone()
        .lu()
        .solve(&btxa)
        .map(|s| -s)
        .ok_or_else(|| Error::Numeric("game Riccati coupling matrix is singular".into()))?;
    let k = gains.rows(0, m).into_owned();
    let kw = gains.rows(m, mw).into_owned();

    let positivity = Matrix::identity(mw, mw) * (gamma * gamma) - bw.transpose() * &x * bw;
    let positivity_margin = symmetric_eigenvalues(&positivity)[0];
    let residual = (&x - (q + a.transpose() * &x * a + btxa.transpose() * &gains)).norm();

    let rho_game = spectral_radius(&(a + &bt * &gains));
    let rho_u = spectral_radius(&(a + b * &k));
    let x_min = symmetric_eigenvalues(&x)[0];
    if positivity_margin <= 0.0
        || rho_game >= 1.0
        || rho_u >= 1.0
        || x_min < -tol.psd * (1.0 + x.norm())
    {
        return Err(Error::NotStabilizable(format!(
            "no stabilizing game solution at gamma={gamma:.6e} (margin {positivity_margin:.3e})"
        )));
    }
    Ok(GameDareSolution {
        x,
        k,
        kw,
        positivity_margin,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{diag, from_rows};

    fn scalar(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_closed_form() {
        let s = solve_dare(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        // P² − 0.25P − 1 = 0
        let expected = (0.25 + 4.0625f64.sqrt()) / 2.0;
        assert!((s.p[(0, 0)] - expected).abs() < 1e-12);
        assert!((expected - 1.13278).abs() < 1e-5);
    }

    #[test]
    fn deadbeat_zero_dynamics() {
        let s = solve_dare(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0)).unwrap();
        assert!((s.p[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(s.k[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn unreachable_unstable_mode_is_rejected() {
        let a = diag(&[2.0, 0.5]);
        let b = from_rows(&[&[0.0], &[1.0]]);
        let err = solve_dare(&a, &b, &Matrix::identity(2, 2), &scalar(1.0)).unwrap_err();
        assert!(matches!(err, Error::NotStabilizable(_)), "{err}");
    }

    #[test]
    fn undetectable_unstable_mode_is_rejected() {
        let err = solve_dare(&scalar(2.0), &scalar(0.0), &scalar(0.0), &scalar(1.0)).unwrap_err();
        assert!(matches!(err, Error::NotStabilizable(_)), "{err}");
    }

    #[test]
    fn rejects_indefinite_r() {
        let err = solve_dare(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(-1.0)).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn motor_mode_residual() {
        let a = from_rows(&[&[0.9968, 6.289e-4], &[-5.544, 0.3623]]);
        let b = from_rows(&[&[4.616e-3], &[3.493]]);
        let q = diag(&[1e4, 0.5]);
        let r = scalar(0.001);
        let s = solve_dare(&a, &b, &q, &r).unwrap();
        let res = dare_residual(&a, &b, &q, &r, &s.p);
        assert!(res <= 1e-8 * (1.0 + s.p.norm()), "residual {res}");
        assert!(spectral_radius(&(&a + &b * &s.k)) < 1.0);
    }

    #[test]
    fn game_without_disturbance_matches_lqr() {
        let a = from_rows(&[&[1.0, 0.1], &[0.0, 0.9]]);
        let b = from_rows(&[&[0.0], &[0.1]]);
        let q = Matrix::identity(2, 2);
        let r = scalar(0.1);
        let lqr = solve_dare(&a, &b, &q, &r).unwrap();
        let game = solve_game_dare(&a, &b, &Matrix::zeros(2, 1), &q, &r, 1.0).unwrap();
        assert!((lqr.k - game.k).norm() < 1e-9);
    }

    #[test]
    fn matched_game_is_lqr_with_inflated_weight() {
        // With B_w = B the game reduces to LQR on the total input with
        // R_eff = (R⁻¹ − γ⁻²)⁻¹, and u = (R_eff / R) · v.
        let a = from_rows(&[&[1.0, 0.1], &[0.0, 0.9]]);
        let b = from_rows(&[&[0.0], &[0.1]]);
        let q = Matrix::identity(2, 2);
        let (r, gamma) = (0.1, 4.0);
        let r_eff = 1.0 / (1.0 / r - 1.0 / (gamma * gamma));
        let game = solve_game_dare(&a, &b, &b, &q, &scalar(r), gamma).unwrap();
        let lqr = solve_dare(&a, &b, &q, &scalar(r_eff)).unwrap();
        assert!((&game.x - &lqr.p).norm() < 1e-8 * lqr.p.norm());
        assert!((&game.k - &lqr.k * (r_eff / r)).norm() < 1e-8 * lqr.k.norm());
        assert!(game.positivity_margin > 0.0);
    }
}
