//! Terminal ingredients: gains `K₁`, `K₂`, costs `P₁`, `P₂` and the common
//! terminal set `X_f`.
//!
//! The reference state of the augmented model is an uncontrollable unit
//! root, so Riccati and Lyapunov equations are solved on the regulated
//! error coordinates `(y − r, v, θ)` and lifted back with
//! [`crate::augment::lift_gain`] / [`crate::augment::lift_cost`].

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::augment::{lift_cost, lift_gain, AugmentedModel, IDX_R, IDX_THETA, IDX_V, IDX_Y, N_AUG};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::numerics::{
    diag, solve_dare, solve_dlyap, solve_game_dare, spectral_radius, symmetric_eigenvalues, Matrix,
};
use crate::plant::{ConstraintSet, PwaModel, Region};
use crate::polytope::{max_invariant_set, Polyhedron};

/// Stage weights on `z = (y − r, v, θ)` and on the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    #[serde(with = "crate::io::rows")]
    pub q: Matrix,
    pub r: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            q: diag(&[1e4, 0.5, 1e4]),
            r: 0.001,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if self.q.shape() != (3, 3) {
            return Err(Error::Dimension("Q must be 3x3".into()));
        }
        if (&self.q - self.q.transpose()).amax() > 1e-12 * (1.0 + self.q.amax())
            || symmetric_eigenvalues(&self.q)[0] < -1e-12 * (1.0 + self.q.amax())
        {
            return Err(Error::Invalid("Q must be symmetric positive semidefinite".into()));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::Invalid("R must be positive".into()));
        }
        Ok(())
    }
}

/// A terminal gain with its lifted and error-coordinate forms.
#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign {
    /// `1×4` gain on `x̄`, `ū = K x̄`.
    pub k: Matrix,
    /// `1×3` gain on `(e, v, θ)`.
    pub k_error: Matrix,
    /// Spectral radius of the regulated closed loop.
    pub spectral_radius: f64,
}

fn gain_design(aug: &AugmentedModel, k_error: Matrix) -> GainDesign {
    let (a, b) = aug.error_subsystem();
    GainDesign {
        k: lift_gain(&k_error),
        spectral_radius: spectral_radius(&(&a + &b * &k_error)),
        k_error,
    }
}

/// Infinite-horizon LQR gain and Riccati cost on the error coordinates.
pub fn design_lqr_gain(aug: &AugmentedModel, w: &Weights) -> Result<(GainDesign, Matrix)> {
    w.validate()?;
    let (a, b) = aug.error_subsystem();
    let s = solve_dare(&a, &b, &w.q, &Matrix::from_element(1, 1, w.r))?;
    Ok((gain_design(aug, s.k), s.p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HinfOptions {
    /// Disturbance bound in volts; the disturbance enters through `B̄`.
    pub w_star: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub bisection_steps: usize,
    pub frequency_points: usize,
}

impl Default for HinfOptions {
    fn default() -> Self {
        Self {
            w_star: 0.4,
            gamma_lo: 1e-3,
            gamma_hi: 1e3,
            bisection_steps: 40,
            frequency_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HinfDesign {
    pub gain: GainDesign,
    pub gamma: f64,
    /// Largest grid value of `‖T_wz(e^{jω})‖` for the weighted output `[Q^½ z; R^½ u]`.
    pub peak: f64,
    /// Largest grid value of the position-error channel `|T_wy(e^{jω})|`.
    pub position_peak: f64,
}

/// Bisect the game Riccati equation for the smallest feasible `γ` and
/// return its state-feedback gain.
///
/// Performance output is `[Q^½ z; R^½ u]`; the disturbance `w` (|w| ≤ 1,
/// scaled by `w*`) enters with the input.
pub fn design_hinf_gain(aug: &AugmentedModel, w: &Weights, opts: &HinfOptions) -> Result<HinfDesign> {
    w.validate()?;
    if !(opts.gamma_lo > 0.0 && opts.gamma_hi > opts.gamma_lo && opts.w_star >= 0.0) {
        return Err(Error::Invalid(format!("bad H-infinity options: {opts:?}")));
    }
    let (a, b) = aug.error_subsystem();
    let bw = &b * opts.w_star;
    let r = Matrix::from_element(1, 1, w.r);
    let solve = |gamma: f64| solve_game_dare(&a, &b, &bw, &w.q, &r, gamma).ok();

    let (mut lo, mut hi) = (opts.gamma_lo, opts.gamma_hi);
    let mut best = solve(lo).map(|s| (lo, s));
    if best.is_none() {
        let Some(s) = solve(hi) else {
            return Err(Error::HinfInfeasible { lo, hi });
        };
        best = Some((hi, s));
        for _ in 0..opts.bisection_steps {
            let mid = (lo * hi).sqrt();
            match solve(mid) {
                Some(s) => {
                    hi = mid;
                    best = Some((mid, s));
                }
                None => lo = mid,
            }
        }
    }
    let (gamma, sol) = best.expect("set above");
    let gain = gain_design(aug, sol.k);
    let (peak, position_peak) = frequency_peaks(&a, &b, &bw, &gain.k_error, w, opts.frequency_points)?;
    let slack = Tolerances::default().hinf_slack;
    if peak > gamma * (1.0 + slack) {
        return Err(Error::Numeric(format!(
            "H-infinity certificate failed: grid peak {peak:.6} exceeds gamma {gamma:.6}"
        )));
    }
    Ok(HinfDesign {
        gain,
        gamma,
        peak,
        position_peak,
    })
}

/// Grid peaks of the weighted output and the position error for
/// `x⁺ = (A + BK)x + B_w w`, `ω ∈ [0, π]`.
pub fn frequency_peaks(
    a: &Matrix,
    b: &Matrix,
    bw: &Matrix,
    k: &Matrix,
    w: &Weights,
    points: usize,
) -> Result<(f64, f64)> {
    let n = a.nrows();
    let acl = a + b * k;
    let q_half = matrix_sqrt_psd(&w.q);
    let r_half = w.r.sqrt();
    let to_c = |m: &Matrix| m.map(|x| Complex::new(x, 0.0));
    let acl_c = to_c(&acl);
    let bw_c = to_c(bw);
    let (mut peak, mut pos_peak) = (0.0f64, 0.0f64);
    for i in 0..points.max(2) {
        let omega = std::f64::consts::PI * i as f64 / (points.max(2) - 1) as f64;
        let z = Complex::new(omega.cos(), omega.sin());
        let m = nalgebra::DMatrix::<Complex<f64>>::identity(n, n) * z - &acl_c;
        let x = m
            .lu()
            .solve(&bw_c)
            .ok_or_else(|| Error::Numeric("closed loop has a pole on the unit circle".into()))?;
        for col in 0..bw.ncols() {
            let xs = x.column(col);
            let zq = to_c(&q_half) * xs;
            let u = (to_c(k) * xs)[0] * r_half;
            let norm2 = zq.iter().map(|c| c.norm_sqr()).sum::<f64>() + u.norm_sqr();
            peak = peak.max(norm2.sqrt());
            pos_peak = pos_peak.max(xs[0].norm());
        }
    }
    Ok((peak, pos_peak))
}

fn matrix_sqrt_psd(q: &Matrix) -> Matrix {
    let e = crate::numerics::symmetrize(q).symmetric_eigen();
    let d = Matrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Lyapunov cost `P = A_clᵀ P A_cl + Q + KᵀRK` on the error coordinates,
/// returned as `(Tᵀ P₃ T, P₃)`.
pub fn design_terminal_cost(aug: &AugmentedModel, k_error: &Matrix, w: &Weights) -> Result<(Matrix, Matrix)> {
    w.validate()?;
    let (a, b) = aug.error_subsystem();
    let acl = &a + &b * k_error;
    let wm = &w.q + k_error.transpose() * k_error * w.r;
    let p3 = solve_dlyap(&acl, &wm)?;
    Ok((lift_cost(&p3), p3))
}

/// Largest eigenvalue of `A_clᵀ P A_cl − P + Q + KᵀRK`, divided by `1 + ‖P‖`.
pub fn decrease_residual(aug: &AugmentedModel, k_error: &Matrix, p3: &Matrix, w: &Weights) -> f64 {
    let (a, b) = aug.error_subsystem();
    let acl = &a + &b * k_error;
    let wm = &w.q + k_error.transpose() * k_error * w.r;
    let m = acl.transpose() * p3 * &acl - p3 + wm;
    let top = symmetric_eigenvalues(&m).last().copied().unwrap_or(0.0);
    top / (1.0 + p3.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminalSetOptions {
    /// Box on the integral state, which the plant leaves unbounded.
    pub theta_max: f64,
    pub max_iter: usize,
}

impl Default for TerminalSetOptions {
    fn default() -> Self {
        Self {
            theta_max: 1e3,
            max_iter: 500,
        }
    }
}

/// Initial set `X₀`: state box, velocity band, and the input bound under
/// `u = K x̄ + d` for each offset `d`. Fails naming the first constraint
/// group that empties the set.
pub fn terminal_seed(
    k: &Matrix,
    constraints: &ConstraintSet,
    band: (f64, f64),
    offsets: &[f64],
    opts: &TerminalSetOptions,
) -> Result<Polyhedron> {
    let c = constraints;
    let mut lo = [0.0; N_AUG];
    let mut hi = [0.0; N_AUG];
    (lo[IDX_Y], hi[IDX_Y]) = (-c.y_max, c.y_max);
    (lo[IDX_V], hi[IDX_V]) = (-c.v_max, c.v_max);
    (lo[IDX_R], hi[IDX_R]) = (-c.y_max, c.y_max);
    (lo[IDX_THETA], hi[IDX_THETA]) = (-opts.theta_max, opts.theta_max);
    let mut set = Polyhedron::from_bounds(&lo, &hi)?;
    if set.is_empty()? {
        return Err(Error::EmptyTerminalSet("state box".into()));
    }
    let (v_n, v_p) = band;
    let mut blo = [f64::NEG_INFINITY; N_AUG];
    let mut bhi = [f64::INFINITY; N_AUG];
    (blo[IDX_V], bhi[IDX_V]) = (v_n, v_p);
    set = set.stack(&Polyhedron::from_bounds(&blo, &bhi)?)?;
    if set.is_empty()? {
        return Err(Error::EmptyTerminalSet("velocity band".into()));
    }
    for (i, d) in offsets.iter().enumerate() {
        let mut g = Matrix::zeros(2, N_AUG);
        g.row_mut(0).copy_from(&k.row(0));
        g.row_mut(1).copy_from(&(-k.row(0)));
        let h = nalgebra::DVector::from_column_slice(&[c.u_max - d, c.u_max + d]);
        set = set.stack(&Polyhedron::new(g, h)?)?;
        if set.is_empty()? {
            return Err(Error::EmptyTerminalSet(format!("input bound with offset d{} = {d}", i + 1)));
        }
    }
    set.reduce()
}

/// Maximal positively invariant subset of [`terminal_seed`] under `Ā + B̄K`.
pub fn design_terminal_set(
    aug: &AugmentedModel,
    k: &Matrix,
    constraints: &ConstraintSet,
    band: (f64, f64),
    offsets: &[f64],
    opts: &TerminalSetOptions,
) -> Result<Polyhedron> {
    let x0 = terminal_seed(k, constraints, band, offsets, opts)?;
    let acl = &aug.a + &aug.b * k;
    let xf = max_invariant_set(&acl, &x0, opts.max_iter)?;
    if xf.is_empty()? {
        return Err(Error::EmptyTerminalSet("invariant subset".into()));
    }
    Ok(xf)
}

/// Which gain is used in the low-speed band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TerminalArm {
    #[default]
    Robust,
    Lqr,
}

impl std::str::FromStr for TerminalArm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" | "hinf" => Ok(Self::Robust),
            "lqr" => Ok(Self::Lqr),
            other => Err(Error::Invalid(format!("unknown terminal arm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    pub arm: TerminalArm,
    pub weights: Weights,
    pub hinf: HinfOptions,
    pub terminal_set: TerminalSetOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            arm: TerminalArm::Robust,
            weights: Weights::default(),
            hinf: HinfOptions::default(),
            terminal_set: TerminalSetOptions::default(),
        }
    }
}

/// Numbers that back the stability claims of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub spectral_radius_1: f64,
    pub spectral_radius_2: f64,
    /// Largest eigenvalue of the decrease-condition residual, relative to `1 + ‖P‖`.
    pub decrease_residual_1: f64,
    pub decrease_residual_2: f64,
    pub hinf_peak: Option<f64>,
    pub position_peak: Option<f64>,
    pub terminal_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalDesign {
    pub arm: TerminalArm,
    #[serde(with = "crate::io::rows")]
    pub k1: Matrix,
    #[serde(with = "crate::io::rows")]
    pub k2: Matrix,
    #[serde(with = "crate::io::rows")]
    pub p1: Matrix,
    #[serde(with = "crate::io::rows")]
    pub p2: Matrix,
    pub xf: Polyhedron,
    pub gamma: Option<f64>,
    pub w_star: f64,
    pub certificates: Certificates,
}

impl TerminalDesign {
    /// Terminal gain and cost for the mode used in `region`.
    pub fn for_region(&self, region: Region) -> (&Matrix, &Matrix) {
        match region.mode() {
            crate::plant::Mode::Outer => (&self.k1, &self.p1),
            crate::plant::Mode::Inner => (&self.k2, &self.p2),
        }
    }
}

/// Full terminal design for a PWA model.
pub fn synthesize(model: &PwaModel, opts: &SynthesisOptions) -> Result<TerminalDesign> {
    model.validate()?;
    let w = &opts.weights;
    let aug1 = model.augmented(Region::OuterPositive);
    let aug2 = model.augmented(Region::InnerPositive);
    let (g1, _) = design_lqr_gain(&aug1, w)?;
    let (g2, gamma, hinf_peak, position_peak) = match opts.arm {
        TerminalArm::Lqr => (design_lqr_gain(&aug2, w)?.0, None, None, None),
        TerminalArm::Robust => {
            let h = design_hinf_gain(&aug2, w, &opts.hinf)?;
            (h.gain, Some(h.gamma), Some(h.peak), Some(h.position_peak))
        }
    };
    let margin = Tolerances::default().schur_margin;
    for (g, name) in [(&g1, "K1"), (&g2, "K2")] {
        if g.spectral_radius >= 1.0 - margin {
            return Err(Error::NotStabilizable(format!(
                "{name} closed loop has spectral radius {:.9}",
                g.spectral_radius
            )));
        }
    }
    let (p1, p1_err) = design_terminal_cost(&aug1, &g1.k_error, w)?;
    let (p2, p2_err) = design_terminal_cost(&aug2, &g2.k_error, w)?;
    let xf = design_terminal_set(
        &aug2,
        &g2.k,
        &model.constraints,
        (model.v_n, model.v_p),
        &[model.f_cp, model.f_cn],
        &opts.terminal_set,
    )?;
    let certificates = Certificates {
        spectral_radius_1: g1.spectral_radius,
        spectral_radius_2: g2.spectral_radius,
        decrease_residual_1: decrease_residual(&aug1, &g1.k_error, &p1_err, w),
        decrease_residual_2: decrease_residual(&aug2, &g2.k_error, &p2_err, w),
        hinf_peak,
        position_peak,
        terminal_rows: xf.n_rows(),
    };
    Ok(TerminalDesign {
        arm: opts.arm,
        k1: g1.k,
        k2: g2.k,
        p1,
        p2,
        xf,
        gamma,
        w_star: opts.hinf.w_star,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lqr_cost_matches_riccati() {
        let m = PwaModel::identified();
        let aug = m.augmented(Region::OuterPositive);
        let w = Weights::default();
        let (g, p_dare) = design_lqr_gain(&aug, &w).unwrap();
        let (_, p_lyap) = design_terminal_cost(&aug, &g.k_error, &w).unwrap();
        assert!((&p_lyap - &p_dare).norm() <= 1e-8 * p_dare.norm());
        assert!(g.spectral_radius < 1.0);
    }

    #[test]
    fn zero_disturbance_gives_lqr() {
        let m = PwaModel::identified();
        let aug = m.augmented(Region::InnerPositive);
        let w = Weights::default();
        let opts = HinfOptions {
            w_star: 0.0,
            ..HinfOptions::default()
        };
        let h = design_hinf_gain(&aug, &w, &opts).unwrap();
        let (lqr, _) = design_lqr_gain(&aug, &w).unwrap();
        assert_eq!(h.gamma, opts.gamma_lo);
        assert!((&h.gain.k - &lqr.k).norm() <= 1e-8 * lqr.k.norm());
    }
}
