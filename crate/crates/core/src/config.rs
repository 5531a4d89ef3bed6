//! Numerical tolerances shared by every solver and synthesis step.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Riccati and Lyapunov residual bound, scaled by `1 + ‖P‖`.
    pub riccati_residual: f64,
    /// Symmetry / positive semidefiniteness slack for QP Hessians.
    pub psd: f64,
    /// Relative LP objective agreement.
    pub lp_relative: f64,
    /// Primal feasibility for LP/QP solutions.
    pub primal: f64,
    /// Scaled stationarity residual for QP solutions.
    pub stationarity: f64,
    /// Constraint slack used in polyhedral inclusion and redundancy LPs.
    pub set_slack: f64,
    /// Margin kept below 1 for terminal closed-loop spectral radii.
    pub schur_margin: f64,
    /// Relative slack on the H∞ frequency-sweep certificate.
    pub hinf_slack: f64,
    /// Maximum active-set iterations per LP/QP solve.
    pub max_active_set_iter: usize,
    /// Maximum doubling iterations in the Riccati solver.
    pub max_doubling_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            riccati_residual: 1e-8,
            psd: 1e-9,
            lp_relative: 1e-9,
            primal: 1e-8,
            stationarity: 1e-7,
            set_slack: 1e-9,
            schur_margin: 1e-6,
            hinf_slack: 1e-3,
            max_active_set_iter: 2000,
            max_doubling_iter: 100,
        }
    }
}
