//! Receding-horizon controller on the augmented model.
//!
//! The prediction model is fixed over the horizon to the dynamics and
//! friction offset of the region measured at `k = 0`. Decision variables
//! are the effective inputs `ū_k = u_k − d`; the applied voltage is
//! `u = ū₀ + d`, hard-clamped to the actuator range.
//!
//! Condensed form for one region and soft level:
//!
//! ```text
//! min ½ zᵀ H z + (F x̄)ᵀ z + x̄ᵀ Y x̄   s.t.  G z ≤ w + E x̄
//! ```
//!
//! with `z = (ū₀ … ū_{N−1}, slacks)`.

mod explicit;

pub use explicit::{export_explicit, CriticalRegion, ExplicitController, ExplicitOptions, TableLookup};

use serde::{Deserialize, Serialize};

use crate::augment::{state_weight, IDX_R, IDX_THETA, IDX_V, IDX_Y, N_AUG};
use crate::error::{Error, Result};
use crate::numerics::{solve_qp_warm, Matrix, QpProblem, QpStatus, Vector};
use crate::plant::{Mode, PwaModel, Region, State};
use crate::synthesis::{TerminalDesign, Weights};

/// Constraint softening applied when the hard problem is infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftLevel {
    Hard = 0,
    /// State constraints carry a penalized slack.
    SoftState = 1,
    /// State and terminal-set constraints carry penalized slacks.
    SoftTerminal = 2,
}

impl SoftLevel {
    pub const ALL: [SoftLevel; 3] = [SoftLevel::Hard, SoftLevel::SoftState, SoftLevel::SoftTerminal];

    fn n_slacks(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionStatus {
    Optimal,
    SoftState,
    SoftTerminal,
    /// Explicit table hit.
    Table,
    /// Solver failure; `u = 0` was applied.
    Fault,
}

impl DecisionStatus {
    pub fn label(self) -> &'static str {
        match self {
            DecisionStatus::Optimal => "ok",
            DecisionStatus::SoftState => "soft-state",
            DecisionStatus::SoftTerminal => "soft-terminal",
            DecisionStatus::Table => "table",
            DecisionStatus::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcOptions {
    pub horizon: usize,
    /// Deadband half-width on velocity (mm/s).
    pub epsilon: f64,
    /// Apply the velocity deadband before the clamp.
    pub deadband: bool,
    /// Freeze the integral state while the input is saturated toward the error.
    pub anti_windup: bool,
    /// Quadratic penalty on constraint slacks.
    pub soft_penalty: f64,
}

impl Default for MpcOptions {
    fn default() -> Self {
        Self {
            horizon: 5,
            epsilon: 0.5,
            deadband: false,
            anti_windup: true,
            soft_penalty: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub options: MpcOptions,
    pub weights: Weights,
    /// Prediction model.
    pub model: PwaModel,
    pub terminal: TerminalDesign,
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.options;
        if o.horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        if !(o.epsilon >= 0.0) {
            return Err(Error::Invalid("deadband epsilon must be nonnegative".into()));
        }
        if !(o.soft_penalty > 0.0) {
            return Err(Error::Invalid("soft penalty must be positive".into()));
        }
        self.weights.validate()?;
        self.model.validate()?;
        if self.terminal.xf.dim() != N_AUG {
            return Err(Error::Dimension("terminal set must live in the augmented space".into()));
        }
        Ok(())
    }
}

/// Multiparametric data for one (mode, soft level); offsets enter through `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub hessian: Matrix,
    /// `F`: linear term is `F x̄`.
    pub f: Matrix,
    /// `Y`: constant term is `x̄ᵀ Y x̄`.
    pub y: Matrix,
    pub g: Matrix,
    pub w: Vector,
    pub e: Matrix,
    pub n_inputs: usize,
    pub level: SoftLevel,
}

impl CondensedQp {
    pub fn problem(&self, x: &Vector) -> Result<QpProblem> {
        QpProblem::new(self.hessian.clone(), &self.f * x, self.g.clone(), &self.w + &self.e * x)
    }

    pub fn constant(&self, x: &Vector) -> f64 {
        x.dot(&(&self.y * x))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ModeData {
    /// Per soft level.
    levels: Vec<CondensedQp>,
}

/// A prepared controller: condensation done once per mode and soft level.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpc {
    pub cfg: MpcConfig,
    outer: ModeData,
    inner: ModeData,
}

impl Mpc {
    pub fn new(cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        let outer = prepare_mode(&cfg, Mode::Outer)?;
        let inner = prepare_mode(&cfg, Mode::Inner)?;
        Ok(Self { cfg, outer, inner })
    }

    pub fn horizon(&self) -> usize {
        self.cfg.options.horizon
    }

    /// Condensed data for a region at a soft level, with the region's offset
    /// folded into the input bounds.
    pub fn condensed(&self, region: Region, level: SoftLevel) -> CondensedQp {
        let data = match region.mode() {
            Mode::Outer => &self.outer,
            Mode::Inner => &self.inner,
        };
        let mut c = data.levels[level as usize].clone();
        let d = self.cfg.model.offset(region);
        let n = self.horizon();
        for k in 0..n {
            c.w[2 * k] -= d;
            c.w[2 * k + 1] += d;
        }
        c
    }

    /// Region used for prediction at `x̄`.
    pub fn region_at(&self, x: &Vector) -> Region {
        self.cfg.model.region_of(x[IDX_V], x[IDX_R] - x[IDX_Y])
    }
}

fn prepare_mode(cfg: &MpcConfig, mode: Mode) -> Result<ModeData> {
    let n = cfg.options.horizon;
    let region = match mode {
        Mode::Outer => Region::OuterPositive,
        Mode::Inner => Region::InnerPositive,
    };
    let aug = cfg.model.augmented(region);
    let (_, p) = cfg.terminal.for_region(region);
    let qx = state_weight(&cfg.weights.q);

    // Stacked predictions x_k = Sx_k x0 + Su_k U, k = 1..N.
    let mut sx = Vec::with_capacity(n);
    let mut su = Vec::with_capacity(n);
    let mut ak = Matrix::identity(N_AUG, N_AUG);
    let mut prev_su = Matrix::zeros(N_AUG, n);
    for k in 0..n {
        ak = &aug.a * &ak;
        let mut s = &aug.a * &prev_su;
        s.column_mut(k).copy_from(&aug.b.column(0));
        sx.push(ak.clone());
        su.push(s.clone());
        prev_su = s;
    }
    let mut h = Matrix::identity(n, n) * (2.0 * cfg.weights.r);
    let mut f = Matrix::zeros(n, N_AUG);
    let mut y = qx.clone();
    for k in 0..n {
        let wk = if k + 1 == n { p } else { &qx };
        h += (su[k].transpose() * wk * &su[k]) * 2.0;
        f += (su[k].transpose() * wk * &sx[k]) * 2.0;
        y += sx[k].transpose() * wk * &sx[k];
    }
    let h = crate::numerics::symmetrize(&h);

    let c = &cfg.model.constraints;
    let xf = &cfg.terminal.xf;
    let n_state = 4 * n;
    let n_term = xf.n_rows();
    let mut levels = Vec::new();
    for level in SoftLevel::ALL {
        let ns = level.n_slacks();
        let nz = n + ns;
        let rows = 2 * n + n_state + n_term + ns;
        let mut g = Matrix::zeros(rows, nz);
        let mut w = Vector::zeros(rows);
        let mut e = Matrix::zeros(rows, N_AUG);
        // Input bounds (offset added per region): ū_k ≤ u_max, −ū_k ≤ u_max.
        for k in 0..n {
            g[(2 * k, k)] = 1.0;
            w[2 * k] = c.u_max;
            g[(2 * k + 1, k)] = -1.0;
            w[2 * k + 1] = c.u_max;
        }
        // State box on (y, v) for k = 1..N.
        let mut row = 2 * n;
        for k in 0..n {
            for (idx, bound) in [(IDX_Y, c.y_max), (IDX_V, c.v_max)] {
                for sign in [1.0, -1.0] {
                    for j in 0..n {
                        g[(row, j)] = sign * su[k][(idx, j)];
                    }
                    for j in 0..N_AUG {
                        e[(row, j)] = -sign * sx[k][(idx, j)];
                    }
                    w[row] = bound;
                    if ns >= 1 {
                        g[(row, n)] = -1.0;
                    }
                    row += 1;
                }
            }
        }
        // Terminal set on x_N.
        let gs = &xf.g * &su[n - 1];
        let ge = -(&xf.g * &sx[n - 1]);
        for i in 0..n_term {
            for j in 0..n {
                g[(row, j)] = gs[(i, j)];
            }
            for j in 0..N_AUG {
                e[(row, j)] = ge[(i, j)];
            }
            w[row] = xf.h[i];
            if ns >= 2 {
                g[(row, n + 1)] = -1.0;
            }
            row += 1;
        }
        for s in 0..ns {
            g[(row, n + s)] = -1.0;
            row += 1;
        }
        let mut hz = Matrix::zeros(nz, nz);
        hz.view_mut((0, 0), (n, n)).copy_from(&h);
        for s in 0..ns {
            hz[(n + s, n + s)] = 2.0 * cfg.options.soft_penalty;
        }
        let mut fz = Matrix::zeros(nz, N_AUG);
        fz.view_mut((0, 0), (n, N_AUG)).copy_from(&f);
        levels.push(CondensedQp {
            hessian: hz,
            f: fz,
            y: y.clone(),
            g,
            w,
            e,
            n_inputs: n,
            level,
        });
    }
    Ok(ModeData { levels })
}

/// One controller output.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    /// Applied voltage after deadband and clamp.
    pub u: f64,
    /// First optimal effective input `ū₀`.
    pub u_eff: f64,
    pub region: Region,
    pub status: DecisionStatus,
    pub level: SoftLevel,
    pub active_set: Vec<usize>,
    /// `V_N(x̄)`; NaN on fault.
    pub cost: f64,
    pub iterations: usize,
}

/// Solve the receding-horizon problem at `x̄`, escalating soft levels on
/// infeasibility. `warm` is the previous active set at the same level.
pub fn solve_mpc(mpc: &Mpc, x: &Vector, warm: Option<(SoftLevel, &[usize])>) -> ControlDecision {
    let region = mpc.region_at(x);
    let d = mpc.cfg.model.offset(region);
    let u_max = mpc.cfg.model.constraints.u_max;
    let fault = |level| ControlDecision {
        u: 0.0,
        u_eff: -d,
        region,
        status: DecisionStatus::Fault,
        level,
        active_set: Vec::new(),
        cost: f64::NAN,
        iterations: 0,
    };
    if x.len() != N_AUG || !x.iter().all(|v| v.is_finite()) {
        return fault(SoftLevel::Hard);
    }
    for level in SoftLevel::ALL {
        let c = mpc.condensed(region, level);
        let Ok(problem) = c.problem(x) else {
            return fault(level);
        };
        let guess: &[usize] = match warm {
            Some((l, set)) if l == level => set,
            _ => &[],
        };
        let sol = match solve_qp_warm(&problem, guess) {
            Ok(s) => s,
            Err(_) => return fault(level),
        };
        if sol.status == QpStatus::Infeasible {
            continue;
        }
        let u_eff = sol.z[0];
        let status = match level {
            SoftLevel::Hard => DecisionStatus::Optimal,
            SoftLevel::SoftState => DecisionStatus::SoftState,
            SoftLevel::SoftTerminal => DecisionStatus::SoftTerminal,
        };
        let mut u = u_eff + d;
        if mpc.cfg.options.deadband {
            u = apply_deadband(u, x[IDX_V], mpc.cfg.options.epsilon);
        }
        return ControlDecision {
            u: u.clamp(-u_max, u_max),
            u_eff,
            region,
            status,
            level,
            active_set: sol.active_set,
            cost: sol.value + c.constant(x),
            iterations: sol.iterations,
        };
    }
    fault(SoftLevel::SoftTerminal)
}

/// `0` when `|v| ≤ ε`, `u` otherwise.
pub fn apply_deadband(u: f64, v: f64, epsilon: f64) -> f64 {
    if v.abs() <= epsilon {
        0.0
    } else {
        u
    }
}

/// Closed-loop controller state: integral of the tracking error and the
/// warm-start cache. Optionally evaluates an explicit table first.
#[derive(Debug, Clone)]
pub struct MpcController<'a> {
    pub mpc: &'a Mpc,
    pub table: Option<&'a ExplicitController>,
    theta: f64,
    warm: Option<(SoftLevel, Vec<usize>)>,
}

impl<'a> MpcController<'a> {
    pub fn new(mpc: &'a Mpc) -> Self {
        Self {
            mpc,
            table: None,
            theta: 0.0,
            warm: None,
        }
    }

    pub fn with_table(mut self, table: &'a ExplicitController) -> Self {
        self.table = Some(table);
        self
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Augmented state for measurement `x` and reference `r`.
    pub fn augmented_state(&self, x: State, r: f64) -> Vector {
        let mut s = Vector::zeros(N_AUG);
        s[IDX_Y] = x.y;
        s[IDX_V] = x.v;
        s[IDX_R] = r;
        s[IDX_THETA] = self.theta;
        s
    }

    /// Compute the input for this sample and advance the integral state.
    pub fn step(&mut self, x: State, r: f64) -> ControlDecision {
        let xa = self.augmented_state(x, r);
        let decision = match self.table.and_then(|t| t.evaluate(self.mpc, &xa)) {
            Some(hit) => hit,
            None => {
                let warm = self.warm.as_ref().map(|(l, s)| (*l, s.as_slice()));
                let d = solve_mpc(self.mpc, &xa, warm);
                if d.status != DecisionStatus::Fault {
                    self.warm = Some((d.level, d.active_set.clone()));
                }
                d
            }
        };
        let e = x.y - r;
        let u_max = self.mpc.cfg.model.constraints.u_max;
        let pushing = decision.u.abs() >= u_max - 1e-9 && decision.u * e < 0.0;
        if !(self.mpc.cfg.options.anti_windup && pushing) {
            self.theta += e;
        }
        decision
    }
}
