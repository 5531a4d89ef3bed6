//! Piecewise-affine motor model and a continuous nonlinear-friction plant.
//!
//! The PWA model switches between an outer dynamics `{A₁, B₁}` (fast
//! motion, regions 1 and 2) and an inner dynamics `{A₂, B₂}` (low-speed
//! band around zero velocity, regions 3 and 4). The friction offset enters
//! as an input bias: `x⁺ = A x + B (u − f)` with `f = f_cp` for positive
//! motion and `f = f_cn` for negative motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{from_rows, Matrix};

/// Position (mm) and velocity (mm/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub y: f64,
    pub v: f64,
}

impl State {
    pub fn new(y: f64, v: f64) -> Self {
        Self { y, v }
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.v.is_finite()
    }
}

/// One of the four velocity-guarded regions of the PWA model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    /// `v ≥ v_p`: outer dynamics, positive offset.
    OuterPositive = 1,
    /// `v ≤ v_n`: outer dynamics, negative offset.
    OuterNegative = 2,
    /// `0 ≤ v ≤ v_p`: inner dynamics, positive offset.
    InnerPositive = 3,
    /// `v_n ≤ v ≤ 0`: inner dynamics, negative offset.
    InnerNegative = 4,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::OuterPositive,
        Region::OuterNegative,
        Region::InnerPositive,
        Region::InnerNegative,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.index() == i)
    }

    pub fn mode(self) -> Mode {
        match self {
            Region::OuterPositive | Region::OuterNegative => Mode::Outer,
            Region::InnerPositive | Region::InnerNegative => Mode::Inner,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Region::OuterPositive | Region::InnerPositive)
    }
}

/// Which of the two linear dynamics a region uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Outer,
    Inner,
}

/// One affine mode `x⁺ = A x + B (u − friction_offset)`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub friction_offset: f64,
}

impl LinearDynamics {
    pub fn step(&self, x: State, u: f64) -> State {
        let du = u - self.friction_offset;
        State {
            y: self.a[(0, 0)] * x.y + self.a[(0, 1)] * x.v + self.b[(0, 0)] * du,
            v: self.a[(1, 0)] * x.y + self.a[(1, 1)] * x.v + self.b[(1, 0)] * du,
        }
    }
}

/// Operating limits: travel, velocity and input voltage (all symmetric).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub y_max: f64,
    pub v_max: f64,
    pub u_max: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            y_max: 9.5,
            v_max: 400.0,
            u_max: 10.0,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        if self.y_max > 0.0 && self.v_max > 0.0 && self.u_max >= 0.0 {
            Ok(())
        } else {
            Err(Error::Invalid(format!("constraint bounds must be positive: {self:?}")))
        }
    }

    pub fn clamp_input(&self, u: f64) -> f64 {
        u.clamp(-self.u_max, self.u_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwaModel {
    pub a_outer: Matrix,
    pub b_outer: Matrix,
    pub a_inner: Matrix,
    pub b_inner: Matrix,
    /// Position output row, `y = C x`.
    pub c: Matrix,
    pub f_cp: f64,
    pub f_cn: f64,
    pub v_p: f64,
    pub v_n: f64,
    pub ts: f64,
    pub constraints: ConstraintSet,
}

/// Input used to place the inner/outer switching velocities.
pub const THRESHOLD_PROBE_VOLTS: f64 = 3.0;

impl PwaModel {
    /// Model identified from motor data; offsets 2.0 V / −2.6 V.
    pub fn identified() -> Self {
        Self::with_thresholds(
            from_rows(&[&[0.9968, 6.289e-4], &[-5.544, 0.3623]]),
            from_rows(&[&[4.616e-3], &[3.493]]),
            from_rows(&[&[0.9990, 6.312e-4], &[-1.658, 0.3662]]),
            from_rows(&[&[2.033e-3], &[1.636]]),
            2.0,
            -2.6,
        )
    }

    /// Mismatched model: steeper Stribeck slope in the inner band and larger offsets.
    pub fn assumed() -> Self {
        Self::with_thresholds(
            from_rows(&[&[0.9968, 6.289e-4], &[-5.544, 0.3623]]),
            from_rows(&[&[4.616e-3], &[3.493]]),
            from_rows(&[&[0.9990, 6.312e-4], &[-1.658, 0.4000]]),
            from_rows(&[&[2.033e-3], &[1.636]]),
            2.4,
            -2.9,
        )
    }

    /// Build a model whose switching velocities are the inner-mode steady
    /// velocities under `u = ±3 V` with the position held at zero.
    pub fn with_thresholds(
        a_outer: Matrix,
        b_outer: Matrix,
        a_inner: Matrix,
        b_inner: Matrix,
        f_cp: f64,
        f_cn: f64,
    ) -> Self {
        let (v_p, v_n) = default_thresholds(&a_inner, &b_inner, f_cp, f_cn);
        Self {
            a_outer,
            b_outer,
            a_inner,
            b_inner,
            c: from_rows(&[&[1.0, 0.0]]),
            f_cp,
            f_cn,
            v_p,
            v_n,
            ts: 1e-3,
            constraints: ConstraintSet::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (m, r, c, name) in [
            (&self.a_outer, 2, 2, "A1"),
            (&self.b_outer, 2, 1, "B1"),
            (&self.a_inner, 2, 2, "A2"),
            (&self.b_inner, 2, 1, "B2"),
            (&self.c, 1, 2, "C"),
        ] {
            if m.shape() != (r, c) {
                return Err(Error::Dimension(format!("{name} must be {r}x{c}")));
            }
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::Invalid(format!("{name} has non-finite entries")));
            }
        }
        if !(self.v_n < 0.0 && 0.0 < self.v_p) {
            return Err(Error::Invalid(format!(
                "thresholds must satisfy v_n < 0 < v_p (v_n={}, v_p={})",
                self.v_n, self.v_p
            )));
        }
        if !(self.f_cn < 0.0 && 0.0 < self.f_cp) {
            return Err(Error::Invalid(format!(
                "offsets must satisfy f_cn < 0 < f_cp (f_cn={}, f_cp={})",
                self.f_cn, self.f_cp
            )));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::Invalid("sampling period must be positive".into()));
        }
        self.constraints.validate()
    }

    /// Region containing velocity `v`.
    ///
    /// On `|v| = v_p` or `v = v_n` the outer region wins; at `v = 0` the
    /// sign of `tie_hint` (the current tracking error `r − y`) selects the
    /// positive (`≥ 0`) or negative offset region.
    pub fn region_of(&self, v: f64, tie_hint: f64) -> Region {
        region_of(v, self.v_p, self.v_n, tie_hint)
    }

    pub fn dynamics(&self, region: Region) -> LinearDynamics {
        let (a, b) = match region.mode() {
            Mode::Outer => (&self.a_outer, &self.b_outer),
            Mode::Inner => (&self.a_inner, &self.b_inner),
        };
        LinearDynamics {
            a: a.clone(),
            b: b.clone(),
            c: self.c.clone(),
            friction_offset: self.offset(region),
        }
    }

    pub fn mode_matrices(&self, mode: Mode) -> (&Matrix, &Matrix) {
        match mode {
            Mode::Outer => (&self.a_outer, &self.b_outer),
            Mode::Inner => (&self.a_inner, &self.b_inner),
        }
    }

    pub fn offset(&self, region: Region) -> f64 {
        if region.is_positive() {
            self.f_cp
        } else {
            self.f_cn
        }
    }

    /// One sample of the PWA dynamics; the input saturates at `±u_max` first.
    pub fn step(&self, x: State, u: f64, tie_hint: f64) -> Result<(State, Region)> {
        if !x.is_finite() || !u.is_finite() {
            return Err(Error::SimulationFault {
                step: 0,
                message: format!("non-finite plant state {x:?} or input {u}"),
            });
        }
        let region = self.region_of(x.v, tie_hint);
        let u = self.constraints.clamp_input(u);
        let (a, b) = self.mode_matrices(region.mode());
        let du = u - self.offset(region);
        let next = State {
            y: a[(0, 0)] * x.y + a[(0, 1)] * x.v + b[(0, 0)] * du,
            v: a[(1, 0)] * x.y + a[(1, 1)] * x.v + b[(1, 0)] * du,
        };
        Ok((next, region))
    }
}

pub fn region_of(v: f64, v_p: f64, v_n: f64, tie_hint: f64) -> Region {
    if v >= v_p {
        Region::OuterPositive
    } else if v <= v_n {
        Region::OuterNegative
    } else if v > 0.0 {
        Region::InnerPositive
    } else if v < 0.0 {
        Region::InnerNegative
    } else if tie_hint >= 0.0 {
        Region::InnerPositive
    } else {
        Region::InnerNegative
    }
}

/// Steady inner-mode velocities under `u = ±3 V` at `y = 0`.
pub fn default_thresholds(a_inner: &Matrix, b_inner: &Matrix, f_cp: f64, f_cn: f64) -> (f64, f64) {
    let gain = b_inner[(1, 0)] / (1.0 - a_inner[(1, 1)]);
    (
        gain * (THRESHOLD_PROBE_VOLTS - f_cp),
        gain * (-THRESHOLD_PROBE_VOLTS - f_cn),
    )
}

/// Continuous motion model `ẏ = v`, `v̇ = a y + b v + c (u − F(v))` with
/// Coulomb, viscous and Stribeck friction
/// `F(v) = sgn(v)·(f_c + f_s0·exp(−|v/v_s|^δ)) + k v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearFrictionPlant {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Coulomb level for positive motion (V).
    pub coulomb_pos: f64,
    /// Coulomb level magnitude for negative motion (V).
    pub coulomb_neg: f64,
    /// Viscous coefficient (V·s/mm).
    pub viscous: f64,
    pub stribeck: f64,
    pub stribeck_velocity: f64,
    pub stribeck_exponent: f64,
    /// RK4 sub-steps per sampling period.
    pub substeps: usize,
}

impl Default for NonlinearFrictionPlant {
    /// Breakaway at +2.5 V / −2.9 V and 180 mm/s at 10 V.
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 4800.0,
            coulomb_pos: 2.0,
            coulomb_neg: 2.4,
            viscous: 8.0 / 180.0,
            stribeck: 0.5,
            stribeck_velocity: 2.0,
            stribeck_exponent: 2.0,
            substeps: 10,
        }
    }
}

impl NonlinearFrictionPlant {
    pub fn validate(&self) -> Result<()> {
        let ok = self.coulomb_pos > 0.0
            && self.coulomb_neg > 0.0
            && self.stribeck_velocity > 0.0
            && self.stribeck_exponent >= 1.0
            && self.stribeck >= 0.0
            && self.viscous >= 0.0
            && self.c > 0.0
            && self.substeps >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid nonlinear plant parameters: {self:?}")))
        }
    }

    /// Static friction level in the positive direction.
    pub fn breakaway_pos(&self) -> f64 {
        self.coulomb_pos + self.stribeck
    }

    /// Static friction level in the negative direction (negative number).
    pub fn breakaway_neg(&self) -> f64 {
        -(self.coulomb_neg + self.stribeck)
    }

    /// Friction force for motion in direction `dir` (±1) at velocity `v`.
    pub fn friction(&self, v: f64, dir: f64) -> f64 {
        let coulomb = if dir > 0.0 { self.coulomb_pos } else { self.coulomb_neg };
        let s = self.stribeck * (-(v / self.stribeck_velocity).abs().powf(self.stribeck_exponent)).exp();
        dir * (coulomb + s) + self.viscous * v
    }

    fn deriv(&self, y: f64, v: f64, u: f64, dir: f64) -> (f64, f64) {
        (v, self.a * y + self.b * v + self.c * (u - self.friction(v, dir)))
    }

    /// Advance one sampling period `ts` with `substeps` RK4 steps.
    ///
    /// At rest the rotor sticks while the driving force stays inside the
    /// breakaway band; a velocity sign change within a sub-step ends in
    /// sticking at zero velocity.
    pub fn step(&self, x: State, u: f64, ts: f64) -> Result<State> {
        if !(ts > 0.0) {
            return Err(Error::Invalid("sampling period must be positive".into()));
        }
        let h = ts / self.substeps as f64;
        let (mut y, mut v) = (x.y, x.v);
        for _ in 0..self.substeps {
            let dir = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                let drive = u + self.a * y / self.c;
                if drive > self.breakaway_pos() {
                    1.0
                } else if drive < self.breakaway_neg() {
                    -1.0
                } else {
                    continue;
                }
            };
            let (k1y, k1v) = self.deriv(y, v, u, dir);
            let (k2y, k2v) = self.deriv(y + 0.5 * h * k1y, v + 0.5 * h * k1v, u, dir);
            let (k3y, k3v) = self.deriv(y + 0.5 * h * k2y, v + 0.5 * h * k2v, u, dir);
            let (k4y, k4v) = self.deriv(y + h * k3y, v + h * k3v, u, dir);
            let y_next = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            let v_next = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            // Energy guard: one sub-step cannot add more speed than the
            // largest force the model can produce.
            let bound = v.abs()
                + h * (self.a.abs() * y.abs()
                    + self.b.abs() * v.abs()
                    + self.c * (u.abs() + self.friction(v.abs(), 1.0).abs() + self.coulomb_neg))
                    * 4.0;
            if !y_next.is_finite() || !v_next.is_finite() || v_next.abs() > bound + 1e-9 {
                return Err(Error::SimulationFault {
                    step: 0,
                    message: format!("nonlinear plant integration blew up (v = {v_next})"),
                });
            }
            y = y_next;
            v = if v_next * dir < 0.0 { 0.0 } else { v_next };
        }
        Ok(State { y, v })
    }
}

/// Static friction estimates from a slow sine input, `(f_cp, f_cn)` in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionEstimate {
    pub f_cp: f64,
    pub f_cn: f64,
}

/// Encoder resolution used as the motion-onset threshold (mm).
pub const ENCODER_RESOLUTION: f64 = 1e-4;

/// Inject `u = A sin(2π f t)` from rest and record the input at the first
/// detectable motion in each direction.
pub fn identify_static_friction(
    plant: &NonlinearFrictionPlant,
    amplitude: f64,
    freq: f64,
    ts: f64,
) -> Result<FrictionEstimate> {
    plant.validate()?;
    if !(amplitude > 0.0 && freq > 0.0 && ts > 0.0) {
        return Err(Error::Invalid("amplitude, frequency and ts must be positive".into()));
    }
    let steps = (2.0 / (freq * ts)).ceil() as usize;
    let mut x = State::default();
    let mut peak = x.y;
    let (mut f_cp, mut f_cn) = (None, None);
    for k in 0..steps {
        let u = amplitude * (2.0 * std::f64::consts::PI * freq * k as f64 * ts).sin();
        x = plant.step(x, u, ts)?;
        if f_cp.is_none() && u > 0.0 && x.y > ENCODER_RESOLUTION {
            f_cp = Some(u);
        }
        if f_cp.is_some() && f_cn.is_none() && u < 0.0 && x.y < peak - ENCODER_RESOLUTION {
            f_cn = Some(u);
        }
        peak = peak.max(x.y);
        if f_cp.is_some() && f_cn.is_some() {
            break;
        }
    }
    match (f_cp, f_cn) {
        (Some(f_cp), Some(f_cn)) => Ok(FrictionEstimate { f_cp, f_cn }),
        (None, _) => Err(Error::IdentificationFailed(
            "no motion detected in the positive direction".into(),
        )),
        (_, None) => Err(Error::IdentificationFailed(
            "no motion detected in the negative direction".into(),
        )),
    }
}
