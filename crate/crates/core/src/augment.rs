//! Integral tracking model `x̄ = (y, v, r, θ)`.
//!
//! ```text
//!        ⎡ A   0  0 ⎤        ⎡ B ⎤
//!   Ā =  ⎢ 0 0  1  0⎥   B̄ =  ⎢ 0 ⎥
//!        ⎣ C  −1  1 ⎦        ⎣ 0 ⎦
//! ```
//!
//! The reference is held constant and `θ⁺ = θ + (C x − r)`. The friction
//! offset stays outside the matrices; inputs to [`AugmentedModel::step`]
//! are effective inputs `ū = u − f`.

use crate::numerics::{Matrix, Vector};
use crate::plant::{LinearDynamics, PwaModel, Region};

pub const N_AUG: usize = 4;
pub const IDX_Y: usize = 0;
pub const IDX_V: usize = 1;
pub const IDX_R: usize = 2;
pub const IDX_THETA: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub friction_offset: f64,
    pub source: Option<Region>,
}

pub fn augment(mode: &LinearDynamics) -> AugmentedModel {
    let mut a = Matrix::zeros(N_AUG, N_AUG);
    a.view_mut((0, 0), (2, 2)).copy_from(&mode.a);
    a[(IDX_R, IDX_R)] = 1.0;
    a[(IDX_THETA, 0)] = mode.c[(0, 0)];
    a[(IDX_THETA, 1)] = mode.c[(0, 1)];
    a[(IDX_THETA, IDX_R)] = -1.0;
    a[(IDX_THETA, IDX_THETA)] = 1.0;
    let mut b = Matrix::zeros(N_AUG, 1);
    b.view_mut((0, 0), (2, 1)).copy_from(&mode.b);
    let mut c = Matrix::zeros(1, N_AUG);
    c.view_mut((0, 0), (1, 2)).copy_from(&mode.c);
    AugmentedModel {
        a,
        b,
        c,
        friction_offset: mode.friction_offset,
        source: None,
    }
}

impl PwaModel {
    pub fn augmented(&self, region: Region) -> AugmentedModel {
        let mut m = augment(&self.dynamics(region));
        m.source = Some(region);
        m
    }
}

impl AugmentedModel {
    /// One step with effective input `ū`.
    pub fn step(&self, x: &Vector, u_eff: f64) -> Vector {
        &self.a * x + &self.b * u_eff
    }

    /// `(e, v, θ)` dynamics obtained by setting `r = 0`, where `e = y − r`.
    ///
    /// The reference enters the true error dynamics through `(A − I)` and
    /// acts as an uncontrollable, marginally stable input; gains and costs
    /// are designed on this regulated part and lifted with [`lift_gain`]
    /// and [`lift_cost`].
    pub fn error_subsystem(&self) -> (Matrix, Matrix) {
        let keep = [IDX_Y, IDX_V, IDX_THETA];
        let a = self.a.select_rows(keep.iter()).select_columns(keep.iter());
        let b = self.b.select_rows(keep.iter());
        (a, b)
    }
}

/// Stage-cost output map `z = (y − r, v, θ) = T x̄`.
pub fn output_map() -> Matrix {
    let mut t = Matrix::zeros(3, N_AUG);
    t[(0, IDX_Y)] = 1.0;
    t[(0, IDX_R)] = -1.0;
    t[(1, IDX_V)] = 1.0;
    t[(2, IDX_THETA)] = 1.0;
    t
}

/// `Tᵀ Q T` for a 3×3 output weight.
pub fn state_weight(q: &Matrix) -> Matrix {
    let t = output_map();
    t.transpose() * q * t
}

/// Error coordinates `(y − r, v, θ)` of an augmented state.
pub fn to_error(x: &Vector) -> Vector {
    &output_map() * x
}

/// `[k_e, k_v, k_θ]` to `[k_e, k_v, −k_e, k_θ]`.
pub fn lift_gain(k3: &Matrix) -> Matrix {
    k3 * output_map()
}

/// `P₃` on `(e, v, θ)` to `Tᵀ P₃ T` on `x̄`.
pub fn lift_cost(p3: &Matrix) -> Matrix {
    state_weight(p3)
}
