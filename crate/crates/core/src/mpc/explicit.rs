//! Explicit (lookup-table) form of the hard-constrained MPC law.
//!
//! Active sets are collected from online solves at sampled states. For each
//! new active set `A`, the KKT system is solved parametrically,
//! `z = Z x̄ + z₀`, `λ = L x̄ + l₀`, and the critical region is
//! `{x̄ ∈ Ω_j | G_I z ≤ w_I + E_I x̄, λ ≥ 0}`. States outside every stored
//! region fall back to the online solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_deadband, solve_mpc, ControlDecision, CondensedQp, DecisionStatus, Mpc, SoftLevel};
use crate::augment::{IDX_R, IDX_THETA, IDX_V, IDX_Y, N_AUG};
use crate::error::Result;
use crate::numerics::{Matrix, Vector};
use crate::plant::Region;
use crate::polytope::Polyhedron;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub region: Region,
    pub active_set: Vec<usize>,
    pub set: Polyhedron,
    /// Effective-input law `ū₀ = K x̄ + k₀`; the applied input adds the offset.
    #[serde(with = "crate::io::rows")]
    pub k: Matrix,
    pub d: f64,
}

impl CriticalRegion {
    /// Applied input `u = K x̄ + d` before deadband and clamp.
    pub fn law(&self, x: &Vector) -> f64 {
        (&self.k * x)[0] + self.d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplicitOptions {
    /// Sampled states per PWA region.
    pub samples: usize,
    pub seed: u64,
    pub max_regions: usize,
    /// Half-widths of the sampling box around the origin for `y` and `r`.
    pub position_span: f64,
    /// Half-width of the sampled velocity range (clipped to each region's band).
    pub velocity_span: f64,
    pub theta_span: f64,
}

impl Default for ExplicitOptions {
    fn default() -> Self {
        Self {
            samples: 20_000,
            seed: 7,
            max_regions: 20_000,
            position_span: 3.0,
            velocity_span: 40.0,
            theta_span: 0.1,
        }
    }
}

impl ExplicitOptions {
    /// Draw one state from the sampling box restricted to `region`.
    pub fn draw<R: Rng>(&self, mpc: &Mpc, region: Region, rng: &mut R) -> Vector {
        let m = &mpc.cfg.model;
        let s = self.velocity_span;
        let (lo, hi) = match region {
            Region::OuterPositive => (m.v_p, m.v_p.max(s)),
            Region::OuterNegative => (m.v_n.min(-s), m.v_n),
            Region::InnerPositive => (0.0, m.v_p),
            Region::InnerNegative => (m.v_n, 0.0),
        };
        let mut x = Vector::zeros(N_AUG);
        x[IDX_Y] = rng.random_range(-self.position_span..=self.position_span);
        x[IDX_R] = rng.random_range(-self.position_span..=self.position_span);
        x[IDX_V] = rng.random_range(lo..=hi);
        x[IDX_THETA] = rng.random_range(-self.theta_span..=self.theta_span);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitController {
    pub horizon: usize,
    pub regions: Vec<CriticalRegion>,
    /// Online solving is used for states outside every region.
    pub fallback: bool,
    /// True when enumeration stopped at `max_regions`.
    pub truncated: bool,
    pub samples: usize,
    /// Hard-feasible samples seen during enumeration.
    pub feasible_samples: usize,
}

/// Outcome of a table query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableLookup {
    Hit { index: usize, u: f64 },
    Miss,
}

impl ExplicitController {
    pub fn region_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for r in &self.regions {
            c[r.region.index() as usize - 1] += 1;
        }
        c
    }

    /// Point location followed by the affine law, deadband and clamp.
    pub fn lookup(&self, mpc: &Mpc, x: &Vector) -> TableLookup {
        let region = mpc.region_at(x);
        for (index, cr) in self.regions.iter().enumerate() {
            if cr.region == region && cr.set.contains(x, 1e-9) {
                let o = &mpc.cfg.options;
                let mut u = cr.law(x);
                if o.deadband {
                    u = apply_deadband(u, x[IDX_V], o.epsilon);
                }
                let u_max = mpc.cfg.model.constraints.u_max;
                return TableLookup::Hit {
                    index,
                    u: u.clamp(-u_max, u_max),
                };
            }
        }
        TableLookup::Miss
    }

    /// Table decision, or `None` when the state is not covered.
    pub fn evaluate(&self, mpc: &Mpc, x: &Vector) -> Option<ControlDecision> {
        match self.lookup(mpc, x) {
            TableLookup::Hit { index, u } => {
                let cr = &self.regions[index];
                Some(ControlDecision {
                    u,
                    u_eff: (&cr.k * x)[0],
                    region: cr.region,
                    status: DecisionStatus::Table,
                    level: SoftLevel::Hard,
                    active_set: cr.active_set.clone(),
                    cost: f64::NAN,
                    iterations: 0,
                })
            }
            TableLookup::Miss => None,
        }
    }
}

/// Enumerate critical regions of the hard problem from sampled states.
pub fn export_explicit(mpc: &Mpc, opts: &ExplicitOptions) -> Result<ExplicitController> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut table = ExplicitController {
        horizon: mpc.horizon(),
        regions: Vec::new(),
        fallback: true,
        truncated: false,
        samples: 0,
        feasible_samples: 0,
    };
    'regions: for region in Region::ALL {
        let qp = mpc.condensed(region, SoftLevel::Hard);
        for _ in 0..opts.samples {
            let x = opts.draw(mpc, region, &mut rng);
            table.samples += 1;
            if mpc.region_at(&x) != region {
                continue;
            }
            let d = solve_mpc(mpc, &x, None);
            if d.status != DecisionStatus::Optimal {
                continue;
            }
            table.feasible_samples += 1;
            let known = table
                .regions
                .iter()
                .any(|cr| cr.region == region && cr.set.contains(&x, 1e-9));
            if known {
                continue;
            }
            if let Some(cr) = critical_region(mpc, &qp, region, &d.active_set)? {
                if cr.set.contains(&x, 1e-7) {
                    table.regions.push(cr);
                    if table.regions.len() >= opts.max_regions {
                        table.truncated = true;
                        break 'regions;
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Parametric KKT solution for one active set; `None` when the active
/// constraints are linearly dependent or the region is empty.
pub fn critical_region(mpc: &Mpc, qp: &CondensedQp, region: Region, active: &[usize]) -> Result<Option<CriticalRegion>> {
    let nz = qp.hessian.nrows();
    let na = active.len();
    let mut kkt = Matrix::zeros(nz + na, nz + na);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&qp.hessian);
    let ga = qp.g.select_rows(active.iter());
    kkt.view_mut((nz, 0), (na, nz)).copy_from(&ga);
    kkt.view_mut((0, nz), (nz, na)).copy_from(&ga.transpose());
    // Right-hand side: [−F; E_A] x̄ + [0; w_A].
    let mut rhs_x = Matrix::zeros(nz + na, N_AUG);
    rhs_x.view_mut((0, 0), (nz, N_AUG)).copy_from(&(-&qp.f));
    let mut rhs_0 = Vector::zeros(nz + na);
    for (k, &i) in active.iter().enumerate() {
        rhs_x.row_mut(nz + k).copy_from(&qp.e.row(i));
        rhs_0[nz + k] = qp.w[i];
    }
    let lu = kkt.lu();
    if !lu.is_invertible() {
        return Ok(None);
    }
    let (Some(sx), Some(s0)) = (lu.solve(&rhs_x), lu.solve(&rhs_0)) else {
        return Ok(None);
    };
    let z = sx.rows(0, nz).into_owned();
    let z0 = s0.rows(0, nz).into_owned();
    let l = sx.rows(nz, na).into_owned();
    let l0 = s0.rows(nz, na).into_owned();

    let inactive: Vec<usize> = (0..qp.g.nrows()).filter(|i| !active.contains(i)).collect();
    let gi = qp.g.select_rows(inactive.iter());
    let ei = qp.e.select_rows(inactive.iter());
    let wi = Vector::from_iterator(inactive.len(), inactive.iter().map(|&i| qp.w[i]));
    let primal = Polyhedron::new(&gi * &z - ei, wi - &gi * &z0)?;
    let dual = Polyhedron::new(-l, l0)?;
    let set = primal.stack(&dual)?.stack(&region_guard(mpc, region)?)?.reduce()?;
    if set.is_empty()? {
        return Ok(None);
    }
    let d = mpc.cfg.model.offset(region);
    Ok(Some(CriticalRegion {
        region,
        active_set: active.to_vec(),
        set,
        k: z.rows(0, 1).into_owned(),
        d: z0[0] + d,
    }))
}

/// Velocity band of a PWA region as a polyhedron over `x̄`.
pub fn region_guard(mpc: &Mpc, region: Region) -> Result<Polyhedron> {
    let m = &mpc.cfg.model;
    let (lo, hi) = match region {
        Region::OuterPositive => (m.v_p, f64::INFINITY),
        Region::OuterNegative => (f64::NEG_INFINITY, m.v_n),
        Region::InnerPositive => (0.0, m.v_p),
        Region::InnerNegative => (m.v_n, 0.0),
    };
    let mut l = [f64::NEG_INFINITY; N_AUG];
    let mut h = [f64::INFINITY; N_AUG];
    l[IDX_V] = lo;
    h[IDX_V] = hi;
    Polyhedron::from_bounds(&l, &h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::tests::default_mpc;
    use crate::synthesis::TerminalArm;

    #[test]
    fn table_matches_online_on_its_own_samples() {
        let mpc = default_mpc(TerminalArm::Lqr);
        let opts = ExplicitOptions {
            samples: 400,
            ..Default::default()
        };
        let table = export_explicit(&mpc, &opts).unwrap();
        assert!(!table.regions.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let region = Region::ALL[rng.random_range(0..4)];
            let x = opts.draw(&mpc, region, &mut rng);
            if let TableLookup::Hit { u, .. } = table.lookup(&mpc, &x) {
                let online = solve_mpc(&mpc, &x, None);
                assert_eq!(online.status, DecisionStatus::Optimal);
                assert!((online.u - u).abs() <= 1e-6, "{} vs {u}", online.u);
            }
        }
    }
}
