//! LPs and convex QPs in inequality form `G z ≤ h` with free variables.
//!
//! LPs go to the `microlp` simplex. QPs use a dense primal active-set
//! method so that the optimal active set and its multipliers are available
//! for explicit-law extraction; phase 1 is an LP in `(z, t)` minimizing the
//! uniform constraint violation `t`.

use super::{symmetric_eigenvalues, Matrix, Vector};
use crate::config::Tolerances;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `minimize cᵀz subject to G z ≤ h`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: Vector,
    pub g: Matrix,
    pub h: Vector,
}

impl LpProblem {
    pub fn new(c: Vector, g: Matrix, h: Vector) -> Result<Self> {
        if g.ncols() != c.len() || g.nrows() != h.len() {
            return Err(Error::Dimension(format!(
                "LP: c has {} entries, G is {}x{}, h has {}",
                c.len(),
                g.nrows(),
                g.ncols(),
                h.len()
            )));
        }
        if !(c.iter().chain(g.iter()).chain(h.iter()).all(|x| x.is_finite())) {
            return Err(Error::Invalid("LP data must be finite".into()));
        }
        Ok(Self { c, g, h })
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; zero when no optimum exists.
    pub z: Vector,
    /// `cᵀz` at the optimum, `-inf` when unbounded and `+inf` when infeasible.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

/// `minimize ½zᵀHz + gᵀz subject to G z ≤ h`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: Matrix,
    pub linear: Vector,
    pub g: Matrix,
    pub h: Vector,
}

impl QpProblem {
    pub fn new(hessian: Matrix, linear: Vector, g: Matrix, h: Vector) -> Result<Self> {
        let n = linear.len();
        if hessian.nrows() != n || hessian.ncols() != n || g.ncols() != n || g.nrows() != h.len() {
            return Err(Error::Dimension(format!(
                "QP: H is {}x{}, g has {n}, G is {}x{}, h has {}",
                hessian.nrows(),
                hessian.ncols(),
                g.nrows(),
                g.ncols(),
                h.len()
            )));
        }
        let all = hessian.iter().chain(linear.iter()).chain(g.iter()).chain(h.iter());
        if !all.into_iter().all(|x| x.is_finite()) {
            return Err(Error::Invalid("QP data must be finite".into()));
        }
        let tol = Tolerances::default().psd;
        let scale = 1.0 + hessian.norm();
        if (&hessian - hessian.transpose()).norm() > tol * scale {
            return Err(Error::Invalid("QP Hessian is not symmetric".into()));
        }
        let hessian = super::symmetrize(&hessian);
        if n > 0 && symmetric_eigenvalues(&hessian)[0] < -tol * scale {
            return Err(Error::Invalid("QP Hessian is not positive semidefinite".into()));
        }
        Ok(Self {
            hessian,
            linear,
            g,
            h,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub z: Vector,
    /// Indices of constraints active at the optimum (the final working set), ascending.
    pub active_set: Vec<usize>,
    /// Lagrange multipliers, one per constraint row (zero off the active set).
    pub multipliers: Vector,
    pub value: f64,
    pub iterations: usize,
    /// `‖Hz + g + Gᵀλ‖∞`, relative to the problem scale.
    pub stationarity: f64,
    /// Largest constraint violation `max(Gz − h)⁺`.
    pub primal_violation: f64,
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    let (status, z) = simplex(&p.c, &p.g, &p.h)?;
    let value = match status {
        LpStatus::Optimal => p.c.dot(&z),
        LpStatus::Unbounded => f64::NEG_INFINITY,
        LpStatus::Infeasible => f64::INFINITY,
    };
    Ok(LpSolution { status, z, value })
}

/// Dense inequality-form LP handed to the `microlp` simplex. Single-variable
/// rows become variable bounds; the rest are `≤` constraints.
fn simplex(c: &Vector, g: &Matrix, h: &Vector) -> Result<(LpStatus, Vector)> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
    let n = c.len();
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
    let mut general = Vec::new();
    for i in 0..g.nrows() {
        let nz: Vec<usize> = (0..n).filter(|&j| g[(i, j)] != 0.0).collect();
        match nz.as_slice() {
            [] => {
                if h[i] < 0.0 {
                    return Ok((LpStatus::Infeasible, Vector::zeros(n)));
                }
            }
            [j] => {
                let a = g[(i, *j)];
                let b = h[i] / a;
                if a > 0.0 {
                    bounds[*j].1 = bounds[*j].1.min(b);
                } else {
                    bounds[*j].0 = bounds[*j].0.max(b);
                }
            }
            _ => general.push((i, nz)),
        }
    }
    if bounds.iter().any(|(lo, hi)| lo > hi) {
        return Ok((LpStatus::Infeasible, Vector::zeros(n)));
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..n).map(|j| lp.add_var(c[j], bounds[j])).collect();
    for (i, nz) in general {
        let terms: Vec<_> = nz.iter().map(|&j| (vars[j], g[(i, j)])).collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Le, h[i]);
    }
    match lp.solve() {
        Ok(SolveOutcome::Solution(sol)) => {
            Ok((LpStatus::Optimal, Vector::from_iterator(n, vars.iter().map(|&v| sol.var_value(v)))))
        }
        Ok(SolveOutcome::Interrupted(_)) => Err(Error::Numeric("LP solve interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok((LpStatus::Infeasible, Vector::zeros(n))),
        Err(microlp::Error::Unbounded) => Ok((LpStatus::Unbounded, Vector::zeros(n))),
        Err(e) => Err(Error::Numeric(format!("LP solver failed: {e:?}"))),
    }
}

/// Minimize the uniform violation `t ≥ 0` over `(z, t)`; returns a feasible
/// `z` or `None` when the optimal violation is positive.
fn feasible_point(g: &Matrix, h: &Vector, tol: &Tolerances) -> Result<Option<Vector>> {
    let (m, n) = g.shape();
    let z0 = Vector::zeros(n);
    if m == 0 || (g * &z0 - h).max() <= 0.0 {
        return Ok(Some(z0));
    }
    let mut ga = Matrix::zeros(m + 1, n + 1);
    ga.view_mut((0, 0), (m, n)).copy_from(g);
    for i in 0..m {
        ga[(i, n)] = -g.row(i).norm();
    }
    ga[(m, n)] = -1.0;
    let mut ha = Vector::zeros(m + 1);
    ha.rows_mut(0, m).copy_from(h);
    let mut c = Vector::zeros(n + 1);
    c[n] = 1.0;
    let (status, xs) = simplex(&c, &ga, &ha)?;
    if status != LpStatus::Optimal {
        return Err(Error::Numeric("phase-1 LP did not reach an optimum".into()));
    }
    let z = xs.rows(0, n).into_owned();
    let scale = 1.0 + h.amax();
    if (g * &z - h).max() > tol.primal * scale {
        return Ok(None);
    }
    Ok(Some(z))
}

/// Orthonormal basis `Q₁` and triangular `R` of the transposed working-set rows.
fn working_qr(g: &Matrix, working: &[usize]) -> (Matrix, Matrix) {
    let n = g.ncols();
    if working.is_empty() {
        return (Matrix::zeros(n, 0), Matrix::zeros(0, 0));
    }
    let wt = g.select_rows(working.iter()).transpose();
    let qr = wt.qr();
    (qr.q(), qr.r())
}

pub fn solve_qp(q: &QpProblem) -> Result<QpSolution> {
    solve_qp_warm(q, &[])
}

/// Solve with an initial working-set guess (typically the previous active set).
pub fn solve_qp_warm(q: &QpProblem, guess: &[usize]) -> Result<QpSolution> {
    let tol = Tolerances::default();
    let (m, n) = q.g.shape();
    let scale_h = 1.0 + q.h.amax();

    let mut start: Option<(Vector, Vec<usize>)> = None;
    // Warm start: equality-constrained optimum on the guessed working set.
    if !guess.is_empty() {
        let working = independent_subset(&q.g, guess);
        if let Some((z, _)) = eqp(q, &working, None) {
            if (&q.g * &z - &q.h).max() <= tol.primal * scale_h {
                start = Some((z, working));
            }
        }
    }
    if start.is_none() {
        if let Some((z, _)) = eqp(q, &[], None) {
            if m == 0 || (&q.g * &z - &q.h).max() <= 0.0 {
                start = Some((z, Vec::new()));
            }
        }
    }
    if start.is_none() {
        match feasible_point(&q.g, &q.h, &tol)? {
            Some(z) => start = Some((z, Vec::new())),
            None => {
                return Ok(QpSolution {
                    status: QpStatus::Infeasible,
                    z: Vector::zeros(n),
                    active_set: Vec::new(),
                    multipliers: Vector::zeros(m),
                    value: f64::INFINITY,
                    iterations: 0,
                    stationarity: f64::NAN,
                    primal_violation: f64::NAN,
                })
            }
        }
    }
    let (mut x, mut working) = start.expect("start point set above");
    let row_norms: Vec<f64> = (0..m).map(|i| q.g.row(i).norm()).collect();
    let grad_scale = 1.0 + q.linear.amax() + q.hessian.amax();

    for it in 1..=tol.max_active_set_iter {
        let Some((p, mu)) = eqp(q, &working, Some(&x)) else {
            return Err(Error::Numeric("singular KKT system in QP".into()));
        };
        // Relative test: with large slack penalties the KKT solve leaves
        // residual steps well above machine precision.
        if p.amax() <= 1e-10 * (1.0 + x.amax()) {
            let mu_tol = 1e-10 * grad_scale;
            let leave = working
                .iter()
                .zip(mu.iter())
                .filter(|(_, &l)| l < -mu_tol)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(&idx, _)| idx);
            match leave {
                Some(idx) => working.retain(|&w| w != idx),
                None => return Ok(finish(q, x, working, &mu, it)),
            }
            continue;
        }
        let pn = p.norm();
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let gp = q.g.row(i).dot(&p.transpose());
            if gp <= 1e-12 * row_norms[i] * pn {
                continue;
            }
            let slack = (q.h[i] - q.g.row(i).dot(&x.transpose())).max(0.0);
            let a = slack / gp;
            if a < alpha {
                alpha = a;
                blocking = Some(i);
            }
        }
        x += p * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::Numeric(format!(
        "QP exceeded {} active-set iterations",
        tol.max_active_set_iter
    )))
}

fn finish(q: &QpProblem, z: Vector, mut working: Vec<usize>, mu: &Vector, iterations: usize) -> QpSolution {
    let m = q.g.nrows();
    let mut multipliers = Vector::zeros(m);
    for (k, &idx) in working.iter().enumerate() {
        multipliers[idx] = mu[k].max(0.0);
    }
    working.sort_unstable();
    let stat = &q.hessian * &z + &q.linear + q.g.transpose() * &multipliers;
    let stat_scale = 1.0 + q.linear.amax() + q.hessian.amax() * (1.0 + z.amax());
    let primal_violation = if m == 0 { 0.0 } else { (&q.g * &z - &q.h).max().max(0.0) };
    QpSolution {
        status: QpStatus::Optimal,
        value: q.objective(&z),
        z,
        active_set: working,
        multipliers,
        iterations,
        stationarity: stat.amax() / stat_scale,
        primal_violation,
    }
}

/// Equality-constrained step. With `at = Some(x)` solves for the step `p`
/// from `x` keeping the working set fixed; with `None` solves for the point
/// `z` with the working set active. Returns `(p or z, multipliers)`.
fn eqp(q: &QpProblem, working: &[usize], at: Option<&Vector>) -> Option<(Vector, Vector)> {
    let n = q.n_vars();
    let k = working.len();
    let mut kkt = Matrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&q.hessian);
    let mut rhs = Vector::zeros(n + k);
    for (r, &idx) in working.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = q.g[(idx, j)];
            kkt[(j, n + r)] = q.g[(idx, j)];
        }
    }
    match at {
        Some(x) => {
            let grad = &q.hessian * x + &q.linear;
            rhs.rows_mut(0, n).copy_from(&(-grad));
        }
        None => {
            rhs.rows_mut(0, n).copy_from(&(-&q.linear));
            for (r, &idx) in working.iter().enumerate() {
                rhs[n + r] = q.h[idx];
            }
        }
    }
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&rhs)?;
    // One round of iterative refinement.
    let resid = &rhs - &kkt * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

/// Greedy linearly independent subset of the given rows, in order.
fn independent_subset(g: &Matrix, rows: &[usize]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &i in rows {
        if i >= g.nrows() || kept.contains(&i) || kept.len() >= g.ncols() {
            continue;
        }
        let mut trial = kept.clone();
        trial.push(i);
        let (_, r) = working_qr(g, &trial);
        let diag_min = (0..trial.len()).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
        if diag_min > 1e-10 * (1.0 + g.row(i).norm()) {
            kept = trial;
        }
    }
    kept
}
