//! Polyhedra in H-representation `{x | G x ≤ h}`.
//!
//! Every query reduces to small LPs solved by [`crate::numerics::solve_lp`].
//! Inclusion tests accept a constraint slack of `1e-9` (scaled by `1 + |h|`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::numerics::{solve_lp, LpProblem, LpStatus, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    #[serde(with = "crate::io::rows")]
    pub g: Matrix,
    #[serde(with = "crate::io::column")]
    pub h: Vector,
}

/// Radius cap used to keep Chebyshev LPs bounded on unbounded sets.
const RADIUS_CAP: f64 = 1e6;

impl Polyhedron {
    pub fn new(g: Matrix, h: Vector) -> Result<Self> {
        if g.nrows() != h.len() {
            return Err(Error::Dimension(format!(
                "polyhedron: G has {} rows, h has {}",
                g.nrows(),
                h.len()
            )));
        }
        if !g.iter().chain(h.iter()).all(|x| x.is_finite()) {
            return Err(Error::Invalid("polyhedron data must be finite".into()));
        }
        Ok(Self { g, h })
    }

    /// The whole space `ℝⁿ` (no rows).
    pub fn universe(n: usize) -> Self {
        Self {
            g: Matrix::zeros(0, n),
            h: Vector::zeros(0),
        }
    }

    /// A canonical empty set `{x₁ ≤ −1, −x₁ ≤ −1}`.
    pub fn empty(n: usize) -> Self {
        let mut g = Matrix::zeros(2, n);
        if n > 0 {
            g[(0, 0)] = 1.0;
            g[(1, 0)] = -1.0;
        }
        Self {
            g,
            h: Vector::from_element(2, -1.0),
        }
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`; infinite bounds are skipped.
    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        let n = lower.len();
        let mut rows = Vec::new();
        for i in 0..n {
            if upper[i].is_finite() {
                rows.push((i, 1.0, upper[i]));
            }
            if lower[i].is_finite() {
                rows.push((i, -1.0, -lower[i]));
            }
        }
        let mut g = Matrix::zeros(rows.len(), n);
        let mut h = Vector::zeros(rows.len());
        for (k, &(i, s, b)) in rows.iter().enumerate() {
            g[(k, i)] = s;
            h[k] = b;
        }
        Self::new(g, h)
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        (0..self.n_rows()).all(|i| self.g.row(i).dot(&x.transpose()) <= self.h[i] + tol * (1.0 + self.h[i].abs()))
    }

    /// Append the rows of `other` without any redundancy removal.
    pub fn stack(&self, other: &Polyhedron) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "polyhedra of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let (m1, m2, n) = (self.n_rows(), other.n_rows(), self.dim());
        let mut g = Matrix::zeros(m1 + m2, n);
        g.view_mut((0, 0), (m1, n)).copy_from(&self.g);
        g.view_mut((m1, 0), (m2, n)).copy_from(&other.g);
        let mut h = Vector::zeros(m1 + m2);
        h.rows_mut(0, m1).copy_from(&self.h);
        h.rows_mut(m1, m2).copy_from(&other.h);
        Ok(Self { g, h })
    }

    /// Scale each row to unit norm. Zero rows are dropped when trivially
    /// satisfied and turn the set into [`Polyhedron::empty`] otherwise.
    pub fn normalize(&self) -> Self {
        let n = self.dim();
        let mut keep = Vec::new();
        for i in 0..self.n_rows() {
            let norm = self.g.row(i).norm();
            if norm <= 1e-12 * (1.0 + self.h[i].abs()) {
                if self.h[i] < -1e-12 {
                    return Self::empty(n);
                }
                continue;
            }
            keep.push((self.g.row(i) / norm, self.h[i] / norm));
        }
        let mut g = Matrix::zeros(keep.len(), n);
        let mut h = Vector::zeros(keep.len());
        for (k, (row, b)) in keep.into_iter().enumerate() {
            g.row_mut(k).copy_from(&row);
            h[k] = b;
        }
        Self { g, h }
    }

    /// Maximize `c·x` over the set. `None` when the set is empty,
    /// `Some(+inf)` when unbounded above.
    pub fn support(&self, c: &Vector) -> Result<Option<(f64, Vector)>> {
        let lp = LpProblem::new(-c, self.g.clone(), self.h.clone())?;
        let s = solve_lp(&lp)?;
        Ok(match s.status {
            LpStatus::Infeasible => None,
            LpStatus::Unbounded => Some((f64::INFINITY, s.z)),
            LpStatus::Optimal => Some((-s.value, s.z)),
        })
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.n_rows() == 0 {
            return Ok(false);
        }
        Ok(self.support(&Vector::zeros(self.dim()))?.is_none())
    }

    /// Largest inscribed ball `(center, radius)`; `None` for an empty set.
    /// Radii are capped at `1e6` for unbounded sets.
    pub fn chebyshev_center(&self) -> Result<Option<(Vector, f64)>> {
        let (m, n) = (self.n_rows(), self.dim());
        let mut g = Matrix::zeros(m + 2, n + 1);
        g.view_mut((0, 0), (m, n)).copy_from(&self.g);
        for i in 0..m {
            g[(i, n)] = self.g.row(i).norm();
        }
        g[(m, n)] = 1.0;
        g[(m + 1, n)] = -1.0;
        let mut h = Vector::zeros(m + 2);
        h.rows_mut(0, m).copy_from(&self.h);
        h[m] = RADIUS_CAP;
        let mut c = Vector::zeros(n + 1);
        c[n] = -1.0;
        let s = solve_lp(&LpProblem::new(c, g, h)?)?;
        match s.status {
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Err(Error::Numeric("Chebyshev LP unbounded".into())),
            LpStatus::Optimal => Ok(Some((s.z.rows(0, n).into_owned(), s.z[n]))),
        }
    }

    /// Remove rows implied by the others. Duplicates are dropped first; each
    /// remaining row is tested with one LP against the rows still kept.
    pub fn reduce(&self) -> Result<Self> {
        let p = self.normalize();
        let n = p.dim();
        if p.is_empty()? {
            return Ok(Self::empty(n));
        }
        let slack = Tolerances::default().set_slack;
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..p.n_rows() {
            let dup = kept.iter().position(|&j| (p.g.row(i) - p.g.row(j)).amax() <= 1e-12);
            match dup {
                Some(k) => {
                    let j = kept[k];
                    if p.h[i] < p.h[j] {
                        kept[k] = i;
                    }
                }
                None => kept.push(i),
            }
        }
        let mut k = 0;
        while k < kept.len() {
            let i = kept[k];
            // Other kept rows plus the candidate relaxed by one unit to keep the LP bounded.
            let mut idx: Vec<usize> = kept.iter().copied().filter(|&j| j != i).collect();
            idx.push(i);
            let g = p.g.select_rows(idx.iter());
            let mut h = Vector::from_iterator(idx.len(), idx.iter().map(|&j| p.h[j]));
            let last = idx.len() - 1;
            h[last] += 1.0;
            let sub = Polyhedron { g, h };
            let gi = p.g.row(i).transpose();
            let redundant = match sub.support(&gi)? {
                Some((val, _)) => val <= p.h[i] + slack * (1.0 + p.h[i].abs()),
                None => true,
            };
            if redundant {
                kept.remove(k);
            } else {
                k += 1;
            }
        }
        Ok(Self {
            g: p.g.select_rows(kept.iter()),
            h: Vector::from_iterator(kept.len(), kept.iter().map(|&j| p.h[j])),
        })
    }

    pub fn intersect(&self, other: &Polyhedron) -> Result<Self> {
        self.stack(other)?.reduce()
    }

    /// `{x | G·acl·x ≤ h}`.
    pub fn preimage(&self, acl: &Matrix) -> Result<Self> {
        if acl.nrows() != acl.ncols() || acl.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "preimage: map is {}x{}, set dimension {}",
                acl.nrows(),
                acl.ncols(),
                self.dim()
            )));
        }
        Ok(Self {
            g: &self.g * acl,
            h: self.h.clone(),
        })
    }

    /// `self ⊆ other` with one support LP per row of `other`.
    pub fn is_subset(&self, other: &Polyhedron) -> Result<bool> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("subset test across dimensions".into()));
        }
        if self.is_empty()? {
            return Ok(true);
        }
        self.implies(other).map(|bad| bad.is_empty())
    }

    /// Rows of `other` not implied by `self` (assumed nonempty).
    fn implies(&self, other: &Polyhedron) -> Result<Vec<usize>> {
        let slack = Tolerances::default().set_slack;
        let mut violated = Vec::new();
        for i in 0..other.n_rows() {
            let gi = other.g.row(i).transpose();
            let scale = gi.norm().max(1e-300);
            match self.support(&gi)? {
                Some((val, _)) if val <= other.h[i] + slack * (scale + other.h[i].abs()) => {}
                None => {}
                _ => violated.push(i),
            }
        }
        Ok(violated)
    }

    pub fn set_equal(&self, other: &Polyhedron) -> Result<bool> {
        Ok(self.is_subset(other)? && other.is_subset(self)?)
    }

    /// Bounding box `(lower, upper)`; entries are ±inf along unbounded axes.
    pub fn bounding_box(&self) -> Result<Option<(Vector, Vector)>> {
        let n = self.dim();
        let mut lo = Vector::zeros(n);
        let mut hi = Vector::zeros(n);
        for i in 0..n {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            match self.support(&e)? {
                None => return Ok(None),
                Some((v, _)) => hi[i] = v,
            }
            e[i] = -1.0;
            if let Some((v, _)) = self.support(&e)? {
                lo[i] = -v;
            }
        }
        Ok(Some((lo, hi)))
    }

    /// Hit-and-run samples started from the Chebyshev center. The set must be
    /// bounded along every direction that is sampled.
    pub fn sample<R: Rng>(&self, count: usize, thin: usize, rng: &mut R) -> Result<Vec<Vector>> {
        let n = self.dim();
        let Some((mut x, radius)) = self.chebyshev_center()? else {
            return Err(Error::Invalid("cannot sample an empty set".into()));
        };
        if radius >= RADIUS_CAP {
            return Err(Error::Invalid("cannot sample an unbounded set".into()));
        }
        let mut out = Vec::with_capacity(count);
        let burn = 10 * n;
        let total = burn + count * thin.max(1);
        for step in 0..total {
            let d = loop {
                let d = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let norm = d.norm();
                if norm > 1e-3 && norm <= 1.0 {
                    break d / norm;
                }
            };
            let gd = &self.g * &d;
            let slack = &self.h - &self.g * &x;
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..self.n_rows() {
                if gd[i] > 1e-14 {
                    hi = hi.min(slack[i] / gd[i]);
                } else if gd[i] < -1e-14 {
                    lo = lo.max(slack[i] / gd[i]);
                }
            }
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Invalid("cannot sample an unbounded set".into()));
            }
            if hi > lo {
                x += d * rng.random_range(lo..=hi);
            }
            if step >= burn && (step - burn) % thin.max(1) == 0 {
                out.push(x.clone());
            }
        }
        Ok(out)
    }
}

/// Maximal positively invariant subset of `x0` for `x⁺ = acl·x`.
///
/// Iterates `X_k = X_{k−1} ∩ Φ(X_{k−1})` and stops when `X_{k−1} ⊆ Φ(X_{k−1})`.
/// Only rows of `Φ(X_{k−1})` not implied by `X_{k−1}` are added, so each
/// iterate keeps the previous rows. Marginally stable modes that the
/// constraints bound (a constant reference, say) are allowed.
pub fn max_invariant_set(acl: &Matrix, x0: &Polyhedron, max_iter: usize) -> Result<Polyhedron> {
    if acl.nrows() != x0.dim() || acl.ncols() != x0.dim() {
        return Err(Error::Dimension("invariant set: map and set dimensions differ".into()));
    }
    let mut current = x0.reduce()?;
    if current.is_empty()? {
        return Ok(current);
    }
    for _ in 0..max_iter {
        let pre = current.preimage(acl)?.normalize();
        let missing = current.implies(&pre)?;
        if missing.is_empty() {
            return current.reduce();
        }
        let add = Polyhedron {
            g: pre.g.select_rows(missing.iter()),
            h: Vector::from_iterator(missing.len(), missing.iter().map(|&i| pre.h[i])),
        };
        current = current.stack(&add)?;
        if current.is_empty()? {
            return Ok(Polyhedron::empty(x0.dim()));
        }
    }
    Err(Error::InvariantSetNotConverged {
        iterations: max_iter,
        rows: current.n_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::from_rows;

    fn interval(lo: f64, hi: f64) -> Polyhedron {
        Polyhedron::from_bounds(&[lo], &[hi]).unwrap()
    }

    #[test]
    fn interval_intersection() {
        let p = interval(-1.0, 1.0).intersect(&interval(0.0, 2.0)).unwrap();
        assert!(p.set_equal(&interval(0.0, 1.0)).unwrap());
        assert_eq!(p.n_rows(), 2);
    }

    #[test]
    fn self_intersection_keeps_rows() {
        let p = Polyhedron::from_bounds(&[-1.0, -2.0], &[1.0, 2.0]).unwrap();
        let q = p.intersect(&p).unwrap();
        assert_eq!(q.n_rows(), 4);
        assert!(q.set_equal(&p).unwrap());
    }

    #[test]
    fn preimage_scales() {
        let p = interval(-1.0, 1.0).preimage(&from_rows(&[&[0.5]])).unwrap();
        assert!(p.set_equal(&interval(-2.0, 2.0)).unwrap());
        let id = interval(-1.0, 1.0).preimage(&Matrix::identity(1, 1)).unwrap();
        assert_eq!(id, interval(-1.0, 1.0));
    }

    #[test]
    fn reduce_drops_weaker_bound() {
        let p = Polyhedron::new(from_rows(&[&[1.0], &[1.0]]), Vector::from_column_slice(&[1.0, 2.0])).unwrap();
        let r = p.reduce().unwrap();
        assert_eq!(r.n_rows(), 1);
        assert_eq!(r.h[0], 1.0);
    }

    #[test]
    fn emptiness_and_subset() {
        let e = Polyhedron::new(from_rows(&[&[1.0], &[-1.0]]), Vector::from_column_slice(&[-1.0, -1.0])).unwrap();
        assert!(e.is_empty().unwrap());
        assert!(interval(0.0, 1.0).is_subset(&interval(-1.0, 2.0)).unwrap());
        assert!(!interval(-1.0, 2.0).is_subset(&interval(0.0, 1.0)).unwrap());
        assert!(e.is_subset(&interval(5.0, 6.0)).unwrap());
    }

    #[test]
    fn contraction_keeps_interval() {
        let x0 = interval(-1.0, 1.0);
        let xf = max_invariant_set(&from_rows(&[&[0.5]]), &x0, 10).unwrap();
        assert!(xf.set_equal(&x0).unwrap());
    }

    #[test]
    fn empty_start_gives_empty_set() {
        let e = Polyhedron::new(from_rows(&[&[1.0], &[-1.0]]), Vector::from_column_slice(&[-1.0, -1.0])).unwrap();
        let xf = max_invariant_set(&from_rows(&[&[0.5]]), &e, 10).unwrap();
        assert!(xf.is_empty().unwrap());
    }

    #[test]
    fn divergent_map_hits_iteration_cap() {
        // Expansion along x with a bounded box shrinks toward the origin forever.
        let acl = from_rows(&[&[2.0, 0.0], &[0.0, 0.5]]);
        let x0 = Polyhedron::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let err = max_invariant_set(&acl, &x0, 5).unwrap_err();
        assert!(matches!(err, Error::InvariantSetNotConverged { iterations: 5, .. }));
    }
}
