use proptest::prelude::*;
use pwampc::numerics::{from_rows, spectral_radius};
use pwampc::polytope::{max_invariant_set, Polyhedron};
use pwampc::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-half..half))
}

fn random_box(rng: &mut ChaCha8Rng, n: usize) -> Polyhedron {
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.5)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.2..2.5)).collect();
    Polyhedron::from_bounds(&lo, &hi).unwrap()
}

#[test]
fn intersection_membership_matches_both_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (p, q) = (random_box(&mut rng, 3), random_box(&mut rng, 3));
        let both = p.intersect(&q).unwrap();
        for _ in 0..1000 {
            let x = uniform(&mut rng, 3, 3.0);
            assert_eq!(both.contains(&x, 0.0), p.contains(&x, 0.0) && q.contains(&x, 0.0));
        }
    }
}

#[test]
fn preimage_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let p = random_box(&mut rng, 3);
        let acl = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let pre = p.preimage(&acl).unwrap();
        for _ in 0..1000 {
            let x = uniform(&mut rng, 3, 3.0);
            assert_eq!(pre.contains(&x, 0.0), p.contains(&(&acl * &x), 0.0));
        }
    }
}

#[test]
fn reduce_preserves_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        // A box plus random halfspaces, about half of them redundant.
        let base = random_box(&mut rng, 2);
        let extra = 8;
        let mut g = Matrix::zeros(base.n_rows() + extra, 2);
        let mut h = Vector::zeros(base.n_rows() + extra);
        g.rows_mut(0, base.n_rows()).copy_from(&base.g);
        h.rows_mut(0, base.n_rows()).copy_from(&base.h);
        for i in base.n_rows()..g.nrows() {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            g[(i, 0)] = a.cos();
            g[(i, 1)] = a.sin();
            h[i] = rng.random_range(0.0..4.0);
        }
        let full = Polyhedron::new(g, h).unwrap();
        let reduced = full.reduce().unwrap();
        assert!(reduced.n_rows() <= full.n_rows());
        assert!(reduced.set_equal(&full).unwrap());
        for _ in 0..1000 {
            let x = uniform(&mut rng, 2, 3.0);
            let margin = (&full.g * &x - &full.h).amax().min((&reduced.g * &x - &reduced.h).amax());
            if margin > 1e-9 {
                assert_eq!(reduced.contains(&x, 0.0), full.contains(&x, 0.0));
            }
        }
    }
}

/// Vertices of a bounded 2-D polygon from all pairwise row intersections.
fn vertices(p: &Polyhedron) -> Vec<Vector> {
    let m = p.n_rows();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let a = from_rows(&[&[p.g[(i, 0)], p.g[(i, 1)]], &[p.g[(j, 0)], p.g[(j, 1)]]]);
            let Some(inv) = a.try_inverse() else { continue };
            let x = inv * Vector::from_column_slice(&[p.h[i], p.h[j]]);
            if p.contains(&x, 1e-9) {
                out.push(x);
            }
        }
    }
    out
}

fn random_polygon(rng: &mut ChaCha8Rng, center: (f64, f64), radius: f64) -> Polyhedron {
    let k = rng.random_range(3..7);
    let mut g = Matrix::zeros(k, 2);
    let mut h = Vector::zeros(k);
    let offset = rng.random_range(0.0..1.0);
    for i in 0..k {
        let a = std::f64::consts::TAU * (i as f64 + offset) / k as f64;
        g[(i, 0)] = a.cos();
        g[(i, 1)] = a.sin();
        h[i] = radius * rng.random_range(0.5..1.0) + a.cos() * center.0 + a.sin() * center.1;
    }
    Polyhedron::new(g, h).unwrap()
}

#[test]
fn subset_verdicts_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut yes, mut no) = (0, 0);
    for _ in 0..200 {
        let c = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let p = random_polygon(&mut rng, c, 0.8);
        let q = random_polygon(&mut rng, (0.0, 0.0), 2.0);
        // A polygon lies inside a convex set iff all its vertices do.
        let oracle = vertices(&p).iter().all(|v| q.contains(v, 1e-9));
        assert_eq!(p.is_subset(&q).unwrap(), oracle);
        if oracle {
            yes += 1;
        } else {
            no += 1;
        }
    }
    assert!(yes > 10 && no > 10, "{yes} subsets, {no} non-subsets");
}

#[test]
fn contradictory_bounds_are_empty() {
    let p = Polyhedron::new(from_rows(&[&[1.0], &[-1.0]]), Vector::from_column_slice(&[-1.0, -1.0])).unwrap();
    assert!(p.is_empty().unwrap());
    let inner = Polyhedron::from_bounds(&[0.0], &[1.0]).unwrap();
    let outer = Polyhedron::from_bounds(&[-1.0], &[2.0]).unwrap();
    assert!(inner.is_subset(&outer).unwrap());
    assert!(!outer.is_subset(&inner).unwrap());
}

fn rotation_contraction(rho: f64, deg: f64) -> Matrix {
    let (s, c) = deg.to_radians().sin_cos();
    from_rows(&[&[c, -s], &[s, c]]) * rho
}

#[test]
fn rotation_contraction_set_is_invariant_along_trajectories() {
    let acl = rotation_contraction(0.9, 30.0);
    assert!(spectral_radius(&acl) < 1.0);
    let x0 = Polyhedron::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
    let xf = max_invariant_set(&acl, &x0, 100).unwrap();
    assert!(xf.is_subset(&x0).unwrap());
    assert!(xf.preimage(&acl).unwrap().intersect(&xf).unwrap().set_equal(&xf).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples = xf.sample(1000, 3, &mut rng).unwrap();
    assert_eq!(samples.len(), 1000);
    for s in samples {
        let mut x = s;
        for _ in 0..50 {
            x = &acl * x;
            assert!(xf.contains(&x, 1e-9));
        }
    }
}

#[test]
fn hit_and_run_covers_the_box() {
    let p = Polyhedron::from_bounds(&[0.0, -1.0], &[2.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = p.sample(4000, 5, &mut rng).unwrap();
    let mean = s.iter().fold(Vector::zeros(2), |acc, x| acc + x) / s.len() as f64;
    assert!((mean[0] - 1.0).abs() < 0.05 && mean[1].abs() < 0.05, "{mean}");
    assert!(s.iter().all(|x| p.contains(x, 1e-12)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn invariant_set_lies_inside_seed_and_maps_into_itself(
        rho in 0.5f64..0.95,
        deg in 5.0f64..80.0,
        w in 0.5f64..2.0,
    ) {
        let acl = rotation_contraction(rho, deg);
        let x0 = Polyhedron::from_bounds(&[-w, -1.0], &[w, 1.0]).unwrap();
        let xf = max_invariant_set(&acl, &x0, 200).unwrap();
        prop_assert!(xf.is_subset(&x0).unwrap());
        prop_assert!(xf.is_subset(&xf.preimage(&acl).unwrap()).unwrap());
        prop_assert!(xf.contains(&Vector::zeros(2), 0.0));
    }

    #[test]
    fn intersection_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_polygon(&mut rng, (0.0, 0.0), 1.0);
        let pp = p.intersect(&p).unwrap();
        prop_assert!(pp.set_equal(&p).unwrap());
        prop_assert_eq!(pp.n_rows(), p.reduce().unwrap().n_rows());
    }
}
