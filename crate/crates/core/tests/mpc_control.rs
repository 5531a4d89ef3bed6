use pwampc::augment::{IDX_R, IDX_THETA, IDX_V, IDX_Y};
use pwampc::mpc::{
    export_explicit, solve_mpc, DecisionStatus, ExplicitOptions, Mpc, MpcConfig, MpcOptions, SoftLevel, TableLookup,
};
use pwampc::plant::{PwaModel, Region};
use pwampc::synthesis::{synthesize, SynthesisOptions, TerminalArm};
use pwampc::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn controller(arm: TerminalArm, horizon: usize) -> Mpc {
    let model = PwaModel::identified();
    let opts = SynthesisOptions {
        arm,
        ..Default::default()
    };
    let terminal = synthesize(&model, &opts).unwrap();
    Mpc::new(MpcConfig {
        options: MpcOptions {
            horizon,
            ..Default::default()
        },
        weights: opts.weights,
        model,
        terminal,
    })
    .unwrap()
}

fn xbar(y: f64, v: f64, r: f64, theta: f64) -> Vector {
    Vector::from_column_slice(&[y, v, r, theta])
}

/// Terminal-set samples moved onto `r = 0`. The terminal ingredients are
/// designed on the regulation problem; a nonzero reference enters the
/// error dynamics through `A − I` and is left to the integrator.
fn regulation_samples(mpc: &Mpc, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xf = &mpc.cfg.terminal.xf;
    let out: Vec<Vector> = xf
        .sample(count, 2, &mut rng)
        .unwrap()
        .into_iter()
        .map(|mut x| {
            x[IDX_Y] -= x[IDX_R];
            x[IDX_R] = 0.0;
            x
        })
        .filter(|x| xf.contains(x, 0.0))
        .collect();
    assert!(out.len() >= count / 2, "only {} samples on r = 0", out.len());
    out
}

fn stage_cost(mpc: &Mpc, x: &Vector, u_eff: f64) -> f64 {
    let w = &mpc.cfg.weights;
    let z = Vector::from_column_slice(&[x[IDX_Y] - x[IDX_R], x[IDX_V], x[IDX_THETA]]);
    z.dot(&(&w.q * &z)) + w.r * u_eff * u_eff
}

#[test]
fn value_function_decreases_on_the_nominal_loop() {
    for arm in [TerminalArm::Lqr, TerminalArm::Robust] {
        let mpc = controller(arm, 5);
        let starts = regulation_samples(&mpc, 40, 31);
        let mut checked = 0;
        for x0 in starts {
            let mut x = x0;
            let mut d = solve_mpc(&mpc, &x, None);
            for _ in 0..60 {
                assert_eq!(d.status, DecisionStatus::Optimal);
                let region = mpc.region_at(&x);
                let next = mpc.cfg.model.augmented(region).step(&x, d.u_eff);
                let dn = solve_mpc(&mpc, &next, None);
                // The bound needs the same offset at both samples.
                if mpc.region_at(&next) == region {
                    let bound = d.cost - stage_cost(&mpc, &x, d.u_eff);
                    assert!(dn.cost <= bound + 1e-6 * (1.0 + d.cost), "{} > {bound}", dn.cost);
                    checked += 1;
                }
                x = next;
                d = dn;
            }
        }
        assert!(checked > 500, "{checked} steps checked");
    }
}

#[test]
fn terminal_law_is_applied_inside_the_terminal_set() {
    let mpc = controller(TerminalArm::Lqr, 5);
    let k2 = &mpc.cfg.terminal.k2;
    for x in regulation_samples(&mpc, 500, 32) {
        let d = solve_mpc(&mpc, &x, None);
        assert_eq!(d.status, DecisionStatus::Optimal);
        let law = (k2 * &x)[0];
        assert!((d.u_eff - law).abs() <= 1e-6, "{} vs {law}", d.u_eff);
        assert!((d.u - (law + mpc.cfg.model.offset(d.region))).abs() <= 1e-6);
    }
}

/// Hard-feasible states from the table sampling box.
fn feasible_states(mpc: &Mpc, count: usize, seed: u64) -> Vec<Vector> {
    let opts = ExplicitOptions {
        position_span: 1.0,
        velocity_span: 20.0,
        theta_span: 0.02,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..200 * count {
        let region = Region::ALL[rng.random_range(0..4)];
        let x = opts.draw(mpc, region, &mut rng);
        if solve_mpc(mpc, &x, None).status == DecisionStatus::Optimal {
            out.push(x);
            if out.len() == count {
                break;
            }
        }
    }
    assert_eq!(out.len(), count, "too few feasible states");
    out
}

/// Exhaustive search over applied inputs on a 0.01 V grid for a two-step
/// horizon. The inner coordinate is minimized exactly over the grid: for a
/// fixed first input the cost is a convex parabola on an interval, so the
/// best grid point is a neighbour of the clamped vertex.
fn grid_minimum(mpc: &Mpc, x: &Vector) -> Option<f64> {
    const STEPS: i64 = 2000;
    let region = mpc.region_at(x);
    let d = mpc.cfg.model.offset(region);
    let c = mpc.condensed(region, SoftLevel::Hard);
    let q = c.problem(x).unwrap();
    let (h, f) = (&q.hessian, &q.linear);
    let u_of = |i: i64| -10.0 + 0.01 * i as f64;
    let mut best: Option<f64> = None;
    for i in 0..=STEPS {
        let a = u_of(i) - d;
        // Feasible interval for the second effective input.
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut ok = true;
        for r in 0..q.g.nrows() {
            let rest = q.h[r] - q.g[(r, 0)] * a;
            let g1 = q.g[(r, 1)];
            if g1.abs() < 1e-14 {
                ok &= rest >= -1e-9;
            } else if g1 > 0.0 {
                hi = hi.min(rest / g1);
            } else {
                lo = lo.max(rest / g1);
            }
        }
        if !ok {
            continue;
        }
        let j_lo = ((lo + d + 10.0) / 0.01 - 1e-9).ceil().max(0.0) as i64;
        let j_hi = ((hi + d + 10.0) / 0.01 + 1e-9).floor().min(STEPS as f64) as i64;
        if j_lo > j_hi {
            continue;
        }
        let vertex = -(h[(0, 1)] * a + f[1]) / h[(1, 1)];
        let j_star = ((vertex + d + 10.0) / 0.01).floor() as i64;
        for j in [j_star, j_star + 1] {
            let j = j.clamp(j_lo, j_hi);
            let z = Vector::from_column_slice(&[a, u_of(j) - d]);
            if (&q.g * &z - &q.h).max() > 1e-9 {
                continue;
            }
            let v = q.objective(&z) + c.constant(x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

#[test]
fn qp_agrees_with_grid_search_on_two_step_instances() {
    for arm in [TerminalArm::Lqr, TerminalArm::Robust] {
        let mpc = controller(arm, 2);
        for x in feasible_states(&mpc, 50, 33) {
            let d = solve_mpc(&mpc, &x, None);
            let grid = grid_minimum(&mpc, &x).expect("grid finds a feasible point");
            assert!(grid >= d.cost - 1e-6 * (1.0 + d.cost.abs()), "grid {grid} beats QP {}", d.cost);
            // At a vertex of two active rows the feasible wedge can sit between
            // grid points while the cost gradient is large, so the grid's own
            // error there exceeds the tolerance.
            if d.active_set.len() <= 1 {
                assert!(grid - d.cost <= 0.02, "grid {grid}, QP {} at {x}", d.cost);
            }
        }
    }
}

#[test]
fn five_step_solutions_beat_random_feasible_inputs() {
    let mpc = controller(TerminalArm::Robust, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for x in feasible_states(&mpc, 100, 35) {
        let d = solve_mpc(&mpc, &x, None);
        let region = mpc.region_at(&x);
        let c = mpc.condensed(region, SoftLevel::Hard);
        let q = c.problem(&x).unwrap();
        let sol = pwampc::numerics::solve_qp(&q).unwrap();
        assert!((sol.value + c.constant(&x) - d.cost).abs() <= 1e-9 * (1.0 + d.cost.abs()));
        // Perturbations on the input grid around the optimum never improve it.
        for _ in 0..200 {
            let mut z = sol.z.clone();
            for k in 0..5 {
                z[k] += 0.01 * rng.random_range(-20..=20) as f64;
            }
            if (&q.g * &z - &q.h).max() <= 0.0 {
                assert!(q.objective(&z) >= sol.value - 1e-9 * (1.0 + sol.value.abs()));
            }
        }
    }
}

#[test]
fn far_state_with_large_integral_is_solved_softly() {
    // Used to cycle the active-set solver at the terminal soft level.
    let mpc = controller(TerminalArm::Robust, 5);
    let d = solve_mpc(&mpc, &xbar(0.0, 0.0, 1.0, -13.0), None);
    assert_ne!(d.status, DecisionStatus::Fault);
    assert!(d.cost.is_finite());
    assert!(d.u.abs() <= 10.0);
}

#[test]
fn inputs_stay_in_range_and_solves_are_deterministic() {
    let mpc = controller(TerminalArm::Robust, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..300 {
        let x = xbar(
            rng.random_range(-12.0..12.0),
            rng.random_range(-250.0..250.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-5.0..5.0),
        );
        let a = solve_mpc(&mpc, &x, None);
        let b = solve_mpc(&mpc, &x, None);
        assert_eq!(a, b);
        assert!(a.u.abs() <= 10.0);
        assert_ne!(a.status, DecisionStatus::Fault, "fault at {x}");
    }
    let bad = xbar(f64::NAN, 0.0, 0.0, 0.0);
    assert_eq!(solve_mpc(&mpc, &bad, None).status, DecisionStatus::Fault);
}

#[test]
fn table_matches_online_solution_where_it_applies() {
    let mpc = controller(TerminalArm::Lqr, 5);
    let opts = ExplicitOptions {
        samples: 1000,
        ..Default::default()
    };
    let table = export_explicit(&mpc, &opts).unwrap();
    assert!(table.feasible_samples > 0);
    let mut hits = 0;
    for x in feasible_states(&mpc, 300, 38) {
        if let TableLookup::Hit { u, .. } = table.lookup(&mpc, &x) {
            hits += 1;
            let online = solve_mpc(&mpc, &x, None);
            assert!((online.u - u).abs() <= 1e-6, "{} vs {u}", online.u);
        }
    }
    assert!(hits > 0);
}
