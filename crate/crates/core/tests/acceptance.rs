//! End-to-end acceptance gate. Each test exercises one advertised guarantee
//! at its stated tolerance and prints a single pass/fail line; run with
//! `cargo test -p nonholo --test acceptance -- --nocapture` to see them all.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nonholo::calculus::{rk4_integrate, Chart, OneFormField, ScalarField};
use nonholo::caplygin::{
    equivalence_test, lift_field, project_hj_solution, reduce, EhresmannConnection,
};
use nonholo::config::{InitialSpec, RunConfig};
use nonholo::hamilton_jacobi::{
    check_forced, check_nonholonomic, flow_equivalence_test, GridAxis, HJCandidate, SampleGrid,
};
use nonholo::mechanics::{MechanicalSystem, SemibasicForce};
use nonholo::models::{build_model, ModelDescriptor};
use nonholo::runner::{run_reduce, run_simulate, run_verify};

fn report(name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {name}: {status} ({detail})");
    assert!(pass, "acceptance {name} failed: {detail}");
}

fn robot() -> ModelDescriptor {
    build_model("robot", &BTreeMap::new()).unwrap()
}

/// Display-order start shared by the trajectory criteria: x, y, theta, psi.
const START: [f64; 4] = [0.3, -0.4, 0.0, 0.25];

fn closed_form_error(
    model: &ModelDescriptor,
    candidate: &str,
    want: impl Fn(f64) -> [f64; 4],
) -> f64 {
    let q0 = model.from_display(&START).unwrap();
    let s0 = model.state_from_candidate(candidate, &q0).unwrap();
    let steps = (2.0 * PI / 1e-3).ceil() as usize; // covers t in [0, 2 pi]
    let traj = model
        .constraints()
        .integrate(model.system(), &s0, 1e-3, steps, false)
        .unwrap();
    let mut worst = 0.0f64;
    for k in 0..traj.len() {
        let got = model.to_display(traj.states[k].q.as_slice());
        let want = want(traj.times[k]);
        for i in 0..4 {
            worst = worst.max((got[i] - want[i]).abs());
        }
    }
    worst
}

#[test]
fn closed_form_spin_and_roll() {
    let model = robot();
    // Pure wheel-axis spin: theta advances at unit rate, everything else holds.
    let e1 = closed_form_error(&model, "gamma1", |t| [0.3, -0.4, t, 0.25]);
    // Straight roll along the initial heading at unit speed.
    let e2 = closed_form_error(&model, "gamma2", |t| [t + 0.3, -0.4, 0.0, t + 0.25]);
    let worst = e1.max(e2);
    report(
        "closed-form spin and roll",
        worst <= 1e-6,
        &format!("sup error {worst:.3e} over one period"),
    );
}

#[test]
fn closed_form_circle() {
    let model = robot();
    // Spinning while rolling traces the unit circle through the start point.
    let worst = closed_form_error(&model, "gamma3", |t| {
        [t.sin() + 0.3, -t.cos() - 0.4 + 1.0, t, t + 0.25]
    });
    report(
        "closed-form circle",
        worst <= 1e-6,
        &format!("sup error {worst:.3e} over one period"),
    );
}

#[test]
fn candidate_grid_checks() {
    let model = robot();
    let grid = model.default_grid();
    let mut worst_good = 0.0f64;
    let mut all_pass = true;
    for name in ["gamma1", "gamma2", "gamma3"] {
        let rep = check_nonholonomic(
            model.system(),
            model.constraints(),
            model.candidate(name).unwrap(),
            grid,
            None,
            None,
        )
        .unwrap();
        all_pass &= rep.pass;
        for c in &rep.conditions {
            worst_good = worst_good.max(c.normalized_residual);
        }
    }
    let bad = check_nonholonomic(
        model.system(),
        model.constraints(),
        model.candidate("gamma2_perturbed").unwrap(),
        grid,
        None,
        None,
    )
    .unwrap();
    let bad_peak = bad
        .conditions
        .iter()
        .map(|c| c.normalized_residual)
        .fold(0.0, f64::max);
    report(
        "candidate grid checks",
        all_pass && worst_good <= 1e-6 && !bad.pass && bad_peak >= 1e-2,
        &format!("good candidates peak {worst_good:.3e}, perturbed peak {bad_peak:.3e}"),
    );
}

#[test]
fn flow_equivalence() {
    let model = robot();
    let q0 = model.from_display(&START).unwrap();
    let mut worst_good = 0.0f64;
    for name in ["gamma1", "gamma2", "gamma3"] {
        let dev = flow_equivalence_test(
            model.system(),
            model.constraints(),
            model.candidate(name).unwrap(),
            &q0,
            1e-3,
            1000,
        )
        .unwrap();
        worst_good = worst_good.max(dev);
    }
    let bad = flow_equivalence_test(
        model.system(),
        model.constraints(),
        model.candidate("gamma3_perturbed").unwrap(),
        &q0,
        1e-3,
        1000,
    )
    .unwrap();
    report(
        "flow equivalence",
        worst_good <= 1e-5 && bad >= 1e-2,
        &format!("solutions deviate {worst_good:.3e}, perturbed {bad:.3e}"),
    );
}

#[test]
fn trajectory_invariants() {
    let model = robot();
    let q0 = model.from_display(&START).unwrap();
    let steps = (2.0 * PI / 1e-3).ceil() as usize;
    let mut worst_residual = 0.0f64;
    let mut worst_drift = 0.0f64;
    for name in ["gamma1", "gamma2", "gamma3"] {
        let s0 = model.state_from_candidate(name, &q0).unwrap();
        let traj = model
            .constraints()
            .integrate(model.system(), &s0, 1e-3, steps, false)
            .unwrap();
        worst_residual = worst_residual.max(traj.max_constraint_residual());
        worst_drift = worst_drift.max(traj.energy_drift());
    }
    report(
        "trajectory invariants",
        worst_residual <= 1e-7 && worst_drift <= 1e-8,
        &format!("max |Psi| {worst_residual:.3e}, energy drift {worst_drift:.3e}, no projection"),
    );
}

#[test]
fn compatibility_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let m = rng.random_range(0.3..3.0);
        let j = rng.random_range(0.3..3.0);
        let jw = rng.random_range(0.3..3.0);
        let r = rng.random_range(0.3..3.0);
        let params: BTreeMap<String, f64> = [
            ("m".to_string(), m),
            ("J".to_string(), j),
            ("J_w".to_string(), jw),
            ("R".to_string(), r),
        ]
        .into();
        let model = build_model("robot", &params).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
            let c = model
                .constraints()
                .compatibility(model.system(), &q)
                .unwrap();
            let expected = DMatrix::from_diagonal(&dvector![1.0 / m, 1.0 / m + r * r / (3.0 * jw)]);
            worst = worst.max((c - expected).amax());
        }
    }
    report(
        "compatibility closed form",
        worst <= 1e-10,
        &format!("max deviation {worst:.3e} over 300 random configurations"),
    );
}

#[test]
fn reduction_invariants() {
    let model = robot();
    let conn = model.connection().unwrap();
    let red = reduce(model.system(), conn).unwrap();

    let mut metric_err = 0.0f64;
    let mut alpha_max = 0.0f64;
    let expected = DMatrix::from_diagonal(&dvector![1.0, 4.0]); // J and m R^2 + 3 J_w
    for theta in [0.0, 0.9, 2.3, -1.1, 4.0] {
        for psi in [0.0, 1.7, -0.4] {
            let base = [theta, psi];
            let metric = red.system().metric(&base).unwrap();
            metric_err = metric_err.max((metric - &expected).amax());
            for v in [dvector![1.0, 0.0], dvector![0.0, 1.0], dvector![0.7, -0.4]] {
                let alpha = red.force().alpha(red.system(), &base, &v).unwrap();
                alpha_max = alpha_max.max(alpha.amax());
            }
        }
    }

    let v0 = model.system().legendre_inv(model.default_state()).unwrap();
    let dev = equivalence_test(model.system(), conn, &v0, 1e-3, 1000).unwrap();
    report(
        "reduction invariants",
        metric_err <= 1e-10 && alpha_max <= 1e-10 && dev <= 1e-6,
        &format!("metric error {metric_err:.3e}, max |alpha*| {alpha_max:.3e}, dynamics deviation {dev:.3e}"),
    );
}

#[test]
fn connection_curvature() {
    let model = robot();
    let conn = model.connection().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Closed form for the rolling robot: the only independent component pairs
    // the heading with the wheel angle and rotates with the heading.
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta = rng.random_range(-PI..PI);
        let q = [theta, rng.random_range(-1.0..1.0), 0.0, 0.0];
        let r = conn.curvature(&q, 1e-5).unwrap();
        worst = worst.max((r[0][(0, 1)] - theta.sin()).abs());
        worst = worst.max((r[1][(0, 1)] + theta.cos()).abs());
    }

    // Antisymmetry in the two base slots on random smooth connections.
    let mut anti = 0.0f64;
    for _ in 0..20 {
        let c: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeff = c.clone();
        let conn = EhresmannConnection::new(2, 2, move |q: &[f64]| {
            DMatrix::from_fn(2, 2, |i, a| {
                let k = 4 * (2 * i + a);
                coeff[k]
                    + coeff[k + 1] * q[0].sin()
                    + coeff[k + 2] * q[1].cos()
                    + coeff[k + 3] * q[2 + i] * q[a]
            })
        });
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = conn.curvature(&q, 1e-5).unwrap();
        for mat in &r {
            for a in 0..2 {
                for b in 0..2 {
                    anti = anti.max((mat[(a, b)] + mat[(b, a)]).abs());
                }
            }
        }
    }
    report(
        "connection curvature",
        worst <= 1e-6 && anti <= 1e-8,
        &format!("closed-form error {worst:.3e}, antisymmetry defect {anti:.3e}"),
    );
}

#[test]
fn lift_project_round_trip() {
    let model = robot();
    let conn = model.connection().unwrap();
    let base_grid = SampleGrid::new(model.default_grid().axes()[..2].to_vec()).unwrap();
    let mut worst = 0.0f64;
    let mut all_pass = true;
    for (name, y) in model.reduced_fields() {
        let lifted = lift_field(conn, y);
        let (back, rep) =
            project_hj_solution(model.system(), conn, &lifted, &base_grid, None).unwrap();
        for base in base_grid.points() {
            worst = worst.max((y.value(&base) - back.value(&base)).amax());
        }
        all_pass &= rep.pass;
        assert!(rep.pass, "reduced check failed for {name}");
    }
    report(
        "lift-project round trip",
        worst <= 1e-10 && all_pass,
        &format!("max round-trip error {worst:.3e}"),
    );
}

#[test]
fn forced_balance() {
    let k = 1.0f64;
    let sys = MechanicalSystem::new(
        Chart::new(vec!["q"]).unwrap(),
        |_| DMatrix::identity(1, 1),
        ScalarField::zero(),
    );
    let candidate = HJCandidate::Form(OneFormField::new(move |q: &[f64]| {
        dvector![(2.0 * k * q[0]).sqrt()]
    }));
    let grid = SampleGrid::new(vec![GridAxis::new(1.0, 2.0, 50)]).unwrap();

    let matched = SemibasicForce::from_cotangent(move |_, _| dvector![-k]);
    let rep = check_forced(&sys, &matched, &candidate, &grid, None).unwrap();
    let bal = rep.condition("forced_balance").unwrap().residual;

    let doubled = SemibasicForce::from_cotangent(move |_, _| dvector![-2.0 * k]);
    let rep2 = check_forced(&sys, &doubled, &candidate, &grid, None).unwrap();
    let bad = rep2.condition("forced_balance").unwrap().residual;

    report(
        "forced balance",
        rep.pass && bal <= 1e-6 && !rep2.pass && bad >= 0.5,
        &format!("matched force residual {bal:.3e}, doubled force residual {bad:.3e}"),
    );
}

#[test]
fn integrator_convergence_order() {
    let f = |x: &DVector<f64>| Ok(x.clone()); // dy/dt = y
    let exact = 1.0f64.exp();
    let err = |dt: f64, steps: usize| {
        let traj = rk4_integrate(f, dvector![1.0], dt, steps, &[]).unwrap();
        (traj.final_state()[0] - exact).abs()
    };
    let coarse = err(0.1, 10);
    let fine = err(0.05, 20);
    let ratio = coarse / fine;
    report(
        "integrator convergence order",
        ratio >= 12.0,
        &format!("halving the step shrinks the error {ratio:.1}x"),
    );
}

#[test]
fn deterministic_outputs() {
    let mut cfg = RunConfig::new("robot");
    cfg.steps = 500;
    cfg.candidate = Some("gamma3".into());
    cfg.initial = Some(InitialSpec {
        q: START.to_vec(),
        p: None,
        v: None,
        candidate: Some("gamma3".into()),
    });
    cfg.extra_grid_points = vec![vec![0.05, -0.3, 1.234, 0.5]];

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for dir in [&d1, &d2] {
        run_simulate(&cfg, dir.path()).unwrap();
        run_verify(&cfg, dir.path()).unwrap();
        run_reduce(&cfg, dir.path()).unwrap();
    }
    let mut identical = true;
    for file in [
        "trajectory.csv",
        "summary.json",
        "report.json",
        "reduce.json",
    ] {
        let a = std::fs::read(d1.path().join(file)).unwrap();
        let b = std::fs::read(d2.path().join(file)).unwrap();
        identical &= a == b;
    }
    report(
        "deterministic outputs",
        identical,
        "two runs produced byte-identical trajectory, report, and reduction files",
    );
}
