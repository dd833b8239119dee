use hjbv_core::error::Error;
use hjbv_core::inclusion::{integrate_selection, InclusionProblem, Trajectory};
use hjbv_core::nft::{
    classify_outward, inward_substitute, neighboring_feasible, neighboring_feasible_with, outward_measure,
    ConstraintData, ConstraintSpec,
};
use hjbv_core::setgeom::{CompactSetRep, ConvexBody};
use proptest::prelude::*;

fn polygon(xs: impl Fn(f64) -> Vec<f64>, t1: f64, n: usize) -> Trajectory {
    let times: Vec<f64> = (0..=n).map(|i| t1 * i as f64 / n as f64).collect();
    let states = times.iter().map(|&t| xs(t)).collect();
    Trajectory::new(times, states).unwrap()
}

fn halfline(lo: f64, hi: f64, eta: f64, r: f64, m: f64) -> ConstraintData {
    ConstraintSpec {
        set: vec![vec![0.0], vec![1000.0]],
        velocities: vec![vec![lo], vec![hi]],
        drift: 0.0,
        eta,
        r,
        m,
        boundary_speed: None,
    }
    .build()
    .unwrap()
}

fn disk_constraint(eta: f64, r: f64, m: f64) -> ConstraintData {
    let set = CompactSetRep::from(ConvexBody::ball(&[0.0, 0.0], 1.0, 256).unwrap());
    let q = InclusionProblem::constant(ConvexBody::ball(&[0.0, 0.0], 1.0, 64).unwrap());
    ConstraintData::new(set, eta, r, m, |_| 1.0, q).unwrap()
}

#[test]
fn constraint_data_rejects_bad_constants() {
    let spec = |eta: f64, r: f64, m: f64| ConstraintSpec {
        set: vec![vec![0.0], vec![1.0]],
        velocities: vec![vec![-1.0], vec![1.0]],
        drift: 0.0,
        eta,
        r,
        m,
        boundary_speed: None,
    };
    assert!(spec(0.0, 1.0, 1.0).build().is_err());
    assert!(spec(1.0, -1.0, 1.0).build().is_err());
    assert!(spec(1.0, 1.0, -0.5).build().is_err());
    assert!(spec(1.0, 1.0, 0.0).build().is_ok());
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    assert_eq!(cd.boundary_speed(0.3), 1.0);
    assert!((cd.boundary_speed_integral(0.0, 2.0) - 2.0).abs() < 1e-12);
}

#[test]
fn classify_halfline_examples() {
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    let away = polygon(|t| vec![1.0 + t], 1.0, 20);
    assert!(classify_outward(&cd, &away).is_empty());
    let towards = polygon(|t| vec![0.125 - t], 0.5, 20);
    assert_eq!(classify_outward(&cd, &towards), (0..20).collect::<Vec<_>>());
}

#[test]
fn classify_spirals_on_the_disk() {
    let cd = disk_constraint(0.05, 0.1, 2.0);
    let out = polygon(
        |t| {
            let s = 0.97 + 0.1 * t;
            vec![s * t.cos(), s * t.sin()]
        },
        0.6,
        60,
    );
    let idx = classify_outward(&cd, &out);
    // Radial speed is positive throughout, so every interval near the boundary is outward.
    for i in 0..60 {
        let near = [out.state(i), out.state(i + 1)]
            .iter()
            .any(|s| (hypot(s) - 1.0).abs() <= 0.05);
        if near {
            assert!(idx.contains(&i), "interval {i} near the boundary not classified");
        }
    }
    assert!(!idx.is_empty());
    let inward = polygon(
        |t| {
            let s = 1.0 - 0.5 * t;
            vec![s * t.cos(), s * t.sin()]
        },
        0.6,
        60,
    );
    assert!(classify_outward(&cd, &inward).is_empty());
}

fn hypot(s: &[f64]) -> f64 {
    s[0].hypot(s[1])
}

#[test]
fn inward_substitute_examples() {
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    let xhat = polygon(|t| vec![-t], 0.5, 50);
    let same = inward_substitute(&cd, &xhat, &[], 2.0, 0.5).unwrap();
    assert_eq!(same.y, xhat);
    assert_eq!(same.measure, 0.0);

    let all: Vec<usize> = (0..50).collect();
    let sub = inward_substitute(&cd, &xhat, &all, 2.0, 0.5).unwrap();
    for (t, s) in sub.y.times().iter().zip(sub.y.states()) {
        assert!((s[0] - t).abs() < 1e-12);
    }
    assert_eq!(sub.tau, 0.5);
    assert!((sub.measure - 0.5).abs() < 1e-12);

    // Outward for 0.3 time units, then moving back inward.
    let xhat = polygon(|t| vec![if t <= 0.3 { -t } else { t - 0.6 }], 1.0, 100);
    let idx = classify_outward(&cd, &xhat);
    let mu = outward_measure(&xhat, &idx);
    assert!((mu - 0.3).abs() < 1e-9, "mu = {mu}");
    let sub = inward_substitute(&cd, &xhat, &idx, 2.0, 0.3).unwrap();
    let gap = xhat.w11_distance(&sub.y).unwrap();
    assert!(gap <= 2.0 * 2.0 * 0.3 + 1e-9);
    assert!((gap - 0.6).abs() < 1e-9);
}

#[test]
fn substitution_stops_when_the_budget_is_spent() {
    let cd = halfline(-1.0, 5.0, 1.0, 4.0, 5.0);
    let xhat = polygon(|t| vec![-t], 0.5, 40);
    let all: Vec<usize> = (0..40).collect();
    let sub = inward_substitute(&cd, &xhat, &all, 0.5, 0.5).unwrap();
    assert!((sub.tau - 0.25).abs() < 1e-12);
    assert!((sub.measure - 0.25).abs() < 1e-12);
    assert!((sub.y.at(0.25)[0] - 1.0).abs() < 1e-12);
    assert!((sub.y.end().1[0] - 0.75).abs() < 1e-12);
}

#[test]
fn inward_substitute_errors() {
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    let xhat = polygon(|t| vec![-t], 0.5, 10);
    let all: Vec<usize> = (0..10).collect();
    assert!(inward_substitute(&cd, &xhat, &all, 1.0, 0.5).is_err());
    assert!(inward_substitute(&cd, &xhat, &all, 2.0, 0.4).is_err());
    let weak = halfline(-1.0, 0.5, 1.0, 1.0, 2.0);
    match inward_substitute(&weak, &xhat, &all, 2.0, 0.5) {
        Err(Error::Infeasible(msg)) => assert!(msg.contains("controllability")),
        other => panic!("expected a controllability violation, got {other:?}"),
    }
}

#[test]
fn halfline_testbed() {
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    let xhat = polygon(|t| vec![-t], 0.5, 512);
    let run = neighboring_feasible(&cd, &xhat, 0.5, 0.5).unwrap();
    for (t, s) in run.x.times().iter().zip(run.x.states()) {
        assert!((s[0] - t).abs() < 1e-12);
    }
    assert!(!run.early_exit);
    assert_eq!(run.constants.theta, 0.0);
    assert_eq!(run.constants.beta, 2.0 * 2.0 * run.constants.k);
    assert!(run.constants.k > 1.0);
    assert!((run.sup_deviation - 1.0).abs() < 1e-9);
    assert!(run.sup_deviation <= run.constants.beta * 0.5);
    assert!(run.sup_deviation <= run.beta_run * 0.5);
    assert!(run.min_margin() > 0.0);
    assert!(run.estimates.pass(), "{:?}", run.estimates);
    assert!(run.pass());
    assert!(8.0 * run.constants.delta * 2.0 <= 1.0 + 1e-12);
    assert!((run.constants.delta - 1.0 / 16.0).abs() < 1e-9);

    let run = neighboring_feasible_with(&cd, &xhat, 0.5, 0.5, Some(1.5)).unwrap();
    assert_eq!(run.constants.beta, 6.0);
}

#[test]
fn early_exit_returns_the_input() {
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    let xhat = polygon(|t| vec![0.6 + 0.1 * t], 1.0, 50);
    let run = neighboring_feasible(&cd, &xhat, 0.1, 1.0).unwrap();
    assert!(run.early_exit);
    assert_eq!(run.x, xhat);
    assert!(run.min_margin() > 0.25);
}

#[test]
fn disk_grazing() {
    let cd = disk_constraint(0.3, 0.2, 2.0);
    let oracle = cd.verify_inward_oracle(&[0.0]).unwrap();
    assert!(oracle.pass && oracle.checked > 0, "{oracle:?}");
    let xhat = polygon(|t| vec![t, 0.97], 0.5, 200);
    let rho = xhat.states().iter().map(|s| cd.set().distance(s)).fold(0.0, f64::max);
    assert!(rho > 0.05);
    let run = neighboring_feasible(&cd, &xhat, rho, 0.5).unwrap();
    assert!(run.min_margin() > 0.0);
    assert!(run.substituted_measure > 0.0);
    assert!(run.estimates.pass(), "{:?}", run.estimates);
    assert!(run.sup_deviation <= run.beta_run * rho);
    // Margin formula with theta = 0: -Dist(x(t)) >= r * mu on the first piece.
    assert!(run.estimates.margin.checked > 0);
}

#[test]
fn state_dependent_dynamics() {
    let spec = ConstraintSpec {
        set: vec![vec![0.0], vec![1000.0]],
        velocities: vec![vec![-2.0], vec![2.0]],
        drift: 0.5,
        eta: 1.0,
        r: 1.0,
        m: 3.0,
        boundary_speed: None,
    };
    let cd = spec.build().unwrap();
    let xhat = integrate_selection(cd.dynamics(), 0.0, &[0.0], |_, _| vec![-1.0], 0.4, Some(1e-3)).unwrap();
    let run = neighboring_feasible(&cd, &xhat, 0.4, 0.4).unwrap();
    assert!(run.constants.theta > 0.0);
    assert!(run.min_margin() > 0.0);
    assert!(run.estimates.pass(), "{:?}", run.estimates);
}

#[test]
fn infeasible_constants_cite_the_condition() {
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 1e6);
    let xhat = polygon(|t| vec![-t], 0.5, 10);
    match neighboring_feasible(&cd, &xhat, 0.5, 0.5) {
        Err(Error::Config(msg)) => assert!(msg.contains("(i)"), "{msg}"),
        other => panic!("expected a configuration error, got {other:?}"),
    }
    let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
    assert!(matches!(
        neighboring_feasible_with(&cd, &xhat, 0.5, 0.5, Some(0.9)),
        Err(Error::Config(_))
    ));
    assert!(neighboring_feasible(&cd, &xhat, 0.5, 0.4).is_err());
    let outside = polygon(|t| vec![-0.1 - t], 0.5, 10);
    assert!(neighboring_feasible(&cd, &outside, 1.0, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn early_exit_is_exact(a in 0.5f64..5.0, s in -0.4f64..0.4) {
        let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
        let xhat = polygon(|t| vec![a + s * t], 0.5, 25);
        let run = neighboring_feasible(&cd, &xhat, 0.1, 0.5).unwrap();
        prop_assert!(run.early_exit);
        prop_assert_eq!(run.x, xhat);
    }

    #[test]
    fn halfline_runs_certify(a in 0.0f64..0.2, s in 0.2f64..1.0, t1 in 0.1f64..0.6) {
        let cd = halfline(-1.0, 1.0, 1.0, 1.0, 2.0);
        let xhat = polygon(|t| vec![a - s * t], t1, 64);
        let rho = (s * t1 - a).max(0.05);
        let run = neighboring_feasible(&cd, &xhat, rho, t1).unwrap();
        prop_assert!(run.min_margin() > 0.0);
        prop_assert!(run.estimates.pass(), "{:?}", run.estimates);
        prop_assert!(run.sup_deviation <= run.beta_run * rho + 1e-9);
    }
}
