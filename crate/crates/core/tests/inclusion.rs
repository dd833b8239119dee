use approx::assert_abs_diff_eq;
use hjbv_core::grid::{BoxDomain, Grid, GridFunction};
use hjbv_core::inclusion::*;
use hjbv_core::linalg::norm;
use hjbv_core::setgeom::{excess, hausdorff, CompactSetRep, ConvexBody};
use hjbv_core::tubes::{epi_tube, Tube};
use proptest::prelude::*;

fn decay() -> InclusionProblem {
    InclusionProblem::new(1, |_, x| ConvexBody::point(vec![-x[0]]), |_| 1.0, |_, _| 1.0)
}

fn interval(a: f64, b: f64) -> ConvexBody {
    ConvexBody::interval(a, b).unwrap()
}

#[test]
fn euler_integration_examples() {
    let x = integrate_selection(&decay(), 0.0, &[1.0], |_, x| vec![-x[0]], 1.0, None).unwrap();
    let step = default_step(0.0, 1.0);
    assert_abs_diff_eq!(x.end().1[0], (-1.0f64).exp(), epsilon = 2.0 * step);

    let unit = InclusionProblem::constant(interval(-1.0, 1.0));
    let x = integrate_selection(&unit, 0.0, &[0.0], |_, _| vec![1.0], 1.0, None).unwrap();
    for (t, s) in x.times().iter().zip(x.states()) {
        assert_abs_diff_eq!(s[0], *t, epsilon = 1e-12);
    }
    // Out-of-set selections are projected.
    let x = integrate_selection(&unit, 0.0, &[0.0], |_, _| vec![5.0], 0.5, Some(0.1)).unwrap();
    assert_abs_diff_eq!(x.end().1[0], 0.5, epsilon = 1e-12);
}

#[test]
fn rotation_stays_on_circle() {
    let disk = InclusionProblem::constant(ConvexBody::ball(&[0.0, 0.0], 1.0, 256).unwrap());
    let period = std::f64::consts::TAU;
    let step = 1e-3;
    let x = integrate_selection(&disk, 0.0, &[1.0, 0.0], |_, x| vec![-x[1], x[0]], period, Some(step)).unwrap();
    let drift = x.states().iter().map(|s| (norm(s) - 1.0).abs()).fold(0.0, f64::max);
    assert!(drift <= 10.0 * step, "{drift}");
}

fn perturbed_decay(eps: f64, step: f64) -> Trajectory {
    let n = (1.0 / step).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let states = times
        .iter()
        .map(|t| vec![(-t).exp() + eps * (1.0 - (-t).exp())])
        .collect();
    Trajectory::new(times, states).unwrap()
}

#[test]
fn filippov_on_linear_testbed() {
    let step = 1e-3;
    let mut gaps = Vec::new();
    for eps in [0.01, 0.05, 0.1] {
        let y = perturbed_decay(eps, step);
        let fc = filippov_correct(&decay(), &y).unwrap();
        assert_abs_diff_eq!(fc.defect_integral, eps, epsilon = step);
        assert_abs_diff_eq!(fc.lipschitz_integral, 1.0, epsilon = 1e-12);
        let gap = y.w11_distance(&fc.x).unwrap();
        assert!(gap <= fc.bound + 10.0 * step, "eps={eps}: {gap} > {}", fc.bound);
        // Closed forms: x = e^{-t}, y - x = eps (1 - e^{-t}).
        let closed = eps * (1.0 - (-1.0f64).exp());
        assert!((gap - closed).abs() <= step, "eps={eps}: {gap} vs {closed}");
        gaps.push(gap / eps);
    }
    assert!(gaps.iter().all(|g| (g / gaps[0] - 1.0).abs() <= 0.05));

    let exact = integrate_selection(&decay(), 0.0, &[1.0], |_, x| vec![-x[0]], 1.0, None).unwrap();
    let fc = filippov_correct(&decay(), &exact).unwrap();
    assert_eq!(fc.defect_integral, 0.0);
    assert_eq!(fc.x, exact);
}

#[test]
fn gronwall_examples() {
    let g = gronwall_envelope(0.0, 0.0, 1.0, 0.0, 3.0).unwrap();
    for i in 0..=30 {
        let t = i as f64 * 0.1;
        assert_abs_diff_eq!(g.eval(t), t, epsilon = 1e-12);
        assert!(t.sin() <= g.eval(t) + 1e-12);
    }
    let g = gronwall_envelope(2.0, 0.5, 0.0, 1.0, 3.0).unwrap();
    assert_abs_diff_eq!(g.eval(3.0), 2.0 * 1.0f64.exp(), epsilon = 1e-12);
    let g = gronwall_envelope(1.0, 1.0, 1.0, 0.0, 2.0).unwrap();
    assert_abs_diff_eq!(g.eval(1.0), 2.0 * 1.0f64.exp() - 1.0, epsilon = 1e-12);
    assert!(gronwall_envelope(1.0, 1.0, 1.0, 2.0, 2.0).is_err());
}

#[test]
fn viability_in_moving_halfline() {
    let knots: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let tube = Tube::from_fn(knots.clone(), |t| Ok(interval(t, 100.0).into())).unwrap();
    let prob = InclusionProblem::constant(interval(0.0, 2.0));
    let run = viable_trajectory(&prob, &tube, 0.0, &[0.0], 1.0, &knots, &ViabilityConfig::default()).unwrap();
    assert!(run.node_distances.iter().all(|d| *d == 0.0), "{:?}", run.node_distances);
    assert_eq!(run.total_jump, 0.0);
    assert!(run.within_budget());
    for (t, s) in run.trajectory.times().iter().zip(run.trajectory.states()) {
        assert!(s[0] >= t - 1e-9);
    }
    assert!(speed_excess(&prob, &run.trajectory).unwrap() <= 1e-9);

    let fast = Tube::from_fn(knots.clone(), |t| Ok(interval(2.0 * t, 100.0).into())).unwrap();
    let slow = InclusionProblem::constant(interval(0.0, 1.0));
    let err = viable_trajectory(&slow, &fast, 0.0, &[0.0], 1.0, &knots, &ViabilityConfig::default()).unwrap_err();
    assert!(matches!(err, hjbv_core::Error::Infeasible(_)), "{err}");
}

#[test]
fn viability_in_disk() {
    let knots = vec![0.0, 0.5, 1.0];
    let disk: CompactSetRep = ConvexBody::ball(&[0.0, 0.0], 1.0, 128).unwrap().into();
    let tube = Tube::new(knots.clone(), vec![disk.clone(), disk.clone(), disk.clone()]).unwrap();
    let prob = InclusionProblem::constant(ConvexBody::ball(&[0.0, 0.0], 1.0, 64).unwrap());
    let run = viable_trajectory(&prob, &tube, 0.0, &[1.0, 0.0], 1.0, &knots, &ViabilityConfig::default()).unwrap();
    assert!(run.trajectory.states().iter().all(|s| disk.within(s, 1e-9)));
    assert!(run.node_distances.iter().all(|d| *d <= 1e-6));
}

fn eikonal_value(t: f64, x: f64) -> f64 {
    (-t).exp() * (x.abs() - 1.0 + (-x.abs()).exp())
}

#[test]
fn viability_in_eikonal_epigraph() {
    let grid = Grid::new(BoxDomain::new(vec![-2.0], vec![2.0]).unwrap(), vec![161]).unwrap();
    let knots: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let fam: Vec<(f64, GridFunction)> = knots
        .iter()
        .map(|&t| {
            (
                t,
                GridFunction::from_fn(grid.clone(), |x| eikonal_value(t, x[0])).unwrap(),
            )
        })
        .collect();
    let tube = epi_tube(&fam, 3.0).unwrap();
    let phi_hat = InclusionProblem::new(
        2,
        |t, y| {
            let (lo, hi) = ((-t).exp() * y[0].abs(), (-t).exp() * (1.0 + y[0].abs()));
            ConvexBody::new(vec![vec![-1.0, -hi], vec![1.0, -hi], vec![-1.0, -lo], vec![1.0, -lo]])
        },
        |_| 2.0,
        |_, _| 1.0,
    );
    let cfg = ViabilityConfig {
        viab_tol: 1e-3,
        step: Some(1e-2),
        ..ViabilityConfig::default()
    };
    for x0 in [1.0, -0.6, 1.8] {
        let run = viable_trajectory(&phi_hat, &tube, 0.0, &[x0, eikonal_value(0.0, x0)], 1.0, &knots, &cfg).unwrap();
        let traj = &run.trajectory;
        for &t in &knots {
            let i = traj.times().iter().position(|s| (s - t).abs() < 1e-12).unwrap();
            let s = traj.state(i);
            assert!(
                s[1] >= eikonal_value(t, s[0]) - 1e-2,
                "t={t}: z={} V={}",
                s[1],
                eikonal_value(t, s[0])
            );
        }
    }
}

#[test]
fn reachable_samples() {
    let unit = InclusionProblem::constant(interval(-1.0, 1.0));
    let r = reachable_sample(&unit, 0.0, &[0.0], 1.0, 2, DEFAULT_SEED).unwrap();
    assert!(hausdorff(&r, &interval(-1.0, 1.0).into()).unwrap() <= 1e-9);

    let single = InclusionProblem::constant(ConvexBody::point(vec![0.5, -1.0]).unwrap());
    let r = reachable_sample(&single, 0.0, &[1.0, 1.0], 2.0, 8, DEFAULT_SEED).unwrap();
    assert!(hausdorff(&r, &ConvexBody::point(vec![2.0, -1.0]).unwrap().into()).unwrap() <= 1e-9);

    let disk = InclusionProblem::constant(ConvexBody::ball(&[0.0, 0.0], 1.0, 256).unwrap());
    let x0 = [0.3, -0.2];
    let oracle: CompactSetRep = ConvexBody::ball(&x0, 1.0, 1024).unwrap().into();
    let r64 = reachable_sample(&disk, 0.0, &x0, 1.0, 64, DEFAULT_SEED).unwrap();
    assert!(hausdorff(&r64, &oracle).unwrap() <= 0.1);
    let r16 = reachable_sample(&disk, 0.0, &x0, 1.0, 16, DEFAULT_SEED).unwrap();
    assert!(excess(&r16, &r64).unwrap() <= 1e-9);
    let again = reachable_sample(&disk, 0.0, &x0, 1.0, 64, DEFAULT_SEED).unwrap();
    assert_eq!(again.to_text(), r64.to_text());
}

#[test]
fn trajectory_csv_and_norms() {
    let t = Trajectory::new(
        vec![0.0, 1.0, 2.0],
        vec![vec![3.0, 4.0], vec![3.0, 5.0], vec![0.0, 1.0]],
    )
    .unwrap();
    assert_abs_diff_eq!(t.w11_norm(), 5.0 + 1.0 + 5.0, epsilon = 1e-12);
    let csv = t.to_csv();
    assert!(csv.starts_with("t,x1,x2\n"));
    assert_eq!(Trajectory::from_csv(&csv).unwrap(), t);
    assert!(matches!(
        Trajectory::from_csv("time,x\n0,1\n"),
        Err(hjbv_core::Error::Parse { .. })
    ));
    assert!(matches!(
        Trajectory::from_csv("t,x1\n0,abc\n"),
        Err(hjbv_core::Error::Parse { line: 2, .. })
    ));
    assert!(Trajectory::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
    assert_eq!(t.at(1.5), vec![1.5, 3.0]);
}

fn relaxed(a: f64, c: f64) -> InclusionProblem {
    InclusionProblem::new(
        1,
        move |_, x| ConvexBody::interval(-a * x[0] - c, -a * x[0] + c),
        move |_| a + c,
        move |_, _| a,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filippov_inequality_on_random_arcs(a in 0.0f64..2.0, c in 0.0f64..0.5, vel in prop::collection::vec(-2.0f64..2.0, 20), x0 in -1.0f64..1.0) {
        let prob = relaxed(a, c);
        let h = 0.05;
        let mut states = vec![vec![x0]];
        for v in &vel {
            let last = states[states.len() - 1][0];
            states.push(vec![last + h * v]);
        }
        let times = (0..=vel.len()).map(|i| i as f64 * h).collect();
        let y = Trajectory::new(times, states).unwrap();
        let fc = filippov_correct(&prob, &y).unwrap();
        let gap = y.w11_distance(&fc.x).unwrap();
        prop_assert!(gap <= fc.bound + 1e-9, "{gap} > {}", fc.bound);
    }

    #[test]
    fn gronwall_dominates_dini_polygons(psi0 in 0.0f64..2.0, alpha in 0.0f64..2.0, beta in 0.0f64..2.0, noise in prop::collection::vec(0.0f64..3.0, 40)) {
        let env = gronwall_envelope(psi0, alpha, beta, 0.0, 2.0).unwrap();
        let h = 2.0 / noise.len() as f64;
        let mut psi = psi0;
        for (i, n) in noise.iter().enumerate() {
            let slope = alpha * psi + beta - n;
            psi += h * slope;
            prop_assert!(psi <= env.eval((i + 1) as f64 * h) + 1e-12);
        }
    }

    #[test]
    fn reachable_hulls_are_nested_and_bounded(n in 1usize..24, s in 0.1f64..1.5, seed in 0u64..1000) {
        let prob = InclusionProblem::new(2, |_, x| ConvexBody::ball(&[-0.5 * x[0], 0.1], 1.0, 32), |_| 1.5, |_, _| 0.5);
        let x0 = [0.2, 0.1];
        let small = reachable_sample(&prob, 0.0, &x0, s, n, seed).unwrap();
        let big = reachable_sample(&prob, 0.0, &x0, s, n + 8, seed).unwrap();
        prop_assert!(excess(&small, &big).unwrap() <= 1e-9);
        // |x| stays below (|x0| + int rho) e^{int rho}.
        let ir = prob.growth_integral(0.0, s);
        let sup = (norm(&x0) + ir) * ir.exp();
        let reach = ir * (1.0 + sup);
        prop_assert!(big.sample_points().iter().all(|p| norm(&[p[0] - x0[0], p[1] - x0[1]]) <= reach + 1e-9));
    }
}
