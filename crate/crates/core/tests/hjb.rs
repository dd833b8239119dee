use hjbv_core::error::Error;
use hjbv_core::fenchel::{ConjugationPlan, HamiltonianModel};
use hjbv_core::grid::BoxDomain;
use hjbv_core::hjb::*;
use hjbv_core::setgeom::CompactSetRep;
use proptest::prelude::*;
use std::sync::OnceLock;

fn interval(lo: f64, hi: f64) -> CompactSetRep {
    CompactSetRep::vertex_hull(vec![vec![lo], vec![hi]]).unwrap()
}

fn eikonal_problem() -> ControlProblem {
    ControlProblem::new(
        &HamiltonianModel::eikonal_decay(),
        interval(-2.0, 2.0),
        DEFAULT_VANISH_TOL,
    )
    .unwrap()
}

/// Full-horizon value field at `dt = dx = 0.01`, shared by the tests below.
fn fine() -> &'static (ControlProblem, ValueField) {
    static FIELD: OnceLock<(ControlProblem, ValueField)> = OnceLock::new();
    FIELD.get_or_init(|| {
        let cp = eikonal_problem();
        let res = Resolution::from_spacing(&cp, 0.01, 0.01).unwrap();
        let v = value_function(&cp, &res).unwrap();
        (cp, v)
    })
}

/// Short horizon, coarse grid: for properties that do not need the tail.
fn coarse() -> &'static (ControlProblem, ValueField) {
    static FIELD: OnceLock<(ControlProblem, ValueField)> = OnceLock::new();
    FIELD.get_or_init(|| {
        let cp = eikonal_problem().with_t_max(2.0).unwrap();
        let res = Resolution::from_spacing(&cp, 0.05, 0.05).unwrap();
        let v = value_function(&cp, &res).unwrap();
        (cp, v)
    })
}

fn closed_form(cp: &ControlProblem, h: f64) -> ValueField {
    let res = Resolution::from_spacing(cp, h, h).unwrap();
    ValueField::from_fn(
        cp.t_max(),
        &cp.omega().bounding_box(),
        &res,
        Provenance::ClosedForm,
        eikonal_decay_value,
    )
    .unwrap()
}

#[test]
fn horizon_from_tail_bound() {
    let cp = eikonal_problem();
    // (1 + 2) e^{-T} = 5e-4
    assert!((cp.t_max() - 6000f64.ln()).abs() < 1e-6, "{}", cp.t_max());
    assert!((cp.tail_bound(1.0) - 3.0 * (-1.0f64).exp()).abs() < 1e-9);
    let flat = ControlProblem::new(&HamiltonianModel::norm_h(1).unwrap(), interval(-1.0, 1.0), 1e-3);
    assert!(matches!(flat, Err(Error::Config(_))));
    let cp =
        ControlProblem::with_horizon(&HamiltonianModel::norm_h(1).unwrap(), interval(-1.0, 1.0), 1e-3, 3.0).unwrap();
    assert_eq!(cp.t_max(), 3.0);
    assert!(cp.tail_bound(3.0).is_infinite());
}

#[test]
fn augmented_body_spans_cost_range() {
    let cp = eikonal_problem();
    let body = cp.augmented_velocities(0.5, &[1.0]).unwrap();
    let ell = (-0.5f64).exp();
    let cap = 2.0 * ell;
    // least -z' is the running cost, largest the cap; velocities reach [-1, 1]
    assert!((body.support(&[0.0, 1.0]) + ell).abs() < 1e-9);
    assert!((body.support(&[0.0, -1.0]) - cap).abs() < 1e-9);
    assert!((body.support(&[1.0, 0.0]) - 1.0).abs() < 1e-9);
    assert!((body.support(&[-1.0, 0.0]) - 1.0).abs() < 1e-9);
    let prob = cp.augmented_problem();
    assert_eq!(prob.dim(), 2);
    assert!(prob.velocities(0.0, &[0.0, 0.0]).is_ok());
}

#[test]
fn dp_matches_closed_form() {
    let (cp, v) = fine();
    assert_eq!(v.provenance(), Provenance::ComputedDp);
    assert_eq!(v.infeasible_nodes(), 0);
    let v01 = v.value_at(0.0, &[1.0]);
    assert!((v01 - (-1.0f64).exp()).abs() <= 1e-2, "V(0,1) = {v01}");
    let (gap, _) = max_gap(v, &closed_form(cp, 0.01));
    assert!(gap <= 2e-2, "sup gap to closed form {gap}");
    for t in v.times() {
        assert!(v.value_at(t, &[0.0]).abs() <= 1e-12);
    }
}

#[test]
fn dp_converges_under_refinement() {
    let (cp, v) = fine();
    let half = value_function(cp, &Resolution::from_spacing(cp, 0.02, 0.02).unwrap()).unwrap();
    let exact = (-1.0f64).exp();
    let e_fine = (v.value_at(0.0, &[1.0]) - exact).abs();
    let e_coarse = (half.value_at(0.0, &[1.0]) - exact).abs();
    assert!(e_fine < e_coarse, "{e_fine} vs {e_coarse}");
    assert!((v.value_at(0.0, &[1.0]) - half.value_at(0.0, &[1.0])).abs() <= 1e-2);
}

#[test]
fn alpha_agrees_with_value() {
    let (cp, v) = fine();
    let res = Resolution {
        t_nodes: v.t_nodes(),
        x_nodes: vec![v.field().grid().res()[1]],
    };
    let alpha = alpha_field(cp, &res).unwrap();
    let (gap, _) = max_gap(v, &alpha);
    assert!(gap <= 1e-2, "alpha/V gap {gap}");
    assert!((alpha_infimum(&alpha, cp, 0.0, &[1.0]) - v.value_at(0.0, &[1.0])).abs() <= 1e-2);
    assert_eq!(alpha_infimum(&alpha, cp, 0.7, &[0.0]), 0.0);
    assert!(alpha_infimum(&alpha, cp, 0.0, &[2.5]).is_infinite());
}

#[test]
fn alpha_reports_dual_grid_too_small() {
    let model = HamiltonianModel::eikonal_decay()
        .with_plan(ConjugationPlan::symmetric(1, 2.0, 21, 0.5, 11).unwrap())
        .unwrap();
    let cp = ControlProblem::with_horizon(&model, interval(-2.0, 2.0), 1e-3, 0.5).unwrap();
    let res = Resolution::from_spacing(&cp, 0.1, 0.5).unwrap();
    assert!(matches!(alpha_field(&cp, &res), Err(Error::Domain(_))));
}

#[test]
fn value_residual_within_grid_order() {
    let (cp, v) = fine();
    let (rep, samples) = epigraphical_residual(v, cp.model(), cp.omega(), &ResidualPlan::default()).unwrap();
    assert!(rep.evaluated > 1000, "{rep:?}");
    assert!(rep.interior_max_abs <= 3.0 * (v.dt() + v.dx()), "{rep:?}");
    assert!(rep.interior_pass && rep.boundary_pass && rep.fd_pass, "{rep:?}");
    assert!(rep.smooth_points > 0);
    assert!((rep.measured_constant - rep.interior_max_abs / (v.dt() + v.dx())).abs() < 1e-12);
    assert_eq!(
        samples.len(),
        rep.evaluated + rep.skipped_infinite + rep.skipped_empty_polar
    );
}

#[test]
fn closed_form_residual_and_bump_detection() {
    let cp = eikonal_problem().with_t_max(4.0).unwrap();
    let u = closed_form(&cp, 0.02);
    let (rep, _) = epigraphical_residual(&u, cp.model(), cp.omega(), &ResidualPlan::default()).unwrap();
    assert!(rep.pass, "{rep:?}");

    let (tc, xc, w) = (1.0, 0.8, 0.5);
    let bump = |t: f64, x: f64| -((t - tc) / w) * (-((t - tc).powi(2) + (x - xc).powi(2)) / (w * w)).exp();
    let res = Resolution::from_spacing(&cp, 0.02, 0.02).unwrap();
    let bumped = ValueField::from_fn(
        4.0,
        &cp.omega().bounding_box(),
        &res,
        Provenance::UserSupplied,
        |t, x| eikonal_decay_value(t, x) + 0.1 * bump(t, x[0]),
    )
    .unwrap();
    let plan = ResidualPlan::default();
    let at = |f: &ValueField| match residual_at(f, cp.model(), cp.omega(), tc, &[xc], &plan).unwrap() {
        ResidualSample::Evaluated(n) => n,
        other => panic!("{other:?}"),
    };
    let base = at(&u);
    let hit = at(&bumped);
    assert!(base.residual.abs() < 0.05);
    // d/dt of the bump at its centre is -1/w, so the residual rises by 0.1 / w
    assert!(hit.residual >= 0.05, "{hit:?}");
    assert!((hit.fd_residual.unwrap() - (base.fd_residual.unwrap() + 0.2)).abs() < 0.02);
    let (rep, _) = epigraphical_residual(&bumped, cp.model(), cp.omega(), &plan).unwrap();
    assert!(!rep.interior_pass);
}

#[test]
fn zero_field_solves_norm_model() {
    let model = HamiltonianModel::norm_h(1).unwrap();
    let space = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
    let res = Resolution {
        t_nodes: 21,
        x_nodes: vec![41],
    };
    let u = ValueField::from_fn(2.0, &space, &res, Provenance::ClosedForm, |_, _| 0.0).unwrap();
    let (rep, samples) = epigraphical_residual(&u, &model, &interval(-1.0, 1.0), &ResidualPlan::default()).unwrap();
    assert_eq!(rep.interior_max_abs, 0.0);
    assert!(rep.boundary_min.abs() < 1e-12);
    assert!(rep.pass);
    assert_eq!(rep.skipped_infinite + rep.skipped_empty_polar, 0);
    assert!(samples
        .iter()
        .any(|s| matches!(s, ResidualSample::Evaluated(n) if n.boundary)));
}

#[test]
fn infinite_values_are_skipped() {
    let model = HamiltonianModel::norm_h(1).unwrap();
    let space = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
    let res = Resolution {
        t_nodes: 11,
        x_nodes: vec![21],
    };
    let u = ValueField::from_fn(1.0, &space, &res, Provenance::UserSupplied, |_, x| {
        if x[0] > 0.5 {
            f64::INFINITY
        } else {
            0.0
        }
    })
    .unwrap();
    let (rep, _) = epigraphical_residual(&u, &model, &interval(-1.0, 1.0), &ResidualPlan::default()).unwrap();
    assert!(rep.skipped_infinite > 0);
    assert!(rep.evaluated > 0);
}

#[test]
fn vanishing_check_reports_t_star() {
    let (cp, v) = fine();
    let rep = vanishing_check(v, cp);
    assert!(
        rep.pass && rep.horizon_ok,
        "{:?}",
        (rep.t_star, rep.sup_at_end, rep.tail_bound_at_end)
    );
    assert!(rep.t_star < cp.t_max());
    // closed form: sup_x |V(t, .)| = e^{-t}(1 + e^{-2})
    let i = v.time_index(1.0);
    assert!((rep.sups[i] - (-1.0f64).exp() * (1.0 + (-2.0f64).exp())).abs() < 2e-2);
    for w in rep.sups.windows(2).skip(v.time_index(rep.t_star)) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    let shifted = v.shifted(0.05).unwrap();
    assert!(!vanishing_check(&shifted, cp).pass);
}

#[test]
fn horizon_truncation_within_tail_bound() {
    let base = eikonal_problem();
    let short = base.clone().with_t_max(3.0).unwrap();
    let long = base.with_t_max(4.0).unwrap();
    let vs = value_function(&short, &Resolution::from_spacing(&short, 0.05, 0.05).unwrap()).unwrap();
    let vl = value_function(&long, &Resolution::from_spacing(&long, 0.05, 0.05).unwrap()).unwrap();
    assert!((vs.dt() - vl.dt()).abs() < 1e-12);
    let (gap, _) = max_gap(&vs, &vl);
    assert!(gap > 0.0 && gap <= short.tail_bound(3.0), "{gap}");
}

#[test]
fn self_comparison_passes() {
    let (cp, v) = fine();
    let rep = comparison_experiment(v, v, cp, &ComparisonConfig::default()).unwrap();
    assert!(rep.pass, "{:#?}", rep.legs);
    assert!(rep.gap <= 2e-2);
    assert_eq!(rep.legs.len(), 3);
    assert!(rep.preconditions.pass);
    for leg in &rep.legs {
        assert!(leg.checked > 0);
    }
}

#[test]
fn shifted_upper_field_fails_gap_only() {
    let (cp, v) = fine();
    let high = v.shifted(0.05).unwrap();
    let rep = comparison_experiment(v, &high, cp, &ComparisonConfig::default()).unwrap();
    assert!(rep.leg("A").unwrap().pass, "{:#?}", rep.leg("A"));
    let c = rep.leg("C").unwrap();
    assert!(!c.pass);
    assert!((rep.gap - 0.05).abs() < 1e-9);
    assert!(c.witness.is_some());
    assert!(!rep.pass);
    assert!(!rep.preconditions.vanishing_high.pass);
}

#[test]
fn halved_horizon_aborts() {
    let (cp, v) = fine();
    let short_cp = cp.clone().with_t_max(cp.t_max() / 2.0).unwrap();
    let low = value_function(&short_cp, &Resolution::from_spacing(&short_cp, 0.05, 0.05).unwrap()).unwrap();
    match comparison_experiment(&low, v, cp, &ComparisonConfig::default()) {
        Err(Error::Config(msg)) => assert!(msg.contains("vanishing"), "{msg}"),
        other => panic!("expected a precondition abort, got {other:?}"),
    }
}

#[test]
fn text_round_trip_keeps_provenance() {
    let (_, v) = coarse();
    let back = ValueField::parse(&v.to_text()).unwrap();
    assert_eq!(back.provenance(), Provenance::ComputedDp);
    assert_eq!(back.field(), v.field());
    let bare = v.field().to_text(None);
    assert_eq!(ValueField::parse(&bare).unwrap().provenance(), Provenance::UserSupplied);
    let bad = v.field().to_text(Some("guessed"));
    assert!(ValueField::parse(&bad).is_err());
    let dir = std::env::temp_dir().join(format!("hjbv-field-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("v.gridfn");
    v.save(&path).unwrap();
    assert_eq!(ValueField::load(&path).unwrap().field(), v.field());
}

/// One step of the recursion with a fixed control index, computed from the
/// representation directly.
fn one_step(cp: &ControlProblem, v: &ValueField, i: usize, x: f64, theta: &[f64]) -> Option<f64> {
    let t = v.times()[i];
    let dt = v.times()[i + 1] - t;
    let rep = cp.representation();
    let f = rep.velocity(t, &[x], theta).unwrap()[0];
    let cost = rep.cost(t, &[x], theta).unwrap();
    let y = x + dt * f;
    (y.abs() <= 2.0 + 1e-12).then(|| dt * cost + v.value_at(t + dt, &[y.clamp(-2.0, 2.0)]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dynamic_programming_principle(ti in 0usize..35, xi in 0usize..81, k in 1usize..5, c in 0usize..64) {
        let (cp, v) = coarse();
        let ti = ti.min(v.t_nodes() - 1 - k);
        let x = -2.0 + 0.05 * xi as f64;
        let theta = cp.thetas()[c % cp.thetas().len()].clone();
        // one step: V is the minimum, attained by some lattice control
        let steps: Vec<f64> = cp.thetas().iter().filter_map(|th| one_step(cp, v, ti, x, th)).collect();
        let best = steps.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((v.value_at(v.times()[ti], &[x]) - best).abs() <= 1e-12);
        // k steps with a fixed control never beat V beyond interpolation error
        let mut y = x;
        let mut acc = 0.0;
        let rep = cp.representation();
        for s in 0..k {
            let t = v.times()[ti + s];
            let dt = v.times()[ti + s + 1] - t;
            let f = rep.velocity(t, &[y], &theta).unwrap()[0];
            let next = y + dt * f;
            if next.abs() > 2.0 + 1e-12 {
                return Ok(());
            }
            acc += dt * rep.cost(t, &[y], &theta).unwrap();
            y = next;
        }
        let tau = v.times()[ti + k];
        let bound = acc + v.value_at(tau, &[y]);
        prop_assert!(v.value_at(v.times()[ti], &[x]) <= bound + k as f64 * v.dt() * v.dx() + 1e-9);
    }

    #[test]
    fn value_is_even_and_nonnegative(ti in 0usize..40, xi in 0usize..41) {
        let (_, v) = coarse();
        let ti = ti.min(v.t_nodes() - 1);
        let t = v.times()[ti];
        let x = 0.05 * xi as f64;
        let (a, b) = (v.value_at(t, &[x]), v.value_at(t, &[-x]));
        prop_assert!(a >= -1e-12);
        prop_assert!((a - b).abs() <= 1e-12);
    }
}
