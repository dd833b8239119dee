use approx::assert_abs_diff_eq;
use hjbv_core::grid::{BoxDomain, Grid, GridFunction};
use hjbv_core::setgeom::{hausdorff, CompactSetRep, ConvexBody};
use hjbv_core::tubes::*;
use proptest::prelude::*;

fn interval(a: f64, b: f64) -> CompactSetRep {
    ConvexBody::interval(a, b).unwrap().into()
}

fn uniform(n: usize, t1: f64) -> Vec<f64> {
    (0..n).map(|k| t1 * k as f64 / (n - 1) as f64).collect()
}

fn disk(r: f64) -> CompactSetRep {
    ConvexBody::ball(&[0.0, 0.0], r, 64).unwrap().into()
}

#[test]
fn growing_disks_have_unit_variation() {
    let tube = Tube::from_fn(uniform(65, 1.0), |t| Ok(disk(1.0 + t))).unwrap();
    let v = lbv_variation(&tube, 0.0, 1.0, &disk(3.0), 6).unwrap();
    assert_abs_diff_eq!(v.value, 1.0, epsilon = 1e-2);
    assert_eq!(v.empty_terms, 0);
}

#[test]
fn constant_tube_has_zero_variation() {
    let tube = Tube::from_fn(uniform(9, 2.0), |_| Ok(disk(1.0))).unwrap();
    let k = tube.default_compact();
    assert_eq!(lbv_variation(&tube, 0.0, 2.0, &k, DEFAULT_DEPTH).unwrap().value, 0.0);
}

#[test]
fn cantor_tube_variation_and_modulus() {
    assert_abs_diff_eq!(cantor_function(0.25), 1.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(cantor_function(0.5), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(cantor_function(1.0 / 9.0), 0.25, epsilon = 1e-12);
    let tube = cantor_tube(129).unwrap();
    let k = tube.default_compact();
    let v = lbv_variation(&tube, 0.0, 1.0, &k, DEFAULT_DEPTH).unwrap();
    assert_abs_diff_eq!(v.value, 1.0, epsilon = 5e-2);

    let adapted = cantor_tube_adapted(12).unwrap();
    let lipschitz = Tube::from_fn(uniform(4097, 1.0), |t| Ok(interval(t, 2.0))).unwrap();
    for eps in [0.05, 0.02, 0.01] {
        let cantor = absolute_continuity_modulus(&adapted, 0.0, 1.0, &k, eps).unwrap();
        assert!(cantor >= 0.99, "eps={eps}: {cantor}");
        let smooth = absolute_continuity_modulus(&lipschitz, 0.0, 1.0, &k, eps).unwrap();
        assert!(smooth <= eps + 1e-9, "eps={eps}: {smooth}");
    }
}

#[test]
fn refinement_curve_is_monotone() {
    let tube = cantor_tube(129).unwrap();
    let k = tube.default_compact();
    let curve = lbv_curve(&tube, 0.0, 1.0, &k, DEFAULT_DEPTH).unwrap();
    assert_eq!(curve.len(), DEFAULT_DEPTH as usize + 1);
    assert!(curve.windows(2).all(|w| w[1].1.value >= w[0].1.value));
}

fn line_grid(lo: f64, hi: f64, n: usize) -> Grid {
    Grid::new(BoxDomain::new(vec![lo], vec![hi]).unwrap(), vec![n]).unwrap()
}

#[test]
fn epigraph_tubes() {
    let g = line_grid(-1.0, 1.0, 41);
    let zero = GridFunction::from_fn(g.clone(), |_| 0.0).unwrap();
    let tube = epi_tube(&[(0.0, zero.clone()), (1.0, zero)], 1.0).unwrap();
    let s = &tube.slices()[0];
    assert!(s.contains(&[0.0, 0.5]));
    assert!(!s.contains(&[0.0, -0.1]));
    assert!(!s.contains(&[0.0, 1.1]));

    let times = uniform(21, 1.0);
    let fam: Vec<(f64, GridFunction)> = times
        .iter()
        .map(|&t| {
            (
                t,
                GridFunction::from_fn(g.clone(), |x| x[0].abs() * (-t).exp()).unwrap(),
            )
        })
        .collect();
    let tube = epi_tube(&fam, 2.0).unwrap();
    let e = &tube.slices()[10];
    let v = 0.5 * (-0.5f64).exp();
    assert!(e.contains(&[0.5, v + 0.02]));
    assert!(!e.contains(&[0.5, v - 0.02]));
    let k = tube.default_compact();
    assert!(continuity_check(&tube, &k, 0.1).unwrap().pass);

    let jumped: Vec<(f64, GridFunction)> = times
        .iter()
        .map(|&t| {
            let lift = if t > 0.5 { 1.0 } else { 0.0 };
            (t, GridFunction::from_fn(g.clone(), |x| x[0].abs() + lift).unwrap())
        })
        .collect();
    let tube = epi_tube(&jumped, 3.0).unwrap();
    let r = continuity_check(&tube, &tube.default_compact(), 0.1).unwrap();
    assert!(!r.pass);
    let (a, b) = r.witness.unwrap();
    assert!(a <= 0.5 && b > 0.5);

    let high = GridFunction::from_fn(g, |_| 5.0).unwrap();
    assert!(epi_tube(&[(0.0, high.clone()), (1.0, high)], 1.0).is_err());
}

#[test]
fn lsc_pass_removes_spikes() {
    let g = line_grid(0.0, 1.0, 11);
    let mut vals = vec![0.0; 11];
    vals[4] = 3.0;
    let (f, n) = lsc_regularize(&GridFunction::new(g, vals).unwrap(), 1e-6).unwrap();
    assert_eq!(n, 1);
    assert_eq!(f.value(4), 0.0);
}

#[test]
fn psi_distance_examples() {
    let e = Tube::from_fn(uniform(11, 1.0), |t| Ok(interval(t, 10.0))).unwrap();
    let y = Tube::from_fn(uniform(11, 1.0), |_| Ok(interval(0.0, 0.0))).unwrap();
    assert_abs_diff_eq!(psi_distance(&e, &y, 0.7).unwrap(), 0.7, epsilon = 1e-12);
    let wide = Tube::from_fn(uniform(11, 1.0), |_| Ok(interval(-1.0, 1.0))).unwrap();
    assert_eq!(psi_distance(&e, &wide, 0.3).unwrap(), 0.0);

    let grid = Grid::new(BoxDomain::new(vec![-2.0, -1.0], vec![2.0, 3.0]).unwrap(), vec![81, 81]).unwrap();
    let epi = CompactSetRep::sublevel(GridFunction::from_fn(grid, |p| p[0].abs() - p[1]).unwrap()).unwrap();
    let et = Tube::new(vec![0.0, 1.0], vec![epi.clone(), epi]).unwrap();
    let pt: CompactSetRep = ConvexBody::point(vec![1.0, 0.0]).unwrap().into();
    let yt = Tube::new(vec![0.0, 1.0], vec![pt.clone(), pt]).unwrap();
    assert_abs_diff_eq!(psi_distance(&et, &yt, 0.0).unwrap(), 0.5f64.sqrt(), epsilon = 0.05);
}

#[test]
fn psi_variation_reports() {
    let times = uniform(33, 3.0);
    let e = Tube::from_fn(times.clone(), |t| Ok(interval(1.0 + t.sin(), 10.0))).unwrap();
    let y = Tube::from_fn(times.clone(), |_| Ok(interval(0.0, 0.0))).unwrap();
    let k = e.default_compact();
    let r = psi_bv_report(&e, &y, 0.0, 3.0, 5, &k, |_, _| 0.0).unwrap();
    assert!(r.pass, "{r:?}");
    let last = r.rows.last().unwrap();
    let direct: f64 = times.windows(2).map(|w| (w[1].sin() - w[0].sin()).abs()).sum();
    assert_abs_diff_eq!(last.psi_variation, direct, epsilon = 1e-12);

    let ball = Tube::from_fn(times.clone(), |t| Ok(interval(-1.0 - t, 1.0 + t))).unwrap();
    let r = psi_bv_report(&ball, &y, 0.0, 3.0, 3, &ball.default_compact(), |_, _| 0.0).unwrap();
    assert!(r.pass && r.rows.iter().all(|row| row.psi_variation == 0.0));

    let c = Tube::from_fn(times, |_| Ok(interval(2.0, 3.0))).unwrap();
    let r = psi_bv_report(&c, &y, 0.0, 3.0, 3, &c.default_compact(), |_, _| 0.0).unwrap();
    assert!(r.pass && r.rows.iter().all(|row| row.psi_variation == 0.0 && row.bound == 0.0));
}

#[test]
fn tube_text_roundtrip() {
    let grid = Grid::new(BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), vec![5, 5]).unwrap();
    let sub =
        CompactSetRep::sublevel(GridFunction::from_fn(grid, |p| p[0] * p[0] + p[1] * p[1] - 0.5).unwrap()).unwrap();
    let tube = Tube::new(vec![0.0, 0.5], vec![disk(1.0), sub])
        .unwrap()
        .with_interpolation(Interpolation::Linear);
    let text = tube.to_text();
    assert!(text.starts_with("tube v1 knots=2"));
    let back = Tube::from_text(&text).unwrap();
    assert_eq!(back.times(), tube.times());
    assert_eq!(back.interpolation(), Interpolation::Linear);
    assert_eq!(
        back.slices()[0].as_body().unwrap().vertices(),
        tube.slices()[0].as_body().unwrap().vertices()
    );
    assert_eq!(back.slices()[1].to_text(), tube.slices()[1].to_text());
    assert!(matches!(
        Tube::from_text("tube v1 knots=2\nt=0\n"),
        Err(hjbv_core::Error::Parse { .. })
    ));
    assert!(Tube::new(vec![0.0, 0.0], vec![disk(1.0), disk(1.0)]).is_err());
    assert!(Tube::new(vec![0.0], vec![disk(1.0)]).is_err());
}

#[test]
fn linear_interpolation_between_hulls() {
    let tube = Tube::new(vec![0.0, 1.0], vec![interval(0.0, 1.0), interval(2.0, 5.0)]).unwrap();
    let mid = tube.clone().with_interpolation(Interpolation::Linear).at(0.5).unwrap();
    assert!(hausdorff(&mid, &interval(1.0, 3.0)).unwrap() < 1e-12);
    assert!(hausdorff(&tube.at(0.5).unwrap(), &interval(0.0, 1.0)).unwrap() < 1e-12);
    assert!(tube.at(1.5).is_err());
}

fn walk() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 32)
}

fn walk_tube(steps: &[f64], lip: f64) -> Tube {
    let dt = 1.0 / steps.len() as f64;
    let mut c = vec![0.0];
    for s in steps {
        c.push(c[c.len() - 1] + lip * s * dt);
    }
    let times = uniform(steps.len() + 1, 1.0);
    Tube::new(times, c.iter().map(|ci| interval(*ci, ci + 0.5)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dyadic_split_is_additive(steps in walk()) {
        let tube = walk_tube(&steps, 2.0);
        let k = interval(-5.0, 5.0);
        let whole = lbv_variation(&tube, 0.0, 1.0, &k, 5).unwrap().raw;
        let left = lbv_variation(&tube, 0.0, 0.5, &k, 4).unwrap().raw;
        let right = lbv_variation(&tube, 0.5, 1.0, &k, 4).unwrap().raw;
        prop_assert!((whole - left - right).abs() <= 1e-12);
    }

    #[test]
    fn variation_monotone_in_compact_and_lipschitz_bounded(steps in walk(), lip in 0.1f64..3.0) {
        let tube = walk_tube(&steps, lip);
        let small = lbv_variation(&tube, 0.0, 1.0, &interval(-0.2, 0.3), 5).unwrap().value;
        let big = lbv_variation(&tube, 0.0, 1.0, &interval(-5.0, 5.0), 5).unwrap().value;
        prop_assert!(small <= big + 1e-12);
        prop_assert!(big <= lip + 1e-9);
    }

    #[test]
    fn psi_steps_bounded_by_two_sided_excess(steps in walk(), ysteps in walk()) {
        let e = walk_tube(&steps, 3.0);
        let y = walk_tube(&ysteps, 1.0);
        let y = Tube::new(y.times().to_vec(), y.slices().iter().map(|s| {
            let v = s.as_body().unwrap().vertices()[0][0] + 2.0;
            interval(v, v + 0.1)
        }).collect()).unwrap();
        let k = interval(-10.0, 10.0);
        let t = e.times().to_vec();
        for w in t.windows(2) {
            let dpsi = (psi_distance(&e, &y, w[1]).unwrap() - psi_distance(&e, &y, w[0]).unwrap()).abs();
            let ee = lbv_variation(&e, w[0], w[1], &k, 0).unwrap().raw;
            let yy = hausdorff(&y.at(w[0]).unwrap(), &y.at(w[1]).unwrap()).unwrap();
            prop_assert!(dpsi <= ee + yy + 1e-12);
        }
    }
}
