//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use hjbv_cli::{run, Scenario};
use hjbv_core::fenchel::{conjugate, conjugate_with, default_dual_box, effective_domain, DualWindow, HamiltonianModel};
use hjbv_core::grid::{BoxDomain, Grid, GridFunction};
use hjbv_core::hjb::*;
use hjbv_core::inclusion::*;
use hjbv_core::nft::{neighboring_feasible, ConstraintData, ConstraintSpec};
use hjbv_core::representation::*;
use hjbv_core::setgeom::{hausdorff, CompactSetRep, ConvexBody};
use hjbv_core::tubes::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn core<T>(r: hjbv_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

fn line(lo: f64, hi: f64, res: usize) -> Grid {
    Grid::new(BoxDomain::new(vec![lo], vec![hi]).unwrap(), vec![res]).unwrap()
}

fn interval(a: f64, b: f64) -> ConvexBody {
    ConvexBody::interval(a, b).unwrap()
}

fn uniform(n: usize, t1: f64) -> Vec<f64> {
    (0..n).map(|k| t1 * k as f64 / (n - 1) as f64).collect()
}

fn fenchel() -> Outcome {
    let h = 0.01;
    let convex: [(&str, fn(f64) -> f64); 3] = [
        ("kinked square", |p| 0.5 * p * p + (p - 0.3).abs()),
        ("abs", f64::abs),
        ("quartic", |p| p.powi(4) / 4.0 + p),
    ];
    let mut worst = 0.0f64;
    for (name, f) in convex {
        let g = core(GridFunction::from_fn(line(-2.0, 2.0, 401), |p| f(p[0])))?;
        let lip = g.lipschitz_estimate();
        let dual = default_dual_box(&g);
        let res = ((dual.upper()[0] - dual.lower()[0]) / h).ceil() as usize + 1;
        let gs = core(conjugate(&g, &dual, &[res]))?;
        let gss = core(conjugate(&gs, g.grid().bounds(), g.grid().res()))?;
        for (a, b) in gss.values().iter().zip(g.values()) {
            ensure!(
                (a - b).abs() <= 2.0 * h * lip,
                "{name}: biconjugate {a} vs {b}, bound {}",
                2.0 * h * lip
            );
            worst = worst.max((a - b).abs() / (2.0 * h * lip));
        }
    }

    let norm = core(GridFunction::from_fn(line(-2.0, 2.0, 4001), |p| p[0].abs()))?;
    let cells = 301;
    let cell = 3.0 / (cells - 1) as f64;
    let ns = core(conjugate(
        &norm,
        &BoxDomain::new(vec![-1.5], vec![1.5]).unwrap(),
        &[cells],
    ))?;
    let zeros: Vec<f64> = ns
        .grid()
        .nodes()
        .zip(ns.values())
        .filter(|(_, v)| v.abs() <= 1e-12)
        .map(|(p, _)| p[0])
        .collect();
    let (lo, hi) = (
        zeros.iter().copied().fold(f64::INFINITY, f64::min),
        zeros.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    ensure!(
        (lo + 1.0).abs() <= cell && (hi - 1.0).abs() <= cell,
        "ball indicator zero set [{lo}, {hi}]"
    );
    let outside = ns
        .grid()
        .nodes()
        .zip(ns.values())
        .filter(|(p, _)| p[0].abs() >= 1.0 + cell)
        .all(|(_, v)| *v > 0.0);
    ensure!(outside, "ball indicator not positive outside the unit ball");

    let mut r = rng();
    let dual = BoxDomain::new(vec![-5.0], vec![5.0]).unwrap();
    for pair in 0..20 {
        let f: Vec<f64> = (0..41).map(|_| r.gen_range(-3.0..3.0)).collect();
        let g: Vec<f64> = f.iter().map(|v| v + r.gen_range(0.0..1.0)).collect();
        let fs = core(conjugate_with(
            &core(GridFunction::new(line(-1.0, 1.0, 41), f))?,
            &dual,
            &[101],
            DualWindow::Restricted,
        ))?;
        let gs = core(conjugate_with(
            &core(GridFunction::new(line(-1.0, 1.0, 41), g))?,
            &dual,
            &[101],
            DualWindow::Restricted,
        ))?;
        ensure!(
            fs.values().iter().zip(gs.values()).all(|(a, b)| a >= b),
            "order reversal fails on pair {pair}"
        );
    }
    Ok(format!(
        "biconjugate gap at most {worst:.3} of 2h*Lip, ball zero set [{lo:.3}, {hi:.3}], 20/20 order pairs"
    ))
}

fn representation() -> Outcome {
    let m = HamiltonianModel::eikonal_decay();
    let rep = core(build_representation(&m, None))?;
    let mut plan = IdentityPlan::default_for(1);
    plan.theta_count = 256;
    let id = core(verify_identity(&rep, &m, &plan))?;
    ensure!(
        id.pass && id.max_scaled_error <= 1e-6,
        "identity scaled error {}",
        id.max_scaled_error
    );

    let thetas = theta_lattice(2, 256);
    let mesh = 1.0 / (thetas.len() as f64).sqrt();
    let mut worst_cover = 0.0f64;
    for (t, x) in [(0.0, 0.5), (1.0, -1.5), (2.0, 2.0), (0.3, 0.0)] {
        let local = core(rep.local(t, &[x]))?;
        let image = core(CompactSetRep::vertex_hull(
            thetas.iter().map(|th| local.velocity(th)).collect(),
        ))?;
        let dom = core(effective_domain(&core(m.conjugate_slice(t, &[x], 1.0))?, 1e12))?;
        let gap = core(hausdorff(&image, &dom))?;
        ensure!(
            gap <= 2.0 * mesh,
            "cover gap {gap} at ({t}, {x}) exceeds {}",
            2.0 * mesh
        );
        worst_cover = worst_cover.max(gap / mesh);
    }

    let mut r = rng();
    let unit = |r: &mut ChaCha8Rng| {
        let (a, s): (f64, f64) = (r.gen_range(0.0..std::f64::consts::TAU), r.gen_range(0.0..1.0));
        vec![s.sqrt() * a.cos(), s.sqrt() * a.sin()]
    };
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let t = r.gen_range(0.0..3.0);
        let (x1, x2) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let (th1, th2) = (unit(&mut r), unit(&mut r));
        let f1 = core(rep.velocity(t, &[x1], &th1))?[0];
        let f2 = core(rep.velocity(t, &[x2], &th2))?[0];
        let c1 = core(rep.cost(t, &[x1], &th1))?;
        let c2 = core(rep.cost(t, &[x2], &th2))?;
        let gap = (f1 - f2).hypot(c1 - c2);
        let bound = core(lipschitz_estimate(&m, t, &[x1], &[x2], &th1, &th2, 1.0))?;
        ensure!(gap <= bound + 1e-9, "Lipschitz bound {bound} violated by {gap}");
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    Ok(format!(
        "identity error {:.1e} over {} samples, cover gap {worst_cover:.2} meshes, Lipschitz ratio {worst_ratio:.3} on 100 pairs",
        id.max_scaled_error, id.samples
    ))
}

fn decay() -> InclusionProblem {
    InclusionProblem::new(1, |_, x| ConvexBody::point(vec![-x[0]]), |_| 1.0, |_, _| 1.0)
}

fn gronwall_filippov() -> Outcome {
    let mut r = rng();
    let mut checked = 0;
    for poly in 0..50 {
        let (psi0, alpha, mut beta) = (r.gen_range(0.0..2.0), r.gen_range(0.0..2.0), r.gen_range(0.0..2.0));
        let n = 40;
        let h = 2.0 / n as f64;
        let mut psi = vec![psi0];
        for _ in 0..n {
            let last = psi[psi.len() - 1];
            psi.push(last + h * (alpha * last + beta - r.gen_range(0.0..3.0)));
        }
        // Measured Dini bound: slope <= alpha * psi + beta at both ends of every piece.
        for w in psi.windows(2) {
            let slope = (w[1] - w[0]) / h;
            beta = beta.max(slope - alpha * w[0].min(w[1]));
        }
        let env = core(gronwall_envelope(psi0, alpha, beta, 0.0, 2.0))?;
        for (i, w) in psi.windows(2).enumerate() {
            for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let t = (i as f64 + s) * h;
                let value = w[0] + s * (w[1] - w[0]);
                ensure!(
                    value <= env.eval(t) + 1e-12,
                    "polygon {poly} exceeds its envelope at t={t}"
                );
                checked += 1;
            }
        }
    }

    let step = 1e-3;
    let mut worst = f64::NEG_INFINITY;
    for eps in [0.01, 0.05, 0.1] {
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * step).collect();
        let states = times
            .iter()
            .map(|t| vec![(-t).exp() + eps * (1.0 - (-t).exp())])
            .collect();
        let y = core(Trajectory::new(times, states))?;
        let fc = core(filippov_correct(&decay(), &y))?;
        let gap = core(y.w11_distance(&fc.x))?;
        ensure!(
            gap <= fc.bound + 10.0 * step,
            "eps={eps}: gap {gap} exceeds {}",
            fc.bound
        );
        worst = worst.max(gap - fc.bound);
    }
    Ok(format!(
        "50 polygons, {checked} points dominated; Filippov worst gap minus bound {worst:.2e}"
    ))
}

fn tubes() -> Outcome {
    let disk = |r: f64| -> CompactSetRep { ConvexBody::ball(&[0.0, 0.0], r, 64).unwrap().into() };
    let growing = core(Tube::from_fn(uniform(65, 1.0), |t| Ok(disk(1.0 + t))))?;
    let v = core(lbv_variation(&growing, 0.0, 1.0, &disk(3.0), 6))?.value;
    ensure!((v - 1.0).abs() <= 1e-2, "growing disks LBV {v}");

    let cantor = core(cantor_tube(129))?;
    let k = cantor.default_compact();
    let c = core(lbv_variation(&cantor, 0.0, 1.0, &k, DEFAULT_DEPTH))?.value;
    ensure!((c - 1.0).abs() <= 5e-2, "Cantor LBV {c}");
    let adapted = core(cantor_tube_adapted(12))?;
    let mut min_modulus = f64::INFINITY;
    for kk in 0..=7 {
        let m = core(absolute_continuity_modulus(&adapted, 0.0, 1.0, &k, 0.5f64.powi(kk)))?;
        ensure!(m >= 0.4, "AC modulus {m} at measure 2^-{kk}");
        min_modulus = min_modulus.min(m);
    }

    let mut r = rng();
    let walk = |r: &mut ChaCha8Rng, lip: f64, width: f64, offset: f64| {
        let n = 32;
        let mut c = vec![offset];
        for _ in 0..n {
            let last = c[c.len() - 1];
            c.push(last + lip * r.gen_range(-1.0..1.0) / n as f64);
        }
        Tube::new(
            uniform(n + 1, 1.0),
            c.iter().map(|ci| interval(*ci, ci + width).into()).collect(),
        )
    };
    let compact: CompactSetRep = interval(-10.0, 10.0).into();
    for pair in 0..20 {
        let (le, ly) = (r.gen_range(0.1..3.0), r.gen_range(0.1..2.0));
        let e = core(walk(&mut r, le, 0.5, 0.0))?;
        let y = core(walk(&mut r, ly, 0.1, 2.0))?;
        let rep = core(psi_bv_report(&e, &y, 0.0, 1.0, 5, &compact, |a, b| ly * (b - a)))?;
        ensure!(
            rep.pass,
            "psi variation bound violated on pair {pair}: {:?}",
            rep.rows.iter().find(|r| !r.pass)
        );
    }
    Ok(format!(
        "disks {v:.4}, Cantor {c:.4}, AC modulus >= {min_modulus:.3} for k <= 7, 20/20 psi pairs"
    ))
}

fn eikonal_value(t: f64, x: f64) -> f64 {
    eikonal_decay_value(t, &[x])
}

fn viability() -> Outcome {
    let knots: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let tube = core(Tube::from_fn(knots.clone(), |t| Ok(interval(t, 100.0).into())))?;
    let prob = InclusionProblem::constant(interval(0.0, 2.0));
    let run = core(viable_trajectory(
        &prob,
        &tube,
        0.0,
        &[0.0],
        1.0,
        &knots,
        &ViabilityConfig::default(),
    ))?;
    ensure!(
        run.node_distances.iter().all(|d| *d == 0.0),
        "node distances {:?}",
        run.node_distances
    );

    let grid = line(-2.0, 2.0, 161);
    let fam: Vec<(f64, GridFunction)> = knots
        .iter()
        .map(|&t| {
            (
                t,
                GridFunction::from_fn(grid.clone(), |x| eikonal_value(t, x[0])).unwrap(),
            )
        })
        .collect();
    let epi = core(epi_tube(&fam, 3.0))?;
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
    let mut worst = f64::INFINITY;
    for x0 in [1.0, -0.6, 1.8, 0.0] {
        let run = core(viable_trajectory(
            &phi_hat,
            &epi,
            0.0,
            &[x0, eikonal_value(0.0, x0)],
            1.0,
            &knots,
            &cfg,
        ))?;
        let traj = &run.trajectory;
        for &t in &knots {
            let i = traj
                .times()
                .iter()
                .position(|s| (s - t).abs() < 1e-12)
                .ok_or(format!("knot {t} missing"))?;
            let s = traj.state(i);
            let slack = s[1] - eikonal_value(t, s[0]);
            ensure!(
                slack >= -1e-2,
                "x0={x0}, t={t}: z={} below V={}",
                s[1],
                eikonal_value(t, s[0])
            );
            worst = worst.min(slack);
        }
    }
    Ok(format!(
        "halfline node distances all 0, epigraph slack z - V >= {worst:.2e}"
    ))
}

fn nft() -> Outcome {
    let spec = ConstraintSpec {
        set: vec![vec![0.0], vec![1000.0]],
        velocities: vec![vec![-1.0], vec![1.0]],
        drift: 0.0,
        eta: 1.0,
        r: 1.0,
        m: 2.0,
        boundary_speed: None,
    };
    let cd: ConstraintData = core(spec.build())?;
    let polygon = |f: &dyn Fn(f64) -> f64, t1: f64, n: usize| {
        let times: Vec<f64> = (0..=n).map(|i| t1 * i as f64 / n as f64).collect();
        let states = times.iter().map(|&t| vec![f(t)]).collect();
        Trajectory::new(times, states)
    };
    let rho = 0.5;
    let xhat = core(polygon(&|t| -t, 0.5, 512))?;
    let run = core(neighboring_feasible(&cd, &xhat, rho, 0.5))?;
    ensure!(!run.early_exit, "unexpected early exit");
    ensure!(run.min_margin() > 0.0, "margin {} on (t0, t1]", run.min_margin());
    ensure!(
        run.x.states().iter().skip(1).all(|s| s[0] > 0.0),
        "output leaves the interior"
    );
    ensure!(
        run.sup_deviation <= run.beta_run * rho + 1e-9,
        "deviation {} > {} rho",
        run.sup_deviation,
        run.beta_run
    );
    ensure!(run.estimates.pass(), "estimates {:?}", run.estimates);

    let inside = core(polygon(&|t| 0.6 + 0.1 * t, 1.0, 50))?;
    let early = core(neighboring_feasible(&cd, &inside, 0.1, 1.0))?;
    ensure!(
        early.early_exit && early.x == inside,
        "early exit did not return the input"
    );
    Ok(format!(
        "min margin {:.3e}, sup deviation {:.3} <= beta_run*rho {:.3}, estimates hold, early exit identical",
        run.min_margin(),
        run.sup_deviation,
        run.beta_run * rho
    ))
}

/// Independent semi-Lagrangian DP for the eikonal-decay problem: `|x'| <= 1`,
/// running cost `e^{-t}|x|`, state kept in `[-2, 2]`, zero terminal value.
fn brute_force_value(t_max: f64, h: f64) -> (Vec<f64>, f64) {
    let nx = (4.0 / h).round() as usize + 1;
    let nt = (t_max / h).ceil() as usize;
    let dt = t_max / nt as f64;
    let xs: Vec<f64> = (0..nx).map(|j| -2.0 + 4.0 * j as f64 / (nx - 1) as f64).collect();
    let dx = 4.0 / (nx - 1) as f64;
    let velocities: Vec<f64> = (0..21).map(|k| -1.0 + 0.1 * k as f64).collect();
    let mut next = vec![0.0; nx];
    for i in (0..nt).rev() {
        let t = i as f64 * dt;
        let interp = |v: &[f64], y: f64| {
            let s = ((y + 2.0) / dx).clamp(0.0, (nx - 1) as f64);
            let j = (s.floor() as usize).min(nx - 2);
            let w = s - j as f64;
            (1.0 - w) * v[j] + w * v[j + 1]
        };
        next = xs
            .iter()
            .map(|&x| {
                let best = velocities
                    .iter()
                    .map(|v| x + dt * v)
                    .filter(|y| y.abs() <= 2.0 + 1e-12)
                    .map(|y| interp(&next, y))
                    .fold(f64::INFINITY, f64::min);
                dt * (-t).exp() * x.abs() + best
            })
            .collect();
    }
    (next, dx)
}

fn hjb() -> Outcome {
    let cp = core(ControlProblem::new(
        &HamiltonianModel::eikonal_decay(),
        core(CompactSetRep::vertex_hull(vec![vec![-2.0], vec![2.0]]))?,
        DEFAULT_VANISH_TOL,
    ))?;
    let v = core(value_function(&cp, &core(Resolution::from_spacing(&cp, 0.01, 0.01))?))?;
    let v01 = v.value_at(0.0, &[1.0]);
    let exact = (-1.0f64).exp();
    ensure!((v01 - exact).abs() <= 1e-2, "V(0,1) = {v01}, closed form {exact}");

    let (oracle, dx) = brute_force_value(cp.t_max(), 0.005);
    let o01 = oracle[(3.0 / dx).round() as usize];
    ensure!(
        (v01 - o01).abs() <= 1e-2,
        "V(0,1) = {v01}, double-resolution oracle {o01}"
    );

    let res = Resolution {
        t_nodes: v.t_nodes(),
        x_nodes: vec![v.field().grid().res()[1]],
    };
    let alpha = core(alpha_field(&cp, &res))?;
    let (alpha_gap, _) = max_gap(&v, &alpha);
    ensure!(alpha_gap <= 1e-2, "alpha/V gap {alpha_gap}");

    let (residual, _) = core(epigraphical_residual(
        &v,
        cp.model(),
        cp.omega(),
        &ResidualPlan::default(),
    ))?;
    let limit = 3.0 * (v.dt() + v.dx());
    ensure!(
        residual.interior_max_abs <= limit,
        "interior residual {} > {limit}",
        residual.interior_max_abs
    );

    let vanish = vanishing_check(&v, &cp);
    ensure!(vanish.pass, "vanishing check fails, t* = {}", vanish.t_star);

    let same = core(comparison_experiment(&v, &v, &cp, &ComparisonConfig::default()))?;
    ensure!(
        same.pass && same.gap <= 2e-2,
        "self-comparison pass={} gap={}",
        same.pass,
        same.gap
    );
    let shifted = core(v.shifted(0.05))?;
    let bumped = core(comparison_experiment(&v, &shifted, &cp, &ComparisonConfig::default()))?;
    ensure!(
        !bumped.pass && (bumped.gap - 0.05).abs() <= 1e-9,
        "+0.05 shift not detected, gap {}",
        bumped.gap
    );
    Ok(format!(
        "V(0,1) {v01:.5} (exact {exact:.5}, oracle {o01:.5}), alpha gap {alpha_gap:.2e}, residual {:.3} <= {limit:.2}, t* {:.2}, self gap {:.1e}, shift gap {:.3}",
        residual.interior_max_abs, vanish.t_star, same.gap, bumped.gap
    ))
}

fn determinism() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    ensure!(!paths.is_empty(), "no scenarios in {}", dir.display());
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    for path in &paths {
        let scenario = Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut hashes = Vec::new();
        for round in ["first", "second"] {
            let outcome = run(&scenario, &out.path().join(round)).map_err(|e| format!("{}: {e}", path.display()))?;
            ensure!(outcome.report.pass, "{} fails", scenario.name);
            let bytes = std::fs::read(&outcome.report_path).map_err(|e| e.to_string())?;
            hashes.push(Sha256::digest(bytes));
        }
        ensure!(hashes[0] == hashes[1], "{} reports differ between runs", scenario.name);
    }
    Ok(format!(
        "{} scenarios, reports hash-identical across reruns",
        paths.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("fenchel", fenchel),
        ("representation", representation),
        ("gronwall-filippov", gronwall_filippov),
        ("tubes", tubes),
        ("viability", viability),
        ("nft", nft),
        ("hjb", hjb),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
