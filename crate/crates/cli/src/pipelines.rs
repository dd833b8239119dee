//! One function per pipeline. Each fills a [`Report`] and the tables to write.

use crate::report::{num, nums, Report, Timings, Witness};
use crate::scenario::*;
use crate::tables::Table;
use crate::CliError;
use hjbv_core::fenchel::{conjugate, default_dual_box, effective_domain};
use hjbv_core::grid::{BoxDomain, GridFunction};
use hjbv_core::hjb::{
    comparison_experiment, eikonal_decay_value, epigraphical_residual, max_gap, value_function, vanishing_check,
    ComparisonConfig, ControlProblem, ResidualPlan, ResidualSample, Resolution, ValueField,
};
use hjbv_core::inclusion::{viable_trajectory, InclusionProblem, Trajectory, ViabilityConfig};
use hjbv_core::linalg::{dist, norm};
use hjbv_core::nft::neighboring_feasible_with;
use hjbv_core::representation::{
    build_representation, lipschitz_estimate, theta_lattice, verify_identity, IdentityPlan,
};
use hjbv_core::setgeom::{hausdorff, CompactSetRep, ConvexBody};
use hjbv_core::tubes::{cantor_tube, lbv_curve, Tube};
use hjbv_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Files written by [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub report_path: PathBuf,
    pub timings_path: PathBuf,
    pub tables: Vec<PathBuf>,
    pub artifacts: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.report.pass {
            crate::EXIT_PASS
        } else {
            crate::EXIT_FAIL
        }
    }
}

struct Ctx<'a> {
    out_dir: &'a Path,
    scenario: &'a Scenario,
    tables: Vec<Table>,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn artifact(&mut self, report: &mut Report, key: &str, name: String) -> PathBuf {
        report.metric(key, name.clone());
        let path = self.out_dir.join(name);
        self.artifacts.push(path.clone());
        path
    }
}

/// Report, tables and artifacts of a pipeline run before the report is written.
#[derive(Debug)]
pub struct Execution {
    pub report: Report,
    pub tables: Vec<Table>,
    pub artifacts: Vec<PathBuf>,
    pub timings: Timings,
}

/// Runs the scenario's pipeline. Artifacts such as value fields are written
/// to `out_dir`; the report and tables are returned.
pub fn execute(scenario: &Scenario, out_dir: &Path) -> Result<Execution, CliError> {
    let name = &scenario.name;
    let pipeline = scenario.pipeline();
    let timings_name = scenario
        .outputs
        .timings
        .clone()
        .unwrap_or_else(|| format!("{name}.timings.json"));
    let mut timings = Timings::default();
    let mut report = Report::new(name, pipeline.as_str(), &timings_name);
    report.metric("seed", scenario.seed);
    let mut ctx = Ctx {
        out_dir,
        scenario,
        tables: Vec::new(),
        artifacts: Vec::new(),
    };
    let result = match &scenario.job {
        Job::Conjugate(p) => run_conjugate(p, &mut ctx, &mut report),
        Job::Represent(p) => run_represent(p, &mut ctx, &mut report),
        Job::Value(p) => run_value(p, &mut ctx, &mut report),
        Job::CheckHjb(p) => run_check_hjb(p, &mut ctx, &mut report),
        Job::Nft(p) => run_nft(p, &mut ctx, &mut report),
        Job::Viability(p) => run_viability(p, &mut ctx, &mut report),
        Job::Lbv(p) => run_lbv(p, &mut ctx, &mut report),
        Job::Compare(p) => run_compare(p, &mut ctx, &mut report),
    };
    match result {
        Ok(()) => {}
        Err(e) if e.exit_code() == crate::EXIT_FAIL => report.fail("pipeline", e.to_string()),
        Err(e) => return Err(e),
    }
    timings.mark(pipeline.as_str());
    let names: Vec<Value> = ctx
        .tables
        .iter()
        .map(|t| Value::String(format!("{name}.{}.csv", t.name)))
        .collect();
    report.metric("tables", names);
    Ok(Execution {
        report,
        tables: ctx.tables,
        artifacts: ctx.artifacts,
        timings,
    })
}

/// Runs the scenario and writes the report, the timings and the tables under `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunOutcome, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let name = &scenario.name;
    let Execution {
        report,
        tables,
        artifacts,
        mut timings,
    } = execute(scenario, out_dir)?;
    let mut table_paths = Vec::new();
    for t in &tables {
        let path = out_dir.join(format!("{name}.{}.csv", t.name));
        t.write(&path)?;
        table_paths.push(path);
    }
    let report_name = scenario
        .outputs
        .report
        .clone()
        .unwrap_or_else(|| format!("{name}.report.json"));
    let report_path = out_dir.join(report_name);
    report.write(&report_path)?;
    timings.mark("write");
    let timings_path = out_dir.join(&report.timings);
    timings.write(&timings_path, name, &report.pipeline)?;
    Ok(RunOutcome {
        report,
        report_path,
        timings_path,
        tables: table_paths,
        artifacts,
    })
}

fn run_conjugate(p: &ConjugateParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let f = match (&p.input, &p.model, &p.at) {
        (Some(path), _, _) => GridFunction::load(path)?.0,
        (None, Some(m), Some(at)) => m.build()?.primal_slice(at.t, &at.x, at.q)?,
        _ => {
            return Err(CliError::Validation(
                "conjugate needs `input` or `model` with `at`".into(),
            ))
        }
    };
    let h_primal = f.grid().max_spacing();
    let h_dual = p.dual_spacing.unwrap_or(h_primal);
    let dual = default_dual_box(&f);
    let dual_res: Vec<usize> = dual
        .lower()
        .iter()
        .zip(dual.upper())
        .map(|(l, u)| ((u - l) / h_dual).ceil() as usize + 1)
        .collect();
    let fs = conjugate(&f, &dual, &dual_res)?;
    let fss = conjugate(&fs, f.grid().bounds(), f.grid().res())?;
    let lip = f.lipschitz_estimate();
    let bound = 2.0 * h_primal.max(fs.grid().max_spacing()) * lip;
    let mut excess = (f64::NEG_INFINITY, 0);
    let mut gap = (0.0f64, 0);
    for (i, (a, b)) in fss
        .values()
        .iter()
        .zip(f.values())
        .enumerate()
        .filter(|(_, (_, b))| b.is_finite())
    {
        if a - b > excess.0 {
            excess = (a - b, i);
        }
        if (a - b).abs() > gap.0 {
            gap = ((a - b).abs(), i);
        }
    }
    report.metric("primal_nodes", f.grid().len());
    report.metric("dual_nodes", fs.grid().len());
    report.metric(
        "finite_dual_nodes",
        fs.values().iter().filter(|v| v.is_finite()).count(),
    );
    report.metric(
        "dual_box",
        json!({ "lower": nums(dual.lower()), "upper": nums(dual.upper()) }),
    );
    report.metric_f64("lipschitz", lip);
    report.metric_f64("biconjugate_bound", bound);
    report.metric_f64("biconjugate_excess", excess.0);
    report.metric_f64("biconjugate_gap", gap.0);
    let node = |i: usize| f.grid().node(i);
    report.check("biconjugate_below", excess.0 <= bound, || {
        Witness::new(
            "biconjugate_below",
            format!("f** - f = {:.3e} exceeds {bound:.3e}", excess.0),
        )
        .point(&node(excess.1))
    });
    if p.convex {
        report.check("biconjugate_recovers", gap.0 <= bound, || {
            Witness::new(
                "biconjugate_recovers",
                format!("|f** - f| = {:.3e} exceeds {bound:.3e}", gap.0),
            )
            .point(&node(gap.1))
        });
    }
    let path = ctx.artifact(report, "conjugate", format!("{}.conjugate.gridfn", ctx.scenario.name));
    fs.save(&path, None)?;
    Ok(())
}

/// Uniform point of the closed unit ball in `dim` dimensions.
fn ball_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if norm(&p) <= 1.0 {
            return p;
        }
    }
}

fn run_represent(p: &RepresentParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let model = p.model.build()?;
    let rep = build_representation(&model, None)?;
    let mut plan = IdentityPlan::default_for(model.dim());
    if let Some(n) = p.theta_count {
        plan.theta_count = n;
    }
    plan.rep_tol = p.rep_tol;
    let id = verify_identity(&rep, &model, &plan)?;
    report.metric("model", model.name());
    report.metric_f64("identity_max_error", id.max_error);
    report.metric_f64("identity_max_scaled_error", id.max_scaled_error);
    report.metric("identity_samples", id.samples);
    report.metric("theta_count", id.theta_count);
    report.metric_f64("rep_tol", id.rep_tol);
    report.check("identity", id.pass, || {
        let w = id.witness.as_ref();
        let msg = w.map_or("no samples".into(), |w| {
            format!("H = {} but sup = {} at p = {:?}, q = {}", w.h, w.sup, w.p, w.q)
        });
        let mut out = Witness::new("identity", msg);
        if let Some(w) = w {
            out = out.at(w.t, &w.x);
        }
        out
    });

    // image of the lattice against the effective domain of H*
    let n = model.dim();
    let thetas = theta_lattice(n + 1, plan.theta_count);
    let mesh = (thetas.len() as f64).powf(-1.0 / (n + 1) as f64);
    let mut worst = (0.0f64, 0.0, Vec::new());
    let mut cover_ok = true;
    for &t in &plan.ts {
        for x in &plan.xs {
            let local = rep.local(t, x)?;
            let dom = effective_domain(&model.conjugate_slice(t, x, 1.0)?, 0.0)?;
            let img = CompactSetRep::vertex_hull(thetas.iter().map(|th| local.velocity(th)).collect())?;
            let gap = hausdorff(&img, &dom)?;
            let ratio = gap / (mesh * local.radius().max(f64::MIN_POSITIVE));
            cover_ok &= gap <= 2.0 * mesh * local.radius();
            if ratio > worst.0 {
                worst = (ratio, t, x.clone());
            }
        }
    }
    report.metric_f64("theta_mesh", mesh);
    report.metric_f64("cover_gap_over_mesh", worst.0);
    report.check("domain_cover", cover_ok, || {
        Witness::new(
            "domain_cover",
            format!("Hausdorff gap is {:.3} theta-mesh radii", worst.0),
        )
        .at(worst.1, &worst.2)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.scenario.seed);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    let mut witness = None;
    for _ in 0..p.lipschitz_pairs {
        let t = rng.gen_range(0.0..3.0);
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let (th1, th2) = (ball_point(&mut rng, n + 1), ball_point(&mut rng, n + 1));
        let mut a = rep.velocity(t, &x1, &th1)?;
        a.push(rep.cost(t, &x1, &th1)?);
        let mut b = rep.velocity(t, &x2, &th2)?;
        b.push(rep.cost(t, &x2, &th2)?);
        let gap = dist(&a, &b);
        let bound = lipschitz_estimate(&model, t, &x1, &x2, &th1, &th2, 1.0)?;
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(gap / bound);
        }
        if gap > bound + 1e-9 {
            violations += 1;
            witness.get_or_insert((t, x1.clone(), format!("gap {gap:.3e} exceeds bound {bound:.3e}")));
        }
    }
    report.metric("lipschitz_pairs", p.lipschitz_pairs);
    report.metric("lipschitz_violations", violations);
    report.metric_f64("lipschitz_worst_ratio", worst_ratio);
    report.check("lipschitz", violations == 0, || {
        let (t, x, msg) = witness.unwrap_or_default();
        Witness::new("lipschitz", msg).at(t, &x)
    });
    Ok(())
}

fn control_problem(
    model: &ModelRef,
    omega: CompactSetRep,
    vanish_tol: f64,
    t_max: Option<f64>,
) -> Result<ControlProblem, CliError> {
    let model = model.build()?;
    Ok(match t_max {
        Some(t) => ControlProblem::with_horizon(&model, omega, vanish_tol, t)?,
        None => ControlProblem::new(&model, omega, vanish_tol)?,
    })
}

/// Largest `|V_i(x) - min_c [dt c.cost + V_{i+1}(x + dt c.velocity)]|` over a
/// strided sample of nodes, with its location.
fn bellman_gap(cp: &ControlProblem, v: &ValueField) -> Result<(f64, f64, Vec<f64>), CliError> {
    let times = v.times();
    let space = v.space_grid()?;
    let b = space.bounds().clone();
    let t_stride = (times.len() / 16).max(1);
    let x_stride = (space.len() / 64).max(1);
    let mut worst = (0.0, 0.0, Vec::new());
    for i in (0..times.len() - 1).step_by(t_stride) {
        let (t, dt) = (times[i], times[i + 1] - times[i]);
        for j in (0..space.len()).step_by(x_stride) {
            let x = space.node(j);
            let stored = v.field().value(i * space.len() + j);
            let mut best = f64::INFINITY;
            if cp.omega().contains(&x) {
                for c in cp.controls(t, &x)? {
                    let y: Vec<f64> = x.iter().zip(&c.velocity).map(|(a, b)| a + dt * b).collect();
                    if cp.omega().within(&y, 1e-12) {
                        best = best.min(dt * c.cost + v.value_at(times[i + 1], &b.clamp(&y)));
                    }
                }
            }
            let gap = if stored == best { 0.0 } else { (stored - best).abs() };
            if gap > worst.0 || gap.is_nan() {
                worst = (gap, t, x);
            }
        }
    }
    Ok(worst)
}

fn run_value(p: &ValueParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let cp = control_problem(&p.model, p.omega.build()?, p.vanish_tol, p.t_max)?;
    if p.closed_form_tol.is_some() && cp.model().name() != "eikonal-decay" {
        return Err(CliError::Validation(
            "closed_form_tol needs the eikonal-decay model".into(),
        ));
    }
    let res = Resolution::from_spacing(&cp, p.dt, p.dx)?;
    let v = value_function(&cp, &res)?;
    report.metric("model", cp.model().name());
    report.metric_f64("t_max", cp.t_max());
    report.metric_f64("dt", v.dt());
    report.metric_f64("dx", v.dx());
    report.metric("t_nodes", v.t_nodes());
    report.metric("x_nodes", res.x_nodes.clone());
    report.metric("infeasible_nodes", v.infeasible_nodes());
    report.metric("lsc_fixes", v.lsc_fixes());
    report.metric_f64("tail_bound", cp.tail_bound(cp.t_max()));

    let (gap, gt, gx) = bellman_gap(&cp, &v)?;
    report.metric_f64("dp_tol", gap);
    report.metric_f64("dp_budget", p.dp_tol);
    report.check("bellman", gap <= p.dp_tol, || {
        Witness::new(
            "bellman",
            format!("recursion mismatch {gap:.3e} exceeds {:.3e}", p.dp_tol),
        )
        .at(gt, &gx)
    });

    if p.check_vanishing {
        let van = vanishing_check(&v, &cp);
        report.metric_f64("t_star", van.t_star);
        report.metric_f64("sup_at_end", van.sup_at_end);
        report.metric("horizon_ok", van.horizon_ok);
        report.check("vanishing", van.pass && van.horizon_ok, || {
            Witness::new(
                "vanishing",
                format!(
                    "sup |V(T, .)| = {:.3e}, tail bound {:.3e}",
                    van.sup_at_end, van.tail_bound_at_end
                ),
            )
        });
    }

    let probes: Vec<Value> = p
        .probes
        .iter()
        .filter(|q| q.len() == cp.dim() + 1)
        .map(|q| json!({ "t": num(q[0]), "x": nums(&q[1..]), "value": num(v.value_at(q[0], &q[1..])) }))
        .collect();
    if probes.len() != p.probes.len() {
        return Err(CliError::Validation(format!(
            "probes need {} coordinates (t, x)",
            cp.dim() + 1
        )));
    }
    report.metric("probes", probes);

    if let Some(tol) = p.closed_form_tol {
        let exact = ValueField::from_fn(
            cp.t_max(),
            &cp.omega().bounding_box(),
            &res,
            hjbv_core::hjb::Provenance::ClosedForm,
            eikonal_decay_value,
        )?;
        let (gap, at) = max_gap(&v, &exact);
        report.metric_f64("closed_form_max_gap", gap);
        report.check("closed_form", gap <= tol, || {
            let w = Witness::new(
                "closed_form",
                format!("gap {gap:.3e} to the closed form exceeds {tol:.3e}"),
            );
            match &at {
                Some((t, x)) => w.at(*t, x),
                None => w,
            }
        });
    }

    let name = ctx
        .scenario
        .outputs
        .field
        .clone()
        .unwrap_or_else(|| format!("{}.gridfn", ctx.scenario.name));
    let path = ctx.artifact(report, "field", name);
    v.save(&path)?;
    ctx.tables.push(Table::field("field", v.field())?);
    Ok(())
}

fn box_set(b: &BoxDomain) -> Result<CompactSetRep, CliError> {
    Ok(ConvexBody::from_box(b)?.into())
}

fn load_field(path: &Path) -> Result<ValueField, CliError> {
    ValueField::load(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn run_check_hjb(p: &CheckHjbParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let u = load_field(&p.field)?;
    let model = p.model.build()?;
    let omega = match &p.omega {
        Some(s) => s.build()?,
        None => box_set(u.space_grid()?.bounds())?,
    };
    let mut plan = ResidualPlan::default();
    plan.per_axis = p.per_axis.unwrap_or(plan.per_axis);
    plan.directions = p.directions.unwrap_or(plan.directions);
    plan.constant = p.constant.unwrap_or(plan.constant);
    let (rep, samples) = epigraphical_residual(&u, &model, &omega, &plan)?;
    report.metric("model", model.name());
    report.metric("provenance", u.provenance().to_string());
    report.metric("sign_convention", rep.sign_convention.clone());
    report.metric("evaluated", rep.evaluated);
    report.metric("skipped_infinite", rep.skipped_infinite);
    report.metric("skipped_empty_polar", rep.skipped_empty_polar);
    report.metric_f64("interior_max_abs", rep.interior_max_abs);
    report.metric_f64("interior_tol", rep.interior_tol);
    report.metric_f64("measured_constant", rep.measured_constant);
    report.metric_f64("boundary_min", rep.boundary_min);
    report.metric("smooth_points", rep.smooth_points);
    report.metric_f64("fd_max_disagreement", rep.fd_max_disagreement);
    report.metric_f64("fd_tol", rep.fd_tol);
    let at = |w: &Option<(f64, Vec<f64>)>, inv: &str, msg: String| match w {
        Some((t, x)) => Witness::new(inv, msg).at(*t, x),
        None => Witness::new(inv, msg),
    };
    report.check("interior_residual", rep.interior_pass, || {
        at(
            &rep.interior_witness,
            "interior_residual",
            format!("{:.3e} exceeds {:.3e}", rep.interior_max_abs, rep.interior_tol),
        )
    });
    report.check("boundary_residual", rep.boundary_pass, || {
        at(
            &rep.boundary_witness,
            "boundary_residual",
            format!("least boundary residual {:.3e} is negative", rep.boundary_min),
        )
    });
    report.check("fd_agreement", rep.fd_pass, || {
        Witness::new(
            "fd_agreement",
            format!("{:.3e} exceeds {:.3e}", rep.fd_max_disagreement, rep.fd_tol),
        )
    });
    let d = u.space_dim();
    let mut header = vec!["t".to_string()];
    header.extend(if d == 1 {
        vec!["x".to_string()]
    } else {
        (1..=d).map(|k| format!("x{k}")).collect()
    });
    header.extend(["residual", "boundary"].map(String::from));
    let mut table = Table {
        name: "residuals".into(),
        header,
        rows: Vec::new(),
    };
    for s in &samples {
        if let ResidualSample::Evaluated(n) = s {
            let mut row = vec![n.t];
            row.extend(&n.x);
            row.push(n.residual);
            row.push(if n.boundary { 1.0 } else { 0.0 });
            table.rows.push(row);
        }
    }
    ctx.tables.push(table);
    Ok(())
}

fn run_nft(p: &NftParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let cd = p.constraint.load()?.build()?;
    let xhat = Trajectory::load(&p.trajectory)?;
    let delta = p.delta.unwrap_or(xhat.end().0 - xhat.start().0);
    let run = match neighboring_feasible_with(&cd, &xhat, p.rho, delta, p.k) {
        Ok(run) => run,
        Err(Error::Failure(msg)) => {
            report.fail("interior", msg);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let c = &run.constants;
    report.metric_f64("beta", c.beta);
    report.metric_f64("beta_run", run.beta_run);
    report.metric_f64("delta", c.delta);
    report.metric_f64("delta_max", c.delta_max);
    report.metric_f64("theta", c.theta);
    report.metric_f64("k", c.k);
    report.metric_f64("rho", p.rho);
    report.metric_f64("outward_measure", run.outward_measure);
    report.metric_f64("substituted_measure", run.substituted_measure);
    report.metric_f64("tau", run.tau);
    report.metric("early_exit", run.early_exit);
    report.metric_f64("min_margin", run.min_margin());
    report.metric_f64("sup_deviation", run.sup_deviation);
    report.metric_f64("w11_deviation", run.w11_deviation);
    report.metric(
        "margins",
        run.margins
            .iter()
            .map(|(t, m)| json!([num(*t), num(*m), num(-*m)]))
            .collect::<Vec<_>>(),
    );
    report.check("interior", run.min_margin() > 0.0, || {
        Witness::new("interior", format!("least margin {:.3e} after t0", run.min_margin()))
    });
    let bound = run.beta_run.max(c.beta) * p.rho;
    report.check("linear_distance", run.sup_deviation <= bound * (1.0 + 1e-9), || {
        Witness::new(
            "linear_distance",
            format!(
                "sup |xhat - x| = {:.3e} exceeds beta rho = {bound:.3e}",
                run.sup_deviation
            ),
        )
    });
    if run.early_exit {
        report.check("early_exit_identity", run.x == xhat, || {
            Witness::new("early_exit_identity", "early exit changed the trajectory")
        });
    }
    let e = &run.estimates;
    for (name, est) in [
        ("substitution", &e.substitution),
        ("defect", &e.defect),
        ("inward", &e.inward),
        ("margin", &e.margin),
        ("linear", &e.linear),
    ] {
        report.metric(
            &format!("estimate_{name}"),
            json!({ "worst_excess": num(est.worst_excess), "checked": est.checked }),
        );
        report.check(&format!("estimate_{name}"), est.pass, || {
            let w = Witness::new(&format!("estimate_{name}"), format!("excess {:.3e}", est.worst_excess));
            match est.witness_t {
                Some(t) => Witness { t: Some(t), ..w },
                None => w,
            }
        });
    }
    let mut table = Table::new("margins", &["t", "margin", "signed_distance"]);
    table.rows = run.margins.iter().map(|(t, m)| vec![*t, *m, -*m]).collect();
    ctx.tables.push(table);
    let path = ctx.artifact(report, "trajectory", format!("{}.trajectory.csv", ctx.scenario.name));
    run.x.save(&path)?;
    Ok(())
}

fn load_tube(src: &TubeSource) -> Result<Tube, CliError> {
    Ok(match src {
        TubeSource::File(f) => Tube::load(f).map_err(|e| CliError::Validation(format!("{}: {e}", f.display())))?,
        TubeSource::Cantor { knots } => cantor_tube(*knots)?,
    })
}

fn run_viability(p: &ViabilityParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let tube = load_tube(&p.tube)?;
    let prob = InclusionProblem::constant(ConvexBody::new(p.velocities.clone())?);
    let (lo, hi) = tube.range();
    let (t0, t1) = (p.t0.unwrap_or(lo), p.t1.unwrap_or(hi));
    let cfg = ViabilityConfig {
        step: p.step,
        viab_tol: p.viab_tol,
        tang_tol: p.tang_tol,
        ..ViabilityConfig::default()
    };
    let run = viable_trajectory(&prob, &tube, t0, &p.x0, t1, tube.times(), &cfg)?;
    let max_dist = run.node_distances.iter().copied().fold(0.0, f64::max);
    report.metric("nodes", run.node_times.len());
    report.metric_f64("max_node_distance", max_dist);
    report.metric_f64("total_jump", run.total_jump);
    report.metric_f64("jump_budget", run.jump_budget);
    report.metric_f64("tube_modulus", run.tube_modulus);
    report.metric_f64("max_tangential_gap", run.max_tangential_gap);
    report.metric_f64("filippov_defect", run.filippov_defect);
    let worst = run
        .node_distances
        .iter()
        .enumerate()
        .fold((0, 0.0), |w, (i, d)| if *d > w.1 { (i, *d) } else { w });
    report.check("viable_at_nodes", max_dist <= p.viab_tol, || {
        let t = run.node_times[worst.0];
        Witness::new("viable_at_nodes", format!("distance {max_dist:.3e} to the tube")).at(t, &run.trajectory.at(t))
    });
    report.check("jump_budget", run.within_budget(), || {
        Witness::new(
            "jump_budget",
            format!("total jump {:.3e} exceeds {:.3e}", run.total_jump, run.jump_budget),
        )
    });
    let mut table = Table::new("node_distances", &["t", "distance"]);
    table.rows = run
        .node_times
        .iter()
        .zip(&run.node_distances)
        .map(|(t, d)| vec![*t, *d])
        .collect();
    ctx.tables.push(table);
    let path = ctx.artifact(report, "trajectory", format!("{}.trajectory.csv", ctx.scenario.name));
    run.trajectory.save(&path)?;
    Ok(())
}

fn run_lbv(p: &LbvParams, ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let tube = load_tube(&p.tube)?;
    let (lo, hi) = tube.range();
    let (a, b) = (p.a.unwrap_or(lo), p.b.unwrap_or(hi));
    let compact = match &p.compact {
        Some(c) => c.build()?,
        None => tube.default_compact(),
    };
    let curve = lbv_curve(&tube, a, b, &compact, p.depth)?;
    let last = &curve.last().expect("depth 0 is always present").1;
    report.metric("knots", tube.len());
    report.metric("depth", p.depth);
    report.metric_f64("variation", last.value);
    report.metric_f64("raw", last.raw);
    report.metric("empty_terms", last.empty_terms);
    report.metric(
        "curve",
        curve.iter().map(|(d, v)| json!([d, num(v.value)])).collect::<Vec<_>>(),
    );
    let monotone = curve.windows(2).all(|w| w[1].1.value >= w[0].1.value);
    report.check("monotone_refinement", monotone, || {
        Witness::new("monotone_refinement", "variation decreased under refinement")
    });
    if let (Some(expected), Some(tol)) = (p.expected, p.expected_tol) {
        report.check("expected_variation", (last.value - expected).abs() <= tol, || {
            Witness::new(
                "expected_variation",
                format!("variation {} differs from {expected} by more than {tol}", last.value),
            )
        });
    }
    let mut table = Table::new("lbv", &["depth", "variation"]);
    table.rows = curve.iter().map(|(d, v)| vec![f64::from(*d), v.value]).collect();
    ctx.tables.push(table);
    Ok(())
}

fn run_compare(p: &CompareParams, _ctx: &mut Ctx, report: &mut Report) -> Result<(), CliError> {
    let low = load_field(&p.low)?;
    let high = load_field(&p.high)?;
    let omega = match &p.omega {
        Some(s) => s.build()?,
        None => box_set(low.space_grid()?.bounds())?,
    };
    let cp = control_problem(&p.model, omega, p.vanish_tol, None)?;
    let mut cfg = ComparisonConfig::default();
    cfg.comparison_tol = p.comparison_tol.unwrap_or(cfg.comparison_tol);
    let rep = match comparison_experiment(&low, &high, &cp, &cfg) {
        Ok(rep) => rep,
        Err(Error::Config(msg)) => {
            report.fail("preconditions", msg);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    report.metric_f64("gap", rep.gap);
    report.metric_f64("comparison_tol", cfg.comparison_tol);
    let pre = &rep.preconditions;
    report.metric(
        "preconditions",
        json!({
            "residual_low": pre.residual_low.pass,
            "residual_high": pre.residual_high.pass,
            "vanishing_low": pre.vanishing_low.pass,
            "vanishing_high": pre.vanishing_high.pass,
        }),
    );
    report.check("preconditions", pre.pass, || {
        Witness::new("preconditions", "a field fails the residual or vanishing precondition")
    });
    for leg in &rep.legs {
        report.metric(
            &format!("leg_{}", leg.leg),
            json!({ "checked": leg.checked, "worst_excess": num(leg.worst_excess) }),
        );
        report.check(&format!("leg_{}", leg.leg), leg.pass, || {
            let w = leg.witness.as_ref();
            let msg = w.map_or_else(|| "no arcs checked".into(), |w| w.detail.clone());
            let out = Witness::new(&format!("leg_{}", leg.leg), msg);
            match w {
                Some(w) => out.at(w.t, &w.x),
                None => out,
            }
        });
    }
    Ok(())
}
