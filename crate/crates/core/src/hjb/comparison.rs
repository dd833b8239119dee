use super::residual::{epigraphical_residual, ResidualPlan, ResidualReport};
use super::{max_gap, vanishing_check, ControlProblem, ValueField, VanishingReport};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::inclusion::{viable_trajectory, Trajectory, ViabilityConfig};
use crate::linalg::axpy;
use crate::nft::{neighboring_feasible, ConstraintData};
use crate::tubes::epi_tube;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonConfig {
    pub epsilon_schedule: Vec<f64>,
    /// Initial points `(t0, x0)`; empty means points along the first axis of Omega's box.
    pub starts: Vec<(f64, Vec<f64>)>,
    /// Length of each replayed arc.
    pub window: f64,
    /// Spacing of the epigraph tube knots.
    pub knot_spacing: f64,
    /// Space nodes per axis of the resampled epigraph slices.
    pub tube_nodes: usize,
    pub step: f64,
    pub viab_tol: f64,
    pub tang_tol: f64,
    pub comparison_tol: f64,
    pub nft_eta: f64,
    pub nft_r: f64,
    pub nft_m: f64,
    pub residual: ResidualPlan,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            epsilon_schedule: vec![0.1, 0.05, 0.02],
            starts: Vec::new(),
            window: 1.0,
            knot_spacing: 0.05,
            tube_nodes: 81,
            step: 1e-2,
            viab_tol: 1e-3,
            tang_tol: 0.25,
            comparison_tol: 2e-2,
            nft_eta: 0.5,
            nft_r: 0.5,
            nft_m: 2.0,
            residual: ResidualPlan::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LegWitness {
    pub t: f64,
    pub x: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LegReport {
    pub leg: String,
    pub pass: bool,
    pub checked: usize,
    /// Largest violation of the leg's inequality (nonpositive when it holds).
    pub worst_excess: f64,
    pub witness: Option<LegWitness>,
}

impl LegReport {
    fn new(leg: &str) -> Self {
        Self {
            leg: leg.into(),
            pass: true,
            checked: 0,
            worst_excess: f64::NEG_INFINITY,
            witness: None,
        }
    }

    fn record(&mut self, excess: f64, t: f64, x: &[f64], detail: String) {
        self.checked += 1;
        if excess > self.worst_excess {
            self.worst_excess = excess;
            self.witness = Some(LegWitness {
                t,
                x: x.to_vec(),
                detail,
            });
        }
        if !(excess <= 0.0) {
            self.pass = false;
        }
    }

    fn fail(&mut self, t: f64, x: &[f64], detail: String) {
        self.checked += 1;
        self.pass = false;
        self.worst_excess = f64::INFINITY;
        self.witness = Some(LegWitness {
            t,
            x: x.to_vec(),
            detail,
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Preconditions {
    pub residual_low: ResidualReport,
    pub residual_high: ResidualReport,
    pub vanishing_low: VanishingReport,
    pub vanishing_high: VanishingReport,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub preconditions: Preconditions,
    pub legs: Vec<LegReport>,
    pub gap: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn leg(&self, name: &str) -> Option<&LegReport> {
        self.legs.iter().find(|l| l.leg == name)
    }
}

fn default_starts(cp: &ControlProblem) -> Vec<(f64, Vec<f64>)> {
    let b = cp.omega().bounding_box();
    let c = b.center();
    let half = 0.5 * (b.upper()[0] - b.lower()[0]);
    [0.5, -0.25, 0.9]
        .iter()
        .map(|s| {
            let mut x = c.clone();
            x[0] += s * half;
            (0.0, x)
        })
        .filter(|(_, x)| cp.omega().contains(x))
        .collect()
}

/// `int H*(s, x(s), x'(s), 1) ds` by the left rule.
fn running_cost(cp: &ControlProblem, x: &Trajectory, n: usize) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..x.len() - 1 {
        let local = cp.representation().local(x.times()[i], &x.state(i)[..n])?;
        acc += x.step(i) * local.h_star(&x.derivative(i)[..n]);
    }
    Ok(acc)
}

/// Leg A: viable arcs of the epigraph of `whigh` under the augmented dynamics.
fn leg_a(whigh: &ValueField, cp: &ControlProblem, cfg: &ComparisonConfig, starts: &[(f64, Vec<f64>)]) -> LegReport {
    let mut leg = LegReport::new("A");
    let n = cp.dim();
    let aug = cp.augmented_problem();
    let space = cp.omega().bounding_box();
    let vcfg = ViabilityConfig {
        step: Some(cfg.step),
        viab_tol: cfg.viab_tol,
        tang_tol: cfg.tang_tol,
        jump_slack: 1.0,
    };
    for (t0, x0) in starts {
        let t1 = (t0 + cfg.window).min(whigh.t_max() - whigh.dt());
        let attempt = || -> Result<(f64, String)> {
            let coarse = Grid::new(space.clone(), vec![cfg.tube_nodes; n])?;
            let mut slices = Vec::new();
            let mut t = *t0;
            loop {
                let (ts, s) = whigh.slice_at(t)?;
                let r = GridFunction::from_fn(coarse.clone(), |x| s.interpolate(x))?;
                if slices.last().map_or(true, |(prev, _): &(f64, GridFunction)| ts > *prev) {
                    slices.push((ts, r));
                }
                if t >= t1 - 1e-12 {
                    break;
                }
                t = (t + cfg.knot_spacing).min(t1);
            }
            let (ta, tb) = (slices[0].0, slices[slices.len() - 1].0);
            let cap = slices
                .iter()
                .map(|(_, s)| s.max_finite())
                .fold(f64::NEG_INFINITY, f64::max)
                + 0.1;
            let tube = epi_tube(&slices, cap)?;
            let z0 = whigh.value_at(ta, x0).max(slices[0].1.interpolate(x0));
            let mut y0 = x0.clone();
            y0.push(z0);
            let knots: Vec<f64> = slices.iter().map(|s| s.0).collect();
            let run = viable_trajectory(&aug, &tube, ta, &y0, tb, &knots, &vcfg)?;
            let traj = &run.trajectory;
            let cost = running_cost(cp, traj, n)?;
            let (_, end) = traj.end();
            let lhs = whigh.value_at(ta, x0);
            let rhs = cost + whigh.value_at(tb, &end[..n]);
            let floor = tube.slices().iter().map(|s| s.resolution_floor()).fold(0.0, f64::max);
            let tol = run.total_jump + cfg.viab_tol + floor;
            Ok((
                rhs - lhs - tol,
                format!("whigh(t0,x0) = {lhs:.6}, cost + whigh(t1,x1) = {rhs:.6}, tolerance {tol:.3e}"),
            ))
        };
        match attempt() {
            Ok((excess, detail)) => leg.record(excess, *t0, x0, detail),
            Err(e) => leg.fail(*t0, x0, format!("no viable epigraph arc: {e}")),
        }
    }
    leg
}

/// Greedy arc on `wlow`: each step takes the control minimizing
/// `dt cost + wlow(t + dt, x + dt v)` among steps staying in Omega.
fn rollout(wlow: &ValueField, cp: &ControlProblem, t0: f64, x0: &[f64], t1: f64) -> Result<Trajectory> {
    let dt = wlow.dt();
    let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let x = &states[i];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for c in cp.controls(t, x)? {
            let y = axpy(x, dt, &c.velocity);
            if !cp.omega().within(&y, 1e-12) {
                continue;
            }
            let v = dt * c.cost + wlow.value_at(t + dt, &y);
            if best.as_ref().map_or(true, |b| v < b.0) {
                best = Some((v, y));
            }
        }
        let Some((_, y)) = best else {
            return Err(Error::Infeasible(format!("no admissible step at t={t}, x={x:?}")));
        };
        times.push(t0 + (i + 1) as f64 * dt);
        states.push(y);
    }
    Trajectory::new(times, states)
}

/// Leg B: near-optimal arcs of `wlow`, pushed into the interior of Omega.
fn leg_b(wlow: &ValueField, cp: &ControlProblem, cfg: &ComparisonConfig, starts: &[(f64, Vec<f64>)]) -> LegReport {
    let mut leg = LegReport::new("B");
    let n = cp.dim();
    let cd = match ConstraintData::new(
        cp.omega().clone(),
        cfg.nft_eta,
        cfg.nft_r,
        cfg.nft_m,
        |_| 0.0,
        cp.velocity_problem(),
    ) {
        Ok(cd) => cd,
        Err(e) => {
            leg.fail(0.0, &vec![0.0; n], format!("constraint data rejected: {e}"));
            return leg;
        }
    };
    for (t0, x0) in starts {
        let t1 = (t0 + cfg.window).min(wlow.t_max() - wlow.dt());
        let xhat = match rollout(wlow, cp, *t0, x0, t1) {
            Ok(x) => x,
            Err(e) => {
                leg.fail(*t0, x0, format!("rollout failed: {e}"));
                continue;
            }
        };
        let reach = xhat.states().iter().map(|x| cp.omega().distance(x)).fold(0.0, f64::max);
        let (ta, tb) = (xhat.times()[0], xhat.end().0);
        let lhs = wlow.value_at(ta, x0);
        for &eps in &cfg.epsilon_schedule {
            let rho = (eps / 10.0).max(reach);
            let outcome = neighboring_feasible(&cd, &xhat, rho, tb - ta).and_then(|run| {
                let cost = running_cost(cp, &run.x, n)?;
                let rhs = cost + wlow.value_at(tb, run.x.end().1);
                Ok((run, rhs))
            });
            match outcome {
                Ok((run, rhs)) => {
                    let margin = run.min_margin();
                    let excess = if margin > 0.0 && run.estimates.pass() {
                        lhs - rhs - eps
                    } else {
                        f64::INFINITY
                    };
                    leg.record(
                        excess,
                        *t0,
                        x0,
                        format!(
                            "eps = {eps}: wlow(t0,x0) = {lhs:.6}, cost + wlow(t1,x1) = {rhs:.6}, min margin {margin:.3e}, estimates {}",
                            if run.estimates.pass() { "hold" } else { "fail" }
                        ),
                    );
                }
                Err(e) => leg.fail(*t0, x0, format!("eps = {eps}: neighboring feasible arc failed: {e}")),
            }
        }
    }
    leg
}

/// Replays `wlow <= V <= whigh` on sampled arcs and compares the fields.
/// Aborts only when a field's horizon is too short for the tail bound; the
/// residual and vanishing preconditions are reported.
pub fn comparison_experiment(
    wlow: &ValueField,
    whigh: &ValueField,
    cp: &ControlProblem,
    cfg: &ComparisonConfig,
) -> Result<ComparisonReport> {
    if wlow.space_dim() != cp.dim() || whigh.space_dim() != cp.dim() {
        return Err(invalid("field dimensions do not match the control problem"));
    }
    let vanishing_low = vanishing_check(wlow, cp);
    let vanishing_high = vanishing_check(whigh, cp);
    for (name, v) in [("low", &vanishing_low), ("high", &vanishing_high)] {
        if !v.horizon_ok {
            return Err(Error::Config(format!(
                "vanishing precondition fails for the {name} field: tail bound {:.3e} at its horizon exceeds {:.3e}",
                v.tail_bound_at_end,
                v.vanish_tol / 2.0
            )));
        }
    }
    let model = cp.model();
    let (residual_low, _) = epigraphical_residual(wlow, model, cp.omega(), &cfg.residual)?;
    let (residual_high, _) = epigraphical_residual(whigh, model, cp.omega(), &cfg.residual)?;
    let preconditions = Preconditions {
        pass: residual_low.pass && residual_high.pass && vanishing_low.pass && vanishing_high.pass,
        residual_low,
        residual_high,
        vanishing_low,
        vanishing_high,
    };
    let starts = if cfg.starts.is_empty() {
        default_starts(cp)
    } else {
        cfg.starts.clone()
    };
    let a = leg_a(whigh, cp, cfg, &starts);
    let b = leg_b(wlow, cp, cfg, &starts);
    let (gap, at) = max_gap(wlow, whigh);
    let mut c = LegReport::new("C");
    let (t, x) = at.unwrap_or((0.0, vec![0.0; cp.dim()]));
    c.record(
        gap - cfg.comparison_tol,
        t,
        &x,
        format!("max |wlow - whigh| = {gap:.3e}, tolerance {:.1e}", cfg.comparison_tol),
    );
    let legs = vec![a, b, c];
    Ok(ComparisonReport {
        pass: legs.iter().all(|l| l.pass),
        preconditions,
        legs,
        gap,
    })
}
