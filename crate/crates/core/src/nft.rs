//! Neighboring feasible trajectories for a state constraint `A`: classify the
//! outward-pushing times, substitute inward velocities there, Filippov-correct,
//! and certify interiority together with the linear estimate `|xhat - x| <= beta rho`.

use crate::error::{invalid, Error, Result};
use crate::inclusion::{filippov_correct, InclusionProblem, Trajectory};
use crate::linalg::{axpy, dist, dot, lerp, norm, sub};
use crate::setgeom::{
    boundary_normal_sets, boundary_samples, clip_halfplane, default_sphere, signed_distance, CompactSetRep, ConvexBody,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

const TOL: f64 = 1e-9;

type Rate = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Constraint set, inward constants `eta, r, M`, boundary speed bound `q(t)` and dynamics `Q`.
#[derive(Clone)]
pub struct ConstraintData {
    set: CompactSetRep,
    eta: f64,
    r: f64,
    m: f64,
    boundary_speed: Rate,
    dynamics: InclusionProblem,
    sphere: Vec<Vec<f64>>,
}

impl fmt::Debug for ConstraintData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintData")
            .field("set", &self.set.kind())
            .field("eta", &self.eta)
            .field("r", &self.r)
            .field("m", &self.m)
            .finish()
    }
}

impl ConstraintData {
    pub fn new(
        set: CompactSetRep,
        eta: f64,
        r: f64,
        m: f64,
        boundary_speed: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dynamics: InclusionProblem,
    ) -> Result<Self> {
        if !(eta > 0.0 && r > 0.0) {
            return Err(invalid(format!("eta and r must be positive (eta = {eta}, r = {r})")));
        }
        if !(m >= 0.0) {
            return Err(invalid(format!("M must be nonnegative (M = {m})")));
        }
        let dim = set.dim();
        if dynamics.dim() != dim {
            return Err(invalid(format!(
                "constraint set has dimension {dim}, dynamics {}",
                dynamics.dim()
            )));
        }
        if signed_distance(&set, &vec![0.0; dim]).degenerate {
            return Err(invalid("constraint set has empty interior"));
        }
        Ok(Self {
            set,
            eta,
            r,
            m,
            boundary_speed: Arc::new(boundary_speed),
            dynamics,
            sphere: default_sphere(dim),
        })
    }

    pub fn set(&self) -> &CompactSetRep {
        &self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn dynamics(&self) -> &InclusionProblem {
        &self.dynamics
    }

    pub fn boundary_speed(&self, t: f64) -> f64 {
        (self.boundary_speed)(t)
    }

    pub fn boundary_speed_integral(&self, a: f64, b: f64) -> f64 {
        crate::inclusion::simpson(|t| self.boundary_speed(t), a, b)
    }

    /// `dist(x, A) - dist(x, complement A)`.
    pub fn oriented_distance(&self, x: &[f64]) -> f64 {
        signed_distance(&self.set, x).value
    }

    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.oriented_distance(x).abs()
    }

    /// Unit outward normals at boundary points within `eta` of any of `points`.
    pub fn normals_near(&self, points: &[&[f64]]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for p in points {
            let found = boundary_normal_sets(&self.set, p, self.eta, self.r, &self.sphere)
                .expect("eta and r validated at construction");
            for n in found.normals().directions() {
                if !out.iter().any(|m| dist(m, n) <= TOL) {
                    out.push(n.clone());
                }
            }
        }
        out
    }

    fn interval_normals(&self, traj: &Trajectory, i: usize) -> Vec<Vec<f64>> {
        let mid = lerp(traj.state(i), traj.state(i + 1), 0.5);
        self.normals_near(&[traj.state(i), &mid, traj.state(i + 1)])
    }

    /// Velocity `w` of `Q(t, at)` nearest to `v` with `<w, n> <= -r` and
    /// `<w - v, n> <= -r` for every normal `n`, and `|w - v| <= M`.
    pub fn inward_velocity(&self, t: f64, at: &[f64], normals: &[Vec<f64>], v: &[f64]) -> Result<Vec<f64>> {
        let body = self.dynamics.velocities(t, at)?;
        let cuts: Vec<(Vec<f64>, f64)> = normals
            .iter()
            .map(|n| (n.clone(), (-self.r).min(dot(v, n) - self.r)))
            .collect();
        let violation = || {
            Error::Infeasible(format!(
                "controllability violation at t={t}, y={at:?}: no w in Q(t, y) within M={} of v={v:?} \
                 pointing inward by r={} against {} normals",
                self.m,
                self.r,
                normals.len()
            ))
        };
        let w = nearest_admissible(&body, &cuts, v).ok_or_else(violation)?;
        let admissible =
            body.distance(&w) <= TOL && cuts.iter().all(|(n, c)| dot(&w, n) <= c + TOL) && dist(&w, v) <= self.m + TOL;
        admissible.then_some(w).ok_or_else(violation)
    }

    /// Samples boundary points and outward velocities of `Q` there, and asks the
    /// inward oracle for each.
    pub fn verify_inward_oracle(&self, ts: &[f64]) -> Result<OracleReport> {
        let points = boundary_samples(&self.set, 128);
        let mut report = OracleReport {
            checked: 0,
            failures: 0,
            witness: None,
            pass: true,
        };
        for &t in ts {
            for y in &points {
                let normals = self.normals_near(&[y]);
                for v in self.dynamics.velocities(t, y)?.vertices() {
                    if !normals.iter().any(|n| dot(n, v) >= 0.0) {
                        continue;
                    }
                    report.checked += 1;
                    if self.inward_velocity(t, y, &normals, v).is_err() {
                        report.failures += 1;
                        report.witness.get_or_insert_with(|| OracleWitness {
                            t,
                            y: y.clone(),
                            v: v.clone(),
                        });
                    }
                }
            }
        }
        report.pass = report.failures == 0;
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleWitness {
    pub t: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub checked: usize,
    pub failures: usize,
    pub witness: Option<OracleWitness>,
    pub pass: bool,
}

/// Point of `body` cut by the halfspaces `<w, n> <= c` nearest to `v`.
fn nearest_admissible(body: &ConvexBody, cuts: &[(Vec<f64>, f64)], v: &[f64]) -> Option<Vec<f64>> {
    match body.dim() {
        1 => {
            let (mut lo, mut hi) = (body.vertices()[0][0], body.vertices()[body.len() - 1][0]);
            for (n, c) in cuts {
                if n[0] > 0.0 {
                    hi = hi.min(c / n[0]);
                } else if n[0] < 0.0 {
                    lo = lo.max(c / n[0]);
                } else if *c < 0.0 {
                    return None;
                }
            }
            (lo <= hi + 1e-12).then(|| vec![v[0].clamp(lo, hi.max(lo))])
        }
        2 => {
            let mut poly = body.vertices().to_vec();
            for (n, c) in cuts {
                poly = clip_halfplane(&poly, n, *c);
                if poly.is_empty() {
                    return None;
                }
            }
            ConvexBody::new(poly).ok().map(|b| b.project(v))
        }
        _ => Some(dykstra(body, cuts, v)),
    }
}

/// Dykstra's alternating projections onto `body` and the halfspaces.
fn dykstra(body: &ConvexBody, cuts: &[(Vec<f64>, f64)], v: &[f64]) -> Vec<f64> {
    let mut x = v.to_vec();
    let mut incr = vec![vec![0.0; v.len()]; cuts.len() + 1];
    for _ in 0..5000 {
        let prev = x.clone();
        for (s, inc) in incr.iter_mut().enumerate() {
            let z: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let p = match s {
                0 => body.project(&z),
                _ => {
                    let (n, c) = &cuts[s - 1];
                    let excess = dot(&z, n) - c;
                    if excess > 0.0 {
                        axpy(&z, -excess / dot(n, n), n)
                    } else {
                        z.clone()
                    }
                }
            };
            *inc = sub(&z, &p);
            x = p;
        }
        if dist(&prev, &x) < 1e-14 {
            break;
        }
    }
    x
}

/// Indices of the intervals of `xhat` on which some outward normal at a
/// boundary point within `eta` makes a nonnegative product with `xhat'`.
/// Empty when `xhat` stays farther than `eta / 4` from the boundary.
pub fn classify_outward(cd: &ConstraintData, xhat: &Trajectory) -> Vec<usize> {
    if xhat.states().iter().all(|s| cd.boundary_distance(s) > cd.eta / 4.0) {
        return Vec::new();
    }
    (0..xhat.len() - 1)
        .filter(|&i| {
            let d = xhat.derivative(i);
            cd.interval_normals(xhat, i).iter().any(|n| dot(n, &d) >= 0.0)
        })
        .collect()
}

/// Total length of the listed intervals.
pub fn outward_measure(xhat: &Trajectory, indices: &[usize]) -> f64 {
    indices.iter().map(|&i| xhat.step(i)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Substitution {
    pub y: Trajectory,
    pub tau: f64,
    /// `mu(A+ ∩ [t0, tau])`.
    pub measure: f64,
    /// `mu(A+ ∩ [t0, tau ∧ t_i])` at each node.
    pub measure_at: Vec<f64>,
    /// `(interval, fraction)` pairs that received the inward velocity.
    pub substituted: Vec<(usize, f64)>,
}

/// `y(t0) = xhat(t0)`, `y' = w` on the outward intervals up to the time `tau`
/// where their measure reaches `k rho`, `y' = xhat'` elsewhere.
pub fn inward_substitute(
    cd: &ConstraintData,
    xhat: &Trajectory,
    outward: &[usize],
    k: f64,
    rho: f64,
) -> Result<Substitution> {
    if !(k > 1.0 / cd.r) {
        return Err(invalid(format!("k = {k} must exceed 1/r = {}", 1.0 / cd.r)));
    }
    let reach = xhat.states().iter().map(|s| cd.set.distance(s)).fold(0.0, f64::max);
    if !(rho > 0.0) || rho < reach - TOL {
        return Err(invalid(format!(
            "rho = {rho} must be positive and at least max dist(xhat, A) = {reach}"
        )));
    }
    let n = xhat.len();
    let (t1, _) = xhat.end();
    let mut marked = vec![false; n - 1];
    for &i in outward {
        if i + 1 >= n {
            return Err(invalid(format!("interval index {i} out of range")));
        }
        marked[i] = true;
    }
    let budget = k * rho;
    let total = outward_measure(xhat, outward);
    let mut left = budget;
    let mut tau = t1;
    let mut states = vec![xhat.state(0).to_vec()];
    let mut measure_at = vec![0.0];
    let mut substituted = Vec::new();
    let mut used = 0.0;
    for i in 0..n - 1 {
        let (t, h) = (xhat.times()[i], xhat.step(i));
        let v = xhat.derivative(i);
        let mut d = v.clone();
        if marked[i] && left > 0.0 {
            let frac = (left / h).min(1.0);
            let w = cd.inward_velocity(t, xhat.state(i), &cd.interval_normals(xhat, i), &v)?;
            d = lerp(&v, &w, frac);
            used += frac * h;
            left -= frac * h;
            substituted.push((i, frac));
            if total > budget && left <= 1e-12 * budget {
                tau = t + frac * h;
                left = 0.0;
            }
        }
        states.push(axpy(&states[i], h, &d));
        measure_at.push(used);
    }
    Ok(Substitution {
        y: Trajectory::new(xhat.times().to_vec(), states)?,
        tau,
        measure: used,
        measure_at,
        substituted,
    })
}

/// `sup_J int_J phi` over sampled windows `J ⊂ [t0, t1]` of length `window`
/// (`phi = k_radius`).
pub fn lipschitz_modulus(prob: &InclusionProblem, t0: f64, t1: f64, window: f64, radius: f64) -> f64 {
    let span = t1 - t0;
    if window >= span {
        return prob.lipschitz_integral(t0, t0 + window, radius);
    }
    (0..=32)
        .map(|j| t0 + (span - window) * j as f64 / 32.0)
        .map(|a| prob.lipschitz_integral(a, a + window, radius))
        .fold(0.0, f64::max)
}

/// Constants of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NftConstants {
    /// `min(t1 - t0, delta_max)`.
    pub delta: f64,
    /// Largest window length satisfying the conditions, found by bisection.
    pub delta_max: f64,
    /// `theta_phi(delta)`.
    pub theta: f64,
    pub k: f64,
    /// `2 M (e^theta theta + 1) k`.
    pub beta: f64,
    /// Radius of the ball on which `phi = k_r` is evaluated.
    pub radius: f64,
}

/// Which of the three conditions on `(delta, k)` fails, if any.
fn failed_condition(cd: &ConstraintData, theta: f64, delta: f64, k: Option<f64>) -> Option<&'static str> {
    let c = 2.0 * theta.exp() * theta * cd.m;
    if 8.0 * delta * cd.m > cd.eta {
        Some("(i) 8 delta M <= eta")
    } else if c >= cd.r {
        Some("(ii) 2 e^theta theta M < r")
    } else if k.is_some_and(|k| c * k >= cd.r * k - 1.0) {
        Some("(iii) 2 e^theta theta M k < r k - 1")
    } else {
        None
    }
}

const MIN_WINDOW_FRACTION: f64 = 1e-6;

fn choose_constants(cd: &ConstraintData, t0: f64, t1: f64, radius: f64, k: Option<f64>) -> Result<NftConstants> {
    if let Some(k) = k {
        if !(k > 1.0 / cd.r) {
            return Err(Error::Config(format!("k = {k} must exceed 1/r = {}", 1.0 / cd.r)));
        }
    }
    let span = t1 - t0;
    let theta = |d: f64| lipschitz_modulus(&cd.dynamics, t0, t1, d, radius);
    let fails = |d: f64| failed_condition(cd, theta(d), d, k);
    let delta_max = if fails(span).is_none() {
        span
    } else {
        let tiny = span * MIN_WINDOW_FRACTION;
        if let Some(cond) = fails(tiny) {
            return Err(Error::Config(format!(
                "constants infeasible: condition {cond} fails for every usable delta"
            )));
        }
        let (mut lo, mut hi) = (tiny, span);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if fails(mid).is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let delta = delta_max.min(span);
    let th = theta(delta);
    let c = 2.0 * th.exp() * th * cd.m;
    let k = k.unwrap_or(2.0 / (cd.r - c));
    Ok(NftConstants {
        delta,
        delta_max,
        theta: th,
        k,
        beta: 2.0 * cd.m * (th.exp() * th + 1.0) * k,
        radius,
    })
}

/// Worst `measured - bound` of one estimate over the checked nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub worst_excess: f64,
    pub witness_t: Option<f64>,
    pub checked: usize,
    pub pass: bool,
}

impl Estimate {
    fn new() -> Self {
        Self {
            worst_excess: f64::NEG_INFINITY,
            witness_t: None,
            checked: 0,
            pass: true,
        }
    }

    fn record(&mut self, t: f64, measured: f64, bound: f64, tol: f64) {
        let e = measured - bound;
        self.checked += 1;
        if e > self.worst_excess {
            self.worst_excess = e;
            self.witness_t = Some(t);
        }
        if e > tol {
            self.pass = false;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NftEstimates {
    /// `||xhat - y||_{W11,[t0,t]} <= 2 M mu_t`.
    pub substitution: Estimate,
    /// `int dist(y', Q(s, y)) <= 2 theta M mu_t`.
    pub defect: Estimate,
    /// `Dist(y(t)) - Dist(y(t0)) <= -r mu_t` for `t <= tau`.
    pub inward: Estimate,
    /// `Dist(x(t)) - Dist(x(t0)) <= (2 e^theta theta M - r) mu_t` for `t <= tau`.
    pub margin: Estimate,
    /// `sup |xhat - x| <= ||xhat - x||_{W11} <= beta rho`.
    pub linear: Estimate,
}

impl NftEstimates {
    fn new() -> Self {
        Self {
            substitution: Estimate::new(),
            defect: Estimate::new(),
            inward: Estimate::new(),
            margin: Estimate::new(),
            linear: Estimate::new(),
        }
    }

    pub fn pass(&self) -> bool {
        [
            &self.substitution,
            &self.defect,
            &self.inward,
            &self.margin,
            &self.linear,
        ]
        .iter()
        .all(|e| e.pass)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NftRun {
    pub x: Trajectory,
    /// Substituted arc before Filippov correction.
    pub y: Trajectory,
    pub constants: NftConstants,
    pub early_exit: bool,
    pub outward: Vec<usize>,
    /// `mu(A+)`.
    pub outward_measure: f64,
    /// `mu(A+ ∩ [t0, tau])`.
    pub substituted_measure: f64,
    pub tau: f64,
    /// `(t, -Dist_A(x(t)))` at every node.
    pub margins: Vec<(f64, f64)>,
    pub sup_deviation: f64,
    pub w11_deviation: f64,
    /// `beta` with `theta` replaced by the larger of `theta_phi(delta)` and the
    /// Riemann sum of `phi` over the run.
    pub beta_run: f64,
    pub estimates: NftEstimates,
}

impl NftRun {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().skip(1).map(|m| m.1).fold(f64::INFINITY, f64::min)
    }

    pub fn pass(&self) -> bool {
        self.estimates.pass() && self.min_margin() > 0.0
    }
}

/// Runs with the default `k = 2 / (r - 2 e^theta theta M)`.
pub fn neighboring_feasible(cd: &ConstraintData, xhat: &Trajectory, rho: f64, delta: f64) -> Result<NftRun> {
    neighboring_feasible_with(cd, xhat, rho, delta, None)
}

/// Neighboring feasible trajectory of `xhat` on `[t0, t0 + delta]`: the
/// Filippov correction of the inward substitution, certified strictly interior
/// at every node after `t0`.
pub fn neighboring_feasible_with(
    cd: &ConstraintData,
    xhat: &Trajectory,
    rho: f64,
    delta: f64,
    k: Option<f64>,
) -> Result<NftRun> {
    let (t0, x0) = xhat.start();
    let (t1, _) = xhat.end();
    if ((t1 - t0) - delta).abs() > TOL * (1.0 + delta) {
        return Err(invalid(format!(
            "delta = {delta} differs from the trajectory span {}",
            t1 - t0
        )));
    }
    if xhat.dim() != cd.dim() {
        return Err(invalid(format!(
            "trajectory has dimension {}, constraint {}",
            xhat.dim(),
            cd.dim()
        )));
    }
    if cd.set.distance(x0) > TOL {
        return Err(invalid(format!("xhat(t0) = {x0:?} is not in A")));
    }
    let reach = xhat.states().iter().map(|s| cd.set.distance(s)).fold(0.0, f64::max);
    if !(rho > 0.0) || rho < reach - TOL {
        return Err(invalid(format!(
            "rho = {rho} must be positive and at least max dist(xhat, A) = {reach}"
        )));
    }
    let radius = 1.0 + xhat.states().iter().map(|s| norm(s)).fold(0.0, f64::max) + cd.m * delta;
    let constants = choose_constants(cd, t0, t1, radius, k)?;

    if xhat.states().iter().all(|s| cd.boundary_distance(s) > cd.eta / 4.0) {
        return certify(NftRun {
            x: xhat.clone(),
            y: xhat.clone(),
            margins: margins_of(cd, xhat),
            constants,
            early_exit: true,
            outward: Vec::new(),
            outward_measure: 0.0,
            substituted_measure: 0.0,
            tau: t1,
            sup_deviation: 0.0,
            w11_deviation: 0.0,
            beta_run: 0.0,
            estimates: NftEstimates::new(),
        });
    }

    let outward = classify_outward(cd, xhat);
    let subst = inward_substitute(cd, xhat, &outward, constants.k, rho)?;
    let fc = filippov_correct(&cd.dynamics, &subst.y)?;
    let (y, x) = (&subst.y, &fc.x);
    let mut est = NftEstimates::new();
    let tol_geom = TOL + 2.0 * cd.set.resolution_floor();
    let c = 2.0 * constants.theta.exp() * constants.theta * cd.m;
    let dist_start = cd.oriented_distance(x0);
    let (mut phi_sum, mut w11_sub, mut defect) = (0.0, 0.0, 0.0);
    for i in 0..y.len() {
        let t = y.times()[i];
        let mu = subst.measure_at[i];
        if i > 0 {
            let (s, h) = (y.times()[i - 1], y.step(i - 1));
            let dy = y.derivative(i - 1);
            w11_sub += h * dist(&dy, &xhat.derivative(i - 1));
            defect += h * cd.dynamics.velocities(s, y.state(i - 1))?.distance(&dy);
            phi_sum += h * cd.dynamics.lipschitz(s, radius);
        }
        let theta_t = constants.theta.max(phi_sum);
        let slack = TOL * (1.0 + mu);
        est.substitution.record(t, w11_sub, 2.0 * cd.m * mu, slack);
        est.defect.record(t, defect, 2.0 * theta_t * cd.m * mu, slack);
        if i > 0 && t <= subst.tau + 1e-12 && mu > 0.0 {
            let c_t = c.max(2.0 * theta_t.exp() * theta_t * cd.m);
            est.inward
                .record(t, cd.oriented_distance(y.state(i)) - dist_start, -cd.r * mu, tol_geom);
            est.margin.record(
                t,
                cd.oriented_distance(x.state(i)) - dist_start,
                (c_t - cd.r) * mu,
                tol_geom,
            );
        }
    }
    let theta_run = constants.theta.max(phi_sum);
    let beta_run = 2.0 * cd.m * (theta_run.exp() * theta_run + 1.0) * constants.k;
    let sup_deviation = x.sup_distance(xhat)?;
    let w11_deviation = x.w11_distance(xhat)?;
    est.linear
        .record(t1, sup_deviation, w11_deviation, 1e-12 * (1.0 + w11_deviation));
    est.linear
        .record(t1, w11_deviation, beta_run * rho, TOL * (1.0 + beta_run * rho));
    certify(NftRun {
        margins: margins_of(cd, x),
        x: fc.x,
        y: subst.y.clone(),
        constants,
        early_exit: false,
        outward_measure: outward_measure(xhat, &outward),
        outward,
        substituted_measure: subst.measure,
        tau: subst.tau,
        sup_deviation,
        w11_deviation,
        beta_run,
        estimates: est,
    })
}

fn margins_of(cd: &ConstraintData, x: &Trajectory) -> Vec<(f64, f64)> {
    x.times()
        .iter()
        .zip(x.states())
        .map(|(&t, s)| (t, -cd.oriented_distance(s)))
        .collect()
}

/// Strict interiority at every node after the first.
fn certify(run: NftRun) -> Result<NftRun> {
    match run.margins.iter().skip(1).find(|m| !(m.1 > 0.0)) {
        Some(&(t, m)) => Err(Error::Failure(format!(
            "interiority violated at t={t}: Dist_A(x(t)) = {:.3e} is not negative",
            -m
        ))),
        None => Ok(run),
    }
}

/// JSON form of a polytope constraint with polytope dynamics
/// `Q(t, x) = co(velocities) - drift * x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    /// Hull vertices of `A`.
    pub set: Vec<Vec<f64>>,
    /// Hull vertices of the velocity set.
    pub velocities: Vec<Vec<f64>>,
    #[serde(default)]
    pub drift: f64,
    pub eta: f64,
    pub r: f64,
    pub m: f64,
    /// Constant `q`; defaults to the largest speed near the boundary.
    #[serde(default)]
    pub boundary_speed: Option<f64>,
}

impl ConstraintSpec {
    pub fn build(&self) -> Result<ConstraintData> {
        let set = CompactSetRep::vertex_hull(self.set.clone())?;
        let body = ConvexBody::new(self.velocities.clone())?;
        if body.dim() != set.dim() {
            return Err(invalid("velocity and constraint dimensions differ"));
        }
        let drift = self.drift;
        if !drift.is_finite() {
            return Err(invalid("drift must be finite"));
        }
        let speed = body.vertices().iter().map(|v| norm(v)).fold(0.0, f64::max);
        let reach = set.bounding_box().diameter() + norm(&set.bounding_box().center()) + self.eta;
        let q = self.boundary_speed.unwrap_or(speed + drift.abs() * reach);
        let dynamics = if drift == 0.0 {
            InclusionProblem::constant(body)
        } else {
            let vel = body.clone();
            InclusionProblem::new(
                body.dim(),
                move |_, x| vel.map(|v| axpy(v, -drift, x)),
                move |_| speed + drift.abs(),
                move |_, _| drift.abs(),
            )
        };
        ConstraintData::new(set, self.eta, self.r, self.m, move |_| q, dynamics)
    }
}
