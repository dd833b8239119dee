//! Velocity/cost parametrization `(f, L)` of a convex Hamiltonian over the unit ball.
//!
//! At each `(t, x)` the domain of `v -> H*(t,x,v,1)` is a convex body `D` with
//! minimax centre `c` and radius `R`. For `theta = (theta_v, theta_c)` in the
//! unit ball of `R^{n+1}`:
//!
//! - `f(t,x,theta)` is the projection of `c + R theta_v` onto `D`;
//! - the canonical cost is `H*(t,x,f,1)`;
//! - the blended cost moves it towards the cap `sigma_hat(t)(1+|x|)` by `max(0, theta_c)`.

use crate::error::{domain, invalid, Error, Result};
use crate::fenchel::{check_h1, domain_nodes, ConjugationPlan, HamiltonianModel, SamplePlan};
use crate::grid::GridFunction;
use crate::linalg::{axpy, dist, dot, norm, sub};
use crate::setgeom::{sphere_sample, ConvexBody};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Parametrization data at one `(t, x)`.
#[derive(Clone, Debug)]
pub struct LocalRep {
    body: ConvexBody,
    center: Vec<f64>,
    radius: f64,
    conj: GridFunction,
    primal: GridFunction,
    gamma: f64,
    cap: f64,
}

impl LocalRep {
    fn build(model: &HamiltonianModel, t: f64, x: &[f64]) -> Result<Self> {
        let primal = model.primal_slice(t, x, 1.0)?;
        let conj = model.conjugate_slice(t, x, 1.0)?;
        let nodes = domain_nodes(&conj);
        if nodes.is_empty() {
            return Err(domain(format!("empty conjugate domain at t={t}, x={x:?}")));
        }
        let body = ConvexBody::new(nodes)?;
        let (center, radius) = minimax_center(&body);
        let gamma = conj
            .values()
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, v| a.max(*v));
        let cap = model.sigma_hat(t) * (1.0 + norm(x));
        Ok(Self {
            body,
            center,
            radius,
            conj,
            primal,
            gamma,
            cap,
        })
    }

    /// `dom H*(t,x,.,1)` as a convex body.
    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `max(0, sup H*(t,x,.,1))` over the conjugate grid.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `sigma_hat(t)(1+|x|)`.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn conjugate(&self) -> &GridFunction {
        &self.conj
    }

    /// `H*(t,x,v,1)`: interpolated on the conjugate grid, or recomputed by a
    /// max-scan over primal nodes where interpolation touches `+∞` nodes.
    pub fn h_star(&self, v: &[f64]) -> f64 {
        let val = self.conj.interpolate(v);
        if val.is_finite() {
            return val;
        }
        let g = self.primal.grid();
        (0..g.len())
            .map(|i| dot(v, &g.node(i)) - self.primal.value(i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn velocity(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.center.len();
        self.body.project(&axpy(&self.center, self.radius, &theta[..n]))
    }

    pub fn canonical_cost(&self, theta: &[f64]) -> f64 {
        self.h_star(&self.velocity(theta))
    }

    pub fn cost(&self, theta: &[f64]) -> f64 {
        let l = self.canonical_cost(theta);
        let n = self.center.len();
        l + theta[n].max(0.0) * (self.cap - l)
    }
}

/// Smallest enclosing ball centre by a refining grid scan over the bounding box.
fn minimax_center(body: &ConvexBody) -> (Vec<f64>, f64) {
    let far = |c: &[f64]| body.vertices().iter().map(|v| dist(v, c)).fold(0.0, f64::max);
    if body.dim() == 1 {
        let lo = body.vertices()[0][0];
        let hi = body.vertices()[body.len() - 1][0];
        return (vec![0.5 * (lo + hi)], 0.5 * (hi - lo));
    }
    let bb = body.bounding_box();
    let mut best = bb.center();
    let mut val = far(&best);
    let mut half: Vec<f64> = bb.lower().iter().zip(bb.upper()).map(|(l, u)| 0.5 * (u - l)).collect();
    let d = body.dim();
    let steps = 10usize;
    for _ in 0..40 {
        let base = best.clone();
        let span = 2 * steps + 1;
        for code in 0..span.pow(d as u32) {
            let mut c = code;
            let cand: Vec<f64> = (0..d)
                .map(|k| {
                    let o = (c % span) as f64 - steps as f64;
                    c /= span;
                    base[k] + half[k] * o / steps as f64
                })
                .collect();
            let v = far(&cand);
            if v < val {
                val = v;
                best = cand;
            }
        }
        half.iter_mut().for_each(|h| *h *= 0.25);
        if half.iter().all(|h| *h < 1e-13) {
            break;
        }
    }
    (best, val)
}

/// Concentric-shell lattice of about `count` points in the unit ball of `R^m`.
///
/// The outer shell contains `±e_1` (and the full `theta_c = 0` equator in two
/// and three dimensions), so the parametrization reaches the domain boundary.
pub fn theta_lattice(m: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]];
    match m {
        1 => {
            let k = count.max(3) / 2;
            out.extend((1..=k).flat_map(|i| {
                let r = i as f64 / k as f64;
                [vec![-r], vec![r]]
            }));
        }
        2 => {
            let shells = ((count as f64 / std::f64::consts::PI).sqrt().round() as usize).max(1);
            let weights: f64 = (1..=shells).map(|k| k as f64).sum();
            for k in 1..=shells {
                let share = (count.saturating_sub(1)) as f64 * k as f64 / weights;
                let m_k = (4 * (share / 4.0).round() as usize).max(4);
                let r = k as f64 / shells as f64;
                out.extend((0..m_k).map(|j| {
                    let a = std::f64::consts::TAU * j as f64 / m_k as f64;
                    vec![r * a.cos(), r * a.sin()]
                }));
            }
        }
        3 => {
            let shells = ((count as f64 * 3.0 / (4.0 * std::f64::consts::PI)).cbrt().round() as usize).max(1);
            let weights: f64 = (1..=shells).map(|k| (k * k) as f64).sum();
            for k in 1..=shells {
                let share = (count.saturating_sub(1)) as f64 * (k * k) as f64 / weights;
                let r = k as f64 / shells as f64;
                out.extend(
                    latitude_sphere(share.max(6.0) as usize)
                        .into_iter()
                        .map(|u| u.iter().map(|c| r * c).collect()),
                );
            }
        }
        _ => {
            let shells = 4;
            for k in 1..=shells {
                let r = k as f64 / shells as f64;
                let mut pts = sphere_sample(m, count / shells);
                let mut e1 = vec![0.0; m];
                e1[0] = 1.0;
                pts.push(e1.clone());
                e1[0] = -1.0;
                pts.push(e1);
                out.extend(pts.into_iter().map(|u| u.iter().map(|c| r * c).collect::<Vec<_>>()));
            }
        }
    }
    out
}

/// Points on `S^2` along latitude rings, equator included, poles on the last axis.
fn latitude_sphere(count: usize) -> Vec<Vec<f64>> {
    let rings = (((count as f64) * std::f64::consts::PI / 4.0).sqrt().round() as usize).max(2);
    let rings = rings + rings % 2;
    let mut out = Vec::new();
    for j in 0..=rings {
        let psi = std::f64::consts::PI * j as f64 / rings as f64;
        let (s, c) = (psi.sin(), psi.cos());
        let per = if j == 0 || j == rings {
            1
        } else {
            (4 * ((count as f64 * s / (2.0 * rings as f64)).round() as usize / 2)).max(4)
        };
        for i in 0..per {
            let a = std::f64::consts::TAU * i as f64 / per as f64;
            out.push(vec![s * a.cos(), s * a.sin(), c]);
        }
    }
    out
}

/// Default lattice size for `theta` in `R^m`.
pub fn default_theta_count(m: usize) -> usize {
    if m <= 2 {
        256
    } else {
        1024
    }
}

/// Epigraphical representation of a Hamiltonian model.
#[derive(Debug)]
pub struct Representation {
    model: HamiltonianModel,
    memo: RwLock<HashMap<(u64, Vec<u64>), Arc<LocalRep>>>,
}

impl Representation {
    pub fn model(&self) -> &HamiltonianModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Local data at `(t, x)`, memoised.
    pub fn local(&self, t: f64, x: &[f64]) -> Result<Arc<LocalRep>> {
        let key = (t.to_bits(), x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(l) = self.memo.read().expect("memo lock").get(&key) {
            return Ok(l.clone());
        }
        let l = Arc::new(LocalRep::build(&self.model, t, x)?);
        self.memo.write().expect("memo lock").insert(key, l.clone());
        Ok(l)
    }

    /// Local data without touching the memo table.
    pub fn local_uncached(&self, t: f64, x: &[f64]) -> Result<LocalRep> {
        LocalRep::build(&self.model, t, x)
    }

    pub fn velocity(&self, t: f64, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(self.local(t, x)?.velocity(theta))
    }

    pub fn canonical_cost(&self, t: f64, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.local(t, x)?.canonical_cost(theta))
    }

    pub fn cost(&self, t: f64, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.local(t, x)?.cost(theta))
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() + 1 || norm(theta) > 1.0 + 1e-12 {
            return Err(invalid(format!(
                "theta must lie in the unit ball of R^{}",
                self.dim() + 1
            )));
        }
        Ok(())
    }
}

/// Build the representation; `H` must pass the convexity part of the structural check.
pub fn build_representation(model: &HamiltonianModel, plan: Option<ConjugationPlan>) -> Result<Representation> {
    let model = match plan {
        Some(p) => model.clone().with_plan(p)?,
        None => model.clone(),
    };
    let h1 = check_h1(&model, &SamplePlan::default_for(model.dim()));
    if !h1.convex_pass {
        let w = h1.convexity_witness.expect("violation has a witness");
        return Err(Error::Invalid(format!(
            "H is not convex in p: midpoint violation {:.3e} at t={}, x={:?}, p1={:?}, p2={:?}, q={}",
            w.violation,
            w.t,
            w.x,
            w.p,
            w.p2.unwrap_or_default(),
            w.q
        )));
    }
    LocalRep::build(&model, 0.0, &vec![0.0; model.dim()])?;
    Ok(Representation {
        model,
        memo: RwLock::new(HashMap::new()),
    })
}

/// Samples for [`verify_identity`].
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityPlan {
    pub ts: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ps: Vec<Vec<f64>>,
    pub qs: Vec<f64>,
    pub theta_count: usize,
    pub rep_tol: f64,
}

impl IdentityPlan {
    /// `p` in [-3,3] (61 samples per axis in one dimension), `q` in {0.5, 1, 2}.
    pub fn default_for(dim: usize) -> Self {
        let base = SamplePlan::default_for(dim);
        let per = if dim == 1 { 61 } else { 13 };
        let axis: Vec<f64> = (0..per).map(|i| -3.0 + 6.0 * i as f64 / (per - 1) as f64).collect();
        let ps = if dim == 1 {
            axis.iter().map(|p| vec![*p]).collect()
        } else {
            axis.iter()
                .flat_map(|a| axis.iter().map(move |b| vec![*a, *b]))
                .collect()
        };
        Self {
            ts: base.ts,
            xs: base.xs,
            ps,
            qs: vec![0.5, 1.0, 2.0],
            theta_count: default_theta_count(dim + 1),
            rep_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityWitness {
    pub t: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: f64,
    pub h: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub max_error: f64,
    /// Largest `error / (1 + |p| + q)`.
    pub max_scaled_error: f64,
    pub witness: Option<IdentityWitness>,
    pub samples: usize,
    pub theta_count: usize,
    pub rep_tol: f64,
    pub pass: bool,
}

/// `sup_theta <p, f> - q L` over a theta lattice.
pub fn sup_over_theta(local: &LocalRep, thetas: &[Vec<f64>], p: &[f64], q: f64) -> f64 {
    thetas
        .iter()
        .map(|th| dot(p, &local.velocity(th)) - q * local.canonical_cost(th))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Compare `H(t,x,p,q)` with `sup_theta <p,f> - q L` on the plan's samples.
pub fn verify_identity(rep: &Representation, model: &HamiltonianModel, plan: &IdentityPlan) -> Result<IdentityReport> {
    let thetas = theta_lattice(rep.dim() + 1, plan.theta_count);
    let mut report = IdentityReport {
        max_error: 0.0,
        max_scaled_error: 0.0,
        witness: None,
        samples: 0,
        theta_count: thetas.len(),
        rep_tol: plan.rep_tol,
        pass: true,
    };
    for &t in &plan.ts {
        for x in &plan.xs {
            let local = rep.local(t, x)?;
            let pairs: Vec<(Vec<f64>, f64)> = thetas
                .iter()
                .map(|th| (local.velocity(th), local.canonical_cost(th)))
                .collect();
            for p in &plan.ps {
                for &q in &plan.qs {
                    let h = model.h(t, x, p, q);
                    let sup = pairs
                        .iter()
                        .map(|(f, l)| dot(p, f) - q * l)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let err = (h - sup).abs();
                    let scaled = err / (1.0 + norm(p) + q);
                    report.samples += 1;
                    report.max_error = report.max_error.max(err);
                    if scaled > report.max_scaled_error || report.witness.is_none() {
                        report.max_scaled_error = report.max_scaled_error.max(scaled);
                        report.witness = Some(IdentityWitness {
                            t,
                            x: x.clone(),
                            p: p.clone(),
                            q,
                            h,
                            sup,
                        });
                    }
                }
            }
        }
    }
    report.pass = report.max_scaled_error <= plan.rep_tol;
    Ok(report)
}

/// `5(n+1)(sigma_X(t)|x1-x2| + |eta(t,x1) theta1 - eta(t,x2) theta2|)` with
/// `eta(t,x) = sigma_P(t)(1+|x|) + gamma(t,x) + |H(t,x,0,q)|`; `+∞` when
/// `gamma` is not finite on the conjugate grid.
pub fn lipschitz_estimate(
    model: &HamiltonianModel,
    t: f64,
    x1: &[f64],
    x2: &[f64],
    theta1: &[f64],
    theta2: &[f64],
    q: f64,
) -> Result<f64> {
    let eta = |x: &[f64]| -> Result<f64> {
        let conj = model.conjugate_slice(t, x, q)?;
        let gamma = conj
            .values()
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, v| a.max(*v));
        let zero = vec![0.0; model.dim()];
        Ok(model.sigma_p(t) * (1.0 + norm(x)) + gamma + model.h(t, x, &zero, q).abs())
    };
    let (e1, e2) = (eta(x1)?, eta(x2)?);
    if !e1.is_finite() || !e2.is_finite() {
        return Ok(f64::INFINITY);
    }
    let mixed = norm(&sub(
        &theta1.iter().map(|v| e1 * v).collect::<Vec<_>>(),
        &theta2.iter().map(|v| e2 * v).collect::<Vec<_>>(),
    ));
    let n = model.dim() as f64;
    Ok(5.0 * (n + 1.0) * (model.sigma_x(t) * dist(x1, x2) + mixed))
}
