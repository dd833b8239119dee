//! Differential inclusions `x' ∈ Phi(t, x)` with convex-body values: Euler
//! integration of selections, Filippov correction, Gronwall envelopes,
//! reachable-set samples and viable trajectories in tubes.

mod trajectory;
mod viability;

pub use trajectory::Trajectory;
pub use viability::{tangential_gap, viable_trajectory, ViabilityConfig, ViabilityRun};

use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dist, norm};
use crate::setgeom::{CompactSetRep, ConvexBody};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

type VelocityMap = Arc<dyn Fn(f64, &[f64]) -> Result<ConvexBody> + Send + Sync>;
type Rate = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type RadiusRate = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Default seed for random selector schedules.
pub const DEFAULT_SEED: u64 = 42;

/// `Phi`, its growth rate `rho(t)` and its Lipschitz rate `k_r(t)` on the ball of radius `r`.
#[derive(Clone)]
pub struct InclusionProblem {
    dim: usize,
    velocities: VelocityMap,
    growth: Rate,
    lipschitz: RadiusRate,
    proj_tol: f64,
}

impl fmt::Debug for InclusionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InclusionProblem")
            .field("dim", &self.dim)
            .field("proj_tol", &self.proj_tol)
            .finish()
    }
}

impl InclusionProblem {
    pub fn new(
        dim: usize,
        velocities: impl Fn(f64, &[f64]) -> Result<ConvexBody> + Send + Sync + 'static,
        growth: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            velocities: Arc::new(velocities),
            growth: Arc::new(growth),
            lipschitz: Arc::new(lipschitz),
            proj_tol: 1e-9,
        }
    }

    /// `Phi ≡ body`.
    pub fn constant(body: ConvexBody) -> Self {
        let rho = body.vertices().iter().map(|v| norm(v)).fold(0.0, f64::max);
        let dim = body.dim();
        Self::new(dim, move |_, _| Ok(body.clone()), move |_| rho, |_, _| 0.0)
    }

    pub fn with_proj_tol(mut self, tol: f64) -> Self {
        self.proj_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn proj_tol(&self) -> f64 {
        self.proj_tol
    }

    pub fn velocities(&self, t: f64, x: &[f64]) -> Result<ConvexBody> {
        let b = (self.velocities)(t, x)?;
        if b.dim() != self.dim {
            return Err(invalid(format!(
                "velocity set has dimension {}, expected {}",
                b.dim(),
                self.dim
            )));
        }
        Ok(b)
    }

    pub fn growth(&self, t: f64) -> f64 {
        (self.growth)(t)
    }

    pub fn lipschitz(&self, t: f64, r: f64) -> f64 {
        (self.lipschitz)(t, r)
    }

    /// `int_a^b rho` by composite Simpson.
    pub fn growth_integral(&self, a: f64, b: f64) -> f64 {
        simpson(|t| self.growth(t), a, b)
    }

    pub fn lipschitz_integral(&self, a: f64, b: f64, r: f64) -> f64 {
        simpson(|t| self.lipschitz(t, r), a, b)
    }

    /// Largest `sup_{v in Phi(t,x)} |v| - rho(t)(1+|x|)` over the samples, with its location.
    pub fn growth_excess(&self, ts: &[f64], xs: &[Vec<f64>]) -> Result<(f64, Option<(f64, Vec<f64>)>)> {
        let mut worst = (f64::NEG_INFINITY, None);
        for &t in ts {
            for x in xs {
                let speed = self
                    .velocities(t, x)?
                    .vertices()
                    .iter()
                    .map(|v| norm(v))
                    .fold(0.0, f64::max);
                let e = speed - self.growth(t) * (1.0 + norm(x));
                if e > worst.0 {
                    worst = (e, Some((t, x.clone())));
                }
            }
        }
        Ok(worst)
    }
}

pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = 256;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// Uniform time nodes from `t0` to `t1` with spacing at most `step`.
pub(crate) fn time_nodes(t0: f64, t1: f64, step: f64) -> Vec<f64> {
    let n = (((t1 - t0) / step) - 1e-9).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            if i == n {
                t1
            } else {
                t0 + (t1 - t0) * i as f64 / n as f64
            }
        })
        .collect()
}

/// `min(1e-3, (t1 - t0) / 1000)`.
pub fn default_step(t0: f64, t1: f64) -> f64 {
    1e-3f64.min((t1 - t0) / 1000.0)
}

/// Explicit Euler polygon of the selection, each velocity projected onto `Phi(t, x)`.
pub fn integrate_selection(
    prob: &InclusionProblem,
    t0: f64,
    x0: &[f64],
    selector: impl Fn(f64, &[f64]) -> Vec<f64>,
    t1: f64,
    step: Option<f64>,
) -> Result<Trajectory> {
    if !(t1 > t0) || x0.len() != prob.dim {
        return Err(invalid("need t1 > t0 and an initial state of the problem's dimension"));
    }
    let times = time_nodes(t0, t1, step.unwrap_or_else(|| default_step(t0, t1)));
    let mut states = vec![x0.to_vec()];
    for w in times.windows(2) {
        let x = &states[states.len() - 1];
        let body = prob.velocities(w[0], x)?;
        let v = body.project(&selector(w[0], x));
        if body.distance(&v) > prob.proj_tol {
            return Err(Error::Failure(format!(
                "selection at t={} is {} away from Phi after projection",
                w[0],
                body.distance(&v)
            )));
        }
        states.push(axpy(x, w[1] - w[0], &v));
    }
    Trajectory::new(times, states)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilippovCorrection {
    pub x: Trajectory,
    /// `e^{int phi} * defect_integral`.
    pub bound: f64,
    /// `int dist(y'(s), Phi(s, y(s))) ds`.
    pub defect_integral: f64,
    /// `int phi` with `phi = k_r`, `r` covering both arcs.
    pub lipschitz_integral: f64,
}

/// Phi-trajectory from `y(t0)` following the velocities of `Phi(t, x(t))` nearest to `y'(t)`.
pub fn filippov_correct(prob: &InclusionProblem, y: &Trajectory) -> Result<FilippovCorrection> {
    let times = y.times().to_vec();
    let mut states = vec![y.state(0).to_vec()];
    let mut defect = 0.0;
    for i in 0..times.len() - 1 {
        let (t, h) = (times[i], y.step(i));
        let dy = y.derivative(i);
        let gap = prob.velocities(t, y.state(i))?.distance(&dy);
        if gap > 1e-12 * (1.0 + norm(&dy)) {
            defect += h * gap;
        }
        let x = &states[i];
        let v = prob.velocities(t, x)?.project(&dy);
        states.push(axpy(x, h, &v));
    }
    // Rounding-level gaps count as zero defect, and then `y` is already a Phi-trajectory.
    let x = if defect == 0.0 {
        y.clone()
    } else {
        Trajectory::new(times, states)?
    };
    let r = 1.0 + y.states().iter().chain(x.states()).map(|s| norm(s)).fold(0.0, f64::max);
    let (t0, _) = y.start();
    let (t1, _) = y.end();
    let li = prob.lipschitz_integral(t0, t1, r);
    Ok(FilippovCorrection {
        x,
        bound: li.exp() * defect,
        defect_integral: defect,
        lipschitz_integral: li,
    })
}

/// `t -> psi0 e^{alpha (t - tau)} + beta (e^{alpha (t - tau)} - 1) / alpha` on `[tau, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GronwallEnvelope {
    pub psi0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub horizon: f64,
}

impl GronwallEnvelope {
    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.tau;
        let growth = if self.alpha == 0.0 {
            s
        } else {
            (self.alpha * s).exp_m1() / self.alpha
        };
        self.psi0 * (self.alpha * s).exp() + self.beta * growth
    }
}

pub fn gronwall_envelope(psi0: f64, alpha: f64, beta: f64, tau: f64, horizon: f64) -> Result<GronwallEnvelope> {
    if !(horizon > tau) || !(alpha >= 0.0) {
        return Err(invalid("gronwall envelope needs T > tau and alpha >= 0"));
    }
    Ok(GronwallEnvelope {
        psi0,
        alpha,
        beta,
        tau,
        horizon,
    })
}

/// Direction used by selector `i`; independent of how many selectors are requested.
fn selector_direction(dim: usize, i: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match dim {
        1 => vec![if i % 2 == 0 { 1.0 } else { -1.0 }],
        2 => {
            let a = std::f64::consts::PI * (3.0 - 5f64.sqrt()) * i as f64;
            vec![a.cos(), a.sin()]
        }
        _ => random_direction(dim, rng),
    }
}

fn random_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&g);
        if n > 1e-3 && n <= 1.0 {
            return g.iter().map(|v| v / n).collect();
        }
    }
}

/// Hull of endpoints at time `s` of `n_selectors` bang selections: support points
/// of `Phi` in a fixed direction per selector, every fourth selector switching
/// among seeded random directions on eight equal sub-intervals.
pub fn reachable_sample(
    prob: &InclusionProblem,
    t0: f64,
    x0: &[f64],
    s: f64,
    n_selectors: usize,
    seed: u64,
) -> Result<CompactSetRep> {
    if s < t0 || n_selectors == 0 {
        return Err(invalid("need s >= t0 and at least one selector"));
    }
    if s == t0 {
        return CompactSetRep::vertex_hull(vec![x0.to_vec()]);
    }
    let ends: Vec<Vec<f64>> = (0..n_selectors)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let fixed = selector_direction(prob.dim, i, &mut rng);
            let schedule: Vec<Vec<f64>> = if i % 4 == 3 {
                (0..8).map(|_| random_direction(prob.dim, &mut rng)).collect()
            } else {
                vec![fixed]
            };
            let span = s - t0;
            let traj = integrate_selection(
                prob,
                t0,
                x0,
                |t, x| {
                    let k = (((t - t0) / span) * schedule.len() as f64) as usize;
                    let dir = &schedule[k.min(schedule.len() - 1)];
                    prob.velocities(t, x)
                        .map(|b| b.support_point(dir).to_vec())
                        .unwrap_or_else(|_| x.to_vec())
                },
                s,
                None,
            )?;
            Ok(traj.end().1.to_vec())
        })
        .collect::<Result<_>>()?;
    CompactSetRep::vertex_hull(ends)
}

/// Largest `|x(t_{i+1}) - x(t_i)| / dt - sup |Phi(t_i, x(t_i))|` along the polygon.
pub fn speed_excess(prob: &InclusionProblem, x: &Trajectory) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..x.len() - 1 {
        let speed = dist(x.state(i + 1), x.state(i)) / x.step(i);
        let cap = prob
            .velocities(x.times()[i], x.state(i))?
            .vertices()
            .iter()
            .map(|v| norm(v))
            .fold(0.0, f64::max);
        worst = worst.max(speed - cap);
    }
    Ok(worst)
}
