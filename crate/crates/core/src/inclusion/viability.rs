use super::{default_step, filippov_correct, time_nodes, InclusionProblem, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dist, lerp, norm, scale, sub};
use crate::setgeom::{hausdorff, CompactSetRep, ConvexBody};
use crate::tubes::Tube;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViabilityConfig {
    /// Integration step; `None` uses `min(1e-3, (t1 - t0) / 1000)`.
    pub step: Option<f64>,
    pub viab_tol: f64,
    /// Relative tangential tolerance, scaled by `1 + |y|`.
    pub tang_tol: f64,
    /// `c` in the jump budget `(1 + c) * node_mesh * tube_modulus`.
    pub jump_slack: f64,
}

impl Default for ViabilityConfig {
    fn default() -> Self {
        Self {
            step: None,
            viab_tol: 1e-6,
            tang_tol: 1e-3,
            jump_slack: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViabilityRun {
    pub trajectory: Trajectory,
    pub node_times: Vec<f64>,
    /// `dist(x(t), E(t))` at each node after the optional projection.
    pub node_distances: Vec<f64>,
    /// Projection jump at each node after the first (0 when none was needed).
    pub jumps: Vec<f64>,
    pub total_jump: f64,
    pub jump_budget: f64,
    /// Largest `hausdorff(E(t_i), E(t_{i+1})) / (t_{i+1} - t_i)` over nodes.
    pub tube_modulus: f64,
    pub max_tangential_gap: f64,
    pub filippov_defect: f64,
}

impl ViabilityRun {
    pub fn within_budget(&self) -> bool {
        self.total_jump <= self.jump_budget + 1e-12
    }
}

/// Velocity candidates: vertices, planar edge midpoints and the projection of
/// the straight-to-target direction.
fn candidates(body: &ConvexBody, y: &[f64], target: &CompactSetRep, h: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let direct = body.project(&scale(&sub(&target.project(y), y), 1.0 / h));
    let mut out = body.vertices().to_vec();
    if body.dim() == 2 {
        out.extend(body.edges_2d().into_iter().map(|(_, _, a, b)| lerp(&a, &b, 0.5)));
    }
    out.push(direct.clone());
    (out, direct)
}

/// Candidate reaching nearest to `target` after time `h`; ties go to the one
/// closest to the direct direction.
fn best_velocity(body: &ConvexBody, y: &[f64], target: &CompactSetRep, h: f64) -> (Vec<f64>, f64) {
    let (cands, direct) = candidates(body, y, target, h);
    let scored: Vec<(f64, &Vec<f64>)> = cands.iter().map(|v| (target.distance(&axpy(y, h, v)), v)).collect();
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + best);
    let v = scored
        .iter()
        .filter(|s| s.0 <= best + slack)
        .min_by(|a, b| dist(a.1, &direct).total_cmp(&dist(b.1, &direct)))
        .map(|s| s.1.clone())
        .expect("at least one candidate");
    (v, best)
}

/// Sampled tangential gap at `(t, y)` towards `target` over time `h`:
/// `min_v dist(y + h v, target) / h` beyond the target's resolution floor.
pub fn tangential_gap(prob: &InclusionProblem, target: &CompactSetRep, t: f64, y: &[f64], h: f64) -> Result<f64> {
    let body = prob.velocities(t, y)?;
    let (_, best) = best_velocity(&body, y, target, h);
    Ok((best - target.resolution_floor()).max(0.0) / h)
}

/// Phi-trajectory from `(t0, x0)` kept in the tube at the node times: steer
/// towards the next node slice, Filippov-correct the segment, project the node
/// state when it misses the slice by more than `viab_tol`.
pub fn viable_trajectory(
    prob: &InclusionProblem,
    tube: &Tube,
    t0: f64,
    x0: &[f64],
    t1: f64,
    node_times: &[f64],
    cfg: &ViabilityConfig,
) -> Result<ViabilityRun> {
    if !(t1 > t0) || x0.len() != prob.dim() || tube.dim() != prob.dim() {
        return Err(invalid(
            "need t1 > t0 and matching dimensions of state, problem and tube",
        ));
    }
    let mut nodes = vec![t0];
    nodes.extend(node_times.iter().copied().filter(|&t| t > t0 && t < t1));
    nodes.push(t1);
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("node times must be increasing"));
    }
    let slices: Vec<CompactSetRep> = nodes.iter().map(|&t| tube.at(t)).collect::<Result<_>>()?;
    let d0 = slices[0].distance(x0);
    if d0 > cfg.viab_tol + slices[0].resolution_floor() {
        return Err(invalid(format!("x0 is {d0} away from E(t0)")));
    }
    let mut tube_modulus = 0.0f64;
    for (w, s) in nodes.windows(2).zip(slices.windows(2)) {
        tube_modulus = tube_modulus.max(hausdorff(&s[0], &s[1])? / (w[1] - w[0]));
    }
    let step = cfg.step.unwrap_or_else(|| default_step(t0, t1));
    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut node_distances = vec![d0];
    let mut jumps = Vec::new();
    let mut max_gap = 0.0f64;
    let mut defect = 0.0;
    for (i, w) in nodes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let target = &slices[i + 1];
        let y0 = states[states.len() - 1].clone();
        let gap = tangential_gap(prob, target, a, &y0, b - a)?;
        max_gap = max_gap.max(gap);
        if gap > cfg.tang_tol * (1.0 + norm(&y0)) {
            return Err(Error::Infeasible(format!(
                "tangential condition fails at t={a}, y={y0:?}: gap {gap:.3e} exceeds {:.3e}",
                cfg.tang_tol * (1.0 + norm(&y0))
            )));
        }
        let seg_times = time_nodes(a, b, step);
        let mut seg = vec![y0];
        for sw in seg_times.windows(2) {
            let y = &seg[seg.len() - 1];
            let body = prob.velocities(sw[0], y)?;
            let (v, _) = best_velocity(&body, y, target, b - sw[0]);
            seg.push(axpy(y, sw[1] - sw[0], &v));
        }
        let corrected = filippov_correct(prob, &Trajectory::new(seg_times.clone(), seg)?)?;
        defect += corrected.defect_integral;
        let mut seg_states = corrected.x.states().to_vec();
        let end = seg_states.pop().expect("segment has nodes");
        let miss = target.distance(&end);
        let end = if miss > cfg.viab_tol {
            let jump_tol = (cfg.tang_tol * (1.0 + norm(&end)) * (b - a)).max(0.5 * (b - a) * tube_modulus)
                + cfg.viab_tol
                + target.resolution_floor();
            if miss > jump_tol {
                return Err(Error::Failure(format!(
                    "projection jump {miss:.3e} at t={b} exceeds {jump_tol:.3e}; the tube is too coarse"
                )));
            }
            jumps.push(miss);
            target.project(&end)
        } else {
            jumps.push(0.0);
            end
        };
        node_distances.push(target.distance(&end));
        seg_states.push(end);
        times.extend_from_slice(&seg_times[1..]);
        states.extend(seg_states.into_iter().skip(1));
    }
    let mesh = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let total_jump = jumps.iter().sum();
    Ok(ViabilityRun {
        trajectory: Trajectory::new(times, states)?,
        node_times: nodes,
        node_distances,
        jumps,
        total_jump,
        jump_budget: (1.0 + cfg.jump_slack) * mesh * tube_modulus,
        tube_modulus,
        max_tangential_gap: max_gap,
        filippov_defect: defect,
    })
}
