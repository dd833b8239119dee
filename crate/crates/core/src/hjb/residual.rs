use super::ValueField;
use crate::error::{invalid, Result};
use crate::fenchel::HamiltonianModel;
use crate::grid::Grid;
use crate::setgeom::{sphere_sample, CompactSetRep};
use rayon::prelude::*;
use serde::Serialize;

/// Sampling of the residual checker.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualPlan {
    /// Approximate number of sampled nodes per axis.
    pub per_axis: usize,
    /// Directions of the contingent-cone sample in `(t, x)`.
    pub directions: usize,
    /// Interior pass threshold is `constant * (dt + dx)`.
    pub constant: f64,
    /// A node counts as smooth when every one-sided difference pair differs
    /// by at most `smooth_factor * h` on its axis.
    pub smooth_factor: f64,
    /// FD cross-check threshold is `fd_factor * grid_h`.
    pub fd_factor: f64,
}

impl Default for ResidualPlan {
    fn default() -> Self {
        Self {
            per_axis: 48,
            directions: 512,
            constant: 3.0,
            smooth_factor: 10.0,
            fd_factor: 5.0,
        }
    }
}

/// Residual at one node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeResidual {
    pub t: f64,
    pub x: Vec<f64>,
    /// On the boundary of Omega (a space neighbour is missing or infinite).
    pub boundary: bool,
    /// Interior: the polar element with the largest `|residual|`, signed.
    /// Boundary: the least residual over polar elements and normal-cone additions.
    pub residual: f64,
    /// `-u_t + H(t, x, -grad_x u, 1)` from central differences, where available.
    pub fd_residual: Option<f64>,
    pub smooth: bool,
    /// Polar elements that passed the cone test.
    pub polar_size: usize,
}

/// Outcome at one sampled node.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ResidualSample {
    Evaluated(NodeResidual),
    SkippedInfinite { t: f64, x: Vec<f64> },
    SkippedEmptyPolar { t: f64, x: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub sign_convention: String,
    pub evaluated: usize,
    pub skipped_infinite: usize,
    pub skipped_empty_polar: usize,
    pub dt: f64,
    pub dx: f64,
    pub interior_max_abs: f64,
    pub interior_witness: Option<(f64, Vec<f64>)>,
    pub interior_tol: f64,
    /// `interior_max_abs / (dt + dx)`.
    pub measured_constant: f64,
    pub boundary_min: f64,
    pub boundary_witness: Option<(f64, Vec<f64>)>,
    pub smooth_points: usize,
    pub fd_max_disagreement: f64,
    pub fd_tol: f64,
    pub interior_pass: bool,
    pub boundary_pass: bool,
    pub fd_pass: bool,
    pub pass: bool,
}

const SIGN_CONVENTION: &str = "polar element (a, b, -1) of the epigraph cone maps to -a + H(t, x, -b, 1); \
smooth points reduce to -u_t + H(t, x, -grad_x u, 1)";

struct Stencil<'a> {
    u: &'a ValueField,
    grid: &'a Grid,
    dirs: Vec<Vec<f64>>,
}

impl Stencil<'_> {
    fn neighbor(&self, flat: usize, m: &[usize], k: usize, up: bool) -> Option<f64> {
        let g = self.grid;
        let j = if up {
            (m[k] + 1 < g.res()[k]).then(|| flat + g.stride(k))?
        } else {
            (m[k] > 0).then(|| flat - g.stride(k))?
        };
        Some(self.u.field().value(j)).filter(|v| v.is_finite())
    }

    fn evaluate(
        &self,
        model: &HamiltonianModel,
        omega: &CompactSetRep,
        flat: usize,
        plan: &ResidualPlan,
    ) -> ResidualSample {
        let g = self.grid;
        let p = g.node(flat);
        let (t, x) = (p[0], p[1..].to_vec());
        let u0 = self.u.field().value(flat);
        if !u0.is_finite() || !omega.contains(&x) {
            return ResidualSample::SkippedInfinite { t, x };
        }
        let d = g.dim();
        let m = g.multi(flat);
        let h = g.spacings();
        let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut central = Vec::with_capacity(d);
        let mut smooth = true;
        let mut curvature = 0.0f64;
        let mut outward: Vec<(usize, f64)> = Vec::new();
        for k in 0..d {
            let fwd = self.neighbor(flat, &m, k, true).map(|v| (v - u0) / h[k]);
            let bwd = self.neighbor(flat, &m, k, false).map(|v| (u0 - v) / h[k]);
            let mut cands = Vec::new();
            match (fwd, bwd) {
                (Some(f), Some(b)) => {
                    cands.extend([f, b, 0.5 * (f + b)]);
                    central.push(Some(0.5 * (f + b)));
                    smooth &= (f - b).abs() <= plan.smooth_factor * h[k];
                    curvature = curvature.max((f - b).abs() * h[k]);
                }
                (Some(f), None) => {
                    cands.push(f);
                    central.push((k == 0).then_some(f));
                    smooth = false;
                    if k > 0 {
                        outward.push((k - 1, -1.0));
                    }
                }
                (None, Some(b)) => {
                    cands.push(b);
                    central.push((k == 0).then_some(b));
                    smooth = false;
                    if k > 0 {
                        outward.push((k - 1, 1.0));
                    }
                }
                (None, None) => return ResidualSample::SkippedInfinite { t, x },
            }
            per_axis.push(cands);
        }
        // one-cell directional increments in scaled coordinates
        let incr: Vec<(usize, f64)> = self
            .dirs
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let q: Vec<f64> = p.iter().zip(e).zip(&h).map(|((pk, ek), hk)| pk + ek * hk).collect();
                let v = self.u.field().interpolate(&q);
                v.is_finite().then_some((i, v - u0))
            })
            .collect();
        let tol = 1e-9 + 2.0 * curvature;
        let residual = |grad: &[f64], shift: &[f64]| {
            let b: Vec<f64> = grad[1..].iter().zip(shift).map(|(g, s)| -(g + s)).collect();
            -grad[0] + model.h(t, &x, &b, 1.0)
        };
        let mut polar: Vec<Vec<f64>> = Vec::new();
        let total: usize = per_axis.iter().map(Vec::len).product();
        for code in 0..total {
            let mut c = code;
            let grad: Vec<f64> = per_axis
                .iter()
                .map(|v| {
                    let g = v[c % v.len()];
                    c /= v.len();
                    g
                })
                .collect();
            let ok = incr.iter().all(|&(i, du)| {
                let e = &self.dirs[i];
                let lin: f64 = grad.iter().zip(e).zip(&h).map(|((g, ek), hk)| g * ek * hk).sum();
                lin <= du + tol
            });
            if ok {
                polar.push(grad);
            }
        }
        if polar.is_empty() {
            return ResidualSample::SkippedEmptyPolar { t, x };
        }
        let zero = vec![0.0; d - 1];
        let boundary = !outward.is_empty();
        let value = if boundary {
            polar
                .iter()
                .map(|grad| min_over_normal_cone(|s| residual(grad, s), &outward, d - 1, grad))
                .fold(f64::INFINITY, f64::min)
        } else {
            polar
                .iter()
                .map(|grad| residual(grad, &zero))
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .expect("non-empty polar")
        };
        let fd_residual = central
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|grad| residual(&grad, &zero));
        ResidualSample::Evaluated(NodeResidual {
            t,
            x,
            boundary,
            residual: value,
            fd_residual,
            smooth,
            polar_size: polar.len(),
        })
    }
}

/// `min_{lambda >= 0} r(sum lambda_j n_j)` for axis normals, by coordinatewise
/// ternary search (r is convex in the shift).
fn min_over_normal_cone(r: impl Fn(&[f64]) -> f64, normals: &[(usize, f64)], n: usize, grad: &[f64]) -> f64 {
    let reach = 10.0 * (1.0 + grad.iter().map(|g| g.abs()).fold(0.0, f64::max));
    let mut lambda = vec![0.0; normals.len()];
    let shift = |lambda: &[f64]| {
        let mut s = vec![0.0; n];
        for (l, (k, sign)) in lambda.iter().zip(normals) {
            s[*k] += sign * l;
        }
        s
    };
    for _ in 0..3 {
        for j in 0..normals.len() {
            let (mut lo, mut hi) = (0.0, reach);
            for _ in 0..80 {
                let a = lo + (hi - lo) / 3.0;
                let b = hi - (hi - lo) / 3.0;
                lambda[j] = a;
                let fa = r(&shift(&lambda));
                lambda[j] = b;
                let fb = r(&shift(&lambda));
                if fa <= fb {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            lambda[j] = 0.5 * (lo + hi);
            let at_zero = {
                let mut l0 = lambda.clone();
                l0[j] = 0.0;
                r(&shift(&l0))
            };
            if at_zero <= r(&shift(&lambda)) {
                lambda[j] = 0.0;
            }
        }
    }
    r(&shift(&lambda))
}

fn stencil<'a>(u: &'a ValueField, plan: &ResidualPlan) -> Stencil<'a> {
    let grid = u.field().grid();
    Stencil {
        u,
        grid,
        dirs: sphere_sample(grid.dim(), plan.directions),
    }
}

/// Residual at the grid node nearest to `(t, x)`.
pub fn residual_at(
    u: &ValueField,
    model: &HamiltonianModel,
    omega: &CompactSetRep,
    t: f64,
    x: &[f64],
    plan: &ResidualPlan,
) -> Result<ResidualSample> {
    if x.len() != u.space_dim() || model.dim() != u.space_dim() {
        return Err(invalid("dimension mismatch between field, model and point"));
    }
    let mut p = vec![t];
    p.extend_from_slice(x);
    let st = stencil(u, plan);
    Ok(st.evaluate(model, omega, st.grid.nearest(&p), plan))
}

fn sample_indices(res: usize, per_axis: usize, include_last: bool) -> Vec<usize> {
    let top = if include_last { res - 1 } else { res - 2 };
    let stride = (top / per_axis.max(1)).max(1);
    let mut v: Vec<usize> = (0..=top).step_by(stride).collect();
    if include_last && v.last() != Some(&top) {
        v.push(top);
    }
    v
}

/// Residual of `u` on a sample of nodes: interior values should vanish,
/// boundary values should be nonnegative.
pub fn epigraphical_residual(
    u: &ValueField,
    model: &HamiltonianModel,
    omega: &CompactSetRep,
    plan: &ResidualPlan,
) -> Result<(ResidualReport, Vec<ResidualSample>)> {
    if model.dim() != u.space_dim() || omega.dim() != u.space_dim() {
        return Err(invalid("dimension mismatch between field, model and Omega"));
    }
    let st = stencil(u, plan);
    let g = st.grid;
    // time samples stop before the horizon, where V is pinned to 0
    let axes: Vec<Vec<usize>> = (0..g.dim())
        .map(|k| sample_indices(g.res()[k], plan.per_axis, k > 0))
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let flats: Vec<usize> = (0..total)
        .map(|code| {
            let mut c = code;
            let m: Vec<usize> = axes
                .iter()
                .map(|a| {
                    let i = a[c % a.len()];
                    c /= a.len();
                    i
                })
                .collect();
            g.flat(&m)
        })
        .collect();
    let samples: Vec<ResidualSample> = flats.par_iter().map(|&f| st.evaluate(model, omega, f, plan)).collect();

    let (dt, dx) = (u.dt(), u.dx());
    let grid_h = dt.max(dx);
    let interior_tol = plan.constant * (dt + dx);
    let fd_tol = plan.fd_factor * grid_h;
    let mut rep = ResidualReport {
        sign_convention: SIGN_CONVENTION.into(),
        evaluated: 0,
        skipped_infinite: 0,
        skipped_empty_polar: 0,
        dt,
        dx,
        interior_max_abs: 0.0,
        interior_witness: None,
        interior_tol,
        measured_constant: 0.0,
        boundary_min: f64::INFINITY,
        boundary_witness: None,
        smooth_points: 0,
        fd_max_disagreement: 0.0,
        fd_tol,
        interior_pass: true,
        boundary_pass: true,
        fd_pass: true,
        pass: true,
    };
    for s in &samples {
        match s {
            ResidualSample::SkippedInfinite { .. } => rep.skipped_infinite += 1,
            ResidualSample::SkippedEmptyPolar { .. } => rep.skipped_empty_polar += 1,
            ResidualSample::Evaluated(n) => {
                rep.evaluated += 1;
                if n.boundary {
                    if n.residual < rep.boundary_min {
                        rep.boundary_min = n.residual;
                        rep.boundary_witness = Some((n.t, n.x.clone()));
                    }
                } else {
                    if n.residual.abs() > rep.interior_max_abs {
                        rep.interior_max_abs = n.residual.abs();
                        rep.interior_witness = Some((n.t, n.x.clone()));
                    }
                    if let (true, Some(fd)) = (n.smooth, n.fd_residual) {
                        rep.smooth_points += 1;
                        rep.fd_max_disagreement = rep.fd_max_disagreement.max((fd - n.residual).abs());
                    }
                }
            }
        }
    }
    rep.measured_constant = rep.interior_max_abs / (dt + dx);
    rep.interior_pass = rep.interior_max_abs <= interior_tol;
    rep.boundary_pass = !(rep.boundary_min < -interior_tol);
    rep.fd_pass = rep.fd_max_disagreement <= fd_tol;
    rep.pass = rep.evaluated > 0 && rep.interior_pass && rep.boundary_pass && rep.fd_pass;
    Ok((rep, samples))
}
