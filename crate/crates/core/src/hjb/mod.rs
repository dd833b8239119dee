//! Value function of the state-constrained control problem, its conjugate
//! form `alpha`, the vanishing check, the epigraphical residual checker and
//! the comparison experiment.
//!
//! Sign convention: for a smooth `u` the residual is
//! `-u_t(t,x) + H(t,x,-grad_x u(t,x), 1)`, which vanishes on the value function.

mod comparison;
mod residual;

pub use comparison::{comparison_experiment, ComparisonConfig, ComparisonReport, LegReport, Preconditions};
pub use residual::{epigraphical_residual, residual_at, NodeResidual, ResidualPlan, ResidualReport, ResidualSample};

use crate::error::{invalid, Error, Result};
use crate::fenchel::HamiltonianModel;
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::inclusion::InclusionProblem;
use crate::linalg::{dist, lex_cmp, norm};
use crate::representation::{build_representation, theta_lattice, LocalRep, Representation};
use crate::setgeom::{CompactSetRep, ConvexBody};
use crate::tubes::lsc_regularize;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

/// Default tolerance of the vanishing condition.
pub const DEFAULT_VANISH_TOL: f64 = 1e-3;

/// Default size of the control lattice used by the dynamic programming sweep.
pub const DEFAULT_DP_THETAS: usize = 64;

/// Where a [`ValueField`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ComputedDp,
    ClosedForm,
    UserSupplied,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ComputedDp => "computed-DP",
            Self::ClosedForm => "closed-form",
            Self::UserSupplied => "user-supplied",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "computed-DP" => Ok(Self::ComputedDp),
            "closed-form" => Ok(Self::ClosedForm),
            "user-supplied" => Ok(Self::UserSupplied),
            other => Err(invalid(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Time and space resolution of a value grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolution {
    pub t_nodes: usize,
    pub x_nodes: Vec<usize>,
}

impl Resolution {
    /// Nodes for spacings at most `dt` and `dx` on `[0, t_max] x bbox(omega)`.
    pub fn from_spacing(cp: &ControlProblem, dt: f64, dx: f64) -> Result<Self> {
        if !(dt > 0.0 && dx > 0.0) {
            return Err(invalid("spacings must be positive"));
        }
        let b = cp.omega.bounding_box();
        let nodes = |len: f64, h: f64| ((len / h) - 1e-9).ceil() as usize + 1;
        Ok(Self {
            t_nodes: nodes(cp.t_max, dt),
            x_nodes: b.lower().iter().zip(b.upper()).map(|(l, u)| nodes(u - l, dx)).collect(),
        })
    }
}

/// Function of `(t, x)` on `[0, T] x box`; axis 0 of the grid is time.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField {
    field: GridFunction,
    provenance: Provenance,
    lsc_fixes: usize,
    infeasible_nodes: usize,
}

impl ValueField {
    /// Wraps a `(t, x)` grid function whose time axis starts at 0; every
    /// slice goes through the lsc pass.
    pub fn new(field: GridFunction, provenance: Provenance) -> Result<Self> {
        Self::with_counts(field, provenance, 0)
    }

    fn with_counts(field: GridFunction, provenance: Provenance, infeasible_nodes: usize) -> Result<Self> {
        let g = field.grid();
        if g.dim() < 2 {
            return Err(invalid("value field needs a time axis and at least one space axis"));
        }
        if g.bounds().lower()[0].abs() > 1e-12 {
            return Err(invalid("value field time axis must start at 0"));
        }
        if field.has_neg_inf() {
            return Err(invalid("value field takes -inf"));
        }
        let mut out = Self {
            field,
            provenance,
            lsc_fixes: 0,
            infeasible_nodes,
        };
        let n = out.slice_len();
        let mut values = out.field.values().to_vec();
        let mut fixes = 0;
        for i in 0..out.t_nodes() {
            let Ok(s) = out.slice(i) else { continue };
            let tol = 1e-9 + 2.0 * s.lipschitz_estimate() * s.grid().max_spacing();
            let (r, k) = lsc_regularize(&s, tol)?;
            values[i * n..(i + 1) * n].copy_from_slice(r.values());
            fixes += k;
        }
        out.field = GridFunction::new(out.field.grid().clone(), values)?;
        out.lsc_fixes = fixes;
        Ok(out)
    }

    /// Samples `f(t, x)` on the grid.
    pub fn from_fn(
        t_max: f64,
        space: &BoxDomain,
        res: &Resolution,
        provenance: Provenance,
        f: impl Fn(f64, &[f64]) -> f64,
    ) -> Result<Self> {
        let grid = Grid::new(time_space_box(t_max, space)?, res_vec(res))?;
        Self::new(GridFunction::from_fn(grid, |p| f(p[0], &p[1..]))?, provenance)
    }

    pub fn field(&self) -> &GridFunction {
        &self.field
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Nodes lowered by the lsc pass.
    pub fn lsc_fixes(&self) -> usize {
        self.lsc_fixes
    }

    /// Nodes where no admissible control existed (value `+inf`).
    pub fn infeasible_nodes(&self) -> usize {
        self.infeasible_nodes
    }

    pub fn space_dim(&self) -> usize {
        self.field.dim() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.field.grid().bounds().upper()[0]
    }

    pub fn t_nodes(&self) -> usize {
        self.field.grid().res()[0]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.t_nodes()).map(|i| self.field.grid().coord(0, i)).collect()
    }

    pub fn dt(&self) -> f64 {
        self.field.grid().spacing(0)
    }

    /// Largest space spacing.
    pub fn dx(&self) -> f64 {
        (1..self.field.dim())
            .map(|k| self.field.grid().spacing(k))
            .fold(0.0, f64::max)
    }

    pub fn space_grid(&self) -> Result<Grid> {
        let g = self.field.grid();
        let b = g.bounds();
        Grid::new(
            BoxDomain::new(b.lower()[1..].to_vec(), b.upper()[1..].to_vec())?,
            g.res()[1..].to_vec(),
        )
    }

    fn slice_len(&self) -> usize {
        self.field.grid().stride(0)
    }

    fn slice_values(&self, i: usize) -> &[f64] {
        let n = self.slice_len();
        &self.field.values()[i * n..(i + 1) * n]
    }

    /// `V(t_i, .)`; errors when the slice has no finite value.
    pub fn slice(&self, i: usize) -> Result<GridFunction> {
        if i >= self.t_nodes() {
            return Err(invalid(format!("slice {i} out of range")));
        }
        GridFunction::new(self.space_grid()?, self.slice_values(i).to_vec())
    }

    /// Slice at the grid time nearest to `t`.
    pub fn slice_at(&self, t: f64) -> Result<(f64, GridFunction)> {
        let i = self.time_index(t);
        Ok((self.field.grid().coord(0, i), self.slice(i)?))
    }

    pub fn time_index(&self, t: f64) -> usize {
        let i = (t / self.dt()).round().max(0.0) as usize;
        i.min(self.t_nodes() - 1)
    }

    /// Multilinear in `x`, nearest grid time in `t`.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let i = self.time_index(t);
        let mut p = Vec::with_capacity(x.len() + 1);
        p.push(self.field.grid().coord(0, i));
        p.extend_from_slice(x);
        self.field.interpolate(&p)
    }

    /// `max_x |V(t_i, x)|` over finite values, per slice.
    pub fn sup_abs_per_slice(&self) -> Vec<f64> {
        (0..self.t_nodes())
            .map(|i| {
                self.slice_values(i)
                    .iter()
                    .filter(|v| v.is_finite())
                    .fold(0.0f64, |a, v| a.max(v.abs()))
            })
            .collect()
    }

    /// Adds `c` to every finite value.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Ok(Self {
            field: self.field.map(|v| v + c)?,
            ..self.clone()
        })
    }

    pub fn to_text(&self) -> String {
        self.field.to_text(Some(&self.provenance.to_string()))
    }

    /// Parses the shared gridfn format; a missing provenance line means user-supplied.
    pub fn parse(text: &str) -> Result<Self> {
        let (field, prov) = GridFunction::parse(text)?;
        let prov = match prov {
            Some(p) => p.parse()?,
            None => Provenance::UserSupplied,
        };
        Self::new(field, prov)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn time_space_box(t_max: f64, space: &BoxDomain) -> Result<BoxDomain> {
    let mut lower = vec![0.0];
    lower.extend_from_slice(space.lower());
    let mut upper = vec![t_max];
    upper.extend_from_slice(space.upper());
    BoxDomain::new(lower, upper)
}

fn res_vec(res: &Resolution) -> Vec<usize> {
    let mut v = vec![res.t_nodes];
    v.extend_from_slice(&res.x_nodes);
    v
}

/// One admissible control at a point: velocity and running cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Control {
    pub velocity: Vec<f64>,
    pub cost: f64,
}

/// State constraint, representation and truncated horizon.
#[derive(Clone)]
pub struct ControlProblem {
    omega: CompactSetRep,
    rep: Arc<Representation>,
    t_max: f64,
    vanish_tol: f64,
    thetas: Arc<Vec<Vec<f64>>>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("model", &self.rep.model().name())
            .field("omega", &self.omega.kind())
            .field("t_max", &self.t_max)
            .field("vanish_tol", &self.vanish_tol)
            .finish()
    }
}

impl ControlProblem {
    /// Horizon from the tail bound: the smallest `T` with `tail_bound(T) <= vanish_tol / 2`.
    pub fn new(model: &HamiltonianModel, omega: CompactSetRep, vanish_tol: f64) -> Result<Self> {
        let mut cp = Self::with_horizon(model, omega, vanish_tol, 1.0)?;
        cp.t_max = cp.horizon_for(vanish_tol / 2.0)?;
        Ok(cp)
    }

    pub fn with_horizon(model: &HamiltonianModel, omega: CompactSetRep, vanish_tol: f64, t_max: f64) -> Result<Self> {
        if omega.dim() != model.dim() {
            return Err(invalid(format!(
                "Omega has dimension {}, model {}",
                omega.dim(),
                model.dim()
            )));
        }
        if !(vanish_tol > 0.0 && t_max > 0.0 && t_max.is_finite()) {
            return Err(invalid("vanish_tol and t_max must be positive"));
        }
        let rep = build_representation(model, None)?;
        Ok(Self {
            omega,
            rep: Arc::new(rep),
            t_max,
            vanish_tol,
            thetas: Arc::new(theta_lattice(model.dim() + 1, DEFAULT_DP_THETAS)),
        })
    }

    pub fn with_t_max(mut self, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(invalid("t_max must be positive"));
        }
        self.t_max = t_max;
        Ok(self)
    }

    /// Replaces the control lattice by `theta_lattice(n + 1, count)`.
    pub fn with_theta_count(mut self, count: usize) -> Self {
        self.thetas = Arc::new(theta_lattice(self.dim() + 1, count));
        self
    }

    pub fn omega(&self) -> &CompactSetRep {
        &self.omega
    }

    pub fn representation(&self) -> &Representation {
        &self.rep
    }

    pub fn model(&self) -> &HamiltonianModel {
        self.rep.model()
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn vanish_tol(&self) -> f64 {
        self.vanish_tol
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    /// `max |x|` over the bounding box of Omega.
    pub fn omega_radius(&self) -> f64 {
        let b = self.omega.bounding_box();
        b.lower()
            .iter()
            .zip(b.upper())
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Bound on `int_T^inf sup_{x in Omega} |L| ds`, namely
    /// `(1 + R_Omega) int_T^inf sigma_hat`; `+inf` when `sigma_hat` does not decay.
    pub fn tail_bound(&self, t: f64) -> f64 {
        let model = self.model();
        let reach = 64.0;
        let far = model.sigma_hat(t + reach);
        if !(far <= 1e-12 * (1.0 + model.sigma_hat(t))) {
            return f64::INFINITY;
        }
        let n = 4096;
        let h = reach / n as f64;
        let inner: f64 = (1..n)
            .map(|i| model.sigma_hat(t + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
            .sum();
        (1.0 + self.omega_radius()) * (model.sigma_hat(t) + far + inner) * h / 3.0
    }

    fn horizon_for(&self, target: f64) -> Result<f64> {
        if self.tail_bound(0.0) <= target {
            return Ok(1.0);
        }
        let mut hi = 1.0;
        while self.tail_bound(hi) > target {
            hi *= 2.0;
            if hi > 1e4 {
                return Err(Error::Config(format!(
                    "the tail bound of the running cost does not fall below {target:.1e}; give T_max explicitly"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.tail_bound(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Distinct velocities of the lattice at `(t, x)` with the least cost of each.
    pub fn controls_of(&self, local: &LocalRep) -> Vec<Control> {
        let n = self.dim();
        let mut aim = vec![0.0; n];
        let mut all: Vec<Control> = self
            .thetas
            .iter()
            .map(|th| {
                for k in 0..n {
                    aim[k] = local.center()[k] + local.radius() * th[k];
                }
                let velocity = local.body().project(&aim);
                let l = local.h_star(&velocity);
                Control {
                    cost: l + th[n].max(0.0) * (local.cap() - l),
                    velocity,
                }
            })
            .filter(|c| c.cost.is_finite())
            .collect();
        all.sort_by(|a, b| lex_cmp(&a.velocity, &b.velocity).then(a.cost.total_cmp(&b.cost)));
        let mut out: Vec<Control> = Vec::with_capacity(all.len());
        for c in all {
            match out.last() {
                Some(last) if dist(&last.velocity, &c.velocity) <= 1e-12 => {}
                _ => out.push(c),
            }
        }
        out
    }

    pub fn controls(&self, t: f64, x: &[f64]) -> Result<Vec<Control>> {
        Ok(self.controls_of(&self.rep.local_uncached(t, x)?))
    }

    /// `Phi_hat(t, x)`: hull of `(f, -L)` and `(f, -cap)` over controls with `L <= cap`.
    pub fn augmented_velocities(&self, t: f64, x: &[f64]) -> Result<ConvexBody> {
        let local = self.rep.local(t, x)?;
        let cap = local.cap();
        let mut pts = Vec::new();
        for c in self.controls_of(&local) {
            if c.cost <= cap + 1e-12 {
                let mut lo = c.velocity.clone();
                lo.push(-c.cost);
                let mut hi = c.velocity;
                hi.push(-cap);
                pts.push(lo);
                pts.push(hi);
            }
        }
        if pts.is_empty() {
            return Err(Error::Infeasible(format!(
                "augmented velocity set is empty at t={t}, x={x:?}"
            )));
        }
        ConvexBody::new(pts)
    }

    /// Inclusion `(x, z)' in Phi_hat(t, x)` on `R^{n+1}`.
    pub fn augmented_problem(&self) -> InclusionProblem {
        let n = self.dim();
        let me = self.clone();
        let grow = self.clone();
        let lip = self.clone();
        InclusionProblem::new(
            n + 1,
            move |t, z| me.augmented_velocities(t, &z[..n]),
            move |t| {
                let m = grow.model();
                m.sigma_p(t) + m.sigma_hat(t) * (1.0 + grow.omega_radius())
            },
            move |t, _| {
                let m = lip.model();
                5.0 * (n + 1) as f64 * (m.sigma_x(t) + m.sigma_p(t))
            },
        )
    }

    /// Inclusion `x' in co f(t, x, B)` on `R^n`.
    pub fn velocity_problem(&self) -> InclusionProblem {
        let n = self.dim();
        let me = self.clone();
        let grow = self.clone();
        let lip = self.clone();
        InclusionProblem::new(
            n,
            move |t, x| {
                let local = me.rep.local(t, x)?;
                ConvexBody::new(me.controls_of(&local).into_iter().map(|c| c.velocity).collect())
            },
            move |t| grow.model().sigma_p(t),
            move |t, _| lip.model().sigma_x(t),
        )
    }
}

/// Backward recursion `V_i(x) = min_c [dt c.cost + V_{i+1}(x + dt c.velocity)]`
/// from `V(T) = 0` on Omega; steps leaving Omega are discarded.
fn backward_dp<F>(cp: &ControlProblem, res: &Resolution, controls: F) -> Result<ValueField>
where
    F: Fn(f64, &[f64]) -> Result<Vec<Control>> + Sync,
{
    if res.t_nodes < 2 || res.x_nodes.len() != cp.dim() || res.x_nodes.iter().any(|&n| n < 2) {
        return Err(invalid(
            "need at least two nodes per axis and one space axis per state coordinate",
        ));
    }
    let space = cp.omega.bounding_box();
    let xgrid = Grid::new(space.clone(), res.x_nodes.clone())?;
    let tgrid = Grid::new(BoxDomain::new(vec![0.0], vec![cp.t_max])?, vec![res.t_nodes])?;
    let nodes: Vec<Vec<f64>> = xgrid.nodes().collect();
    let inside: Vec<bool> = nodes.iter().map(|x| cp.omega.contains(x)).collect();
    let nx = nodes.len();
    let mut values = vec![0.0; res.t_nodes * nx];
    let last = res.t_nodes - 1;
    for (v, ok) in values[last * nx..].iter_mut().zip(&inside) {
        *v = if *ok { 0.0 } else { f64::INFINITY };
    }
    let mut infeasible = 0;
    for i in (0..last).rev() {
        let t = tgrid.coord(0, i);
        let dt = tgrid.coord(0, i + 1) - t;
        let next = GridFunction::new(xgrid.clone(), values[(i + 1) * nx..(i + 2) * nx].to_vec())?;
        let row: Vec<f64> = nodes
            .par_iter()
            .zip(inside.par_iter())
            .map(|(x, &ok)| {
                if !ok {
                    return Ok(f64::INFINITY);
                }
                let mut best = f64::INFINITY;
                let mut y = vec![0.0; x.len()];
                for c in controls(t, x)? {
                    for (k, yk) in y.iter_mut().enumerate() {
                        *yk = x[k] + dt * c.velocity[k];
                    }
                    if !cp.omega.within(&y, 1e-12) {
                        continue;
                    }
                    for (k, yk) in y.iter_mut().enumerate() {
                        *yk = yk.clamp(space.lower()[k], space.upper()[k]);
                    }
                    best = best.min(dt * c.cost + next.interpolate(&y));
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        infeasible += row
            .iter()
            .zip(&inside)
            .filter(|(v, ok)| **ok && v.is_infinite())
            .count();
        values[i * nx..(i + 1) * nx].copy_from_slice(&row);
    }
    let grid = Grid::new(time_space_box(cp.t_max, &space)?, res_vec(res))?;
    ValueField::with_counts(GridFunction::new(grid, values)?, Provenance::ComputedDp, infeasible)
}

/// Value function on the truncated horizon by backward dynamic programming
/// over the sampled control lattice.
pub fn value_function(cp: &ControlProblem, res: &Resolution) -> Result<ValueField> {
    backward_dp(cp, res, |t, x| cp.controls(t, x))
}

/// Same recursion with velocities ranging over the finite nodes of the
/// conjugate grid and running cost `H*(t, x, v, 1)`.
pub fn alpha_field(cp: &ControlProblem, res: &Resolution) -> Result<ValueField> {
    let model = cp.model();
    backward_dp(cp, res, |t, x| {
        let conj = model.conjugate_slice(t, x, 1.0)?;
        let g = conj.grid();
        let mut out = Vec::new();
        for i in 0..g.len() {
            let v = conj.value(i);
            if !v.is_finite() {
                continue;
            }
            if g.is_boundary_node(i) {
                return Err(Error::Domain(format!(
                    "conjugate grid does not cover dom H* at t={t}, x={x:?}: finite value on the dual box boundary"
                )));
            }
            out.push(Control {
                velocity: g.node(i),
                cost: v,
            });
        }
        Ok(out)
    })
}

/// `alpha(t, x)` read off an alpha field; `+inf` outside Omega.
pub fn alpha_infimum(alpha: &ValueField, cp: &ControlProblem, t: f64, x: &[f64]) -> f64 {
    if !cp.omega.contains(x) {
        return f64::INFINITY;
    }
    alpha.value_at(t, x)
}

/// Largest `|a - b|` over the grid nodes of `a` where both are finite, with its location.
pub fn max_gap(a: &ValueField, b: &ValueField) -> (f64, Option<(f64, Vec<f64>)>) {
    let g = a.field().grid();
    let mut worst = (0.0, None);
    for i in 0..g.len() {
        let p = g.node(i);
        let va = a.field().value(i);
        let vb = b.value_at(p[0], &p[1..]);
        if va.is_finite() && vb.is_finite() && (va - vb).abs() > worst.0 {
            worst = ((va - vb).abs(), Some((p[0], p[1..].to_vec())));
        }
    }
    worst
}

/// Outcome of the vanishing check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VanishingReport {
    /// `max_x |V(t_i, .)|` per slice.
    pub sups: Vec<f64>,
    /// First grid time from which the sups are nonincreasing.
    pub t_star: f64,
    pub sup_at_end: f64,
    pub vanish_tol: f64,
    /// Tail bound at the field's horizon.
    pub tail_bound_at_end: f64,
    /// Whether the horizon is long enough: tail bound at most `vanish_tol / 2`.
    pub horizon_ok: bool,
    pub pass: bool,
}

pub fn vanishing_check(field: &ValueField, cp: &ControlProblem) -> VanishingReport {
    let sups = field.sup_abs_per_slice();
    let times = field.times();
    let mut start = sups.len() - 1;
    while start > 0 && sups[start - 1] + 1e-12 >= sups[start] {
        start -= 1;
    }
    let sup_at_end = *sups.last().expect("at least two slices");
    let tail = cp.tail_bound(field.t_max());
    let horizon_ok = tail <= cp.vanish_tol / 2.0;
    VanishingReport {
        t_star: times[start],
        sup_at_end,
        vanish_tol: cp.vanish_tol,
        tail_bound_at_end: tail,
        horizon_ok,
        pass: sup_at_end <= cp.vanish_tol && start + 1 < sups.len(),
        sups,
    }
}

/// `e^{-t}(|x| - 1 + e^{-|x|})`, the value function of the decaying eikonal model on a ball-shaped Omega
/// containing the origin.
pub fn eikonal_decay_value(t: f64, x: &[f64]) -> f64 {
    let r = norm(x);
    (-t).exp() * (r - 1.0 + (-r).exp())
}
