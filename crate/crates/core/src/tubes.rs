//! Set-valued maps sampled at knots: bounded-variation functionals, epigraph
//! tubes and the distance between two tubes.

use crate::error::{domain, invalid, Error, Result};
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::linalg::{add, scale};
use crate::setgeom::{excess_points, set_distance, CompactSetRep, ConvexBody};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Default dyadic refinement depth for [`lbv_variation`].
pub const DEFAULT_DEPTH: u32 = 8;

/// How a tube is evaluated between knots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Interpolation {
    #[default]
    PiecewiseConstant,
    /// Minkowski combination of neighbouring vertex hulls; piecewise constant otherwise.
    Linear,
}

#[derive(Clone, Debug)]
pub struct Tube {
    times: Vec<f64>,
    slices: Vec<CompactSetRep>,
    interpolation: Interpolation,
}

impl Tube {
    pub fn new(times: Vec<f64>, slices: Vec<CompactSetRep>) -> Result<Self> {
        if times.len() < 2 || times.len() != slices.len() {
            return Err(invalid("a tube needs at least two knots and one slice per knot"));
        }
        if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
            return Err(invalid("tube times must be finite and nonnegative"));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "tube times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let d = slices[0].dim();
        if let Some(i) = slices.iter().position(|s| s.dim() != d) {
            return Err(invalid(format!(
                "slice {i} has dimension {}, expected {d}",
                slices[i].dim()
            )));
        }
        if let Some(i) = slices.iter().position(|s| s.sample_points().is_empty()) {
            return Err(domain(format!("slice at t={} is empty", times[i])));
        }
        Ok(Self {
            times,
            slices,
            interpolation: Interpolation::default(),
        })
    }

    pub fn from_fn(times: Vec<f64>, slice: impl Fn(f64) -> Result<CompactSetRep>) -> Result<Self> {
        let slices = times.iter().map(|&t| slice(t)).collect::<Result<Vec<_>>>()?;
        Self::new(times, slices)
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[CompactSetRep] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.slices[0].dim()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    fn time_tol(t: f64) -> f64 {
        1e-12 * (1.0 + t.abs())
    }

    pub fn knot_index(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - Self::time_tol(t));
        (i < self.times.len() && (self.times[i] - t).abs() <= Self::time_tol(t)).then_some(i)
    }

    /// Slice at `t`: the knot slice when `t` is a knot, else per the interpolation tag.
    pub fn at(&self, t: f64) -> Result<CompactSetRep> {
        let (lo, hi) = self.range();
        if t < lo - Self::time_tol(t) || t > hi + Self::time_tol(t) {
            return Err(domain(format!("t={t} outside tube range [{lo}, {hi}]")));
        }
        if let Some(i) = self.knot_index(t) {
            return Ok(self.slices[i].clone());
        }
        let i = self.times.partition_point(|&s| s < t) - 1;
        if let (Interpolation::Linear, Some(a), Some(b)) = (
            self.interpolation,
            self.slices[i].as_body(),
            self.slices[i + 1].as_body(),
        ) {
            let s = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
            let pts: Vec<Vec<f64>> = a
                .vertices()
                .iter()
                .flat_map(|p| b.vertices().iter().map(move |q| add(&scale(p, 1.0 - s), &scale(q, s))))
                .collect();
            return Ok(ConvexBody::new(pts)?.into());
        }
        Ok(self.slices[i].clone())
    }

    pub fn bounding_box(&self) -> BoxDomain {
        self.slices
            .iter()
            .skip(1)
            .fold(self.slices[0].bounding_box(), |b, s| b.union(&s.bounding_box()))
    }

    /// Bounding box of all slices inflated by 10%.
    pub fn default_compact(&self) -> CompactSetRep {
        let b = self.bounding_box();
        let pad: Vec<f64> = b
            .lower()
            .iter()
            .zip(b.upper())
            .map(|(l, u)| 0.05 * (u - l).max(1e-9))
            .collect();
        let lower = b.lower().iter().zip(&pad).map(|(l, p)| l - p).collect();
        let upper = b.upper().iter().zip(&pad).map(|(u, p)| u + p).collect();
        let inflated = BoxDomain::new(lower, upper).expect("padded box is proper");
        ConvexBody::from_box(&inflated).expect("box body").into()
    }

    /// Indices of all knots in `[a, b]`.
    pub fn knots_between(&self, a: f64, b: f64) -> Result<Vec<usize>> {
        let p = self.partition(a, b, 0)?;
        Ok((p[0]..=p[p.len() - 1]).collect())
    }

    /// Knot indices of the dyadic partition of `[a, b]` at `depth`, snapped to knots.
    pub fn partition(&self, a: f64, b: f64, depth: u32) -> Result<Vec<usize>> {
        let (lo, hi) = self.range();
        if a > b || a < lo - Self::time_tol(a) || b > hi + Self::time_tol(b) {
            return Err(domain(format!("[{a}, {b}] is not inside the tube range [{lo}, {hi}]")));
        }
        let first = self.times.partition_point(|&s| s < a - Self::time_tol(a));
        let last = self.times.partition_point(|&s| s <= b + Self::time_tol(b));
        if first >= last {
            return Err(domain(format!("no knot inside [{a}, {b}]")));
        }
        let inside = &self.times[first..last];
        let n = 1u64 << depth.min(24);
        let mut idx: Vec<usize> = (0..=n)
            .map(|k| {
                let d = a + (b - a) * k as f64 / n as f64;
                let j = inside.partition_point(|&s| s < d);
                let j = match j {
                    0 => 0,
                    j if j == inside.len() => j - 1,
                    j if (inside[j] - d) < (d - inside[j - 1]) => j,
                    j => j - 1,
                };
                first + j
            })
            .collect();
        idx.push(first);
        idx.push(last - 1);
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("tube v1 knots={}", self.len());
        if self.interpolation == Interpolation::Linear {
            s.push_str(" interp=linear");
        }
        s.push('\n');
        for (t, slice) in self.times.iter().zip(&self.slices) {
            let _ = writeln!(s, "t={t}");
            s.push_str(&slice.to_text());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty tube input".into(),
        })?;
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut fields = header.split_whitespace();
        if fields.next() != Some("tube") || fields.next() != Some("v1") {
            return Err(perr(hline, "expected `tube v1 knots=<m>`".into()));
        }
        let mut knots = None;
        let mut interpolation = Interpolation::PiecewiseConstant;
        for f in fields {
            match f.split_once('=') {
                Some(("knots", v)) => knots = v.parse::<usize>().ok(),
                Some(("interp", "linear")) => interpolation = Interpolation::Linear,
                Some(("interp", "constant")) => {}
                _ => return Err(perr(hline, format!("bad tube header field `{f}`"))),
            }
        }
        let knots = knots.ok_or_else(|| perr(hline, "tube header needs knots=".into()))?;
        let mut times = Vec::with_capacity(knots);
        let mut slices = Vec::with_capacity(knots);
        for _ in 0..knots {
            let (i, l) = lines.next().ok_or_else(|| perr(hline, "truncated tube".into()))?;
            let t = l
                .trim()
                .strip_prefix("t=")
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| perr(i, format!("expected `t=<time>`, got `{}`", l.trim())))?;
            times.push(t);
            slices.push(CompactSetRep::parse_block(&mut lines)?);
        }
        Ok(Self::new(times, slices)?.with_interpolation(interpolation))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// `exc(A ∩ K | B)`, or `None` when `A ∩ K` has no samples.
fn localized_excess(a: &CompactSetRep, k: &CompactSetRep, b: &CompactSetRep) -> Result<Option<f64>> {
    let pts = a.samples_within(k);
    if pts.is_empty() {
        return Ok(None);
    }
    excess_points(&pts, b).map(Some)
}

/// `exc(E(t_j) ∩ K | E(t_i)) ∨ exc(E(t_i) ∩ K | E(t_j))`; the flag is set when
/// one of the localized slices is empty and contributed zero.
fn pair_term(tube: &Tube, i: usize, j: usize, k: &CompactSetRep) -> Result<(f64, bool)> {
    let (a, b) = (&tube.slices[i], &tube.slices[j]);
    let fwd = localized_excess(b, k, a)?;
    let bwd = localized_excess(a, k, b)?;
    Ok((
        fwd.unwrap_or(0.0).max(bwd.unwrap_or(0.0)),
        fwd.is_none() || bwd.is_none(),
    ))
}

fn partition_terms(tube: &Tube, idx: &[usize], k: &CompactSetRep) -> Result<Vec<(f64, bool)>> {
    idx.par_windows(2).map(|w| pair_term(tube, w[0], w[1], k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Variation {
    /// Largest partition sum over depths `0..=depth`.
    pub value: f64,
    /// Partition sum at exactly `depth`.
    pub raw: f64,
    /// Partition terms that met an empty localized slice.
    pub empty_terms: usize,
}

/// Bounded-variation functional of `tube` on `[a, b]` localized to `compact`,
/// over nested dyadic partitions snapped to knots.
pub fn lbv_variation(tube: &Tube, a: f64, b: f64, compact: &CompactSetRep, depth: u32) -> Result<Variation> {
    let curve = lbv_curve(tube, a, b, compact, depth)?;
    Ok(curve.into_iter().last().expect("depth 0 is always present").1)
}

/// `(depth, variation)` for every depth up to `max_depth`.
pub fn lbv_curve(
    tube: &Tube,
    a: f64,
    b: f64,
    compact: &CompactSetRep,
    max_depth: u32,
) -> Result<Vec<(u32, Variation)>> {
    if compact.dim() != tube.dim() {
        return Err(invalid("compact and tube dimensions differ"));
    }
    let mut best = 0.0f64;
    let mut out = Vec::with_capacity(max_depth as usize + 1);
    for depth in 0..=max_depth {
        let terms = partition_terms(tube, &tube.partition(a, b, depth)?, compact)?;
        let raw: f64 = terms.iter().map(|t| t.0).sum();
        best = best.max(raw);
        out.push((
            depth,
            Variation {
                value: best,
                raw,
                empty_terms: terms.iter().filter(|t| t.1).count(),
            },
        ));
    }
    Ok(out)
}

/// Largest consecutive-knot term over `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub max_jump: f64,
    pub witness: Option<(f64, f64)>,
    pub jump_tol: f64,
    pub pass: bool,
}

pub fn continuity_check(tube: &Tube, compact: &CompactSetRep, jump_tol: f64) -> Result<ContinuityReport> {
    let idx: Vec<usize> = (0..tube.len()).collect();
    let terms = partition_terms(tube, &idx, compact)?;
    let (i, max_jump) = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.0))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let pass = max_jump <= jump_tol;
    Ok(ContinuityReport {
        max_jump,
        witness: (!pass).then(|| (tube.times[i], tube.times[i + 1])),
        jump_tol,
        pass,
    })
}

/// Greedy lower bound on the largest variation carried by a union of knot
/// intervals in `[a, b]` of total length at most `eps`.
pub fn absolute_continuity_modulus(tube: &Tube, a: f64, b: f64, compact: &CompactSetRep, eps: f64) -> Result<f64> {
    let idx = tube.knots_between(a, b)?;
    let terms = partition_terms(tube, &idx, compact)?;
    let mut items: Vec<(f64, f64)> = idx
        .windows(2)
        .zip(&terms)
        .map(|(w, t)| (tube.times[w[1]] - tube.times[w[0]], t.0))
        .filter(|(_, v)| *v > 0.0)
        .collect();
    items.sort_by(|x, y| (y.1 / y.0).total_cmp(&(x.1 / x.0)));
    let mut length = 0.0;
    let mut total = 0.0;
    for (len, v) in items {
        if length + len <= eps * (1.0 + 1e-12) {
            length += len;
            total += v;
        }
    }
    Ok(total)
}

/// Cantor function on `[0, 1]`, evaluated through the ternary expansion.
pub fn cantor_function(x: f64) -> f64 {
    let mut x = x.clamp(0.0, 1.0);
    if x >= 1.0 {
        return 1.0;
    }
    let mut out = 0.0;
    let mut weight = 0.5;
    for _ in 0..60 {
        x *= 3.0;
        if x >= 2.0 {
            out += weight;
            x -= 2.0;
        } else if x >= 1.0 {
            return out + weight;
        }
        weight *= 0.5;
    }
    out
}

fn cantor_slice(t: f64) -> Result<CompactSetRep> {
    Ok(ConvexBody::interval(cantor_function(t), 2.0)?.into())
}

/// `t -> [c(t), 2]` on `knots` uniform knots of `[0, 1]`, `c` the Cantor function.
pub fn cantor_tube(knots: usize) -> Result<Tube> {
    let n = knots.max(2) - 1;
    Tube::from_fn((0..=n).map(|k| k as f64 / n as f64).collect(), cantor_slice)
}

/// Same tube with knots at the endpoints of the `stage`-th Cantor construction intervals.
pub fn cantor_tube_adapted(stage: u32) -> Result<Tube> {
    let mut intervals = vec![(0.0f64, 1.0f64)];
    for _ in 0..stage {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let third = (b - a) / 3.0;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    let mut times: Vec<f64> = intervals.iter().flat_map(|&(a, b)| [a, b]).collect();
    times.dedup();
    Tube::from_fn(times, cantor_slice)
}

/// Replace isolated upward spikes (a node above all its axis neighbours by
/// more than `tol`) with the largest neighbour value; returns the count.
pub fn lsc_regularize(u: &GridFunction, tol: f64) -> Result<(GridFunction, usize)> {
    let g = u.grid();
    let mut values = u.values().to_vec();
    let mut fixed = 0;
    for (i, v) in values.iter_mut().enumerate() {
        let top = g
            .axis_neighbors(i)
            .iter()
            .map(|&j| u.value(j))
            .fold(f64::NEG_INFINITY, f64::max);
        if top.is_finite() && *v > top + tol {
            *v = top;
            fixed += 1;
        }
    }
    Ok((GridFunction::new(g.clone(), values)?, fixed))
}

/// Tube of epigraphs `{(x, z): u(t_i, x) <= z <= value_cap}` as sublevel-grid
/// sets on the `(x, z)` product grid.
pub fn epi_tube(u: &[(f64, GridFunction)], value_cap: f64) -> Result<Tube> {
    let Some((_, first)) = u.first() else {
        return Err(invalid("epigraph tube needs slices"));
    };
    let xg = first.grid();
    if u.iter().any(|(_, f)| f.grid() != xg) {
        return Err(invalid("all slices must share box and resolution"));
    }
    let slope_tol = |f: &GridFunction| 1e-9 + 2.0 * f.lipschitz_estimate() * xg.max_spacing();
    let regular: Vec<GridFunction> = u
        .iter()
        .map(|(_, f)| lsc_regularize(f, slope_tol(f)).map(|r| r.0))
        .collect::<Result<_>>()?;
    for ((t, _), f) in u.iter().zip(&regular) {
        if f.min_finite() > value_cap {
            return Err(domain(format!("epigraph at t={t} is empty below the cap {value_cap}")));
        }
    }
    let hz = xg.min_spacing();
    let zlo = regular
        .iter()
        .map(GridFunction::min_finite)
        .fold(f64::INFINITY, f64::min)
        - hz;
    let zres = ((value_cap + hz - zlo) / hz).ceil() as usize + 1;
    let zhi = zlo + hz * (zres - 1) as f64;
    let b = xg.bounds();
    let mut lower = b.lower().to_vec();
    let mut upper = b.upper().to_vec();
    lower.push(zlo);
    upper.push(zhi);
    let mut res = xg.res().to_vec();
    res.push(zres);
    let grid = Grid::new(BoxDomain::new(lower, upper)?, res)?;
    let d = xg.dim();
    let slices = regular
        .iter()
        .map(|f| {
            let g = GridFunction::from_fn(grid.clone(), |p| {
                let z = p[d];
                (f.interpolate(&p[..d]) - z).max(z - value_cap)
            })?;
            CompactSetRep::sublevel(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Tube::new(u.iter().map(|(t, _)| *t).collect(), slices)
}

/// `dist(E(t), Y(t))`, evaluated on `E(t)` restricted to the ball around
/// `Y(t)` that already realizes an upper bound.
pub fn psi_distance(e: &Tube, y: &Tube, t: f64) -> Result<f64> {
    let (es, ys) = (e.at(t)?, y.at(t)?);
    if es.dim() != ys.dim() {
        return Err(invalid("tube dimensions differ"));
    }
    let ysamples = ys.sample_points();
    if ysamples.is_empty() || es.sample_points().is_empty() {
        return Err(domain(format!("empty slice at t={t}")));
    }
    let upper = ysamples.iter().map(|p| es.distance(p)).fold(f64::INFINITY, f64::min);
    if upper == 0.0 {
        return Ok(0.0);
    }
    let ybox = ys.bounding_box().expanded(upper);
    let local: Vec<Vec<f64>> = es
        .sample_points()
        .into_iter()
        .filter(|p| ybox.contains(p, 1e-12))
        .collect();
    if local.is_empty() {
        return set_distance(&es, &ys);
    }
    let near = local.iter().map(|p| ys.distance(p)).fold(f64::INFINITY, f64::min);
    Ok(upper.min(near))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiBvRow {
    pub depth: u32,
    /// `sum |Psi(t_{i+1}) - Psi(t_i)|` over the partition.
    pub psi_variation: f64,
    pub tube_variation: f64,
    pub rho_integral: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiBvReport {
    pub rows: Vec<PsiBvRow>,
    pub tol: f64,
    pub pass: bool,
}

/// Variation of `Psi = dist(E, Y)` against the tube variation of `E` plus
/// `rho_integral(a, b)` at each depth up to `depth`.
pub fn psi_bv_report(
    e: &Tube,
    y: &Tube,
    a: f64,
    b: f64,
    depth: u32,
    compact: &CompactSetRep,
    rho_integral: impl Fn(f64, f64) -> f64,
) -> Result<PsiBvReport> {
    let mut rows = Vec::new();
    let tol = 1e-9
        + e.slices
            .iter()
            .chain(&y.slices)
            .map(CompactSetRep::resolution_floor)
            .fold(0.0, f64::max);
    for d in 0..=depth {
        let idx = e.partition(a, b, d)?;
        let psi: Vec<f64> = idx
            .par_iter()
            .map(|&i| psi_distance(e, y, e.times[i]))
            .collect::<Result<_>>()?;
        let psi_variation: f64 = psi.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let tube_variation: f64 = partition_terms(e, &idx, compact)?.iter().map(|t| t.0).sum();
        let ri = rho_integral(a, b);
        let bound = tube_variation + ri;
        rows.push(PsiBvRow {
            depth: d,
            psi_variation,
            tube_variation,
            rho_integral: ri,
            bound,
            pass: psi_variation <= bound + tol * (1.0 + bound) * idx.len() as f64,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(PsiBvReport { rows, tol, pass })
}
