//! Uniform box grids and extended-real grid functions.
//!
//! Values are stored row-major (last axis fastest). `+∞` is stored as
//! `f64::INFINITY`; any value above [`FINITE_THRESHOLD`] is read as `+∞`.

use crate::error::{invalid, Error, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Values above this are treated as `+∞`.
pub const FINITE_THRESHOLD: f64 = 1e12;

pub fn is_pos_inf(v: f64) -> bool {
    v > FINITE_THRESHOLD
}

/// Map sentinel-sized values to `f64::INFINITY`.
pub fn saturate(v: f64) -> f64 {
    if v > FINITE_THRESHOLD {
        f64::INFINITY
    } else {
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid("box corners must be non-empty and of equal length"));
        }
        for (axis, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(invalid(format!(
                    "box axis {axis}: need finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Box `[-h_i, h_i]` per axis.
    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        Self::new(half_widths.iter().map(|h| -h).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    /// Scale about the center by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        let lower = self.lower.iter().zip(&c).map(|(l, c)| c + factor * (l - c)).collect();
        let upper = self.upper.iter().zip(&c).map(|(u, c)| c + factor * (u - c)).collect();
        Self { lower, upper }
    }

    /// Grow every face outward by `margin`.
    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|l| l - margin).collect(),
            upper: self.upper.iter().map(|u| u + margin).collect(),
        }
    }

    pub fn diameter(&self) -> f64 {
        crate::linalg::dist(&self.lower, &self.upper)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoxDomain) -> Self {
        Self {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Bounding box of a point cloud; degenerate axes are widened by `pad`.
    pub fn bounding(points: &[Vec<f64>], pad: f64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| invalid("bounding box of empty point set"))?;
        let mut lower = first.clone();
        let mut upper = first.clone();
        for p in points {
            for (k, v) in p.iter().enumerate() {
                lower[k] = lower[k].min(*v);
                upper[k] = upper[k].max(*v);
            }
        }
        for k in 0..lower.len() {
            if upper[k] - lower[k] < pad {
                lower[k] -= pad;
                upper[k] += pad;
            }
        }
        Self::new(lower, upper)
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        crate::linalg::dist(x, &self.clamp(x))
    }
}

/// Uniform tensor grid over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bounds: BoxDomain,
    res: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: BoxDomain, res: Vec<usize>) -> Result<Self> {
        if res.len() != bounds.dim() {
            return Err(invalid("resolution length must match box dimension"));
        }
        if res.iter().any(|&r| r < 2) {
            return Err(invalid("resolution must be at least 2 per axis"));
        }
        let mut strides = vec![1; res.len()];
        for k in (0..res.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * res[k + 1];
        }
        Ok(Self { bounds, res, strides })
    }

    /// Grid whose spacing does not exceed `h` on any axis.
    pub fn with_spacing(bounds: BoxDomain, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        let res = bounds
            .lower()
            .iter()
            .zip(bounds.upper())
            .map(|(l, u)| (((u - l) / h).ceil() as usize + 1).max(2))
            .collect();
        Self::new(bounds, res)
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    pub fn res(&self) -> &[usize] {
        &self.res
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bounds.upper[axis] - self.bounds.lower[axis]) / (self.res[axis] - 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.spacing(k)).collect()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.res[axis] {
            self.bounds.upper[axis]
        } else {
            self.bounds.lower[axis] + i as f64 * self.spacing(axis)
        }
    }

    pub fn multi(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        self.strides
            .iter()
            .map(|s| {
                let i = rem / s;
                rem %= s;
                i
            })
            .collect()
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    /// Writes the coordinates of node `flat` into `out` (length `dim`).
    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = self.coord(k, rem / s);
            rem %= s;
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |f| self.node(f))
    }

    pub fn is_boundary_node(&self, flat: usize) -> bool {
        self.multi(flat)
            .iter()
            .zip(&self.res)
            .any(|(&i, &r)| i == 0 || i + 1 == r)
    }

    /// Flat indices of the `±1` neighbours along each axis.
    pub fn axis_neighbors(&self, flat: usize) -> Vec<usize> {
        let m = self.multi(flat);
        let mut out = Vec::with_capacity(2 * self.dim());
        for k in 0..self.dim() {
            if m[k] > 0 {
                out.push(flat - self.strides[k]);
            }
            if m[k] + 1 < self.res[k] {
                out.push(flat + self.strides[k]);
            }
        }
        out
    }

    /// Base corner and fractional offsets of the cell containing `x`,
    /// or `None` if `x` lies outside the box by more than a rounding margin.
    pub fn cell(&self, x: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
        let mut base = vec![0; self.dim()];
        let mut frac = vec![0.0; self.dim()];
        self.cell_into(x, &mut base, &mut frac).then_some((base, frac))
    }

    fn cell_into(&self, x: &[f64], base: &mut [usize], frac: &mut [f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        for k in 0..self.dim() {
            let h = self.spacing(k);
            let s = (x[k] - self.bounds.lower[k]) / h;
            let top = (self.res[k] - 1) as f64;
            if !(s >= -1e-9) || !(s <= top + 1e-9) {
                return false;
            }
            let i = (s.floor().max(0.0) as usize).min(self.res[k] - 2);
            base[k] = i;
            frac[k] = (s - i as f64).clamp(0.0, 1.0);
        }
        true
    }

    /// Nearest node to `x`, clamping into the box.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = (0..self.dim())
            .map(|k| {
                let s = ((x[k] - self.bounds.lower[k]) / self.spacing(k)).round();
                (s.max(0.0) as usize).min(self.res[k] - 1)
            })
            .collect();
        self.flat(&multi)
    }
}

/// Extended-real function sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "grid function has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("grid function contains NaN"));
        }
        let values: Vec<f64> = values.into_iter().map(saturate).collect();
        if !values.iter().any(|v| v.is_finite()) {
            return Err(Error::Domain("grid function has no finite value (improper)".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.nodes().map(|x| f(&x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn has_neg_inf(&self) -> bool {
        self.values.iter().any(|v| *v == f64::NEG_INFINITY)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn max_finite(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, |a, b| a.max(*b))
    }

    pub fn min_finite(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, |a, b| a.min(*b))
    }

    /// Multilinear interpolation; `+∞` if `x` is outside the box or any
    /// corner carrying positive weight is infinite.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        const STACK_DIM: usize = 6;
        let d = self.dim();
        if d > STACK_DIM {
            let Some((base, frac)) = self.grid.cell(x) else {
                return f64::INFINITY;
            };
            return self.blend(&base, &frac);
        }
        let mut base = [0usize; STACK_DIM];
        let mut frac = [0.0f64; STACK_DIM];
        if !self.grid.cell_into(x, &mut base[..d], &mut frac[..d]) {
            return f64::INFINITY;
        }
        self.blend(&base[..d], &frac[..d])
    }

    fn blend(&self, base: &[usize], frac: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                flat += (base[k] + up as usize) * self.grid.stride(k);
            }
            if w <= 1e-14 {
                continue;
            }
            let v = self.values[flat];
            if !v.is_finite() {
                return v;
            }
            acc += w * v;
        }
        acc
    }

    /// Gradient of the multilinear interpolant inside the cell containing `x`.
    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (base, frac) = self.grid.cell(x)?;
        let d = self.dim();
        let mut g = vec![0.0; d];
        for corner in 0..(1usize << d) {
            let mut flat = 0;
            for k in 0..d {
                flat += (base[k] + ((corner >> k) & 1)) * self.grid.stride(k);
            }
            let v = self.values[flat];
            if !v.is_finite() {
                return None;
            }
            for (axis, gk) in g.iter_mut().enumerate() {
                let mut w = 1.0;
                for k in 0..d {
                    let up = (corner >> k) & 1 == 1;
                    if k == axis {
                        w *= if up { 1.0 } else { -1.0 };
                    } else {
                        w *= if up { frac[k] } else { 1.0 - frac[k] };
                    }
                }
                *gk += w * v / self.grid.spacing(axis);
            }
        }
        Some(g)
    }

    /// Largest finite difference quotient along grid edges, combined over axes.
    pub fn lipschitz_estimate(&self) -> f64 {
        let mut per_axis = vec![0.0f64; self.dim()];
        for flat in 0..self.grid.len() {
            let m = self.grid.multi(flat);
            for k in 0..self.dim() {
                if m[k] + 1 < self.grid.res()[k] {
                    let a = self.values[flat];
                    let b = self.values[flat + self.grid.stride(k)];
                    if a.is_finite() && b.is_finite() {
                        per_axis[k] = per_axis[k].max((b - a).abs() / self.grid.spacing(k));
                    }
                }
            }
        }
        per_axis.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Text form: header, optional provenance comment, one value per line.
    pub fn to_text(&self, provenance: Option<&str>) -> String {
        let b = self.grid.bounds();
        let boxes: Vec<String> = b
            .lower()
            .iter()
            .zip(b.upper())
            .map(|(l, u)| format!("{l},{u}"))
            .collect();
        let res: Vec<String> = self.grid.res().iter().map(|r| r.to_string()).collect();
        let mut s = format!(
            "gridfn v1 dim={} box={} res={}\n",
            self.dim(),
            boxes.join(";"),
            res.join(",")
        );
        if let Some(p) = provenance {
            let _ = writeln!(s, "# provenance={p}");
        }
        for v in &self.values {
            if v.is_infinite() && *v > 0.0 {
                s.push_str("inf\n");
            } else if v.is_infinite() {
                s.push_str("-inf\n");
            } else {
                let _ = writeln!(s, "{v}");
            }
        }
        s
    }

    /// Parse the text form; returns the function and its provenance tag if present.
    pub fn parse(text: &str) -> Result<(Self, Option<String>)> {
        let mut lines = text.lines().enumerate().peekable();
        let (hline, header) = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => break (i + 1, l.trim().to_string()),
                None => {
                    return Err(Error::Parse {
                        line: 0,
                        msg: "empty gridfn input".into(),
                    })
                }
            }
        };
        let grid = parse_header(&header).map_err(|msg| Error::Parse { line: hline, msg })?;
        let mut provenance = None;
        let mut values = Vec::with_capacity(grid.len());
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(p) = c.trim().strip_prefix("provenance=") {
                    provenance = Some(p.trim().to_string());
                }
                continue;
            }
            for tok in line.split_whitespace() {
                values.push(parse_value(tok).map_err(|msg| Error::Parse { line: i + 1, msg })?);
            }
        }
        Ok((Self::new(grid, values)?, provenance))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path, provenance: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_text(provenance)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn parse_value(tok: &str) -> std::result::Result<f64, String> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse::<f64>()
            .map(saturate)
            .map_err(|_| format!("bad value `{tok}`")),
    }
}

pub(crate) fn parse_header(header: &str) -> std::result::Result<Grid, String> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some("gridfn") || parts.next() != Some("v1") {
        return Err("expected header `gridfn v1 ...`".into());
    }
    let mut dim = None;
    let mut boxes = None;
    let mut res = None;
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("bad header field `{p}`"))?;
        match k {
            "dim" => dim = Some(v.parse::<usize>().map_err(|_| format!("bad dim `{v}`"))?),
            "box" => {
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for axis in v.split(';') {
                    let (l, u) = axis.split_once(',').ok_or_else(|| format!("bad box axis `{axis}`"))?;
                    lo.push(l.parse::<f64>().map_err(|_| format!("bad box bound `{l}`"))?);
                    hi.push(u.parse::<f64>().map_err(|_| format!("bad box bound `{u}`"))?);
                }
                boxes = Some((lo, hi));
            }
            "res" => {
                res = Some(
                    v.split(',')
                        .map(|r| r.parse::<usize>().map_err(|_| format!("bad resolution `{r}`")))
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                )
            }
            _ => return Err(format!("unknown header field `{k}`")),
        }
    }
    let dim = dim.ok_or("missing dim")?;
    let (lo, hi) = boxes.ok_or("missing box")?;
    let res = res.ok_or("missing res")?;
    if lo.len() != dim || res.len() != dim {
        return Err(format!("header dim={dim} disagrees with box/res lengths"));
    }
    let bounds = BoxDomain::new(lo, hi).map_err(|e| e.to_string())?;
    Grid::new(bounds, res).map_err(|e| e.to_string())
}
