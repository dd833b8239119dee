//! Compact convex sets stored as canonical vertex lists.

use crate::error::{invalid, Result};
use crate::grid::BoxDomain;
use crate::linalg::{dist, dot, lex_cmp, norm, project_segment, sub};
use crate::setgeom::sphere::sphere_sample;
use nalgebra::{DMatrix, DVector};

const DEDUP_TOL: f64 = 1e-12;

/// Convex hull of finitely many points.
///
/// Canonical form: vertices sorted and deduplicated; in one and two
/// dimensions only extreme points are kept (two-dimensional hulls in
/// counter-clockwise order starting at the lexicographically smallest
/// vertex). Canonicalization is idempotent.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexBody {
    dim: usize,
    vertices: Vec<Vec<f64>>,
}

impl ConvexBody {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("convex body needs at least one point"))?;
        if dim == 0 {
            return Err(invalid("zero-dimensional points"));
        }
        if points
            .iter()
            .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("convex body points must be finite and of equal dimension"));
        }
        Ok(Self {
            dim,
            vertices: canonicalize(points, dim),
        })
    }

    pub fn point(p: Vec<f64>) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![vec![a], vec![b]])
    }

    pub fn from_box(b: &BoxDomain) -> Result<Self> {
        let d = b.dim();
        let pts = (0..(1usize << d))
            .map(|mask| {
                (0..d)
                    .map(|k| {
                        if (mask >> k) & 1 == 1 {
                            b.upper()[k]
                        } else {
                            b.lower()[k]
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(pts)
    }

    /// Inscribed polytope of a Euclidean ball (`n` vertices in two
    /// dimensions, a Fibonacci point set in three or more).
    pub fn ball(center: &[f64], radius: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("ball radius must be positive"));
        }
        let pts = sphere_sample(center.len(), n)
            .into_iter()
            .map(|u| center.iter().zip(&u).map(|(c, v)| c + radius * v).collect())
            .collect();
        Self::new(pts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(self.vertices.iter().map(|v| f(v)).collect())
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.vertices.len() as f64;
        (0..self.dim)
            .map(|k| self.vertices.iter().map(|v| v[k]).sum::<f64>() / n)
            .collect()
    }

    pub fn bounding_box(&self) -> BoxDomain {
        BoxDomain::bounding(&self.vertices, 1e-9).expect("non-empty body")
    }

    pub fn support(&self, p: &[f64]) -> f64 {
        self.vertices
            .iter()
            .map(|v| dot(v, p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximiser of `<p, v>`, ties resolved by vertex order.
    pub fn support_point(&self, p: &[f64]) -> &[f64] {
        let mut best = 0;
        let mut val = f64::NEG_INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let s = dot(v, p);
            if s > val + 1e-15 {
                val = s;
                best = i;
            }
        }
        &self.vertices[best]
    }

    /// Dimension of the affine hull of the vertices.
    pub fn affine_dim(&self) -> usize {
        if self.vertices.len() < 2 {
            return 0;
        }
        let base = &self.vertices[0];
        let rows: Vec<f64> = self.vertices[1..].iter().flat_map(|v| sub(v, base)).collect();
        let m = DMatrix::from_row_slice(self.vertices.len() - 1, self.dim, &rows);
        let scale = m.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
        m.svd(false, false)
            .singular_values
            .iter()
            .filter(|s| **s > 1e-10 * scale)
            .count()
    }

    pub fn is_full_dimensional(&self) -> bool {
        self.affine_dim() == self.dim
    }

    /// Outward edges of a full-dimensional polygon: `(normal, offset, a, b)`
    /// with `<normal, x> <= offset` describing the inside.
    pub fn edges_2d(&self) -> Vec<(Vec<f64>, f64, Vec<f64>, Vec<f64>)> {
        if self.dim != 2 || self.vertices.len() < 3 {
            return Vec::new();
        }
        let n = self.vertices.len();
        (0..n)
            .filter_map(|i| {
                let a = &self.vertices[i];
                let b = &self.vertices[(i + 1) % n];
                let e = sub(b, a);
                let len = norm(&e);
                (len > 0.0).then(|| {
                    let nrm = vec![e[1] / len, -e[0] / len];
                    let off = dot(&nrm, a);
                    (nrm, off, a.clone(), b.clone())
                })
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// Euclidean projection onto the body.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match (self.dim, self.vertices.len()) {
            (_, 1) => self.vertices[0].clone(),
            (1, _) => {
                let lo = self.vertices[0][0];
                let hi = self.vertices[self.vertices.len() - 1][0];
                vec![x[0].clamp(lo, hi)]
            }
            (2, 2) => project_segment(x, &self.vertices[0], &self.vertices[1]),
            (2, n) => {
                let mut inside = true;
                let mut best = (f64::INFINITY, [0.0; 2]);
                for i in 0..n {
                    let (a, b) = (&self.vertices[i], &self.vertices[(i + 1) % n]);
                    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
                    let (rx, ry) = (x[0] - a[0], x[1] - a[1]);
                    let len2 = ex * ex + ey * ey;
                    if len2 == 0.0 {
                        continue;
                    }
                    if ex * ry - ey * rx < 0.0 {
                        inside = false;
                    }
                    let s = ((rx * ex + ry * ey) / len2).clamp(0.0, 1.0);
                    let p = [a[0] + s * ex, a[1] + s * ey];
                    let d = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                    if d < best.0 {
                        best = (d, p);
                    }
                }
                if inside {
                    x.to_vec()
                } else {
                    best.1.to_vec()
                }
            }
            _ => {
                let shifted: Vec<Vec<f64>> = self.vertices.iter().map(|v| sub(v, x)).collect();
                let p = min_norm_point(&shifted);
                p.iter().zip(x).map(|(a, b)| a + b).collect()
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        dist(&self.project(x), x)
    }

    /// Distance from an inside point to the boundary (zero outside).
    pub fn interior_depth(&self, x: &[f64]) -> f64 {
        if !self.is_full_dimensional() || self.distance(x) > 1e-12 {
            return 0.0;
        }
        match self.dim {
            1 => {
                let lo = self.vertices[0][0];
                let hi = self.vertices[self.vertices.len() - 1][0];
                (x[0] - lo).min(hi - x[0]).max(0.0)
            }
            2 => self
                .edges_2d()
                .iter()
                .map(|(n, off, _, _)| off - dot(n, x))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            d => {
                let gap = |u: &[f64]| self.support(u) - dot(u, x);
                let mut best = sphere_sample(d, if d == 3 { 2048 } else { 4096 })
                    .into_iter()
                    .min_by(|a, b| gap(a).total_cmp(&gap(b)))
                    .unwrap();
                let mut val = gap(&best);
                let mut step = 0.1;
                while step > 1e-9 {
                    let mut improved = false;
                    for k in 0..d {
                        for s in [step, -step] {
                            let mut u = best.clone();
                            u[k] += s;
                            if let Some(u) = crate::linalg::normalized(&u) {
                                let g = gap(&u);
                                if g < val {
                                    val = g;
                                    best = u;
                                    improved = true;
                                }
                            }
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
                val.max(0.0)
            }
        }
    }

    /// Clip a body against a convex clipping body (exact in one and two dimensions).
    pub fn clip(&self, k: &ConvexBody) -> Option<ConvexBody> {
        match self.dim {
            1 => {
                let lo = self.vertices[0][0].max(k.vertices[0][0]);
                let hi = self.vertices[self.vertices.len() - 1][0].min(k.vertices[k.vertices.len() - 1][0]);
                (lo <= hi).then(|| ConvexBody::interval(lo, hi).ok()).flatten()
            }
            2 if k.vertices.len() >= 3 && k.is_full_dimensional() => {
                let mut poly = self.vertices.clone();
                for (n, off, _, _) in k.edges_2d() {
                    if poly.is_empty() {
                        break;
                    }
                    poly = clip_halfplane(&poly, &n, off);
                }
                (!poly.is_empty()).then(|| ConvexBody::new(poly).ok()).flatten()
            }
            _ => {
                let kept: Vec<Vec<f64>> = self.vertices.iter().filter(|v| k.contains(v, 1e-9)).cloned().collect();
                (!kept.is_empty()).then(|| ConvexBody::new(kept).ok()).flatten()
            }
        }
    }
}

pub(crate) fn clip_halfplane(poly: &[Vec<f64>], n: &[f64], off: f64) -> Vec<Vec<f64>> {
    let m = poly.len();
    if m == 1 {
        return if dot(n, &poly[0]) <= off + 1e-12 {
            poly.to_vec()
        } else {
            Vec::new()
        };
    }
    let mut out = Vec::new();
    for i in 0..m {
        let a = &poly[i];
        let b = &poly[(i + 1) % m];
        let da = dot(n, a) - off;
        let db = dot(n, b) - off;
        if da <= 1e-12 {
            out.push(a.clone());
        }
        if (da < -1e-12 && db > 1e-12) || (da > 1e-12 && db < -1e-12) {
            let s = da / (da - db);
            out.push(a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect());
        }
        if m == 2 {
            if db <= 1e-12 {
                out.push(b.clone());
            }
            break;
        }
    }
    out
}

fn canonicalize(mut points: Vec<Vec<f64>>, dim: usize) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| lex_cmp(a, b));
    let mut uniq: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let dup = uniq
            .iter()
            .rev()
            .take(8)
            .any(|q| dist(q, &p) <= DEDUP_TOL * (1.0 + norm(&p)));
        if !dup {
            uniq.push(p);
        }
    }
    match dim {
        1 if uniq.len() > 2 => vec![uniq[0].clone(), uniq[uniq.len() - 1].clone()],
        2 if uniq.len() > 2 => hull_2d(uniq),
        _ => uniq,
    }
}

/// Andrew's monotone chain; input sorted lexicographically and deduplicated.
fn hull_2d(pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let cross = |o: &[f64], a: &[f64], b: &[f64]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let scale = pts.iter().map(|p| norm(p)).fold(1.0, f64::max);
    let eps = 1e-12 * scale * scale;
    let mut lower: Vec<Vec<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.is_empty() {
        return pts[..1].to_vec();
    }
    lower
}

/// Wolfe's algorithm: the point of minimum norm in the convex hull of `pts`.
pub(crate) fn min_norm_point(pts: &[Vec<f64>]) -> Vec<f64> {
    let scale = pts.iter().map(|p| dot(p, p)).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-12 * scale;
    let start = (0..pts.len())
        .min_by(|&a, &b| dot(&pts[a], &pts[a]).total_cmp(&dot(&pts[b], &pts[b])))
        .unwrap();
    let mut corral = vec![start];
    let mut weights = vec![1.0];
    let mut x = pts[start].clone();
    for _ in 0..(50 * pts.len() + 100) {
        let j = (0..pts.len())
            .min_by(|&a, &b| dot(&x, &pts[a]).total_cmp(&dot(&x, &pts[b])))
            .unwrap();
        if dot(&x, &pts[j]) >= dot(&x, &x) - eps || corral.contains(&j) {
            break;
        }
        corral.push(j);
        weights.push(0.0);
        loop {
            let lambda = affine_min_norm(pts, &corral);
            if lambda.iter().all(|l| *l > 1e-14) {
                weights = lambda;
                break;
            }
            let mut theta = 1.0f64;
            for (w, l) in weights.iter().zip(&lambda) {
                if *l <= 1e-14 && w - l > 0.0 {
                    theta = theta.min(w / (w - l));
                }
            }
            for (w, l) in weights.iter_mut().zip(&lambda) {
                *w = theta * l + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < corral.len() {
                if weights[k] <= 1e-14 {
                    corral.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            if corral.len() <= 1 {
                break;
            }
        }
        x = combine(pts, &corral, &weights);
    }
    x
}

fn combine(pts: &[Vec<f64>], idx: &[usize], w: &[f64]) -> Vec<f64> {
    let d = pts[0].len();
    let mut x = vec![0.0; d];
    for (i, wi) in idx.iter().zip(w) {
        for k in 0..d {
            x[k] += wi * pts[*i][k];
        }
    }
    x
}

fn affine_min_norm(pts: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            a[(r, c)] = dot(&pts[i], &pts[j]);
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m + 1);
    b[m] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&b)
        .or_else(|| a.svd(true, true).solve(&b, 1e-14).ok())
        .unwrap_or_else(|| {
            let mut v = DVector::zeros(m + 1);
            v[0] = 1.0;
            v
        });
    sol.iter().take(m).copied().collect()
}
