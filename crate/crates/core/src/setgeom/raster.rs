//! Rasterised sets: member mask on a grid plus sampled boundary points.

use crate::grid::Grid;
use crate::linalg::{dist, normalized, project_segment, sub};
use std::collections::HashMap;

/// Material for distance queries against a set known through grid samples.
#[derive(Debug)]
pub(crate) struct Raster {
    grid: Grid,
    member: Vec<bool>,
    boundary: Vec<Vec<f64>>,
    normals: Vec<Vec<f64>>,
    index: BucketIndex,
    interior: bool,
}

impl Raster {
    /// `crossing(m, o)` locates the boundary on the edge from member node `m`
    /// to non-member node `o`; `normal(b)` may supply an outward normal
    /// there (otherwise one is estimated from the mask).
    pub(crate) fn build(
        grid: Grid,
        member: Vec<bool>,
        crossing: impl Fn(usize, usize) -> Vec<f64>,
        normal: impl Fn(&[f64]) -> Option<Vec<f64>>,
    ) -> Self {
        let d = grid.dim();
        let mut boundary = Vec::new();
        let mut normals = Vec::new();
        let mut interior = false;
        for flat in (0..grid.len()).filter(|&f| member[f]) {
            let multi = grid.multi(flat);
            let mut all_members = true;
            let mut face = vec![0.0; d];
            for k in 0..d {
                if multi[k] == 0 {
                    face[k] -= 1.0;
                    all_members = false;
                }
                if multi[k] + 1 == grid.res()[k] {
                    face[k] += 1.0;
                    all_members = false;
                }
            }
            for o in grid.axis_neighbors(flat) {
                if !member[o] {
                    all_members = false;
                    let b = crossing(flat, o);
                    let n = normal(&b)
                        .and_then(|n| normalized(&n))
                        .or_else(|| mask_normal(&grid, &member, &b))
                        .or_else(|| normalized(&sub(&grid.node(o), &grid.node(flat))))
                        .unwrap();
                    boundary.push(b);
                    normals.push(n);
                }
            }
            if let Some(n) = normalized(&face) {
                boundary.push(grid.node(flat));
                normals.push(n);
            }
            interior |= all_members;
        }
        let cell = 2.0 * grid.max_spacing();
        let index = BucketIndex::new(&boundary, cell);
        Self {
            grid,
            member,
            boundary,
            normals,
            index,
            interior,
        }
    }

    pub(crate) fn grid(&self) -> &Grid {
        &self.grid
    }

    pub(crate) fn has_member(&self) -> bool {
        self.member.iter().any(|m| *m)
    }

    pub(crate) fn has_interior(&self) -> bool {
        self.interior
    }

    pub(crate) fn member_nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.grid.len())
            .filter(|&f| self.member[f])
            .map(|f| self.grid.node(f))
    }

    pub(crate) fn boundary(&self) -> &[Vec<f64>] {
        &self.boundary
    }

    pub(crate) fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// Boundary samples within `radius` of `x`.
    pub(crate) fn boundary_near(&self, x: &[f64], radius: f64) -> Vec<usize> {
        self.index
            .within(x, radius)
            .into_iter()
            .filter(|&i| dist(&self.boundary[i], x) <= radius)
            .collect()
    }

    /// Nearest point of the sampled boundary, refined by projecting onto the
    /// short chords between neighbouring samples.
    pub(crate) fn nearest_boundary(&self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        let i0 = self.index.nearest(&self.boundary, x)?;
        let b0 = &self.boundary[i0];
        let d0 = dist(b0, x);
        let link = 2.5 * self.grid.max_spacing();
        let mut best = (b0.clone(), d0);
        for j in self.index.within(b0, link) {
            let q = &self.boundary[j];
            if j == i0 || dist(q, b0) > link {
                continue;
            }
            let p = project_segment(x, b0, q);
            let dp = dist(&p, x);
            if dp < best.1 {
                best = (p, dp);
            }
        }
        Some(best)
    }
}

/// Outward direction estimated from the member mask around `b`.
fn mask_normal(grid: &Grid, member: &[bool], b: &[f64]) -> Option<Vec<f64>> {
    let d = grid.dim();
    let centre = grid.multi(grid.nearest(b));
    let reach = 2i64;
    let span = (2 * reach + 1) as usize;
    let mut acc = vec![0.0; d];
    let mut offs = vec![0i64; d];
    for code in 0..span.pow(d as u32) {
        let mut c = code;
        for o in offs.iter_mut() {
            *o = (c % span) as i64 - reach;
            c /= span;
        }
        let mut multi = Vec::with_capacity(d);
        let mut inside_box = true;
        for k in 0..d {
            let i = centre[k] as i64 + offs[k];
            if i < 0 || i >= grid.res()[k] as i64 {
                inside_box = false;
                break;
            }
            multi.push(i as usize);
        }
        let (y, sign) = if inside_box {
            let f = grid.flat(&multi);
            (grid.node(f), if member[f] { -1.0 } else { 1.0 })
        } else {
            let y: Vec<f64> = (0..d)
                .map(|k| grid.bounds().lower()[k] + (centre[k] as i64 + offs[k]) as f64 * grid.spacing(k))
                .collect();
            (y, 1.0)
        };
        let v = sub(&y, b);
        let r = crate::linalg::norm(&v);
        if r > 1e-12 {
            for k in 0..d {
                acc[k] += sign * v[k] / (r * r);
            }
        }
    }
    normalized(&acc)
}

/// Uniform bucket grid for nearest-point and radius queries.
#[derive(Debug)]
struct BucketIndex {
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl BucketIndex {
    fn new(points: &[Vec<f64>], cell: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let d = points.first().map_or(0, Vec::len);
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for (i, p) in points.iter().enumerate() {
            let key = key_of(p, cell);
            for k in 0..d {
                lo[k] = lo[k].min(key[k]);
                hi[k] = hi[k].max(key[k]);
            }
            buckets.entry(key).or_default().push(i);
        }
        Self { cell, buckets, lo, hi }
    }

    fn ring(&self, centre: &[i64], r: i64, out: &mut Vec<usize>) {
        let d = centre.len();
        let span = (2 * r + 1) as usize;
        let mut key = vec![0i64; d];
        for code in 0..span.pow(d as u32) {
            let mut c = code;
            let mut on_shell = false;
            let mut outside = false;
            for k in 0..d {
                let o = (c % span) as i64 - r;
                c /= span;
                on_shell |= o.abs() == r;
                key[k] = centre[k] + o;
                outside |= key[k] < self.lo[k] || key[k] > self.hi[k];
            }
            if (on_shell || r == 0) && !outside {
                if let Some(v) = self.buckets.get(&key) {
                    out.extend_from_slice(v);
                }
            }
        }
    }

    fn max_ring(&self, centre: &[i64]) -> i64 {
        (0..centre.len())
            .map(|k| (centre[k] - self.lo[k]).abs().max((self.hi[k] - centre[k]).abs()))
            .max()
            .unwrap_or(0)
    }

    fn nearest(&self, points: &[Vec<f64>], x: &[f64]) -> Option<usize> {
        if self.buckets.is_empty() {
            return None;
        }
        let centre = key_of(x, self.cell);
        let last = self.max_ring(&centre);
        let mut best: Option<(usize, f64)> = None;
        let mut cand = Vec::new();
        let mut r = (0..centre.len())
            .map(|k| (self.lo[k] - centre[k]).max(centre[k] - self.hi[k]).max(0))
            .max()
            .unwrap_or(0);
        let first = r;
        while r <= last {
            if let Some((_, bd)) = best {
                if r > first && (r - 1) as f64 * self.cell > bd {
                    break;
                }
            }
            cand.clear();
            self.ring(&centre, r, &mut cand);
            for &i in &cand {
                let d = dist(&points[i], x);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            r += 1;
        }
        best.map(|(i, _)| i)
    }

    fn within(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let centre = key_of(x, self.cell);
        let reach = (radius / self.cell).ceil() as i64 + 1;
        let mut out = Vec::new();
        for r in 0..=reach.min(self.max_ring(&centre)) {
            self.ring(&centre, r, &mut out);
        }
        out
    }
}

fn key_of(x: &[f64], cell: f64) -> Vec<i64> {
    x.iter().map(|v| (v / cell).floor() as i64).collect()
}
