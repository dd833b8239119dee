//! Finite-dimensional set geometry: distances, excess, Hausdorff distance,
//! sampled tangent/normal cones, boundary-normal sets and the oriented distance.

mod body;
mod cones;
mod io;
mod raster;
mod sphere;

pub(crate) use body::clip_halfplane;
pub use body::ConvexBody;
pub use cones::{
    boundary_normal_sets, contingent_cone, default_steps, negative_polar, BoundaryNormals, ConeKind, ConeSample,
    DEFAULT_POLAR_TOL,
};
pub use io::read_vertex_csv;
pub use sphere::{default_count, default_sphere, sphere_sample};

use crate::error::{domain, invalid, Result};
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::linalg::{lerp, normalized};
use raster::Raster;
use std::fmt;
use std::sync::{Arc, OnceLock};

/// Membership predicate of an oracle set.
pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A non-empty compact set in one of three computable forms.
#[derive(Clone)]
pub enum CompactSetRep {
    VertexHull(ConvexBody),
    Oracle(OracleSet),
    SublevelGrid(SublevelSet),
}

/// `{x in bbox : pred(x)}`, rasterised on demand at the given resolution.
#[derive(Clone)]
pub struct OracleSet {
    pred: Predicate,
    bbox: BoxDomain,
    resolution: f64,
    raster: Arc<OnceLock<Raster>>,
}

/// `{x : f(x) <= 0}` for a grid function `f` (multilinear interpolation).
#[derive(Clone)]
pub struct SublevelSet {
    func: Arc<GridFunction>,
    raster: Arc<OnceLock<Raster>>,
}

/// Result of [`signed_distance`]; `degenerate` is set when the set has empty
/// interior, in which case `value` is `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedDistance {
    pub value: f64,
    pub degenerate: bool,
}

impl fmt::Debug for CompactSetRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::VertexHull(b) => f.debug_tuple("VertexHull").field(b).finish(),
            Self::Oracle(o) => f
                .debug_struct("Oracle")
                .field("bbox", &o.bbox)
                .field("resolution", &o.resolution)
                .finish(),
            Self::SublevelGrid(s) => f.debug_struct("SublevelGrid").field("grid", s.func.grid()).finish(),
        }
    }
}

impl From<ConvexBody> for CompactSetRep {
    fn from(b: ConvexBody) -> Self {
        Self::VertexHull(b)
    }
}

impl CompactSetRep {
    pub fn vertex_hull(points: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Self::VertexHull(ConvexBody::new(points)?))
    }

    /// Oracle set, rasterised immediately; fails when no grid node is a member.
    pub fn oracle(
        pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        bbox: BoxDomain,
        resolution: f64,
    ) -> Result<Self> {
        let set = Self::oracle_lazy(Arc::new(pred), bbox, resolution)?;
        if let Self::Oracle(o) = &set {
            if !o.raster().has_member() {
                return Err(domain("oracle set has no member at the given resolution"));
            }
        }
        Ok(set)
    }

    /// Oracle set whose raster is only built when a distance query needs it;
    /// `witness` must be a member.
    pub fn oracle_with_witness(
        pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        bbox: BoxDomain,
        resolution: f64,
        witness: &[f64],
    ) -> Result<Self> {
        let set = Self::oracle_lazy(Arc::new(pred), bbox, resolution)?;
        if !set.contains(witness) {
            return Err(domain("oracle witness is not a member"));
        }
        Ok(set)
    }

    fn oracle_lazy(pred: Predicate, bbox: BoxDomain, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(invalid("oracle resolution must be positive"));
        }
        Ok(Self::Oracle(OracleSet {
            pred,
            bbox,
            resolution,
            raster: Arc::new(OnceLock::new()),
        }))
    }

    pub fn sublevel(func: GridFunction) -> Result<Self> {
        if !func.values().iter().any(|v| *v <= 0.0) {
            return Err(domain("sublevel set is empty"));
        }
        Ok(Self::SublevelGrid(SublevelSet {
            func: Arc::new(func),
            raster: Arc::new(OnceLock::new()),
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::VertexHull(b) => b.dim(),
            Self::Oracle(o) => o.bbox.dim(),
            Self::SublevelGrid(s) => s.func.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::VertexHull(_) => "vertex-hull",
            Self::Oracle(_) => "oracle",
            Self::SublevelGrid(_) => "sublevel-grid",
        }
    }

    pub fn as_body(&self) -> Option<&ConvexBody> {
        match self {
            Self::VertexHull(b) => Some(b),
            _ => None,
        }
    }

    pub fn bounding_box(&self) -> BoxDomain {
        match self {
            Self::VertexHull(b) => b.bounding_box(),
            Self::Oracle(o) => o.bbox.clone(),
            Self::SublevelGrid(s) => s.func.grid().bounds().clone(),
        }
    }

    /// Distances below this are not resolved by the representation.
    pub fn resolution_floor(&self) -> f64 {
        match self {
            Self::VertexHull(_) => 0.0,
            Self::Oracle(o) => 0.25 * o.raster().grid().min_spacing(),
            Self::SublevelGrid(s) => 0.25 * s.func.grid().min_spacing(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::VertexHull(b) => b.distance(x) <= 1e-9 * (1.0 + crate::linalg::norm(x)),
            Self::Oracle(o) => o.bbox.contains(x, 0.0) && (o.pred)(x),
            Self::SublevelGrid(s) => s.func.interpolate(x) <= 0.0,
        }
    }

    /// `dist(x, set) <= tol`, falling back to membership when `tol` is below
    /// the resolution floor.
    pub fn within(&self, x: &[f64], tol: f64) -> bool {
        if self.contains(x) {
            return true;
        }
        tol >= self.resolution_floor() && self.distance(x) <= tol
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Self::VertexHull(b) => b.distance(x),
            _ if self.contains(x) => 0.0,
            _ => self
                .raster()
                .and_then(|r| r.nearest_boundary(x))
                .map_or(f64::INFINITY, |(_, d)| d),
        }
    }

    /// A nearest point of the set (exact for vertex hulls, sampled otherwise).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::VertexHull(b) => b.project(x),
            _ if self.contains(x) => x.to_vec(),
            _ => self
                .raster()
                .and_then(|r| r.nearest_boundary(x))
                .map_or_else(|| x.to_vec(), |(p, _)| p),
        }
    }

    /// Points representing the set for suprema: vertices of a hull, member
    /// nodes and boundary samples of a raster.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        match self {
            Self::VertexHull(b) => b.vertices().to_vec(),
            _ => {
                let r = self.raster().expect("raster");
                r.member_nodes().chain(r.boundary().iter().cloned()).collect()
            }
        }
    }

    /// Sample points of `self ∩ k`; exact clipping for one- and two-dimensional hulls.
    pub fn samples_within(&self, k: &CompactSetRep) -> Vec<Vec<f64>> {
        if let (Self::VertexHull(a), Self::VertexHull(kb)) = (self, k) {
            if a.dim() <= 2 {
                return a.clip(kb).map(|c| c.vertices().to_vec()).unwrap_or_default();
            }
        }
        self.sample_points().into_iter().filter(|p| k.contains(p)).collect()
    }

    /// Boundary samples with outward unit normals (rasters only).
    pub(crate) fn boundary_with_normals(&self) -> Option<(&[Vec<f64>], &[Vec<f64>])> {
        self.raster().map(|r| (r.boundary(), r.normals()))
    }

    pub(crate) fn boundary_near(&self, x: &[f64], radius: f64) -> Vec<usize> {
        self.raster().map(|r| r.boundary_near(x, radius)).unwrap_or_default()
    }

    fn raster(&self) -> Option<&Raster> {
        match self {
            Self::VertexHull(_) => None,
            Self::Oracle(o) => Some(o.raster()),
            Self::SublevelGrid(s) => Some(s.raster()),
        }
    }

    fn has_interior(&self) -> bool {
        match self {
            Self::VertexHull(b) => b.is_full_dimensional(),
            _ => self.raster().is_some_and(Raster::has_interior),
        }
    }

    /// Distance from an inside point to the complement.
    fn depth(&self, x: &[f64]) -> f64 {
        match self {
            Self::VertexHull(b) => b.interior_depth(x),
            _ => self
                .raster()
                .and_then(|r| r.nearest_boundary(x))
                .map_or(0.0, |(_, d)| d),
        }
    }
}

impl OracleSet {
    fn raster(&self) -> &Raster {
        self.raster.get_or_init(|| {
            let grid = Grid::with_spacing(self.bbox.clone(), self.resolution).expect("valid oracle box");
            let member: Vec<bool> = grid.nodes().map(|x| (self.pred)(&x)).collect();
            let crossing = |m: usize, o: usize| {
                let (mut a, mut b) = (grid.node(m), grid.node(o));
                for _ in 0..48 {
                    let mid = lerp(&a, &b, 0.5);
                    if (self.pred)(&mid) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                a
            };
            Raster::build(grid.clone(), member, crossing, |_| None)
        })
    }
}

impl SublevelSet {
    pub fn function(&self) -> &GridFunction {
        &self.func
    }

    fn raster(&self) -> &Raster {
        self.raster.get_or_init(|| {
            let f = &self.func;
            let grid = f.grid().clone();
            let member: Vec<bool> = f.values().iter().map(|v| *v <= 0.0).collect();
            let crossing = |m: usize, o: usize| {
                let (fm, fo) = (f.value(m), f.value(o));
                let (a, b) = (grid.node(m), grid.node(o));
                if fo.is_finite() && fo > fm {
                    lerp(&a, &b, (-fm / (fo - fm)).clamp(0.0, 1.0))
                } else {
                    a
                }
            };
            let normal = |b: &[f64]| f.gradient(b).and_then(|g| normalized(&g));
            Raster::build(grid.clone(), member, crossing, normal)
        })
    }
}

fn check_dims(a: &CompactSetRep, b: &CompactSetRep) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `sup_{p in points} dist(p, b)`.
pub fn excess_points(points: &[Vec<f64>], b: &CompactSetRep) -> Result<f64> {
    if points.is_empty() {
        return Err(domain("excess of an empty point set"));
    }
    Ok(points
        .iter()
        .filter(|p| !b.contains(p))
        .map(|p| b.distance(p))
        .fold(0.0, f64::max))
}

/// Excess of `a` beyond `b`: `sup_{x in a} dist(x, b)` over the samples of `a`.
pub fn excess(a: &CompactSetRep, b: &CompactSetRep) -> Result<f64> {
    check_dims(a, b)?;
    excess_points(&a.sample_points(), b)
}

pub fn hausdorff(a: &CompactSetRep, b: &CompactSetRep) -> Result<f64> {
    Ok(excess(a, b)?.max(excess(b, a)?))
}

/// `inf |x - y|` over `x in a`, `y in b`.
pub fn set_distance(a: &CompactSetRep, b: &CompactSetRep) -> Result<f64> {
    check_dims(a, b)?;
    if let (CompactSetRep::VertexHull(p), CompactSetRep::VertexHull(q)) = (a, b) {
        if p.dim() <= 2 && p.clip(q).is_some() {
            return Ok(0.0);
        }
    }
    let one = |s: &CompactSetRep, t: &CompactSetRep| {
        s.sample_points()
            .iter()
            .map(|p| t.distance(p))
            .fold(f64::INFINITY, f64::min)
    };
    let d = one(a, b).min(one(b, a));
    if d.is_finite() {
        Ok(d)
    } else {
        Err(domain("distance between sets with no samples"))
    }
}

/// Oriented distance `dist(x, A) - dist(x, complement A)`.
pub fn signed_distance(set: &CompactSetRep, x: &[f64]) -> SignedDistance {
    if !set.has_interior() {
        return SignedDistance {
            value: f64::INFINITY,
            degenerate: true,
        };
    }
    let value = if set.contains(x) {
        -set.depth(x)
    } else {
        set.distance(x)
    };
    SignedDistance {
        value,
        degenerate: false,
    }
}

/// Sublevel set of a grid function read from its text form.
pub fn sublevel_from_text(text: &str) -> Result<CompactSetRep> {
    let (f, _) = GridFunction::parse(text)?;
    CompactSetRep::sublevel(f)
}

/// Up to about `max` points on the boundary of `set`: vertices and edge
/// midpoints of a hull, an evenly strided subset of a raster's boundary samples.
pub fn boundary_samples(set: &CompactSetRep, max: usize) -> Vec<Vec<f64>> {
    match set {
        CompactSetRep::VertexHull(b) => {
            let mut out = b.vertices().to_vec();
            out.extend(b.edges_2d().into_iter().map(|(_, _, a, c)| lerp(&a, &c, 0.5)));
            out
        }
        _ => {
            let (pts, _) = set.boundary_with_normals().expect("raster");
            let stride = pts.len().div_ceil(max.max(1)).max(1);
            pts.iter().step_by(stride).cloned().collect()
        }
    }
}
