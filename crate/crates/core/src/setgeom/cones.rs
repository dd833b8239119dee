//! Sampled contingent cones, negative polars and boundary-normal sets.

use super::{CompactSetRep, ConvexBody};
use crate::error::{domain, invalid, Result};
use crate::linalg::{axpy, dist, dot, norm};
use serde::Serialize;

/// Default tolerance of [`negative_polar`].
pub const DEFAULT_POLAR_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeKind {
    Contingent,
    ClarkeNormalHull,
    NegativePolar,
}

/// A cone known through finitely many unit directions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSample {
    apex: Vec<f64>,
    directions: Vec<Vec<f64>>,
    kind: ConeKind,
}

impl ConeSample {
    pub fn new(apex: Vec<f64>, directions: Vec<Vec<f64>>, kind: ConeKind) -> Result<Self> {
        if let Some(d) = directions
            .iter()
            .find(|d| d.len() != apex.len() || (norm(d) - 1.0).abs() > 1e-12)
        {
            return Err(invalid(format!(
                "cone direction {d:?} is not a unit vector of the apex dimension"
            )));
        }
        Ok(Self { apex, directions, kind })
    }

    pub fn apex(&self) -> &[f64] {
        &self.apex
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }
}

/// `2^-3, ..., 2^-12`.
pub fn default_steps() -> Vec<f64> {
    (3..=12).map(|k| 0.5f64.powi(k)).collect()
}

/// Directions `d` with `dist(x + h d, set) <= cone_tol * h` at the two
/// smallest steps `h`; `cone_tol` defaults to `1e-6 (1 + |x|)`.
pub fn contingent_cone(
    set: &CompactSetRep,
    x: &[f64],
    steps: &[f64],
    directions: &[Vec<f64>],
    cone_tol: Option<f64>,
) -> Result<ConeSample> {
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("step sequence must be positive and strictly decreasing"));
    }
    let tol = cone_tol.unwrap_or(1e-6 * (1.0 + norm(x)));
    let x_tol = tol.max(set.resolution_floor());
    if !set.within(x, x_tol) {
        return Err(domain(format!(
            "point {x:?} is not on the set (distance {})",
            set.distance(x)
        )));
    }
    let smallest = &steps[steps.len().saturating_sub(2)..];
    let kept = directions
        .iter()
        .filter(|d| smallest.iter().all(|&h| set.within(&axpy(x, h, d), tol * h)))
        .cloned()
        .collect();
    ConeSample::new(x.to_vec(), kept, ConeKind::Contingent)
}

/// Dual directions `p` with `<p, d> <= polar_tol` for every cone direction `d`.
pub fn negative_polar(cone: &ConeSample, dual_grid: &[Vec<f64>], polar_tol: f64) -> ConeSample {
    let kept = dual_grid
        .iter()
        .filter(|p| cone.directions.iter().all(|d| dot(p, d) <= polar_tol))
        .cloned()
        .collect();
    ConeSample {
        apex: cone.apex.clone(),
        directions: kept,
        kind: ConeKind::NegativePolar,
    }
}

/// Sampled outward normals near a point, with the two derived tests.
#[derive(Clone, Debug)]
pub struct BoundaryNormals {
    normals: ConeSample,
    r: f64,
}

impl BoundaryNormals {
    pub fn normals(&self) -> &ConeSample {
        &self.normals
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `<p, n> >= r` for every sampled normal.
    pub fn sigma_test(&self, p: &[f64]) -> bool {
        self.normals.directions.iter().all(|n| dot(p, n) >= self.r)
    }

    /// `<p, n> <= 0` for some sampled normal.
    pub fn gamma_test(&self, p: &[f64]) -> bool {
        self.normals.directions.iter().any(|n| dot(p, n) <= 0.0)
    }
}

/// Unit outward normals at boundary points of `set` within `eta` of `x`.
pub fn boundary_normal_sets(
    set: &CompactSetRep,
    x: &[f64],
    eta: f64,
    r: f64,
    sphere: &[Vec<f64>],
) -> Result<BoundaryNormals> {
    if !(eta > 0.0) {
        return Err(invalid("eta must be positive"));
    }
    if !(r >= 0.0) {
        return Err(invalid("r must be nonnegative"));
    }
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut push = |n: Vec<f64>| {
        if !found.iter().any(|m| dist(m, &n) <= 1e-9) {
            found.push(n);
        }
    };
    match set {
        CompactSetRep::VertexHull(body) => {
            for (n, _, a, b) in body.edges_2d() {
                if dist(&crate::linalg::project_segment(x, &a, &b), x) <= eta {
                    push(n);
                }
            }
            for u in sphere {
                if exposed_face_distance(body, x, u) <= eta {
                    push(u.clone());
                }
            }
        }
        _ => {
            if let Some((_, normals)) = set.boundary_with_normals() {
                for i in set.boundary_near(x, eta) {
                    push(normals[i].clone());
                }
            }
        }
    }
    let normals = ConeSample::new(x.to_vec(), found, ConeKind::ClarkeNormalHull)?;
    Ok(BoundaryNormals { normals, r })
}

fn exposed_face_distance(body: &ConvexBody, x: &[f64], u: &[f64]) -> f64 {
    let h = body.support(u);
    let scale = 1e-12 * (1.0 + h.abs());
    let face: Vec<Vec<f64>> = body
        .vertices()
        .iter()
        .filter(|v| dot(v, u) >= h - scale)
        .cloned()
        .collect();
    match face.len() {
        1 => dist(&face[0], x),
        _ => ConvexBody::new(face).map_or(f64::INFINITY, |f| f.distance(x)),
    }
}
