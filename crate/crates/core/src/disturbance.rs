//! Convex-hull disturbance sets over wheel-velocity space.
//!
//! A hull is stored as its generating vertex list. The minimum of a linear
//! functional over the hull is attained at a vertex, so every worst-case query
//! here is a scan over the vertices.

use nalgebra::{RowVector2, Vector2};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::ensure_finite;
use crate::{Error, Result};

/// Convex hull of a finite set of wheel-velocity offsets (rad/s).
///
/// Vertices are kept as given: interior or duplicate points never change a
/// support minimum, so no hull reduction is performed.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceHull {
    vertices: Vec<Vector2<f64>>,
}

impl DisturbanceHull {
    pub fn new(vertices: Vec<Vector2<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidParameter {
                name: "vertices",
                reason: "a hull needs at least one vertex".into(),
            });
        }
        for v in &vertices {
            ensure_finite(v.as_slice(), "hull vertex")?;
        }
        Ok(Self { vertices })
    }

    /// The four-vertex box `{(±psi, ±psi)}`.
    pub fn symmetric_box(psi: f64) -> Result<Self> {
        if !(psi.is_finite() && psi >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "psi",
                reason: format!("must be finite and >= 0, got {psi}"),
            });
        }
        Ok(Self {
            vertices: vec![
                Vector2::new(psi, psi),
                Vector2::new(psi, -psi),
                Vector2::new(-psi, psi),
                Vector2::new(-psi, -psi),
            ],
        })
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Index and value of `min_k z·psi_k`; ties go to the lowest index.
    pub fn argmin(&self, z: &RowVector2<f64>) -> (usize, f64) {
        let mut best = (0, z.dot(&self.vertices[0].transpose()));
        for (k, v) in self.vertices.iter().enumerate().skip(1) {
            let val = z[0] * v[0] + z[1] * v[1];
            if val < best.1 {
                best = (k, val);
            }
        }
        best
    }

    /// Largest absolute vertex coordinate.
    pub fn max_abs(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v[0].abs().max(v[1].abs()))
            .fold(0.0, f64::max)
    }
}

/// `min z·co(Psi)`, evaluated over the vertices in `O(p)`.
pub fn support_min(z: &RowVector2<f64>, hull: &DisturbanceHull) -> f64 {
    hull.argmin(z).1
}

/// A finite union of convex hulls.
#[derive(Debug, Clone, PartialEq)]
pub struct HullUnion {
    hulls: Vec<DisturbanceHull>,
}

impl HullUnion {
    pub fn new(hulls: Vec<DisturbanceHull>) -> Result<Self> {
        if hulls.is_empty() {
            return Err(Error::InvalidParameter {
                name: "hulls",
                reason: "a union needs at least one hull".into(),
            });
        }
        Ok(Self { hulls })
    }

    pub fn single(hull: DisturbanceHull) -> Self {
        Self { hulls: vec![hull] }
    }

    pub fn symmetric_box(psi: f64) -> Result<Self> {
        Ok(Self::single(DisturbanceHull::symmetric_box(psi)?))
    }

    pub fn hulls(&self) -> &[DisturbanceHull] {
        &self.hulls
    }

    pub fn len(&self) -> usize {
        self.hulls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hulls.is_empty()
    }

    /// All vertices of all hulls, in declaration order. Its convex hull is the
    /// convexification of the union.
    pub fn pooled(&self) -> DisturbanceHull {
        DisturbanceHull {
            vertices: self
                .hulls
                .iter()
                .flat_map(|h| h.vertices.iter().copied())
                .collect(),
        }
    }
}

/// One support minimum per hull of the union.
pub fn union_support_mins(z: &RowVector2<f64>, union: &HullUnion) -> Vec<f64> {
    union.hulls.iter().map(|h| support_min(z, h)).collect()
}

/// How a concrete disturbance is drawn from a hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    /// Convex combination with flat-Dirichlet weights.
    UniformConvex,
    /// The vertex minimizing `z·psi`.
    WorstCase(RowVector2<f64>),
    /// A fixed vertex.
    Vertex(usize),
}

/// Draws a point of `hull` according to `mode`. The result always lies in the hull.
pub fn sample_hull<R: Rng + ?Sized>(
    hull: &DisturbanceHull,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vector2<f64>> {
    match mode {
        SampleMode::UniformConvex => {
            if hull.len() == 1 {
                return Ok(hull.vertices[0]);
            }
            // normalized i.i.d. exponentials are flat-Dirichlet distributed
            let weights: Vec<f64> = (0..hull.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = weights.iter().sum();
            Ok(hull
                .vertices
                .iter()
                .zip(&weights)
                .fold(Vector2::zeros(), |acc, (v, w)| acc + v * (w / total)))
        }
        SampleMode::WorstCase(z) => Ok(hull.vertices[hull.argmin(&z).0]),
        SampleMode::Vertex(k) => hull.vertices.get(k).copied().ok_or(Error::VertexOutOfRange {
            index: k,
            len: hull.len(),
        }),
    }
}
