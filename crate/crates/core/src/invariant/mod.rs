//! Robust control invariant sets for affine subsystems.
//!
//! Sets are polytopes with a fixed template `{x : P x ≤ q}`. The synthesis
//! looks for a scaling `s ∈ [0, 1]` such that `S(s·q₀)` is robustly
//! invariant: for every state in the set, every disturbance in `𝒟` and every
//! neighbor output within `±y_N^max`, some admissible input keeps the
//! successor in the set. Because the dynamics are affine and all sets are
//! convex it suffices to check polytope vertices against uncertainty-box
//! vertices, and for a fixed pair the admissible scalings form an interval.
//! Intersecting those intervals yields every invariant scaling at once.

mod rci;
mod verify;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{
    bounding_box, box_vertices, enumerate_vertices, AxisBox, GeometryError, HPolytope, Matrix,
};
use crate::network::{AffineRealization, Subsystem};
use crate::scalar::Scalar;

pub use rci::{compute_rci, gain_evaluate, RciMode, RciOptions};
pub use verify::{output_bound, verify_rci, VerificationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("subsystem {0} has no affine realization")]
    NotAffine(usize),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("grid density must be at least 1")]
    ZeroDensity,
    #[error("certificate check failed with margin {margin}")]
    CertificateFailed { margin: f64 },
}

/// Fixed facet normals `P` and initial offsets `q₀ > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "TemplateData<T>", into = "TemplateData<T>")]
pub struct RciTemplate<T: Scalar> {
    p: Matrix<T>,
    q0: Vec<T>,
    vertices: Vec<Vec<T>>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "")]
struct TemplateData<T: Scalar> {
    p: Matrix<T>,
    q0: Vec<T>,
}

impl<T: Scalar> TryFrom<TemplateData<T>> for RciTemplate<T> {
    type Error = InvariantError;
    fn try_from(d: TemplateData<T>) -> Result<Self, Self::Error> {
        RciTemplate::new(d.p, d.q0)
    }
}

impl<T: Scalar> From<RciTemplate<T>> for TemplateData<T> {
    fn from(t: RciTemplate<T>) -> Self {
        TemplateData { p: t.p, q0: t.q0 }
    }
}

impl<T: Scalar> RciTemplate<T> {
    pub fn new(p: Matrix<T>, q0: Vec<T>) -> Result<Self, InvariantError> {
        if q0.iter().any(|&q| !(q > T::zero() && q.is_finite())) {
            return Err(InvariantError::InvalidTemplate(
                "initial offsets must be positive so the origin is interior".into(),
            ));
        }
        let poly = HPolytope::new(p.clone(), q0.clone())?;
        bounding_box(&poly).map_err(|e| match e {
            GeometryError::Unbounded => {
                InvariantError::InvalidTemplate("template polytope is unbounded".into())
            }
            other => other.into(),
        })?;
        let vertices = enumerate_vertices(&poly)?;
        Ok(Self { p, q0, vertices })
    }

    /// Symmetric box template `|x_k| ≤ r_k`.
    pub fn symmetric_box(radius: &[T]) -> Result<Self, InvariantError> {
        let bx = AxisBox::symmetric(radius)?;
        let poly = HPolytope::from_box(&bx);
        Self::new(poly.a().clone(), poly.b().to_vec())
    }

    pub fn p(&self) -> &Matrix<T> {
        &self.p
    }

    pub fn q0(&self) -> &[T] {
        &self.q0
    }

    pub fn dim(&self) -> usize {
        self.p.ncols()
    }

    /// Vertices of `{x : P x ≤ q₀}`.
    pub fn vertices(&self) -> &[Vec<T>] {
        &self.vertices
    }

    pub fn polytope(&self, q: &[T]) -> Result<HPolytope<T>, InvariantError> {
        Ok(HPolytope::new(self.p.clone(), q.to_vec())?)
    }
}

/// Robust invariance problem for one affine subsystem.
#[derive(Clone, Debug)]
pub struct RciProblem<T: Scalar> {
    subsystem: Subsystem<T>,
    input: AxisBox<T>,
    disturbance: AxisBox<T>,
    neighbor_bound: Vec<T>,
}

impl<T: Scalar> RciProblem<T> {
    pub fn new(
        subsystem: Subsystem<T>,
        input: AxisBox<T>,
        disturbance: AxisBox<T>,
        neighbor_bound: Vec<T>,
    ) -> Result<Self, InvariantError> {
        let aff = subsystem
            .affine()
            .ok_or(InvariantError::NotAffine(subsystem.id()))?;
        let checks = [
            ("input box", aff.b_u.ncols(), input.dim()),
            ("disturbance box", aff.b_d.ncols(), disturbance.dim()),
        ];
        for (context, expected, found) in checks {
            if expected != found {
                return Err(InvariantError::DimensionMismatch {
                    context: context.into(),
                    expected,
                    found,
                });
            }
        }
        let prob = Self {
            subsystem,
            input,
            disturbance,
            neighbor_bound: Vec::new(),
        };
        prob.with_neighbor_bound(neighbor_bound)
    }

    /// Same problem with a different neighbor-output bound.
    pub fn with_neighbor_bound(&self, bound: Vec<T>) -> Result<Self, InvariantError> {
        let k = self.subsystem.coupling_dim();
        if bound.len() != k {
            return Err(InvariantError::DimensionMismatch {
                context: "neighbor bound".into(),
                expected: k,
                found: bound.len(),
            });
        }
        if bound.iter().any(|&y| !(y >= T::zero() && y.is_finite())) {
            return Err(InvariantError::InvalidProblem(
                "neighbor bounds must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            neighbor_bound: bound,
            ..self.clone()
        })
    }

    pub fn subsystem(&self) -> &Subsystem<T> {
        &self.subsystem
    }

    pub fn affine(&self) -> &AffineRealization<T> {
        self.subsystem.affine().expect("checked at construction")
    }

    pub fn input(&self) -> &AxisBox<T> {
        &self.input
    }

    pub fn disturbance(&self) -> &AxisBox<T> {
        &self.disturbance
    }

    pub fn neighbor_bound(&self) -> &[T] {
        &self.neighbor_bound
    }

    /// Output row `h` for scalar-output subsystems.
    pub fn output_row(&self) -> Result<&[T], InvariantError> {
        let c = &self.affine().output;
        if c.nrows() != 1 {
            return Err(InvariantError::InvalidProblem(format!(
                "scalar output required, subsystem has {}",
                c.nrows()
            )));
        }
        Ok(c.row(0))
    }

    /// Every vertex of `𝒟 × [−y, y]`, mapped through the dynamics to the
    /// additive term `B_d d + B_y w + c`.
    pub fn uncertainty_offsets(&self) -> Result<Vec<Vec<T>>, InvariantError> {
        let aff = self.affine();
        let w_box = AxisBox::symmetric(&self.neighbor_bound)?;
        let joint = self.disturbance.product(&w_box);
        let l = self.disturbance.dim();
        let mut out: Vec<Vec<T>> = Vec::new();
        for v in box_vertices(&joint, true)? {
            let (d, w) = v.split_at(l);
            let mut e = aff.b_d.mul_vec(d);
            for ((ek, by), c) in e.iter_mut().zip(aff.b_y.mul_vec(w)).zip(&aff.c) {
                *ek = *ek + by + *c;
            }
            out.push(e);
        }
        Ok(out)
    }

    /// Stable digest of the problem data.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        #[serde(bound = "")]
        struct Canonical<'a, T: Scalar> {
            id: usize,
            affine: &'a AffineRealization<T>,
            input: &'a AxisBox<T>,
            disturbance: &'a AxisBox<T>,
            neighbor_bound: &'a [T],
        }
        let json = serde_json::to_vec(&Canonical {
            id: self.subsystem.id(),
            affine: self.affine(),
            input: &self.input,
            disturbance: &self.disturbance,
            neighbor_bound: &self.neighbor_bound,
        })
        .expect("problem data serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RciStatus {
    Invariant,
    Empty,
    NotConverged,
}

/// An admissible input that keeps one vertex inside the set under one
/// uncertainty vertex, with the smallest facet slack it achieves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VertexWitness<T: Scalar> {
    pub vertex: Vec<T>,
    pub offset_index: usize,
    pub input: Vec<T>,
    pub margin: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RciResult<T: Scalar> {
    pub p: Matrix<T>,
    pub q: Vec<T>,
    pub status: RciStatus,
    /// Feasible homothetic scalings `[s_lo, s_hi]` of `q₀`, when nonempty.
    pub bracket: Option<(T, T)>,
    pub scale: T,
    /// Offsets after each accepted tightening step, starting from the
    /// homothetic solution.
    pub history: Vec<Vec<T>>,
    pub witnesses: Vec<VertexWitness<T>>,
    pub problem_hash: String,
    pub reason: Option<String>,
}

impl<T: Scalar> RciResult<T> {
    pub fn set(&self) -> Result<HPolytope<T>, InvariantError> {
        Ok(HPolytope::new(self.p.clone(), self.q.clone())?)
    }

    pub fn is_invariant(&self) -> bool {
        self.status == RciStatus::Invariant
    }
}
