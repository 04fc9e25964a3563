//! Polytopes, boxes, a small LP solver and low-dimensional convex hulls.
//!
//! Every other module funnels its linear algebra through here. All operations
//! are pure functions of their arguments.

mod hull;
mod lp;
mod matrix;
mod vertices;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{dot, Scalar};

pub use hull::convex_hull;
pub use lp::{lp_solve, lp_solve_with, LpOptions, LpOutcome, LpStatus};
pub use matrix::{solve_square, Matrix};
pub use vertices::enumerate_vertices;

/// Largest box dimension whose vertices may be enumerated.
pub const MAX_BOX_VERTEX_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty constraint system")]
    Empty,
    #[error("box lower bound exceeds upper bound on axis {axis}")]
    InvertedBox { axis: usize },
    #[error("degenerate point set: {dim}-D hull requested but points span only {affine_rank} dimension(s)")]
    Degenerate { dim: usize, affine_rank: usize },
    #[error("unsupported dimension {dim}: {hint}")]
    UnsupportedDimension { dim: usize, hint: &'static str },
    #[error("box dimension {dim} exceeds the vertex enumeration cap of {cap}")]
    TooManyVertices { dim: usize, cap: usize },
    #[error("linear program is unbounded in the requested direction")]
    Unbounded,
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("simplex did not terminate within {iterations} pivots")]
    IterationLimit { iterations: usize },
}

/// Centralized numerical tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feasibility: f64,
    pub dedup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-9,
            dedup: 1e-12,
        }
    }
}

/// `{x : A x ≤ b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HPolytope<T: Scalar> {
    a: Matrix<T>,
    b: Vec<T>,
}

impl<T: Scalar> HPolytope<T> {
    pub fn new(a: Matrix<T>, b: Vec<T>) -> Result<Self, GeometryError> {
        if a.nrows() == 0 {
            return Err(GeometryError::Empty);
        }
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "polytope offsets".into(),
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if !a.is_finite() || !crate::scalar::all_finite(&b) {
            return Err(GeometryError::NonFinite("polytope".into()));
        }
        Ok(Self { a, b })
    }

    pub fn from_rows(rows: Vec<Vec<T>>, b: Vec<T>) -> Result<Self, GeometryError> {
        Self::new(Matrix::from_rows(rows)?, b)
    }

    pub fn from_box(bx: &AxisBox<T>) -> Self {
        let n = bx.dim();
        let mut rows = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for k in 0..n {
            let mut r = vec![T::zero(); n];
            r[k] = T::one();
            rows.push(r.clone());
            b.push(bx.upper[k]);
            r[k] = -T::one();
            rows.push(r);
            b.push(-bx.lower[k]);
        }
        Self::from_rows(rows, b).expect("box rows are consistent")
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub(crate) fn contains_unchecked(&self, point: &[T], tol: T) -> bool {
        self.a
            .rows_iter()
            .zip(&self.b)
            .all(|(r, &bi)| dot(r, point) <= bi + tol)
    }

    /// Smallest row slack `b_k − a_k·x`; negative outside.
    pub fn depth(&self, point: &[T]) -> T {
        self.a
            .rows_iter()
            .zip(&self.b)
            .map(|(r, &bi)| bi - dot(r, point))
            .fold(T::infinity(), T::min)
    }

    /// Appends rows, keeping the dimension.
    pub fn intersect(&self, other: &HPolytope<T>) -> Result<Self, GeometryError> {
        if other.dim() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "polytope intersection".into(),
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut rows = self.a.to_rows();
        rows.extend(other.a.to_rows());
        let mut b = self.b.clone();
        b.extend_from_slice(&other.b);
        Self::new(Matrix::from_rows_with_cols(rows, self.dim())?, b)
    }

    /// Same facets with every offset multiplied by `s`.
    pub fn with_offsets(&self, b: Vec<T>) -> Result<Self, GeometryError> {
        Self::new(self.a.clone(), b)
    }
}

/// Vertex-form polytope; the carrier for hull inputs and plotting output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VPolytope<T: Scalar> {
    vertices: Vec<Vec<T>>,
}

impl<T: Scalar> VPolytope<T> {
    pub fn new(vertices: Vec<Vec<T>>) -> Result<Self, GeometryError> {
        let Some(first) = vertices.first() else {
            return Err(GeometryError::Empty);
        };
        let n = first.len();
        for v in &vertices {
            if v.len() != n {
                return Err(GeometryError::DimensionMismatch {
                    context: "vertex".into(),
                    expected: n,
                    found: v.len(),
                });
            }
            if !crate::scalar::all_finite(v) {
                return Err(GeometryError::NonFinite("vertex".into()));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec<T>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn hull(&self) -> Result<HPolytope<T>, GeometryError> {
        convex_hull(&self.vertices)
    }
}

/// Axis-aligned box `lower ≤ x ≤ upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AxisBox<T: Scalar> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> AxisBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "box bounds".into(),
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if !crate::scalar::all_finite(&lower) || !crate::scalar::all_finite(&upper) {
            return Err(GeometryError::NonFinite("box".into()));
        }
        if let Some(axis) = (0..lower.len()).find(|&k| lower[k] > upper[k]) {
            return Err(GeometryError::InvertedBox { axis });
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]` on every axis.
    pub fn symmetric(radius: &[T]) -> Result<Self, GeometryError> {
        Self::new(radius.iter().map(|&r| -r).collect(), radius.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    pub fn clamp(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
            .collect()
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &AxisBox<T>) -> AxisBox<T> {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        AxisBox { lower, upper }
    }
}

/// Finite union of polytopes of equal dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PolytopeUnion<T: Scalar> {
    pieces: Vec<HPolytope<T>>,
}

impl<T: Scalar> PolytopeUnion<T> {
    pub fn new(pieces: Vec<HPolytope<T>>) -> Result<Self, GeometryError> {
        let Some(first) = pieces.first() else {
            return Err(GeometryError::Empty);
        };
        let n = first.dim();
        if let Some(p) = pieces.iter().find(|p| p.dim() != n) {
            return Err(GeometryError::DimensionMismatch {
                context: "union piece".into(),
                expected: n,
                found: p.dim(),
            });
        }
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[HPolytope<T>] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    /// Index of the first piece containing `point`.
    pub fn locate(&self, point: &[T], tol: T) -> Option<usize> {
        self.pieces
            .iter()
            .position(|p| p.contains_unchecked(point, tol))
    }
}

/// `A·point ≤ b + tol` row-wise.
pub fn contains<T: Scalar>(poly: &HPolytope<T>, point: &[T], tol: T) -> Result<bool, GeometryError> {
    if point.len() != poly.dim() {
        return Err(GeometryError::DimensionMismatch {
            context: "containment point".into(),
            expected: poly.dim(),
            found: point.len(),
        });
    }
    Ok(poly.contains_unchecked(point, tol))
}

/// All `2^n` corners of a box, bit `k` of the index selecting the upper bound
/// on axis `k`. With `dedup`, coincident corners of degenerate boxes collapse.
pub fn box_vertices<T: Scalar>(bx: &AxisBox<T>, dedup: bool) -> Result<Vec<Vec<T>>, GeometryError> {
    let n = bx.dim();
    if n > MAX_BOX_VERTEX_DIM {
        return Err(GeometryError::TooManyVertices {
            dim: n,
            cap: MAX_BOX_VERTEX_DIM,
        });
    }
    let mut out: Vec<Vec<T>> = Vec::with_capacity(1 << n);
    for mask in 0usize..(1 << n) {
        let v: Vec<T> = (0..n)
            .map(|k| {
                if mask >> k & 1 == 1 {
                    bx.upper[k]
                } else {
                    bx.lower[k]
                }
            })
            .collect();
        if dedup && out.contains(&v) {
            continue;
        }
        out.push(v);
    }
    Ok(out)
}

/// `max { direction · x : x ∈ poly }`.
pub fn support_value<T: Scalar>(poly: &HPolytope<T>, direction: &[T]) -> Result<T, GeometryError> {
    if direction.len() != poly.dim() {
        return Err(GeometryError::DimensionMismatch {
            context: "support direction".into(),
            expected: poly.dim(),
            found: direction.len(),
        });
    }
    let neg: Vec<T> = direction.iter().map(|&d| -d).collect();
    let out = lp_solve(&neg, poly)?;
    match out.status {
        LpStatus::Optimal => Ok(dot(direction, out.point.as_deref().unwrap_or_default())),
        LpStatus::Unbounded => Err(GeometryError::Unbounded),
        LpStatus::Infeasible => Err(GeometryError::Infeasible),
    }
}

/// Componentwise bounding box via `2n` support evaluations.
pub fn bounding_box<T: Scalar>(poly: &HPolytope<T>) -> Result<AxisBox<T>, GeometryError> {
    let n = poly.dim();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![T::zero(); n];
        e[k] = T::one();
        upper.push(support_value(poly, &e)?);
        e[k] = -T::one();
        lower.push(-support_value(poly, &e)?);
    }
    AxisBox::new(lower, upper)
}

#[cfg(test)]
mod tests;
