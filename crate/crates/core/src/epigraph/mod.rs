//! Cropped inner approximations of gain-function epigraphs.
//!
//! A gain is sampled on an inclusive rectangular grid. Convex gains are
//! approximated by the hull of the lifted samples together with their
//! projections onto the crop level `y = M`. Monotone gains use one box per
//! grid cell: since `f` is nondecreasing, `f(x) ≤ f(upper corner)` on the
//! cell, so `cell × [f(upper corner), M]` lies inside the epigraph. Samples
//! that evaluate to `+∞` are holes and simply drop the cells they cap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_hull, AxisBox, GeometryError, HPolytope, PolytopeUnion};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpigraphError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every grid point is a hole")]
    AllHoles,
    #[error("gain evaluation failed at {point:?}: {message}")]
    Evaluator { point: Vec<f64>, message: String },
    #[error("crop level {m} does not exceed the largest sample {max}")]
    CropTooLow { m: f64, max: f64 },
    #[error("hull approximation needs a hole-free sample set")]
    HasHoles,
    #[error(
        "samples are not monotone: f({lower:?}) = {lower_value} exceeds f({upper:?}) = {upper_value}"
    )]
    NotMonotone {
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_value: f64,
        upper_value: f64,
    },
    #[error("no grid cell has a finite upper-corner value")]
    NoPieces,
    #[error("point has dimension {found}, approximation expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Inclusive rectangular grid, enumerated in row-major order (last axis
/// fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "GridData<T>", into = "GridData<T>")]
pub struct GridSpec<T: Scalar> {
    lower: Vec<T>,
    upper: Vec<T>,
    counts: Vec<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "")]
struct GridData<T: Scalar> {
    lower: Vec<T>,
    upper: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Scalar> TryFrom<GridData<T>> for GridSpec<T> {
    type Error = EpigraphError;
    fn try_from(d: GridData<T>) -> Result<Self, Self::Error> {
        GridSpec::new(d.lower, d.upper, d.counts)
    }
}

impl<T: Scalar> From<GridSpec<T>> for GridData<T> {
    fn from(g: GridSpec<T>) -> Self {
        GridData {
            lower: g.lower,
            upper: g.upper,
            counts: g.counts,
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>, counts: Vec<usize>) -> Result<Self, EpigraphError> {
        let bad = |m: &str| Err(EpigraphError::InvalidGrid(m.into()));
        if lower.len() != upper.len() || lower.len() != counts.len() {
            return bad("bounds and counts must have equal length");
        }
        if counts.iter().any(|&c| c < 2) {
            return bad("every axis needs at least two points");
        }
        for (&lo, &hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite()) {
                return bad("bounds must be finite");
            }
            if lo < T::zero() {
                return bad("lower bounds must be nonnegative");
            }
            if lo > hi {
                return bad("lower bound exceeds upper bound");
            }
        }
        Ok(Self { lower, upper, counts })
    }

    /// Same bounds and count on every one of `dim` axes.
    pub fn uniform(dim: usize, lower: T, upper: T, count: usize) -> Result<Self, EpigraphError> {
        Self::new(vec![lower; dim], vec![upper; dim], vec![count; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_value(&self, axis: usize, i: usize) -> T {
        let frac = T::of(i as f64 / (self.counts[axis] - 1) as f64);
        self.lower[axis] + (self.upper[axis] - self.lower[axis]) * frac
    }

    /// Row-major multi-index of flat position `flat`.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn point(&self, idx: &[usize]) -> Vec<T> {
        idx.iter().enumerate().map(|(k, &i)| self.axis_value(k, i)).collect()
    }

    pub fn points(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|f| self.point(&self.multi_index(f))).collect()
    }

    /// Grid with every cell split in half along each axis; the original
    /// points are a subset.
    pub fn refined(&self) -> Self {
        Self {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            counts: self.counts.iter().map(|&c| 2 * c - 1).collect(),
        }
    }
}

/// Gain values on a grid; `None` marks a hole (`+∞`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GainSampleSet<T: Scalar> {
    pub grid: GridSpec<T>,
    pub values: Vec<Option<T>>,
    pub m_crop: T,
}

impl<T: Scalar> GainSampleSet<T> {
    /// Wraps precomputed values, choosing the default crop when none is given.
    pub fn new(grid: GridSpec<T>, values: Vec<Option<T>>, m_crop: Option<T>) -> Result<Self, EpigraphError> {
        if values.len() != grid.len() {
            return Err(EpigraphError::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        let max = values
            .iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
            .ok_or(EpigraphError::AllHoles)?;
        let m_crop = match m_crop {
            Some(m) if m > max => m,
            Some(m) => {
                return Err(EpigraphError::CropTooLow {
                    m: m.as_f64(),
                    max: max.as_f64(),
                })
            }
            None if max > T::zero() => max + max,
            None => max + T::one(),
        };
        Ok(Self { grid, values, m_crop })
    }

    pub fn holes(&self) -> Vec<Vec<T>> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(f, _)| self.grid.point(&self.grid.multi_index(f)))
            .collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = (Vec<T>, Option<T>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(f, v)| (self.grid.point(&self.grid.multi_index(f)), *v))
    }

    pub fn value_at(&self, idx: &[usize]) -> Option<T> {
        self.values[self.grid.flat_index(idx)]
    }
}

/// Evaluates `evaluator` at every grid point, concurrently, and returns the
/// values in grid order. Non-finite results become holes.
pub fn sample_gain<T, E, F>(evaluator: F, grid: &GridSpec<T>, m_crop: Option<T>) -> Result<GainSampleSet<T>, EpigraphError>
where
    T: Scalar,
    E: std::fmt::Display,
    F: Fn(&[T]) -> Result<T, E> + Sync,
{
    let points = grid.points();
    let values: Vec<Option<T>> = points
        .par_iter()
        .map(|p| match evaluator(p) {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            Ok(_) => Ok(None),
            Err(e) => Err(EpigraphError::Evaluator {
                point: p.iter().map(|v| v.as_f64()).collect(),
                message: e.to_string(),
            }),
        })
        .collect::<Result<_, _>>()?;
    GainSampleSet::new(grid.clone(), values, m_crop)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum EpigraphBody<T: Scalar> {
    ConvexHull { polytope: HPolytope<T> },
    MonotoneCells { pieces: PolytopeUnion<T> },
}

/// Inner approximation of `epi(λ) ∩ {y ≤ M}` in `(x, y)` space, with the
/// output coordinate last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpigraphApprox<T: Scalar> {
    pub body: EpigraphBody<T>,
    pub m_crop: T,
}

/// Assignment of the piece-selection binaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside { piece: usize },
    Outside,
}

impl<T: Scalar> EpigraphApprox<T> {
    pub fn convex(polytope: HPolytope<T>, m_crop: T) -> Self {
        Self {
            body: EpigraphBody::ConvexHull { polytope },
            m_crop,
        }
    }

    pub fn union(pieces: PolytopeUnion<T>, m_crop: T) -> Self {
        Self {
            body: EpigraphBody::MonotoneCells { pieces },
            m_crop,
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self.body, EpigraphBody::ConvexHull { .. })
    }

    pub fn pieces(&self) -> &[HPolytope<T>] {
        match &self.body {
            EpigraphBody::ConvexHull { polytope } => std::slice::from_ref(polytope),
            EpigraphBody::MonotoneCells { pieces } => pieces.pieces(),
        }
    }

    /// Dimension of `(x, y)`.
    pub fn dim(&self) -> usize {
        self.pieces()[0].dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dim() - 1
    }
}

/// Convex-hull approximation; needs a hole-free sample set and at most two
/// input axes.
pub fn hull_inner_approx<T: Scalar>(samples: &GainSampleSet<T>) -> Result<EpigraphApprox<T>, EpigraphError> {
    let mut lifted = Vec::with_capacity(2 * samples.values.len());
    for (x, v) in samples.samples() {
        let v = v.ok_or(EpigraphError::HasHoles)?;
        let mut p = x.clone();
        p.push(v);
        lifted.push(p);
        let mut top = x;
        top.push(samples.m_crop);
        lifted.push(top);
    }
    Ok(EpigraphApprox::convex(convex_hull(&lifted)?, samples.m_crop))
}

/// Rejects samples that decrease along any axis, treating holes as `+∞`.
pub fn check_monotone_samples<T: Scalar>(samples: &GainSampleSet<T>, tol: T) -> Result<(), EpigraphError> {
    let grid = &samples.grid;
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        let here = samples.values[flat].unwrap_or(T::infinity());
        for k in 0..grid.dim() {
            if idx[k] + 1 >= grid.counts()[k] {
                continue;
            }
            let mut next = idx.clone();
            next[k] += 1;
            let there = samples.value_at(&next).unwrap_or(T::infinity());
            let decreased = if here.is_infinite() {
                there.is_finite()
            } else {
                there < here - tol
            };
            if decreased {
                let f64s = |v: &[T]| v.iter().map(|x| x.as_f64()).collect();
                return Err(EpigraphError::NotMonotone {
                    lower: f64s(&grid.point(&idx)),
                    upper: f64s(&grid.point(&next)),
                    lower_value: here.as_f64(),
                    upper_value: there.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// Upper-corner cell decomposition for monotone gains.
pub fn monotone_cells_approx<T: Scalar>(samples: &GainSampleSet<T>) -> Result<EpigraphApprox<T>, EpigraphError> {
    check_monotone_samples(samples, T::of(T::FEAS_TOL))?;
    let grid = &samples.grid;
    let cells: Vec<usize> = grid.counts().iter().map(|c| c - 1).collect();
    let n_cells: usize = cells.iter().product();
    let mut pieces = Vec::new();
    for flat in 0..n_cells {
        let mut rem = flat;
        let mut lo = vec![0; cells.len()];
        for k in (0..cells.len()).rev() {
            lo[k] = rem % cells[k];
            rem /= cells[k];
        }
        let hi: Vec<usize> = lo.iter().map(|i| i + 1).collect();
        let Some(cap) = samples.value_at(&hi) else {
            continue;
        };
        let mut lower = grid.point(&lo);
        let mut upper = grid.point(&hi);
        lower.push(cap);
        upper.push(samples.m_crop);
        pieces.push(HPolytope::from_box(&AxisBox::new(lower, upper)?));
    }
    if pieces.is_empty() {
        return Err(EpigraphError::NoPieces);
    }
    Ok(EpigraphApprox::union(PolytopeUnion::new(pieces)?, samples.m_crop))
}

/// Encodes `(x, y) ∈ approx`: for unions, the lowest-index piece containing
/// the point is the selected binary.
pub fn membership_constraint<T: Scalar>(
    approx: &EpigraphApprox<T>,
    point: &[T],
    tol: T,
) -> Result<Membership, EpigraphError> {
    if point.len() != approx.dim() {
        return Err(EpigraphError::DimensionMismatch {
            expected: approx.dim(),
            found: point.len(),
        });
    }
    Ok(approx
        .pieces()
        .iter()
        .position(|p| p.contains_unchecked(point, tol))
        .map_or(Membership::Outside, |piece| Membership::Inside { piece }))
}
