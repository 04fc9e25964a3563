//! Assume-guarantee contracts over scalar output bounds.
//!
//! Subsystem `i` guarantees `□|y_i| ≤ y_i^max` whenever its neighbors keep
//! their own bounds. A gain `λ_i` maps the neighbor bounds to the tightest
//! bound subsystem `i` can then guarantee, and a parameter vector is valid
//! when `λ_i(y_{N_i}^max) ≤ y_i^max` for every `i`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epigraph::{EpigraphApprox, EpigraphError};
use crate::geometry::GeometryError;
use crate::scalar::Scalar;

mod refine;
mod search;

pub use refine::{refine, RefineOptions, RefinementLog, Termination};
pub use search::{search_contract, SearchOptions, SearchResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error("{context}: expected length {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("subsystem {subsystem} lists unknown neighbor {neighbor}")]
    UnknownNeighbor { subsystem: usize, neighbor: usize },
    #[error("subsystem {subsystem} lists itself or a repeated neighbor")]
    InvalidNeighbors { subsystem: usize },
    #[error("subsystem {subsystem}: epigraph has {found} input axes but {expected} neighbors")]
    ApproxDimension {
        subsystem: usize,
        expected: usize,
        found: usize,
    },
    #[error("parameter {index} is negative or not finite")]
    InvalidParams { index: usize },
    #[error("objective weights must be finite and nonnegative")]
    InvalidWeights,
    #[error("subsystem {subsystem} has no epigraph approximation")]
    NotApproximation { subsystem: usize },
    #[error("subsystem {subsystem} has no callable gain")]
    NotCallable { subsystem: usize },
    #[error("epigraphs of subsystems {subsystems:?} do not intersect")]
    Infeasible { subsystems: Vec<usize> },
    #[error("branch-and-bound exceeded {nodes} nodes")]
    NodeLimit { nodes: usize },
    #[error("initial parameters are not valid: {violations:?}")]
    InvalidInitial { violations: Vec<Violation> },
    #[error("gain of subsystem {subsystem} increased at iteration {iteration}: {previous} -> {next}")]
    NonMonotone {
        iteration: usize,
        subsystem: usize,
        previous: f64,
        next: f64,
    },
    #[error("gain of subsystem {subsystem} is undefined at iteration {iteration}")]
    GainHole { iteration: usize, subsystem: usize },
    #[error("argument {name} must be finite and nonnegative")]
    NegativeInput { name: &'static str },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Epigraph(#[from] EpigraphError),
}

/// Output bounds `y^max`, one per subsystem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ContractParams<T: Scalar> {
    pub y_max: Vec<T>,
}

impl<T: Scalar> ContractParams<T> {
    pub fn new(y_max: Vec<T>) -> Result<Self, ContractError> {
        if let Some(index) = y_max.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(ContractError::InvalidParams { index });
        }
        Ok(Self { y_max })
    }

    pub fn len(&self) -> usize {
        self.y_max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_max.is_empty()
    }

    /// The neighbor projection `y_{N_i}^max`.
    pub fn project(&self, neighbors: &[usize]) -> Vec<T> {
        neighbors.iter().map(|&j| self.y_max[j]).collect()
    }
}

pub type GainFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// How a subsystem's gain is available.
#[derive(Clone)]
pub enum GainSource<T: Scalar> {
    Callable(GainFn<T>),
    Approx(EpigraphApprox<T>),
}

impl<T: Scalar> fmt::Debug for GainSource<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainSource::Callable(_) => f.write_str("Callable(..)"),
            GainSource::Approx(a) => f.debug_tuple("Approx").field(a).finish(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GainEntry<T: Scalar> {
    pub neighbors: Vec<usize>,
    pub source: GainSource<T>,
}

impl<T: Scalar> GainEntry<T> {
    pub fn callable(neighbors: Vec<usize>, f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self {
            neighbors,
            source: GainSource::Callable(Arc::new(f)),
        }
    }

    pub fn approx(neighbors: Vec<usize>, approx: EpigraphApprox<T>) -> Self {
        Self {
            neighbors,
            source: GainSource::Approx(approx),
        }
    }
}

/// Gains `λ_1, …, λ_N` with their neighbor lists. Neighbor lists index into
/// the parameter vector and give the order of the gain's arguments.
#[derive(Clone, Debug)]
pub struct GainFamily<T: Scalar> {
    entries: Vec<GainEntry<T>>,
}

impl<T: Scalar> GainFamily<T> {
    pub fn new(entries: Vec<GainEntry<T>>) -> Result<Self, ContractError> {
        let n = entries.len();
        for (i, e) in entries.iter().enumerate() {
            for (k, &j) in e.neighbors.iter().enumerate() {
                if j >= n {
                    return Err(ContractError::UnknownNeighbor { subsystem: i, neighbor: j });
                }
                if j == i || e.neighbors[..k].contains(&j) {
                    return Err(ContractError::InvalidNeighbors { subsystem: i });
                }
            }
            if let GainSource::Approx(a) = &e.source {
                if a.input_dim() != e.neighbors.len() {
                    return Err(ContractError::ApproxDimension {
                        subsystem: i,
                        expected: e.neighbors.len(),
                        found: a.input_dim(),
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GainEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Λ(y)` for an all-callable family.
    pub fn apply(&self, params: &ContractParams<T>) -> Result<Vec<T>, ContractError> {
        self.check_len(params)?;
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| match &e.source {
                GainSource::Callable(f) => Ok(f(&params.project(&e.neighbors))),
                GainSource::Approx(_) => Err(ContractError::NotCallable { subsystem: i }),
            })
            .collect()
    }

    fn check_len(&self, params: &ContractParams<T>) -> Result<(), ContractError> {
        if params.len() != self.len() {
            return Err(ContractError::DimensionMismatch {
                context: "contract parameters".into(),
                expected: self.len(),
                found: params.len(),
            });
        }
        Ok(())
    }
}

/// Where a slack came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Callable,
    Piece(usize),
    Outside,
    Hole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subsystem: usize,
    /// `None` when the gain is undefined at the queried point.
    pub margin: Option<f64>,
    pub provenance: Provenance,
}

/// Every slack is at most the tolerance used to issue the certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ValidityCertificate<T: Scalar> {
    pub params: ContractParams<T>,
    pub slacks: Vec<T>,
    pub provenance: Vec<Provenance>,
    pub tol: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "verdict", rename_all = "snake_case")]
pub enum Validity<T: Scalar> {
    Valid(ValidityCertificate<T>),
    Violated { violations: Vec<Violation> },
}

impl<T: Scalar> Validity<T> {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid(_))
    }

    pub fn certificate(&self) -> Option<&ValidityCertificate<T>> {
        match self {
            Validity::Valid(c) => Some(c),
            Validity::Violated { .. } => None,
        }
    }
}

/// Slack of one subsystem. For callables it is `λ_i(y_{N_i}) − y_i`; for
/// approximations it is the smallest worst-row residual of the point
/// `[y_{N_i}; y_i]` over the pieces.
fn slack<T: Scalar>(entry: &GainEntry<T>, params: &ContractParams<T>, i: usize, tol: T) -> (T, Provenance) {
    let x = params.project(&entry.neighbors);
    match &entry.source {
        GainSource::Callable(f) => {
            let v = f(&x);
            if v.is_finite() {
                (v - params.y_max[i], Provenance::Callable)
            } else {
                (T::infinity(), Provenance::Hole)
            }
        }
        GainSource::Approx(a) => {
            let mut p = x;
            p.push(params.y_max[i]);
            let residuals: Vec<T> = a.pieces().iter().map(|piece| -piece.depth(&p)).collect();
            let best = residuals.iter().fold(T::infinity(), |m, &r| m.min(r));
            let prov = residuals
                .iter()
                .position(|&r| r <= tol)
                .map_or(Provenance::Outside, Provenance::Piece);
            (best, prov)
        }
    }
}

/// Checks `λ_i(y_{N_i}^max) ≤ y_i^max + tol` for every subsystem.
pub fn check_validity<T: Scalar>(
    params: &ContractParams<T>,
    gains: &GainFamily<T>,
    tol: T,
) -> Result<Validity<T>, ContractError> {
    gains.check_len(params)?;
    let mut slacks = Vec::with_capacity(gains.len());
    let mut provenance = Vec::with_capacity(gains.len());
    let mut violations = Vec::new();
    for (i, e) in gains.entries().iter().enumerate() {
        let (s, prov) = slack(e, params, i, tol);
        if !(s <= tol) || matches!(prov, Provenance::Outside | Provenance::Hole) {
            violations.push(Violation {
                subsystem: i,
                margin: s.is_finite().then(|| s.as_f64()),
                provenance: prov,
            });
        }
        slacks.push(s);
        provenance.push(prov);
    }
    if violations.is_empty() {
        Ok(Validity::Valid(ValidityCertificate {
            params: params.clone(),
            slacks,
            provenance,
            tol,
        }))
    } else {
        Ok(Validity::Violated { violations })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum SmallGain<T: Scalar> {
    Bounded { y1: T, y2: T },
    NoCertificate,
}

/// Output bounds of two interconnected systems with
/// `‖y_1‖ ≤ μ_1‖d_1‖ + ν_1‖y_2‖` and `‖y_2‖ ≤ μ_2‖d_2‖ + ν_2‖y_1‖`.
pub fn small_gain_closed_form<T: Scalar>(
    mu1: T,
    mu2: T,
    nu1: T,
    nu2: T,
    d1: T,
    d2: T,
) -> Result<SmallGain<T>, ContractError> {
    for (name, v) in [("mu1", mu1), ("mu2", mu2), ("nu1", nu1), ("nu2", nu2), ("d1", d1), ("d2", d2)] {
        if !v.is_finite() || v < T::zero() {
            return Err(ContractError::NegativeInput { name });
        }
    }
    let loop_gain = nu1 * nu2;
    if loop_gain >= T::one() {
        return Ok(SmallGain::NoCertificate);
    }
    let den = T::one() - loop_gain;
    Ok(SmallGain::Bounded {
        y1: (mu1 * d1 + mu2 * nu1 * d2) / den,
        y2: (mu1 * nu2 * d1 + mu2 * d2) / den,
    })
}

pub type ParamMap<P> = Box<dyn Fn(&P) -> Result<P, String> + Send + Sync>;

/// The pair of maps driving the general assume-guarantee iteration
/// `p_g[k] = Λ̂(p_af[k])`, `p_af[k+1] = Γ(p_g[k])`.
pub struct GeneralContractIteration<P> {
    pub lambda_hat: ParamMap<P>,
    pub gamma: ParamMap<P>,
    pub initial: P,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationMap {
    LambdaHat,
    Gamma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub step: usize,
    pub map: IterationMap,
    pub message: String,
}

/// `p_af[0..]` and `p_g[0..]`. A complete run of `K` steps has `K + 1`
/// entries in each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgSequence<P> {
    pub p_af: Vec<P>,
    pub p_g: Vec<P>,
    pub failure: Option<IterationFailure>,
}

pub fn general_ag_iterate<P: Clone>(iteration: &GeneralContractIteration<P>, steps: usize) -> AgSequence<P> {
    let mut p_af = vec![iteration.initial.clone()];
    let mut p_g = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        match (iteration.lambda_hat)(&p_af[k]) {
            Ok(g) => p_g.push(g),
            Err(message) => {
                return AgSequence {
                    p_af,
                    p_g,
                    failure: Some(IterationFailure { step: k, map: IterationMap::LambdaHat, message }),
                }
            }
        }
        if k == steps {
            break;
        }
        match (iteration.gamma)(&p_g[k]) {
            Ok(af) => p_af.push(af),
            Err(message) => {
                return AgSequence {
                    p_af,
                    p_g,
                    failure: Some(IterationFailure { step: k, map: IterationMap::Gamma, message }),
                }
            }
        }
    }
    AgSequence { p_af, p_g, failure: None }
}

#[cfg(test)]
mod tests;
