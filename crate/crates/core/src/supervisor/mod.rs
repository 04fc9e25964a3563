//! Barrier-function safety filter built from a robust control invariant set.
//!
//! The barrier is `b(x) = min_k (q_k − P_k x) / q_k`, nonnegative exactly on
//! the set `{P x ≤ q}`. The filter enforces the discrete-time rate condition
//! `q_k − P_k x⁺ ≥ (1 − κ T_s)(q_k − P_k x)` on every facet whose normalized
//! slack is within the active band of `b(x)` and plain containment
//! `P_k x⁺ ≤ q_k` on the remaining facets, both against the worst
//! disturbance in the given box. It returns the admissible input closest to
//! the student's proposal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lp_solve_with, AxisBox, GeometryError, LpOptions, Matrix};
use crate::invariant::RciResult;
use crate::network::Subsystem;
use crate::scalar::{dot, Scalar};

mod qp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid barrier: {0}")]
    InvalidCbf(String),
    #[error("kappa * Ts = {kappa_ts} must lie in (0, 1)")]
    InvalidKappa { kappa_ts: f64 },
    #[error("subsystem {0} has no affine realization")]
    NotAffine(usize),
    #[error("no admissible input: facet {facet} misses the rate condition by {violation}")]
    Infeasible { facet: usize, violation: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Polytopic barrier with class-K gain `kappa` and active band
/// `eps_rel · max(b, 0) + eps_abs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Cbf<T: Scalar> {
    pub p: Matrix<T>,
    pub q: Vec<T>,
    pub kappa: T,
    pub eps_rel: T,
    pub eps_abs: T,
}

impl<T: Scalar> Cbf<T> {
    pub fn new(p: Matrix<T>, q: Vec<T>, kappa: T) -> Result<Self, SupervisorError> {
        if p.nrows() != q.len() {
            return Err(SupervisorError::DimensionMismatch {
                context: "barrier offsets".into(),
                expected: p.nrows(),
                found: q.len(),
            });
        }
        if p.nrows() == 0 || !p.is_finite() {
            return Err(SupervisorError::InvalidCbf("facet matrix must be finite and nonempty".into()));
        }
        if q.iter().any(|v| !v.is_finite() || *v <= T::zero()) {
            return Err(SupervisorError::InvalidCbf("offsets must be positive".into()));
        }
        if !kappa.is_finite() || kappa <= T::zero() {
            return Err(SupervisorError::InvalidCbf("kappa must be positive".into()));
        }
        Ok(Self {
            p,
            q,
            kappa,
            eps_rel: T::of(0.1),
            eps_abs: T::of(1e-6),
        })
    }

    pub fn from_rci(rci: &RciResult<T>, kappa: T) -> Result<Self, SupervisorError> {
        Self::new(rci.p.clone(), rci.q.clone(), kappa)
    }

    pub fn with_active_band(mut self, eps_rel: T, eps_abs: T) -> Self {
        self.eps_rel = eps_rel;
        self.eps_abs = eps_abs;
        self
    }

    pub fn dim(&self) -> usize {
        self.p.ncols()
    }

    fn normalized_slacks(&self, x: &[T]) -> Vec<T> {
        self.p
            .rows_iter()
            .zip(&self.q)
            .map(|(row, &q)| (q - dot(row, x)) / q)
            .collect()
    }

    /// Facets whose normalized slack lies within the active band of the minimum.
    pub fn enforced_facets(&self, x: &[T]) -> Result<Vec<usize>, SupervisorError> {
        let b = cbf_value(self, x)?;
        let band = b + self.eps_rel * b.max(T::zero()) + self.eps_abs;
        Ok(self
            .normalized_slacks(x)
            .iter()
            .enumerate()
            .filter(|(_, s)| **s <= band)
            .map(|(k, _)| k)
            .collect())
    }
}

pub fn cbf_value<T: Scalar>(cbf: &Cbf<T>, x: &[T]) -> Result<T, SupervisorError> {
    if x.len() != cbf.dim() {
        return Err(SupervisorError::DimensionMismatch {
            context: "barrier state".into(),
            expected: cbf.dim(),
            found: x.len(),
        });
    }
    Ok(cbf.normalized_slacks(x).into_iter().fold(T::infinity(), T::min))
}

/// Plant data the filter needs besides the barrier.
#[derive(Clone, Copy, Debug)]
pub struct FilterProblem<'a, T: Scalar> {
    pub subsystem: &'a Subsystem<T>,
    pub step_time: T,
    /// Disturbance box; a point estimate is a zero-width box.
    pub disturbance: &'a AxisBox<T>,
    pub input: &'a AxisBox<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FilterResult<T: Scalar> {
    pub u_star: Vec<T>,
    pub intervened: bool,
    /// Enforced facets.
    pub active: Vec<usize>,
    /// Smallest rate-condition slack over the enforced facets at `u_star`.
    pub slack: T,
}

/// Constraints `G u ≤ h`, one per facet: the rate condition on enforced
/// facets and containment on the others. Every target is lowered by
/// `DEDUP_TOL · q_k`.
fn rate_constraints<T: Scalar>(
    cbf: &Cbf<T>,
    prob: &FilterProblem<'_, T>,
    x: &[T],
    y_n: &[T],
    enforced: &[usize],
) -> Result<(Vec<Vec<T>>, Vec<T>), SupervisorError> {
    let sub = prob.subsystem;
    let aff = sub.affine().ok_or(SupervisorError::NotAffine(sub.id()))?;
    let dims = sub.dims();
    for (context, expected, found) in [
        ("state", dims.state, x.len()),
        ("neighbor outputs", sub.coupling_dim(), y_n.len()),
        ("disturbance box", dims.disturbance, prob.disturbance.dim()),
        ("input box", dims.input, prob.input.dim()),
        ("barrier", dims.state, cbf.dim()),
    ] {
        if expected != found {
            return Err(SupervisorError::DimensionMismatch {
                context: context.into(),
                expected,
                found,
            });
        }
    }
    let kts = cbf.kappa * prob.step_time;
    if !(kts > T::zero() && kts < T::one()) {
        return Err(SupervisorError::InvalidKappa { kappa_ts: kts.as_f64() });
    }
    let free: Vec<T> = aff
        .a
        .mul_vec(x)
        .iter()
        .zip(aff.b_y.mul_vec(y_n))
        .zip(&aff.c)
        .map(|((a, b), c)| *a + b + *c)
        .collect();
    let d = prob.disturbance;
    let mut g = Vec::with_capacity(cbf.q.len());
    let mut h = Vec::with_capacity(cbf.q.len());
    for k in 0..cbf.q.len() {
        let pk = cbf.p.row(k);
        let qk = cbf.q[k];
        let worst_d: T = aff
            .b_d
            .vec_mul(pk)
            .iter()
            .enumerate()
            .map(|(j, &v)| (v * d.lower[j]).max(v * d.upper[j]))
            .sum();
        let keep = if enforced.contains(&k) { T::one() - kts } else { T::zero() };
        let target = qk - keep * (qk - dot(pk, x)) - T::of(T::DEDUP_TOL) * qk;
        g.push(aff.b_u.vec_mul(pk));
        h.push(target - dot(pk, &free) - worst_d);
    }
    Ok((g, h))
}

fn satisfies<T: Scalar>(g: &[Vec<T>], h: &[T], u: &[T]) -> bool {
    g.iter().zip(h).all(|(gi, &hi)| dot(gi, u) <= hi)
}

/// Minimally invasive filter `min ‖u − u₀‖²` subject to the rate condition on
/// the enforced facets and `u ∈ U`.
pub fn cbf_filter<T: Scalar>(
    cbf: &Cbf<T>,
    prob: &FilterProblem<'_, T>,
    x: &[T],
    y_n: &[T],
    u0: &[T],
) -> Result<FilterResult<T>, SupervisorError> {
    let enforced = cbf.enforced_facets(x)?;
    let (g, h) = rate_constraints(cbf, prob, x, y_n, &enforced)?;
    let m = prob.input.dim();
    if u0.len() != m {
        return Err(SupervisorError::DimensionMismatch {
            context: "student input".into(),
            expected: m,
            found: u0.len(),
        });
    }
    let slack_at = |u: &[T]| {
        enforced
            .iter()
            .map(|&k| h[k] - dot(&g[k], u))
            .fold(T::infinity(), T::min)
    };
    let finish = |u: Vec<T>, intervened: bool| FilterResult {
        slack: slack_at(&u),
        u_star: u,
        intervened,
        active: enforced.clone(),
    };
    let in_box = prob.input.contains(u0, T::zero());
    if in_box && satisfies(&g, &h, u0) {
        return Ok(finish(u0.to_vec(), false));
    }

    let tol = T::of(T::FEAS_TOL);
    // Closed-form candidates: a single halfspace projection, or clamping to U.
    let violated: Vec<usize> = (0..g.len()).filter(|&k| dot(&g[k], u0) > h[k]).collect();
    if let ([k], true) = (violated.as_slice(), in_box) {
        let gi = &g[*k];
        let nn = dot(gi, gi);
        if nn > T::zero() {
            let shift = (dot(gi, u0) - h[*k]) / nn;
            let u: Vec<T> = u0.iter().zip(gi).map(|(a, b)| *a - shift * *b).collect();
            if prob.input.contains(&u, T::zero()) && satisfies(&g, &h, &u) {
                return Ok(finish(u, true));
            }
        }
    }
    if !in_box {
        let clamped = prob.input.clamp(u0);
        if satisfies(&g, &h, &clamped) {
            return Ok(finish(clamped, true));
        }
    }

    // Full problem: rate rows plus the input box.
    let mut rows = g.clone();
    let mut rhs = h.clone();
    for j in 0..m {
        let mut up = vec![T::zero(); m];
        up[j] = T::one();
        rows.push(up);
        rhs.push(prob.input.upper[j]);
        let mut lo = vec![T::zero(); m];
        lo[j] = -T::one();
        rows.push(lo);
        rhs.push(-prob.input.lower[j]);
    }
    let start = max_margin_point(&rows, &rhs, g.len(), tol)?;
    let keep: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].iter().any(|v| *v != T::zero())).collect();
    let g_full: Vec<Vec<T>> = keep.iter().map(|&i| rows[i].clone()).collect();
    let h_full: Vec<T> = keep.iter().map(|&i| rhs[i]).collect();
    let (u, _) = qp::project(&g_full, &h_full, u0, start);
    Ok(finish(prob.input.clamp(&u), true))
}

/// Euclidean projection of `u0` onto `{u : G u ≤ h}` by the active-set
/// method used inside [`cbf_filter`].
pub fn project_polyhedron<T: Scalar>(g: &[Vec<T>], h: &[T], u0: &[T]) -> Result<Vec<T>, SupervisorError> {
    if g.len() != h.len() {
        return Err(SupervisorError::DimensionMismatch {
            context: "constraint offsets".into(),
            expected: g.len(),
            found: h.len(),
        });
    }
    if let Some(row) = g.iter().find(|r| r.len() != u0.len()) {
        return Err(SupervisorError::DimensionMismatch {
            context: "constraint row".into(),
            expected: u0.len(),
            found: row.len(),
        });
    }
    if satisfies(g, h, u0) {
        return Ok(u0.to_vec());
    }
    let start = max_margin_point(g, h, g.len(), T::of(T::FEAS_TOL))?;
    Ok(qp::project(g, h, u0, start).0)
}

/// Maximizes the uniform normalized margin over the rows; fails with the
/// worst rate row when the margin is negative.
fn max_margin_point<T: Scalar>(
    rows: &[Vec<T>],
    rhs: &[T],
    n_rate: usize,
    tol: T,
) -> Result<Vec<T>, SupervisorError> {
    let m = rows.first().map_or(0, Vec::len);
    let mut lp_rows = Vec::with_capacity(rows.len() + 1);
    for r in rows {
        let norm = dot(r, r).sqrt();
        let mut row = r.clone();
        row.push(if norm > T::zero() { norm } else { T::one() });
        lp_rows.push(row);
    }
    let mut cap = vec![T::zero(); m + 1];
    cap[m] = T::one();
    lp_rows.push(cap);
    let mut b = rhs.to_vec();
    b.push(T::one());
    let mut obj = vec![T::zero(); m + 1];
    obj[m] = -T::one();
    let out = lp_solve_with(&obj, &Matrix::from_rows_with_cols(lp_rows, m + 1)?, &b, LpOptions::default())?;
    let point = out.point.ok_or(GeometryError::Infeasible)?;
    let t = point[m];
    let u = point[..m].to_vec();
    if t < -tol {
        let (worst, violation) = (0..n_rate)
            .map(|i| (i, dot(&rows[i], &u) - rhs[i]))
            .fold((0, T::neg_infinity()), |acc, c| if c.1 > acc.1 { c } else { acc });
        return Err(SupervisorError::Infeasible {
            facet: worst,
            violation: violation.as_f64(),
        });
    }
    Ok(u)
}

/// Nominal controller whose proposals the filter corrects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum StudentKind<T: Scalar> {
    Zero,
    /// `u = −k_omega · x[state_index]` on every input channel.
    ProportionalFrequency {
        k_omega: T,
        #[serde(default = "default_frequency_index")]
        state_index: usize,
    },
    /// Piecewise-constant schedule: `values[i]` applies from `times[i]` on.
    Scripted { times: Vec<f64>, values: Vec<Vec<T>> },
}

fn default_frequency_index() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StudentController<T: Scalar> {
    pub kind: StudentKind<T>,
    #[serde(default)]
    pub saturation: Option<AxisBox<T>>,
}

impl<T: Scalar> StudentController<T> {
    pub fn zero() -> Self {
        Self {
            kind: StudentKind::Zero,
            saturation: None,
        }
    }

    pub fn proportional(k_omega: T, saturation: Option<AxisBox<T>>) -> Self {
        Self {
            kind: StudentKind::ProportionalFrequency {
                k_omega,
                state_index: default_frequency_index(),
            },
            saturation,
        }
    }

    /// Proposal for an `input_dim`-dimensional input at state `x` and time `t`.
    /// States without the frequency coordinate receive zero.
    pub fn control(&self, x: &[T], t: f64, input_dim: usize) -> Vec<T> {
        let raw = match &self.kind {
            StudentKind::Zero => vec![T::zero(); input_dim],
            StudentKind::ProportionalFrequency { k_omega, state_index } => {
                let w = x.get(*state_index).copied().unwrap_or_else(T::zero);
                vec![-*k_omega * w; input_dim]
            }
            StudentKind::Scripted { times, values } => {
                let current = times.iter().rposition(|&s| s <= t + 1e-12);
                let v = current.and_then(|i| values.get(i));
                (0..input_dim)
                    .map(|j| v.and_then(|v| v.get(j)).copied().unwrap_or_else(T::zero))
                    .collect()
            }
        };
        match &self.saturation {
            Some(bx) if bx.dim() == input_dim => bx.clamp(&raw),
            _ => raw,
        }
    }
}

#[cfg(test)]
mod tests;
