use serde::{Deserialize, Serialize};

use crate::geometry::{enumerate_vertices, lp_solve_with, HPolytope, LpOptions, LpStatus, Matrix};
use crate::scalar::{dot, Scalar};

use super::verify::{best_margin, output_bound};
use super::{InvariantError, RciProblem, RciResult, RciStatus, RciTemplate, VertexWitness};

/// Which invariant scaling to return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case")]
pub enum RciMode<T: Scalar> {
    /// Largest invariant scaling, optionally capped so that the output bound
    /// of the set does not exceed `output_cap`.
    Largest { output_cap: Option<T> },
    /// Smallest invariant scaling that is at least `min_scale`.
    Tightest { min_scale: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RciOptions<T: Scalar> {
    pub mode: RciMode<T>,
    /// After the homothetic step, shrink facets individually while the
    /// shrunken set still verifies exactly at its vertices.
    pub tighten: bool,
    pub max_iters: usize,
    pub tol: T,
}

impl<T: Scalar> Default for RciOptions<T> {
    fn default() -> Self {
        Self {
            mode: RciMode::Largest { output_cap: None },
            tighten: false,
            max_iters: 100,
            tol: T::of(1e-9),
        }
    }
}

impl<T: Scalar> RciOptions<T> {
    pub fn tightest(min_scale: T) -> Self {
        Self {
            mode: RciMode::Tightest { min_scale },
            ..Self::default()
        }
    }

    pub fn largest(output_cap: Option<T>) -> Self {
        Self {
            mode: RciMode::Largest { output_cap },
            ..Self::default()
        }
    }
}

/// `P A`, `P B_u` and `P e` for every uncertainty offset `e`.
struct Projected<T: Scalar> {
    pa: Matrix<T>,
    pbu: Matrix<T>,
    pe: Vec<Vec<T>>,
}

impl<T: Scalar> Projected<T> {
    fn new(prob: &RciProblem<T>, p: &Matrix<T>) -> Result<Self, InvariantError> {
        let aff = prob.affine();
        Ok(Self {
            pa: p.mul(&aff.a),
            pbu: p.mul(&aff.b_u),
            pe: prob
                .uncertainty_offsets()?
                .iter()
                .map(|e| p.mul_vec(e))
                .collect(),
        })
    }
}

/// Scalings `s ∈ [0, 1]` for which the scaled vertex `s·v` can be kept in
/// `{P x ≤ s·q₀}` under the offset with projection `pe`. Decision variables
/// are `(s, u)`.
fn pair_interval<T: Scalar>(
    prob: &RciProblem<T>,
    proj: &Projected<T>,
    q0: &[T],
    v: &[T],
    pe: &[T],
) -> Result<Option<(T, T)>, InvariantError> {
    let m = prob.input().dim();
    let pav = proj.pa.mul_vec(v);
    let mut rows = Vec::with_capacity(q0.len() + 2 + 2 * m);
    let mut rhs = Vec::with_capacity(rows.capacity());
    for k in 0..q0.len() {
        let mut r = Vec::with_capacity(1 + m);
        r.push(pav[k] - q0[k]);
        r.extend_from_slice(proj.pbu.row(k));
        rows.push(r);
        rhs.push(-pe[k]);
    }
    let mut unit = |j: usize, sign: T, bound: T| {
        let mut r = vec![T::zero(); 1 + m];
        r[j] = sign;
        rows.push(r);
        rhs.push(bound);
    };
    unit(0, T::one(), T::one());
    unit(0, -T::one(), T::zero());
    for j in 0..m {
        unit(1 + j, T::one(), prob.input().upper[j]);
        unit(1 + j, -T::one(), -prob.input().lower[j]);
    }
    let a = Matrix::from_rows_with_cols(rows, 1 + m)?;
    let mut obj = vec![T::zero(); 1 + m];
    obj[0] = T::one();
    let lo = lp_solve_with(&obj, &a, &rhs, LpOptions::default())?;
    if lo.status != LpStatus::Optimal {
        return Ok(None);
    }
    obj[0] = -T::one();
    let hi = lp_solve_with(&obj, &a, &rhs, LpOptions::default())?;
    if hi.status != LpStatus::Optimal {
        return Ok(None);
    }
    Ok(Some((lo.point.unwrap()[0], hi.point.unwrap()[0])))
}

/// Intersection over all vertex/uncertainty pairs; `None` when empty.
fn scaling_bracket<T: Scalar>(
    prob: &RciProblem<T>,
    tmpl: &RciTemplate<T>,
    proj: &Projected<T>,
) -> Result<Option<(T, T)>, InvariantError> {
    let feas = T::of(T::FEAS_TOL);
    let (mut lo, mut hi) = (T::zero(), T::one());
    for v in tmpl.vertices() {
        for pe in &proj.pe {
            match pair_interval(prob, proj, tmpl.q0(), v, pe)? {
                None => return Ok(None),
                Some((a, b)) => {
                    lo = lo.max(a);
                    hi = hi.min(b);
                }
            }
            if lo > hi + feas {
                return Ok(None);
            }
        }
    }
    Ok(Some((lo, hi.max(lo))))
}

/// Exact invariance test of `{P x ≤ q}` at its vertices; returns the witnesses
/// or `None` if some pair has negative margin.
fn vertex_witnesses<T: Scalar>(
    prob: &RciProblem<T>,
    poly: &HPolytope<T>,
) -> Result<Option<Vec<VertexWitness<T>>>, InvariantError> {
    let offsets = prob.uncertainty_offsets()?;
    let feas = T::of(T::FEAS_TOL);
    let mut out = Vec::new();
    for v in enumerate_vertices(poly)? {
        for (k, e) in offsets.iter().enumerate() {
            let (margin, input) = best_margin(prob, poly, &v, e)?;
            if margin < -feas {
                return Ok(None);
            }
            out.push(VertexWitness {
                vertex: v.clone(),
                offset_index: k,
                input,
                margin,
            });
        }
    }
    Ok(Some(out))
}

/// Robust control invariant set for `prob` within the template `tmpl`.
pub fn compute_rci<T: Scalar>(
    prob: &RciProblem<T>,
    tmpl: &RciTemplate<T>,
    opts: &RciOptions<T>,
) -> Result<RciResult<T>, InvariantError> {
    let n = prob.affine().state_dim();
    if tmpl.dim() != n {
        return Err(InvariantError::DimensionMismatch {
            context: "template columns".into(),
            expected: n,
            found: tmpl.dim(),
        });
    }
    let empty = |bracket, reason: String| RciResult {
        p: tmpl.p().clone(),
        q: vec![T::zero(); tmpl.q0().len()],
        status: RciStatus::Empty,
        bracket,
        scale: T::zero(),
        history: Vec::new(),
        witnesses: Vec::new(),
        problem_hash: prob.hash(),
        reason: Some(reason),
    };

    let proj = Projected::new(prob, tmpl.p())?;
    let Some((s_lo, s_hi)) = scaling_bracket(prob, tmpl, &proj)? else {
        return Ok(empty(None, "no scaling of the template is invariant".into()));
    };
    let bracket = Some((s_lo, s_hi));
    let scale = match opts.mode {
        RciMode::Largest { output_cap } => {
            let mut s = s_hi.min(T::one());
            if let Some(cap) = output_cap {
                let full = output_bound(&tmpl.polytope(tmpl.q0())?, prob.output_row()?)?;
                if full > T::zero() {
                    s = s.min(cap / full);
                }
            }
            if s < s_lo {
                return Ok(empty(
                    bracket,
                    format!("output cap forces scale {s} below the smallest invariant scale {s_lo}"),
                ));
            }
            s
        }
        RciMode::Tightest { min_scale } => {
            let s = s_lo.max(min_scale);
            if s > s_hi {
                return Ok(empty(
                    bracket,
                    format!("minimum scale {min_scale} exceeds the largest invariant scale {s_hi}"),
                ));
            }
            s
        }
    };
    let q: Vec<T> = tmpl.q0().iter().map(|&q| q * scale).collect();
    if let Some(k) = q.iter().position(|&qk| qk < opts.tol) {
        return Ok(empty(bracket, format!("facet {k} collapsed below tolerance")));
    }

    let mut poly = tmpl.polytope(&q)?;
    let Some(mut witnesses) = vertex_witnesses(prob, &poly)? else {
        let worst = worst_margin(prob, &poly)?;
        return Err(InvariantError::CertificateFailed {
            margin: worst.as_f64(),
        });
    };
    let mut history = vec![q];
    let mut status = RciStatus::Invariant;
    if opts.tighten {
        status = RciStatus::NotConverged;
        for _ in 0..opts.max_iters {
            let current = history.last().unwrap();
            let candidate = tightened_offsets(prob, &poly, &witnesses, opts.tol)?;
            let change = candidate
                .iter()
                .zip(current)
                .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            if change < opts.tol {
                status = RciStatus::Invariant;
                break;
            }
            let next_poly = tmpl.polytope(&candidate)?;
            let accepted = match enumerate_vertices(&next_poly) {
                Ok(vs) if !vs.is_empty() => vertex_witnesses(prob, &next_poly)?,
                _ => None,
            };
            match accepted {
                Some(w) => {
                    poly = next_poly;
                    witnesses = w;
                    history.push(candidate);
                }
                None => {
                    status = RciStatus::Invariant;
                    break;
                }
            }
        }
    }

    Ok(RciResult {
        p: tmpl.p().clone(),
        q: history.last().unwrap().clone(),
        status,
        bracket,
        scale,
        history,
        witnesses,
        problem_hash: prob.hash(),
        reason: None,
    })
}

fn worst_margin<T: Scalar>(prob: &RciProblem<T>, poly: &HPolytope<T>) -> Result<T, InvariantError> {
    let mut worst = T::infinity();
    for v in enumerate_vertices(poly)? {
        for e in prob.uncertainty_offsets()? {
            worst = worst.min(best_margin(prob, poly, &v, &e)?.0);
        }
    }
    Ok(worst)
}

/// Largest facet value reached by the witness successors, floored at `tol`.
fn tightened_offsets<T: Scalar>(
    prob: &RciProblem<T>,
    poly: &HPolytope<T>,
    witnesses: &[VertexWitness<T>],
    tol: T,
) -> Result<Vec<T>, InvariantError> {
    let aff = prob.affine();
    let offsets = prob.uncertainty_offsets()?;
    let mut r = vec![T::neg_infinity(); poly.num_rows()];
    for w in witnesses {
        let mut x = aff.a.mul_vec(&w.vertex);
        for ((xk, bu), e) in x.iter_mut().zip(aff.b_u.mul_vec(&w.input)).zip(&offsets[w.offset_index]) {
            *xk = *xk + bu + *e;
        }
        for (k, row) in poly.a().rows_iter().enumerate() {
            r[k] = r[k].max(dot(row, &x));
        }
    }
    Ok(r
        .into_iter()
        .zip(poly.b())
        .map(|(rk, &qk)| rk.min(qk).max(tol))
        .collect())
}

/// Gain `λ(y_N)`: output bound of the tightest invariant scaling, or `+∞`
/// when no invariant scaling exists.
pub fn gain_evaluate<T: Scalar>(
    prob: &RciProblem<T>,
    tmpl: &RciTemplate<T>,
    neighbor_bound: &[T],
    min_scale: T,
) -> Result<T, InvariantError> {
    let p = prob.with_neighbor_bound(neighbor_bound.to_vec())?;
    let res = compute_rci(&p, tmpl, &RciOptions::tightest(min_scale))?;
    if res.status != RciStatus::Invariant {
        return Ok(T::infinity());
    }
    output_bound(&res.set()?, p.output_row()?)
}
