use serde::{Deserialize, Serialize};

use crate::geometry::{
    bounding_box, enumerate_vertices, lp_solve_with, support_value, HPolytope, LpOptions,
    LpStatus, Matrix,
};
use crate::scalar::Scalar;

use super::{InvariantError, RciProblem};

/// Largest uniform slack `t` with `P(A x + B_u u + e) + t ≤ q` over
/// admissible `u`, together with the maximizing input.
pub(crate) fn best_margin<T: Scalar>(
    prob: &RciProblem<T>,
    poly: &HPolytope<T>,
    x: &[T],
    e: &[T],
) -> Result<(T, Vec<T>), InvariantError> {
    let aff = prob.affine();
    let input = prob.input();
    let m = input.dim();
    let mut drift = aff.a.mul_vec(x);
    for (d, &ek) in drift.iter_mut().zip(e) {
        *d = *d + ek;
    }
    let pdrift = poly.a().mul_vec(&drift);
    let pbu = poly.a().mul(&aff.b_u);
    let mut rows = Vec::with_capacity(poly.num_rows() + 2 * m);
    let mut rhs = Vec::with_capacity(rows.capacity());
    for k in 0..poly.num_rows() {
        let mut r = pbu.row(k).to_vec();
        r.push(T::one());
        rows.push(r);
        rhs.push(poly.b()[k] - pdrift[k]);
    }
    for j in 0..m {
        let mut r = vec![T::zero(); m + 1];
        r[j] = T::one();
        rows.push(r.clone());
        rhs.push(input.upper[j]);
        r[j] = -T::one();
        rows.push(r);
        rhs.push(-input.lower[j]);
    }
    let mut obj = vec![T::zero(); m + 1];
    obj[m] = -T::one();
    let a = Matrix::from_rows_with_cols(rows, m + 1)?;
    let out = lp_solve_with(&obj, &a, &rhs, LpOptions::default())?;
    match out.status {
        LpStatus::Optimal => {
            let mut z = out.point.unwrap();
            let t = z.pop().unwrap();
            Ok((t, z))
        }
        // t is free and the input box nonempty, so the only failure mode is
        // an unbounded set, which callers rule out beforehand.
        _ => Err(InvariantError::Geometry(crate::geometry::GeometryError::Unbounded)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VerificationReport<T: Scalar> {
    pub points: usize,
    pub checks: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    pub worst_margin: T,
    pub worst_point: Option<Vec<T>>,
}

impl<T: Scalar> VerificationReport<T> {
    pub fn all_passed(&self) -> bool {
        self.passed == self.checks
    }
}

/// Checks invariance of `set` on a grid of `density` points per axis over its
/// bounding box (plus its vertices) against every uncertainty vertex.
pub fn verify_rci<T: Scalar>(
    set: &HPolytope<T>,
    prob: &RciProblem<T>,
    density: usize,
) -> Result<VerificationReport<T>, InvariantError> {
    if density == 0 {
        return Err(InvariantError::ZeroDensity);
    }
    let n = prob.affine().state_dim();
    if set.dim() != n {
        return Err(InvariantError::DimensionMismatch {
            context: "verified set".into(),
            expected: n,
            found: set.dim(),
        });
    }
    let bb = bounding_box(set)?;
    let tol = T::of(T::FEAS_TOL);
    let mut points: Vec<Vec<T>> = Vec::new();
    let total = density.checked_pow(n as u32).unwrap_or(usize::MAX);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = Vec::with_capacity(n);
        for k in 0..n {
            let i = rem % density;
            rem /= density;
            let frac = if density == 1 {
                T::of(0.5)
            } else {
                T::of(i as f64 / (density - 1) as f64)
            };
            p.push(bb.lower[k] + (bb.upper[k] - bb.lower[k]) * frac);
        }
        if set.contains_unchecked(&p, tol) {
            points.push(p);
        }
    }
    points.extend(enumerate_vertices(set)?);

    let offsets = prob.uncertainty_offsets()?;
    let mut checks = 0;
    let mut passed = 0;
    let mut worst = T::infinity();
    let mut worst_point = None;
    for p in &points {
        for e in &offsets {
            let (t, _) = best_margin(prob, set, p, e)?;
            checks += 1;
            if t >= -tol {
                passed += 1;
            }
            if t < worst {
                worst = t;
                worst_point = Some(p.clone());
            }
        }
    }
    Ok(VerificationReport {
        points: points.len(),
        checks,
        passed,
        pass_fraction: if checks == 0 { 1.0 } else { passed as f64 / checks as f64 },
        worst_margin: worst,
        worst_point,
    })
}

/// `max_{x ∈ S} |h·x|`.
pub fn output_bound<T: Scalar>(set: &HPolytope<T>, h: &[T]) -> Result<T, InvariantError> {
    let neg: Vec<T> = h.iter().map(|&v| -v).collect();
    Ok(support_value(set, h)?.max(support_value(set, &neg)?))
}
