use crate::scalar::Scalar;

use super::matrix::solve_square;
use super::{GeometryError, HPolytope};

const MAX_VERTEX_DIM: usize = 4;

/// Enumerates the vertices of a bounded polytope by intersecting every
/// `n`-subset of facets. Intended for the small templates used here.
pub fn enumerate_vertices<T: Scalar>(poly: &HPolytope<T>) -> Result<Vec<Vec<T>>, GeometryError> {
    let n = poly.dim();
    if n == 0 || n > MAX_VERTEX_DIM {
        return Err(GeometryError::UnsupportedDimension {
            dim: n,
            hint: "vertex enumeration is limited to dimensions 1..=4",
        });
    }
    let l = poly.num_rows();
    let tol = T::of(T::FEAS_TOL);
    let dedup = T::of(T::FEAS_TOL) * T::of(10.0);
    let mut out: Vec<Vec<T>> = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    if l < n {
        return Err(GeometryError::Unbounded);
    }
    loop {
        let a: Vec<Vec<T>> = idx.iter().map(|&i| poly.a().row(i).to_vec()).collect();
        let b: Vec<T> = idx.iter().map(|&i| poly.b()[i]).collect();
        if let Some(x) = solve_square(&a, &b, T::of(T::DEDUP_TOL)) {
            let scale = T::one() + crate::scalar::max_abs(&x);
            if poly.contains_unchecked(&x, tol * scale)
                && !out
                    .iter()
                    .any(|v| v.iter().zip(&x).all(|(p, q)| (*p - *q).abs() <= dedup * scale))
            {
                out.push(x);
            }
        }
        // next combination
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if idx[k] < l - n + k {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
