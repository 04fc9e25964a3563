//! Euclidean projection onto `{u : G u ≤ h}` by a primal active-set method.

use crate::geometry::solve_square;
use crate::scalar::{dot, max_abs, Scalar};

/// Projects `u0` onto the polyhedron starting from a feasible `start`.
/// Returns the projection and the final working set.
pub(crate) fn project<T: Scalar>(g: &[Vec<T>], h: &[T], u0: &[T], start: Vec<T>) -> (Vec<T>, Vec<usize>) {
    let m = u0.len();
    let tiny = T::of(T::DEDUP_TOL);
    let mut u = start;
    let mut working: Vec<usize> = Vec::new();
    let limit = 50 * (g.len() + m + 1);
    for _ in 0..limit {
        let r: Vec<T> = u0.iter().zip(&u).map(|(a, b)| *a - *b).collect();
        let mu = multipliers(g, &working, &r);
        let mut p = r.clone();
        for (&i, &mi) in working.iter().zip(&mu) {
            for (pj, gj) in p.iter_mut().zip(&g[i]) {
                *pj = *pj - mi * *gj;
            }
        }
        if max_abs(&p) <= tiny * (T::one() + max_abs(&u)) {
            let worst = mu
                .iter()
                .enumerate()
                .filter(|(_, v)| **v < -tiny)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal));
            match worst {
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
                None => return (u, working),
            }
        }
        let mut alpha = T::one();
        let mut blocking = None;
        for (i, (gi, &hi)) in g.iter().zip(h).enumerate() {
            if working.contains(&i) {
                continue;
            }
            let gp = dot(gi, &p);
            if gp <= tiny * max_abs(gi) * max_abs(&p) {
                continue;
            }
            let step = ((hi - dot(gi, &u)) / gp).max(T::zero());
            if step < alpha {
                alpha = step;
                blocking = Some(i);
            }
        }
        for (uj, pj) in u.iter_mut().zip(&p) {
            *uj = *uj + alpha * *pj;
        }
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    (u, working)
}

/// Least-squares multipliers `(G_W G_Wᵀ)⁻¹ G_W r`.
fn multipliers<T: Scalar>(g: &[Vec<T>], working: &[usize], r: &[T]) -> Vec<T> {
    if working.is_empty() {
        return Vec::new();
    }
    let gram: Vec<Vec<T>> = working
        .iter()
        .map(|&i| working.iter().map(|&j| dot(&g[i], &g[j])).collect())
        .collect();
    let rhs: Vec<T> = working.iter().map(|&i| dot(&g[i], r)).collect();
    solve_square(&gram, &rhs, T::of(T::DEDUP_TOL)).unwrap_or_else(|| vec![T::zero(); working.len()])
}
