//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Variables are free; they are split as `x = x⁺ − x⁻` internally. Every
//! constraint row `a·x ≤ b` receives a slack, and rows with a negative
//! right-hand side additionally receive a phase-one artificial.

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, Scalar};

use super::{GeometryError, HPolytope, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of a linear program. `point` and `value` are present iff optimal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LpOutcome<T: Scalar> {
    pub status: LpStatus,
    pub point: Option<Vec<T>>,
    pub value: Option<T>,
}

impl<T: Scalar> LpOutcome<T> {
    fn optimal(point: Vec<T>, value: T) -> Self {
        Self {
            status: LpStatus::Optimal,
            point: Some(point),
            value: Some(value),
        }
    }

    fn with_status(status: LpStatus) -> Self {
        Self {
            status,
            point: None,
            value: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LpOptions {
    /// Pivot iterations allowed per phase, on top of a size-proportional budget.
    pub max_iters: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { max_iters: 20_000 }
    }
}

/// Minimizes `objective · x` over `{x : A x ≤ b}`.
pub fn lp_solve<T: Scalar>(
    objective: &[T],
    constraints: &HPolytope<T>,
) -> Result<LpOutcome<T>, GeometryError> {
    lp_solve_with(objective, constraints.a(), constraints.b(), LpOptions::default())
}

/// Same as [`lp_solve`] on a raw row system, which may have zero rows.
pub fn lp_solve_with<T: Scalar>(
    objective: &[T],
    a: &Matrix<T>,
    b: &[T],
    opts: LpOptions,
) -> Result<LpOutcome<T>, GeometryError> {
    let n = objective.len();
    if a.ncols() != n {
        return Err(GeometryError::DimensionMismatch {
            context: "lp objective".into(),
            expected: a.ncols(),
            found: n,
        });
    }
    if b.len() != a.nrows() {
        return Err(GeometryError::DimensionMismatch {
            context: "lp right-hand side".into(),
            expected: a.nrows(),
            found: b.len(),
        });
    }
    if !a.is_finite() || !crate::scalar::all_finite(b) || !crate::scalar::all_finite(objective) {
        return Err(GeometryError::NonFinite("lp data".into()));
    }
    let feas = T::of(T::FEAS_TOL);

    // Normalize rows; drop empty ones after checking them.
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(a.nrows());
    let mut rhs: Vec<T> = Vec::with_capacity(a.nrows());
    for (r, &bi) in a.rows_iter().zip(b) {
        let scale = crate::scalar::max_abs(r);
        if scale <= T::zero() {
            if bi < -feas {
                return Ok(LpOutcome::with_status(LpStatus::Infeasible));
            }
            continue;
        }
        rows.push(r.iter().map(|&x| x / scale).collect());
        rhs.push(bi / scale);
    }

    if rows.is_empty() {
        return Ok(if objective.iter().all(|&c| c == T::zero()) {
            LpOutcome::optimal(vec![T::zero(); n], T::zero())
        } else {
            LpOutcome::with_status(LpStatus::Unbounded)
        });
    }

    let mut tab = Tableau::build(&rows, &rhs, n);
    let budget = opts.max_iters + 50 * (tab.m + tab.width);

    if tab.n_art > 0 {
        let mut cost = vec![T::zero(); tab.width];
        for c in cost.iter_mut().skip(tab.art_start) {
            *c = T::one();
        }
        tab.set_costs(&cost);
        match tab.run(budget, tab.width)? {
            Phase::Optimal => {}
            Phase::Unbounded => unreachable!("phase one objective is bounded below"),
        }
        let infeas = -tab.z[tab.width];
        let rhs_scale = T::one() + crate::scalar::max_abs(&rhs);
        if infeas > feas * rhs_scale {
            return Ok(LpOutcome::with_status(LpStatus::Infeasible));
        }
        tab.expel_artificials();
    }

    let mut cost = vec![T::zero(); tab.width];
    for j in 0..n {
        cost[j] = objective[j];
        cost[n + j] = -objective[j];
    }
    tab.set_costs(&cost);
    match tab.run(budget, tab.art_start)? {
        Phase::Unbounded => Ok(LpOutcome::with_status(LpStatus::Unbounded)),
        Phase::Optimal => {
            let mut x = vec![T::zero(); n];
            for (r, &bv) in tab.basis.iter().enumerate() {
                let val = tab.t[r][tab.width];
                if bv < n {
                    x[bv] = x[bv] + val;
                } else if bv < 2 * n {
                    x[bv - n] = x[bv - n] - val;
                }
            }
            let value = dot(objective, &x);
            Ok(LpOutcome::optimal(x, value))
        }
    }
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau<T: Scalar> {
    m: usize,
    width: usize,
    art_start: usize,
    n_art: usize,
    t: Vec<Vec<T>>,
    z: Vec<T>,
    basis: Vec<usize>,
    piv_eps: T,
    cost_eps: T,
}

impl<T: Scalar> Tableau<T> {
    fn build(rows: &[Vec<T>], rhs: &[T], n: usize) -> Self {
        let m = rows.len();
        let n_art = rhs.iter().filter(|&&b| b < T::zero()).count();
        let art_start = 2 * n + m;
        let width = art_start + n_art;
        let mut t = vec![vec![T::zero(); width + 1]; m];
        let mut basis = vec![0; m];
        let mut art = art_start;
        for (i, (row, &bi)) in rows.iter().zip(rhs).enumerate() {
            let sign = if bi < T::zero() { -T::one() } else { T::one() };
            for j in 0..n {
                t[i][j] = sign * row[j];
                t[i][n + j] = -sign * row[j];
            }
            t[i][2 * n + i] = sign;
            t[i][width] = sign * bi;
            if bi < T::zero() {
                t[i][art] = T::one();
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = 2 * n + i;
            }
        }
        let tiny = T::of(T::FEAS_TOL) * T::of(1e-3);
        Self {
            m,
            width,
            art_start,
            n_art,
            t,
            z: vec![T::zero(); width + 1],
            basis,
            piv_eps: tiny,
            cost_eps: tiny,
        }
    }

    fn set_costs(&mut self, cost: &[T]) {
        let mut z = vec![T::zero(); self.width + 1];
        z[..self.width].copy_from_slice(cost);
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb == T::zero() {
                continue;
            }
            for (zj, &tj) in z.iter_mut().zip(&self.t[r]) {
                *zj = *zj - cb * tj;
            }
        }
        self.z = z;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v = *v / p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f == T::zero() {
                continue;
            }
            for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                *v = *v - f * pv;
            }
            row[c] = T::zero();
        }
        let f = self.z[c];
        if f != T::zero() {
            for (v, &pv) in self.z.iter_mut().zip(&pivot_row) {
                *v = *v - f * pv;
            }
            self.z[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule pivots over columns `< allowed`.
    fn run(&mut self, budget: usize, allowed: usize) -> Result<Phase, GeometryError> {
        for _ in 0..budget {
            let Some(enter) = (0..allowed).find(|&j| self.z[j] < -self.cost_eps) else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, T)> = None;
            for r in 0..self.m {
                let a = self.t[r][enter];
                if a <= self.piv_eps {
                    continue;
                }
                let ratio = self.t[r][self.width] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs()
                            <= self.piv_eps * (T::one() + lratio.abs());
                        if ratio < lratio && !tie
                            || tie && self.basis[r] < self.basis[lr]
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(Phase::Unbounded);
            };
            self.pivot(r, enter);
        }
        Err(GeometryError::IterationLimit { iterations: budget })
    }

    /// Pivots basic artificials out, dropping rows that turn out redundant.
    fn expel_artificials(&mut self) {
        let mut r = 0;
        while r < self.m {
            if self.basis[r] >= self.art_start {
                let col = (0..self.art_start).find(|&j| self.t[r][j].abs() > self.piv_eps * T::of(1e3));
                match col {
                    Some(c) => {
                        self.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        self.t.remove(r);
                        self.basis.remove(r);
                        self.m -= 1;
                    }
                }
            } else {
                r += 1;
            }
        }
        for row in self.t.iter_mut() {
            for v in row[self.art_start..self.width].iter_mut() {
                *v = T::zero();
            }
        }
    }
}
