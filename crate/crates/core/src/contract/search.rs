use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{ContractError, ContractParams, GainFamily, GainSource};
use crate::epigraph::EpigraphApprox;
use crate::geometry::{bounding_box, lp_solve_with, AxisBox, HPolytope, LpOptions, Matrix};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug)]
pub struct SearchOptions<T: Scalar> {
    /// Objective weights on `y^max`; `None` means all ones.
    pub weights: Option<Vec<T>>,
    /// Return the first feasible point instead of a minimizer.
    pub feasibility_only: bool,
    pub max_nodes: usize,
}

impl<T: Scalar> Default for SearchOptions<T> {
    fn default() -> Self {
        Self {
            weights: None,
            feasibility_only: false,
            max_nodes: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SearchResult<T: Scalar> {
    pub params: ContractParams<T>,
    pub objective: T,
    /// Lowest-index piece of each epigraph containing the solution.
    pub pieces: Vec<usize>,
    pub nodes: usize,
}

struct Instance<'a, T: Scalar> {
    n: usize,
    neighbors: Vec<&'a [usize]>,
    approx: Vec<&'a EpigraphApprox<T>>,
    boxes: Vec<Vec<AxisBox<T>>>,
    active: Vec<bool>,
    objective: Vec<T>,
    tol: T,
}

struct Node<T: Scalar> {
    bound: T,
    id: usize,
    sets: Vec<Vec<usize>>,
    point: Vec<T>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    // Reversed so that `BinaryHeap` pops the smallest (bound, id).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .as_f64()
            .total_cmp(&self.bound.as_f64())
            .then(other.id.cmp(&self.id))
    }
}

enum Outcome<T: Scalar> {
    Found { point: Vec<T>, nodes: usize },
    Infeasible,
}

impl<'a, T: Scalar> Instance<'a, T> {
    fn new(gains: &'a GainFamily<T>, objective: Vec<T>) -> Result<Self, ContractError> {
        let n = gains.len();
        let mut neighbors = Vec::with_capacity(n);
        let mut approx = Vec::with_capacity(n);
        let mut boxes = Vec::with_capacity(n);
        for (i, e) in gains.entries().iter().enumerate() {
            let GainSource::Approx(a) = &e.source else {
                return Err(ContractError::NotApproximation { subsystem: i });
            };
            neighbors.push(e.neighbors.as_slice());
            boxes.push(a.pieces().iter().map(bounding_box).collect::<Result<Vec<_>, _>>()?);
            approx.push(a);
        }
        Ok(Self {
            n,
            neighbors,
            approx,
            boxes,
            active: vec![true; n],
            objective,
            tol: T::of(T::FEAS_TOL),
        })
    }

    /// Maps a row over `[y_{N_i}; y_i]` to a row over `y`.
    fn lift(&self, i: usize, local: &[T]) -> Vec<T> {
        let mut row = vec![T::zero(); self.n];
        for (k, &j) in self.neighbors[i].iter().enumerate() {
            row[j] = row[j] + local[k];
        }
        row[i] = row[i] + local[local.len() - 1];
        row
    }

    fn union_box(&self, i: usize, set: &[usize]) -> AxisBox<T> {
        let first = &self.boxes[i][set[0]];
        let mut lower = first.lower.clone();
        let mut upper = first.upper.clone();
        for &p in &set[1..] {
            let b = &self.boxes[i][p];
            for k in 0..lower.len() {
                lower[k] = lower[k].min(b.lower[k]);
                upper[k] = upper[k].max(b.upper[k]);
            }
        }
        AxisBox { lower, upper }
    }

    /// Solves the relaxation where singleton sets use the exact piece and
    /// larger sets use the bounding box of their union.
    fn relax(&self, sets: &[Vec<usize>]) -> Result<Option<(Vec<T>, T)>, ContractError> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.n {
            let mut nonneg = vec![T::zero(); self.n];
            nonneg[i] = -T::one();
            rows.push(nonneg);
            rhs.push(T::zero());
            if !self.active[i] {
                continue;
            }
            let poly = if sets[i].len() == 1 {
                self.approx[i].pieces()[sets[i][0]].clone()
            } else {
                HPolytope::from_box(&self.union_box(i, &sets[i]))
            };
            for (r, &b) in poly.a().rows_iter().zip(poly.b()) {
                rows.push(self.lift(i, r));
                rhs.push(b);
            }
        }
        let a = Matrix::from_rows_with_cols(rows, self.n)?;
        let out = lp_solve_with(&self.objective, &a, &rhs, LpOptions::default())?;
        Ok(match (out.point, out.value) {
            (Some(p), Some(v)) => Some((p.into_iter().map(|x| x.max(T::zero())).collect(), v)),
            _ => None,
        })
    }

    fn local_point(&self, i: usize, y: &[T]) -> Vec<T> {
        let mut p: Vec<T> = self.neighbors[i].iter().map(|&j| y[j]).collect();
        p.push(y[i]);
        p
    }

    /// First active subsystem whose relaxed point is outside every piece of
    /// its candidate set.
    fn first_unresolved(&self, sets: &[Vec<usize>], y: &[T]) -> Option<usize> {
        (0..self.n).find(|&i| {
            self.active[i] && sets[i].len() > 1 && {
                let p = self.local_point(i, y);
                !sets[i]
                    .iter()
                    .any(|&k| self.approx[i].pieces()[k].contains_unchecked(&p, self.tol))
            }
        })
    }

    /// Splits a candidate set at the median piece centre along the widest
    /// axis of the set's bounding box.
    fn split(&self, i: usize, set: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let hull = self.union_box(i, set);
        let axis = (0..hull.dim())
            .max_by(|&a, &b| {
                let wa = (hull.upper[a] - hull.lower[a]).as_f64();
                let wb = (hull.upper[b] - hull.lower[b]).as_f64();
                wa.total_cmp(&wb).then(b.cmp(&a))
            })
            .unwrap_or(0);
        let mut order: Vec<(f64, usize)> = set
            .iter()
            .map(|&p| {
                let b = &self.boxes[i][p];
                (((b.lower[axis] + b.upper[axis]) / T::of(2.0)).as_f64(), p)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let half = order.len() / 2;
        let mut left: Vec<usize> = order[..half].iter().map(|x| x.1).collect();
        let mut right: Vec<usize> = order[half..].iter().map(|x| x.1).collect();
        left.sort_unstable();
        right.sort_unstable();
        (left, right)
    }

    fn solve(&self, feasibility_only: bool, max_nodes: usize) -> Result<Outcome<T>, ContractError> {
        let root: Vec<Vec<usize>> = (0..self.n)
            .map(|i| (0..self.approx[i].pieces().len()).collect())
            .collect();
        let mut heap = BinaryHeap::new();
        let mut next_id = 0;
        let mut nodes = 0;
        if let Some((point, bound)) = self.relax(&root)? {
            heap.push(Node { bound, id: next_id, sets: root, point });
            next_id += 1;
            nodes += 1;
        }
        let mut best: Option<(Vec<T>, T)> = None;
        let prune = T::of(T::DEDUP_TOL);
        while let Some(node) = heap.pop() {
            if let Some((_, v)) = &best {
                if node.bound >= *v - prune {
                    continue;
                }
            }
            let Some(i) = self.first_unresolved(&node.sets, &node.point) else {
                best = Some((node.point, node.bound));
                if feasibility_only {
                    break;
                }
                continue;
            };
            let (left, right) = self.split(i, &node.sets[i]);
            for child in [left, right] {
                let mut sets = node.sets.clone();
                sets[i] = child;
                nodes += 1;
                if nodes > max_nodes {
                    return Err(ContractError::NodeLimit { nodes: max_nodes });
                }
                if let Some((point, bound)) = self.relax(&sets)? {
                    heap.push(Node { bound, id: next_id, sets, point });
                    next_id += 1;
                }
            }
        }
        Ok(match best {
            Some((point, _)) => Outcome::Found { point, nodes },
            None => Outcome::Infeasible,
        })
    }

    /// Deletion filter: drops subsystems whose constraints are not needed
    /// for infeasibility.
    fn irreducible_subset(&mut self, max_nodes: usize) -> Result<Vec<usize>, ContractError> {
        let saved = std::mem::replace(&mut self.objective, vec![T::zero(); self.n]);
        for i in 0..self.n {
            self.active[i] = false;
            if matches!(self.solve(true, max_nodes)?, Outcome::Found { .. }) {
                self.active[i] = true;
            }
        }
        self.objective = saved;
        Ok((0..self.n).filter(|&i| self.active[i]).collect())
    }
}

/// Finds `y^max ≥ 0` with `[y_{N_i}^max; y_i^max]` inside every epigraph
/// approximation, minimizing the weighted sum of `y^max`.
pub fn search_contract<T: Scalar>(
    gains: &GainFamily<T>,
    opts: &SearchOptions<T>,
) -> Result<SearchResult<T>, ContractError> {
    let n = gains.len();
    let weights = match &opts.weights {
        Some(w) if w.len() != n => {
            return Err(ContractError::DimensionMismatch {
                context: "objective weights".into(),
                expected: n,
                found: w.len(),
            })
        }
        Some(w) if w.iter().any(|x| !x.is_finite() || *x < T::zero()) => return Err(ContractError::InvalidWeights),
        Some(w) => w.clone(),
        None => vec![T::one(); n],
    };
    let objective = if opts.feasibility_only {
        vec![T::zero(); n]
    } else {
        weights.clone()
    };
    let mut inst = Instance::new(gains, objective)?;
    match inst.solve(opts.feasibility_only, opts.max_nodes)? {
        Outcome::Found { point, nodes, .. } => {
            let pieces = (0..n)
                .map(|i| {
                    let p = inst.local_point(i, &point);
                    let pieces = inst.approx[i].pieces();
                    pieces
                        .iter()
                        .position(|piece| piece.contains_unchecked(&p, inst.tol))
                        .unwrap_or(0)
                })
                .collect();
            Ok(SearchResult {
                objective: dot(&weights, &point),
                params: ContractParams { y_max: point },
                pieces,
                nodes,
            })
        }
        Outcome::Infeasible => Err(ContractError::Infeasible {
            subsystems: inst.irreducible_subset(opts.max_nodes)?,
        }),
    }
}
