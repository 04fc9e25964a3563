//! Linearized swing-equation microgrid, discretized by forward Euler.
//!
//! Generator buses carry `x = [θ, ω]` and follow
//! `M ω̇ = P − D ω − d − u − Σ B_ij (θ_i − θ_j)`. Load buses have no inertia,
//! so the same balance is solved for `ω` and the bus keeps the single state
//! `θ`. Every bus outputs `y = θ`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::Matrix;
use crate::scalar::Scalar;

use super::{AffineRealization, NetworkError, NetworkSystem, Subsystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Generator,
    Load,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BusSpec<T: Scalar> {
    pub id: usize,
    pub kind: BusKind,
    /// Inertia; ignored for load buses.
    #[serde(default)]
    pub m: T,
    pub d: T,
    #[serde(default)]
    pub p_in: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LineSpec<T: Scalar> {
    pub from: usize,
    pub to: usize,
    pub b: T,
}

const MAX_STEP: f64 = 0.1;

fn check_inputs<T: Scalar>(
    buses: &[BusSpec<T>],
    lines: &[LineSpec<T>],
    ts: T,
) -> Result<BTreeMap<usize, Vec<(usize, T)>>, NetworkError> {
    if !(ts > T::zero() && ts <= T::of(MAX_STEP)) {
        return Err(NetworkError::InvalidStep(ts.as_f64()));
    }
    if !buses.iter().any(|b| b.kind == BusKind::Generator) {
        return Err(NetworkError::NoGenerators);
    }
    let mut adj: BTreeMap<usize, Vec<(usize, T)>> = BTreeMap::new();
    for bus in buses {
        let bad = |reason: &str| NetworkError::InvalidBus {
            id: bus.id,
            reason: reason.into(),
        };
        if adj.insert(bus.id, Vec::new()).is_some() {
            return Err(NetworkError::DuplicateId(bus.id));
        }
        if !(bus.d > T::zero() && bus.d.is_finite()) {
            return Err(bad("damping must be positive"));
        }
        if bus.kind == BusKind::Generator && !(bus.m > T::zero() && bus.m.is_finite()) {
            return Err(bad("generator inertia must be positive"));
        }
        if !bus.p_in.is_finite() {
            return Err(bad("injection must be finite"));
        }
    }
    for line in lines {
        let bad = |reason: &str| NetworkError::InvalidLine {
            from: line.from,
            to: line.to,
            reason: reason.into(),
        };
        if line.from == line.to {
            return Err(bad("self loop"));
        }
        if !(line.b > T::zero() && line.b.is_finite()) {
            return Err(bad("susceptance must be positive"));
        }
        for (a, b) in [(line.from, line.to), (line.to, line.from)] {
            let entry = adj.get_mut(&a).ok_or_else(|| bad("unknown bus"))?;
            if entry.iter().any(|&(j, _)| j == b) {
                return Err(bad("duplicate line"));
            }
            entry.push((b, line.b));
        }
    }
    for v in adj.values_mut() {
        v.sort_by_key(|&(j, _)| j);
    }

    let first = *adj.keys().next().expect("at least one bus");
    let mut seen = BTreeSet::from([first]);
    let mut queue = VecDeque::from([first]);
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &adj[&i] {
            if seen.insert(j) {
                queue.push_back(j);
            }
        }
    }
    if let Some(&missing) = adj.keys().find(|k| !seen.contains(k)) {
        return Err(NetworkError::Disconnected(missing));
    }
    Ok(adj)
}

/// Builds the microgrid network. Neighbors are ordered by ascending bus id.
pub fn build_microgrid<T: Scalar>(
    buses: &[BusSpec<T>],
    lines: &[LineSpec<T>],
    ts: T,
) -> Result<NetworkSystem<T>, NetworkError> {
    let adj = check_inputs(buses, lines, ts)?;
    let mut subsystems = Vec::with_capacity(buses.len());
    for bus in buses {
        let nbrs = &adj[&bus.id];
        let b_sum: T = nbrs.iter().map(|&(_, b)| b).sum();
        let realization = match bus.kind {
            BusKind::Generator => {
                let g = ts / bus.m;
                AffineRealization {
                    a: Matrix::from_rows(vec![
                        vec![T::one(), ts],
                        vec![-g * b_sum, T::one() - g * bus.d],
                    ])?,
                    b_u: Matrix::from_rows(vec![vec![T::zero()], vec![-g]])?,
                    b_y: Matrix::from_rows_with_cols(
                        vec![
                            vec![T::zero(); nbrs.len()],
                            nbrs.iter().map(|&(_, b)| g * b).collect(),
                        ],
                        nbrs.len(),
                    )?,
                    b_d: Matrix::from_rows(vec![vec![T::zero()], vec![-g]])?,
                    c: vec![T::zero(), g * bus.p_in],
                    output: Matrix::from_rows(vec![vec![T::one(), T::zero()]])?,
                }
            }
            BusKind::Load => {
                let g = ts / bus.d;
                AffineRealization {
                    a: Matrix::from_rows(vec![vec![T::one() - g * b_sum]])?,
                    b_u: Matrix::from_rows(vec![vec![-g]])?,
                    b_y: Matrix::from_rows_with_cols(
                        vec![nbrs.iter().map(|&(_, b)| g * b).collect()],
                        nbrs.len(),
                    )?,
                    b_d: Matrix::from_rows(vec![vec![-g]])?,
                    c: vec![g * bus.p_in],
                    output: Matrix::from_rows(vec![vec![T::one()]])?,
                }
            }
        };
        subsystems.push(Subsystem::from_affine(
            bus.id,
            nbrs.iter().map(|&(j, _)| j).collect(),
            realization,
        )?);
    }
    NetworkSystem::new(subsystems, ts)
}
