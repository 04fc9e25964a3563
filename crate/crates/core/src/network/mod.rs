//! Interconnected discrete-time systems coupled only through outputs.
//!
//! A [`NetworkSystem`] is an ordered collection of [`Subsystem`]s. Each
//! subsystem sees the stacked outputs of its neighbors, in the order of its
//! neighbor list, and advances synchronously with all others.

mod microgrid;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Matrix;
use crate::scalar::{all_finite, max_abs, Scalar};

pub use microgrid::{build_microgrid, BusKind, BusSpec, LineSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("subsystem {id} lists itself as a neighbor")]
    SelfLoop { id: usize },
    #[error("subsystem {id} lists neighbor {neighbor} more than once")]
    DuplicateNeighbor { id: usize, neighbor: usize },
    #[error("subsystem {id} references unknown neighbor {neighbor}")]
    UnknownNeighbor { id: usize, neighbor: usize },
    #[error("duplicate subsystem id {0}")]
    DuplicateId(usize),
    #[error("no {what} supplied for subsystem {id}")]
    MissingEntry { id: usize, what: &'static str },
    #[error("output map of subsystem {id} is {value} at the origin, expected 0")]
    OutputNotZero { id: usize, value: f64 },
    #[error("affine realization of subsystem {id} deviates from its dynamics by {error}")]
    AffineMismatch { id: usize, error: f64 },
    #[error("invalid bus {id}: {reason}")]
    InvalidBus { id: usize, reason: String },
    #[error("invalid line {from}-{to}: {reason}")]
    InvalidLine { from: usize, to: usize, reason: String },
    #[error("bus graph is disconnected; bus {0} is unreachable")]
    Disconnected(usize),
    #[error("step time {0} outside (0, 0.1]")]
    InvalidStep(f64),
    #[error("network needs at least one generator bus")]
    NoGenerators,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// `x⁺ = A x + B_u u + B_y y_N + B_d d + c`, `y = C x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AffineRealization<T: Scalar> {
    pub a: Matrix<T>,
    pub b_u: Matrix<T>,
    pub b_y: Matrix<T>,
    pub b_d: Matrix<T>,
    pub c: Vec<T>,
    pub output: Matrix<T>,
}

impl<T: Scalar> AffineRealization<T> {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn check(&self) -> Result<(), NetworkError> {
        let n = self.a.nrows();
        let mats = [
            ("A", &self.a, self.a.ncols()),
            ("B_u", &self.b_u, self.b_u.ncols()),
            ("B_y", &self.b_y, self.b_y.ncols()),
            ("B_d", &self.b_d, self.b_d.ncols()),
        ];
        for (name, m, _) in mats {
            if m.nrows() != n {
                return Err(NetworkError::DimensionMismatch {
                    context: format!("rows of {name}"),
                    expected: n,
                    found: m.nrows(),
                });
            }
            if !m.is_finite() {
                return Err(NetworkError::NonFinite(name.into()));
            }
        }
        if self.a.ncols() != n {
            return Err(NetworkError::DimensionMismatch {
                context: "columns of A".into(),
                expected: n,
                found: self.a.ncols(),
            });
        }
        if self.c.len() != n {
            return Err(NetworkError::DimensionMismatch {
                context: "affine offset".into(),
                expected: n,
                found: self.c.len(),
            });
        }
        if self.output.ncols() != n {
            return Err(NetworkError::DimensionMismatch {
                context: "columns of C".into(),
                expected: n,
                found: self.output.ncols(),
            });
        }
        if !all_finite(&self.c) || !self.output.is_finite() {
            return Err(NetworkError::NonFinite("affine offset or output".into()));
        }
        Ok(())
    }

    pub fn step(&self, x: &[T], y_n: &[T], u: &[T], d: &[T]) -> Vec<T> {
        let mut out = self.a.mul_vec(x);
        for part in [self.b_u.mul_vec(u), self.b_y.mul_vec(y_n), self.b_d.mul_vec(d)] {
            for (o, p) in out.iter_mut().zip(part) {
                *o = *o + p;
            }
        }
        for (o, &c) in out.iter_mut().zip(&self.c) {
            *o = *o + c;
        }
        out
    }
}

type DynamicsFn<T> = Arc<dyn Fn(&[T], &[T], &[T], &[T]) -> Vec<T> + Send + Sync>;
type OutputFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// Dimensions of a subsystem's signals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub state: usize,
    pub input: usize,
    pub disturbance: usize,
    pub output: usize,
}

#[derive(Clone)]
pub struct Subsystem<T: Scalar> {
    id: usize,
    dims: Dims,
    neighbors: Vec<usize>,
    coupling_dim: usize,
    dynamics: DynamicsFn<T>,
    output: OutputFn<T>,
    affine: Option<AffineRealization<T>>,
}

impl<T: Scalar> fmt::Debug for Subsystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subsystem")
            .field("id", &self.id)
            .field("dims", &self.dims)
            .field("neighbors", &self.neighbors)
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

const AGREEMENT_SAMPLES: usize = 16;

impl<T: Scalar> Subsystem<T> {
    /// General subsystem. `coupling_dim` is the length of the stacked
    /// neighbor output vector.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        dims: Dims,
        neighbors: Vec<usize>,
        coupling_dim: usize,
        dynamics: impl Fn(&[T], &[T], &[T], &[T]) -> Vec<T> + Send + Sync + 'static,
        output: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
        affine: Option<AffineRealization<T>>,
    ) -> Result<Self, NetworkError> {
        let sub = Self {
            id,
            dims,
            neighbors,
            coupling_dim,
            dynamics: Arc::new(dynamics),
            output: Arc::new(output),
            affine,
        };
        sub.validate()?;
        Ok(sub)
    }

    /// Subsystem whose dynamics and output are given by an affine realization.
    pub fn from_affine(
        id: usize,
        neighbors: Vec<usize>,
        realization: AffineRealization<T>,
    ) -> Result<Self, NetworkError> {
        realization.check()?;
        let dims = Dims {
            state: realization.a.nrows(),
            input: realization.b_u.ncols(),
            disturbance: realization.b_d.ncols(),
            output: realization.output.nrows(),
        };
        let coupling_dim = realization.b_y.ncols();
        let dyn_r = realization.clone();
        let out_r = realization.output.clone();
        Self::new(
            id,
            dims,
            neighbors,
            coupling_dim,
            move |x, y, u, d| dyn_r.step(x, y, u, d),
            move |x| out_r.mul_vec(x),
            Some(realization),
        )
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let id = self.id;
        if self.neighbors.contains(&id) {
            return Err(NetworkError::SelfLoop { id });
        }
        for (k, &j) in self.neighbors.iter().enumerate() {
            if self.neighbors[..k].contains(&j) {
                return Err(NetworkError::DuplicateNeighbor { id, neighbor: j });
            }
        }
        let h0 = (self.output)(&vec![T::zero(); self.dims.state]);
        if h0.len() != self.dims.output {
            return Err(NetworkError::DimensionMismatch {
                context: format!("output of subsystem {id}"),
                expected: self.dims.output,
                found: h0.len(),
            });
        }
        let h0max = max_abs(&h0);
        if !(h0max <= T::of(T::FEAS_TOL)) {
            return Err(NetworkError::OutputNotZero {
                id,
                value: h0max.as_f64(),
            });
        }
        if let Some(aff) = &self.affine {
            aff.check()?;
            let expect = [
                ("affine state", aff.a.nrows(), self.dims.state),
                ("affine input", aff.b_u.ncols(), self.dims.input),
                ("affine disturbance", aff.b_d.ncols(), self.dims.disturbance),
                ("affine coupling", aff.b_y.ncols(), self.coupling_dim),
                ("affine output", aff.output.nrows(), self.dims.output),
            ];
            for (context, found, expected) in expect {
                if found != expected {
                    return Err(NetworkError::DimensionMismatch {
                        context: context.into(),
                        expected,
                        found,
                    });
                }
            }
            let err = self.affine_deviation(aff, AGREEMENT_SAMPLES, 0x5eed ^ id as u64);
            let tol = T::FEAS_TOL;
            if !(err <= tol) {
                return Err(NetworkError::AffineMismatch { id, error: err });
            }
        }
        Ok(())
    }

    /// Largest relative discrepancy between the affine realization and the
    /// dynamics map over random unit-scale samples.
    pub fn affine_deviation(&self, aff: &AffineRealization<T>, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect() };
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x = draw(self.dims.state);
            let y = draw(self.coupling_dim);
            let u = draw(self.dims.input);
            let d = draw(self.dims.disturbance);
            let f = (self.dynamics)(&x, &y, &u, &d);
            let g = aff.step(&x, &y, &u, &d);
            if f.len() != g.len() {
                return f64::INFINITY;
            }
            let hx = (self.output)(&x);
            let cx = aff.output.mul_vec(&x);
            for (a, b) in f.iter().zip(&g).chain(hx.iter().zip(&cx)) {
                let scale = 1.0 + a.as_f64().abs().max(b.as_f64().abs());
                worst = worst.max((*a - *b).as_f64().abs() / scale);
            }
        }
        worst
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn coupling_dim(&self) -> usize {
        self.coupling_dim
    }

    pub fn affine(&self) -> Option<&AffineRealization<T>> {
        self.affine.as_ref()
    }

    pub fn output(&self, x: &[T]) -> Result<Vec<T>, NetworkError> {
        self.check_len("state", x, self.dims.state)?;
        Ok((self.output)(x))
    }

    fn check_len(&self, what: &str, v: &[T], n: usize) -> Result<(), NetworkError> {
        if v.len() != n {
            return Err(NetworkError::DimensionMismatch {
                context: format!("{what} of subsystem {}", self.id),
                expected: n,
                found: v.len(),
            });
        }
        if !all_finite(v) {
            return Err(NetworkError::NonFinite(format!("{what} of subsystem {}", self.id)));
        }
        Ok(())
    }

    /// One step of the local dynamics.
    pub fn step(&self, x: &[T], y_n: &[T], u: &[T], d: &[T]) -> Result<Vec<T>, NetworkError> {
        self.check_len("state", x, self.dims.state)?;
        self.check_len("neighbor outputs", y_n, self.coupling_dim)?;
        self.check_len("input", u, self.dims.input)?;
        self.check_len("disturbance", d, self.dims.disturbance)?;
        let next = (self.dynamics)(x, y_n, u, d);
        self.check_len("successor", &next, self.dims.state)?;
        Ok(next)
    }
}

/// Per-subsystem vectors keyed by subsystem id.
pub type Signals<T> = BTreeMap<usize, Vec<T>>;

#[derive(Clone, Debug)]
pub struct NetworkSystem<T: Scalar> {
    subsystems: Vec<Subsystem<T>>,
    index: BTreeMap<usize, usize>,
    step_time: T,
}

impl<T: Scalar> NetworkSystem<T> {
    pub fn new(subsystems: Vec<Subsystem<T>>, step_time: T) -> Result<Self, NetworkError> {
        if !(step_time > T::zero() && step_time.is_finite()) {
            return Err(NetworkError::InvalidStep(step_time.as_f64()));
        }
        let mut index = BTreeMap::new();
        for (k, s) in subsystems.iter().enumerate() {
            if index.insert(s.id, k).is_some() {
                return Err(NetworkError::DuplicateId(s.id));
            }
        }
        for s in &subsystems {
            let mut stacked = 0;
            for &j in &s.neighbors {
                let Some(&k) = index.get(&j) else {
                    return Err(NetworkError::UnknownNeighbor { id: s.id, neighbor: j });
                };
                stacked += subsystems[k].dims.output;
            }
            if stacked != s.coupling_dim {
                return Err(NetworkError::DimensionMismatch {
                    context: format!("stacked neighbor outputs of subsystem {}", s.id),
                    expected: s.coupling_dim,
                    found: stacked,
                });
            }
        }
        Ok(Self {
            subsystems,
            index,
            step_time,
        })
    }

    pub fn subsystems(&self) -> &[Subsystem<T>] {
        &self.subsystems
    }

    pub fn subsystem(&self, id: usize) -> Option<&Subsystem<T>> {
        self.index.get(&id).map(|&k| &self.subsystems[k])
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.index.keys().copied()
    }

    pub fn step_time(&self) -> T {
        self.step_time
    }

    pub fn total_state_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dims.state).sum()
    }

    /// Outputs of every subsystem at the given states.
    pub fn outputs(&self, states: &Signals<T>) -> Result<Signals<T>, NetworkError> {
        self.subsystems
            .iter()
            .map(|s| {
                let x = states
                    .get(&s.id)
                    .ok_or(NetworkError::MissingEntry { id: s.id, what: "state" })?;
                Ok((s.id, s.output(x)?))
            })
            .collect()
    }

    /// Stacks the neighbor outputs seen by subsystem `id`.
    pub fn neighbor_outputs(&self, id: usize, outputs: &Signals<T>) -> Result<Vec<T>, NetworkError> {
        let sub = self
            .subsystem(id)
            .ok_or(NetworkError::MissingEntry { id, what: "subsystem" })?;
        let mut y = Vec::with_capacity(sub.coupling_dim);
        for &j in &sub.neighbors {
            y.extend_from_slice(
                outputs
                    .get(&j)
                    .ok_or(NetworkError::MissingEntry { id: j, what: "output" })?,
            );
        }
        Ok(y)
    }

    /// Synchronous step: all outputs are taken from the current states before
    /// any subsystem advances. Returns the next states and the outputs that
    /// were used.
    pub fn step(
        &self,
        states: &Signals<T>,
        inputs: &Signals<T>,
        disturbances: &Signals<T>,
    ) -> Result<(Signals<T>, Signals<T>), NetworkError> {
        let outputs = self.outputs(states)?;
        let mut next = BTreeMap::new();
        for s in &self.subsystems {
            let y = self.neighbor_outputs(s.id, &outputs)?;
            let x_next = s.step(
                fetch(states, s.id, "state")?,
                &y,
                fetch(inputs, s.id, "input")?,
                fetch(disturbances, s.id, "disturbance")?,
            )?;
            next.insert(s.id, x_next);
        }
        Ok((next, outputs))
    }

    /// Zero vectors of the right shape for every subsystem.
    pub fn zeros(&self, pick: impl Fn(Dims) -> usize) -> Signals<T> {
        self.subsystems
            .iter()
            .map(|s| (s.id, vec![T::zero(); pick(s.dims)]))
            .collect()
    }
}

fn fetch<'a, T>(m: &'a Signals<T>, id: usize, what: &'static str) -> Result<&'a Vec<T>, NetworkError> {
    m.get(&id).ok_or(NetworkError::MissingEntry { id, what })
}

#[cfg(test)]
mod tests;
