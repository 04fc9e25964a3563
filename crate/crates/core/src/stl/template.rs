use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::{evaluate, Formula, StlError, Trace};

/// Direction in which a parameter is declared to weaken the formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    /// Larger values give a weaker (more permissive) formula.
    Increasing,
    /// Smaller values give a weaker formula.
    Decreasing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub order: Order,
}

type Builder<T> = Arc<dyn Fn(&[f64]) -> Formula<T> + Send + Sync>;

/// A formula family `φ(p)` over a box of parameters.
#[derive(Clone)]
pub struct ParamTemplate<T: Scalar> {
    params: Vec<ParamSpec>,
    build: Builder<T>,
}

impl<T: Scalar> std::fmt::Debug for ParamTemplate<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamTemplate")
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> ParamTemplate<T> {
    pub fn new(
        params: Vec<ParamSpec>,
        build: impl Fn(&[f64]) -> Formula<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            params,
            build: Arc::new(build),
        }
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn instantiate(&self, p: &[f64]) -> Result<Formula<T>, StlError> {
        if p.len() != self.params.len() {
            return Err(StlError::ParamArity {
                expected: self.params.len(),
                found: p.len(),
            });
        }
        Ok((self.build)(p))
    }

    /// `p1 ≤_P p2` under the declared orders.
    pub fn precedes(&self, p1: &[f64], p2: &[f64]) -> bool {
        self.params.iter().zip(p1.iter().zip(p2)).all(|(s, (a, b))| match s.order {
            Order::Increasing => a <= b,
            Order::Decreasing => a >= b,
        })
    }
}

/// A trace on which `φ(p1)` holds but `φ(p2)` fails although `p1 ≤_P p2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub trace_index: usize,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneReport {
    pub pairs_checked: usize,
    pub counterexample: Option<Counterexample>,
}

/// Falsification search for the declared monotonicity of a template. The
/// absence of a counterexample is evidence, not proof.
pub fn check_monotone<T: Scalar>(
    tmpl: &ParamTemplate<T>,
    traces: &[Trace<T>],
    samples: usize,
    seed: u64,
) -> Result<MonotoneReport, StlError> {
    if traces.is_empty() {
        return Err(StlError::EmptyTracePool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..samples {
        let mut p1 = Vec::with_capacity(tmpl.params.len());
        let mut p2 = Vec::with_capacity(tmpl.params.len());
        for spec in &tmpl.params {
            let draw = |rng: &mut ChaCha8Rng| {
                if spec.hi > spec.lo {
                    rng.gen_range(spec.lo..=spec.hi)
                } else {
                    spec.lo
                }
            };
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let (small, large) = (a.min(b), a.max(b));
            match spec.order {
                Order::Increasing => {
                    p1.push(small);
                    p2.push(large);
                }
                Order::Decreasing => {
                    p1.push(large);
                    p2.push(small);
                }
            }
        }
        let f1 = tmpl.instantiate(&p1)?;
        let f2 = tmpl.instantiate(&p2)?;
        for (i, tr) in traces.iter().enumerate() {
            if evaluate(&f1, tr, 0)?.holds && !evaluate(&f2, tr, 0)?.holds {
                return Ok(MonotoneReport {
                    pairs_checked: k + 1,
                    counterexample: Some(Counterexample {
                        trace_index: i,
                        p1,
                        p2,
                    }),
                });
            }
        }
    }
    Ok(MonotoneReport {
        pairs_checked: samples,
        counterexample: None,
    })
}
