use serde::{Deserialize, Serialize};

use super::{check_validity, ContractError, ContractParams, GainFamily, Validity, ValidityCertificate};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct RefineOptions<T: Scalar> {
    pub tol: T,
    pub max_iters: usize,
    pub validity_tol: T,
}

impl<T: Scalar> Default for RefineOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-8),
            max_iters: 10_000,
            validity_tol: T::of(T::FEAS_TOL),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RefinementLog<T: Scalar> {
    pub iterates: Vec<Vec<T>>,
    pub termination: Termination,
    pub certificate: ValidityCertificate<T>,
}

impl<T: Scalar> RefinementLog<T> {
    pub fn last(&self) -> ContractParams<T> {
        ContractParams {
            y_max: self.iterates.last().cloned().unwrap_or_default(),
        }
    }

    /// Number of applications of the gain map.
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// Value iteration `y[k+1] = Λ(y[k])` from a valid starting point.
pub fn refine<T: Scalar>(
    params: &ContractParams<T>,
    gains: &GainFamily<T>,
    opts: &RefineOptions<T>,
) -> Result<RefinementLog<T>, ContractError> {
    if let Validity::Violated { violations } = check_validity(params, gains, opts.validity_tol)? {
        return Err(ContractError::InvalidInitial { violations });
    }
    let mut iterates = vec![params.y_max.clone()];
    let mut current = params.clone();
    let mut termination = Termination::MaxIters;
    for iteration in 1..=opts.max_iters {
        let next = gains.apply(&current)?;
        for (i, (&prev, &v)) in current.y_max.iter().zip(&next).enumerate() {
            if !v.is_finite() {
                return Err(ContractError::GainHole { iteration, subsystem: i });
            }
            if v > prev + opts.validity_tol || v < -opts.validity_tol {
                return Err(ContractError::NonMonotone {
                    iteration,
                    subsystem: i,
                    previous: prev.as_f64(),
                    next: v.as_f64(),
                });
            }
        }
        let next: Vec<T> = next.into_iter().map(|v| v.max(T::zero())).collect();
        let step = current
            .y_max
            .iter()
            .zip(&next)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        current = ContractParams { y_max: next };
        iterates.push(current.y_max.clone());
        if step < opts.tol {
            termination = Termination::Converged;
            break;
        }
    }
    match check_validity(&current, gains, opts.validity_tol)? {
        Validity::Valid(certificate) => Ok(RefinementLog {
            iterates,
            termination,
            certificate,
        }),
        Validity::Violated { violations } => {
            let v = &violations[0];
            Err(ContractError::NonMonotone {
                iteration: iterates.len(),
                subsystem: v.subsystem,
                previous: current.y_max[v.subsystem].as_f64(),
                next: v.margin.map_or(f64::INFINITY, |m| m + current.y_max[v.subsystem].as_f64()),
            })
        }
    }
}
