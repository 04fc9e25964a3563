use crate::scalar::Scalar;

use super::{Cmp, Formula, SignalExpr, StlError, Trace};

/// Boolean verdict at one time index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    /// Some temporal window needed for this verdict ran past the end of the
    /// trace, so the verdict only speaks for the recorded prefix.
    pub prefix_only: bool,
}

/// Verdicts at every time index of a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub holds: Vec<bool>,
    pub truncated: Vec<bool>,
}

impl Evaluation {
    pub fn at(&self, t: usize) -> Verdict {
        Verdict {
            holds: self.holds[t],
            prefix_only: self.truncated[t],
        }
    }
}

/// Evaluates `f` at time index `t`.
pub fn evaluate<T: Scalar>(f: &Formula<T>, tr: &Trace<T>, t: usize) -> Result<Verdict, StlError> {
    if t >= tr.len() {
        return Err(StlError::TimeOutOfRange { t, len: tr.len() });
    }
    Ok(evaluate_all(f, tr)?.at(t))
}

/// Evaluates `f` at every time index, bottom-up, in time linear in the trace
/// length per formula node.
pub fn evaluate_all<T: Scalar>(f: &Formula<T>, tr: &Trace<T>) -> Result<Evaluation, StlError> {
    let n = tr.len();
    match f {
        Formula::True => Ok(Evaluation {
            holds: vec![true; n],
            truncated: vec![false; n],
        }),
        Formula::Pred { expr, cmp, threshold } => {
            let values = expr_values(expr, tr)?;
            let holds = values
                .into_iter()
                .map(|v| match cmp {
                    Cmp::Ge => v >= *threshold,
                    Cmp::Le => v <= *threshold,
                })
                .collect();
            Ok(Evaluation {
                holds,
                truncated: vec![false; n],
            })
        }
        Formula::Not(inner) => {
            let mut e = evaluate_all(inner, tr)?;
            e.holds.iter_mut().for_each(|h| *h = !*h);
            Ok(e)
        }
        Formula::And(a, b) => {
            let ea = evaluate_all(a, tr)?;
            let eb = evaluate_all(b, tr)?;
            Ok(Evaluation {
                holds: ea.holds.iter().zip(&eb.holds).map(|(x, y)| *x && *y).collect(),
                truncated: ea
                    .truncated
                    .iter()
                    .zip(&eb.truncated)
                    .map(|(x, y)| *x || *y)
                    .collect(),
            })
        }
        Formula::Until { interval, lhs, rhs } => {
            let e1 = evaluate_all(lhs, tr)?;
            let e2 = evaluate_all(rhs, tr)?;
            let (lo, hi) = interval.to_steps(tr.step());
            Ok(until(&e1, &e2, lo, hi))
        }
    }
}

fn expr_values<T: Scalar>(expr: &SignalExpr<T>, tr: &Trace<T>) -> Result<Vec<T>, StlError> {
    match expr {
        SignalExpr::Abs(name) => Ok(tr.signal(name)?.iter().map(|v| v.abs()).collect()),
        SignalExpr::Linear(terms) => {
            let mut out = vec![T::zero(); tr.len()];
            for (name, c) in terms {
                for (o, &v) in out.iter_mut().zip(tr.signal(name)?) {
                    *o = *o + *c * v;
                }
            }
            Ok(out)
        }
    }
}

fn prefix_counts(flags: &[bool]) -> Vec<usize> {
    let mut out = Vec::with_capacity(flags.len() + 1);
    out.push(0);
    for &f in flags {
        out.push(out.last().unwrap() + usize::from(f));
    }
    out
}

fn until(e1: &Evaluation, e2: &Evaluation, lo: usize, hi: Option<usize>) -> Evaluation {
    let n = e1.holds.len();
    let last = n - 1;
    // run_end[t]: one past the last index r with lhs holding on all of [t, r].
    let mut run_end = vec![0usize; n + 1];
    run_end[n] = n;
    for t in (0..n).rev() {
        run_end[t] = if e1.holds[t] { run_end[t + 1] } else { t };
    }
    let rhs_count = prefix_counts(&e2.holds);
    let trunc_count = prefix_counts(
        &e1.truncated
            .iter()
            .zip(&e2.truncated)
            .map(|(a, b)| *a || *b)
            .collect::<Vec<_>>(),
    );

    let mut holds = vec![false; n];
    let mut truncated = vec![false; n];
    for t in 0..n {
        let nominal_end = hi.map(|h| t.saturating_add(h));
        let window_end = nominal_end.map_or(last, |e| e.min(last));
        truncated[t] = nominal_end.is_none_or(|e| e > last)
            || trunc_count[window_end + 1] > trunc_count[t];
        let start = t.saturating_add(lo);
        if start > window_end || run_end[t] <= start {
            continue;
        }
        let end = window_end.min(run_end[t] - 1);
        holds[t] = rhs_count[end + 1] > rhs_count[start];
    }
    Evaluation { holds, truncated }
}

/// For `□_I φ`, the first absolute time index at which `φ` fails inside the
/// window anchored at 0, if any. `None` for formulas of any other shape.
pub fn first_violation<T: Scalar>(f: &Formula<T>, tr: &Trace<T>) -> Result<Option<usize>, StlError> {
    let Some((interval, body)) = f.as_always() else {
        return Ok(None);
    };
    let e = evaluate_all(body, tr)?;
    let (lo, hi) = interval.to_steps(tr.step());
    let end = hi.map_or(tr.len() - 1, |h| h.min(tr.len() - 1));
    Ok((lo..=end).find(|&t| t < tr.len() && !e.holds[t]))
}
