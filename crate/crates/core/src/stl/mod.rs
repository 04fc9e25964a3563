//! Parameterized signal temporal logic over sampled traces.
//!
//! Formulas are built from the core grammar (tautology, predicate, negation,
//! conjunction, bounded or unbounded until). Derived operators such as
//! eventually, always and disjunction expand into that grammar, so there is a
//! single semantics to get right.
//!
//! Time intervals are given in seconds and mapped onto sample indices with
//! `ceil(a / Ts) ..= floor(b / Ts)`. Windows that run past the end of a trace
//! are truncated and the verdict is flagged as a prefix verdict.

mod eval;
mod parse;
mod template;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::geometry::HPolytope;
use crate::scalar::Scalar;

pub use eval::{evaluate, evaluate_all, first_violation, Evaluation, Verdict};
pub use parse::parse_formula;
pub use template::{check_monotone, Counterexample, MonotoneReport, Order, ParamSpec, ParamTemplate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("time index {t} out of range for trace of length {len}")]
    TimeOutOfRange { t: usize, len: usize },
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("trace pool is empty")]
    EmptyTracePool,
    #[error("parameter point has {found} coordinates, template declares {expected}")]
    ParamArity { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Ge,
    Le,
}

/// Left-hand side of a predicate.
#[derive(Clone, Debug, PartialEq)]
pub enum SignalExpr<T: Scalar> {
    /// `Σ c_k · s_k`
    Linear(Vec<(String, T)>),
    /// `|s|`
    Abs(String),
}

impl<T: Scalar> SignalExpr<T> {
    pub fn signal(name: impl Into<String>) -> Self {
        SignalExpr::Linear(vec![(name.into(), T::one())])
    }

    fn names(&self) -> Vec<&str> {
        match self {
            SignalExpr::Linear(terms) => terms.iter().map(|(n, _)| n.as_str()).collect(),
            SignalExpr::Abs(n) => vec![n.as_str()],
        }
    }
}

/// Closed time interval `[a, b]` in seconds; `b` may be `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self, StlError> {
        if !(a.is_finite() && a >= 0.0 && !b.is_nan() && a <= b) {
            return Err(StlError::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn unbounded() -> Self {
        Self { a: 0.0, b: f64::INFINITY }
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    /// Sample offsets covered by the interval; `None` upper means unbounded.
    pub fn to_steps(&self, step: f64) -> (usize, Option<usize>) {
        let lo = (self.a / step - 1e-9).ceil().max(0.0) as usize;
        let hi = if self.b.is_finite() {
            let h = (self.b / step + 1e-9).floor();
            Some(if h >= usize::MAX as f64 { usize::MAX } else { h as usize })
        } else {
            None
        };
        (lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula<T: Scalar> {
    True,
    Pred {
        expr: SignalExpr<T>,
        cmp: Cmp,
        threshold: T,
    },
    Not(Box<Formula<T>>),
    And(Box<Formula<T>>, Box<Formula<T>>),
    Until {
        interval: Interval,
        lhs: Box<Formula<T>>,
        rhs: Box<Formula<T>>,
    },
}

impl<T: Scalar> Formula<T> {
    pub fn pred(expr: SignalExpr<T>, cmp: Cmp, threshold: T) -> Self {
        Formula::Pred { expr, cmp, threshold }
    }

    /// `signal ≥ threshold`
    pub fn ge(signal: &str, threshold: T) -> Self {
        Self::pred(SignalExpr::signal(signal), Cmp::Ge, threshold)
    }

    /// `signal ≤ threshold`
    pub fn le(signal: &str, threshold: T) -> Self {
        Self::pred(SignalExpr::signal(signal), Cmp::Le, threshold)
    }

    /// `|signal| ≤ bound`
    pub fn abs_le(signal: &str, bound: T) -> Self {
        Self::pred(SignalExpr::Abs(signal.to_string()), Cmp::Le, bound)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula<T>) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula<T>, b: Formula<T>) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula<T>, b: Formula<T>) -> Self {
        Self::not(Self::and(Self::not(a), Self::not(b)))
    }

    pub fn until(lhs: Formula<T>, interval: Interval, rhs: Formula<T>) -> Self {
        Formula::Until {
            interval,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// `◇_I φ = ⊤ U_I φ`
    pub fn eventually(interval: Interval, f: Formula<T>) -> Self {
        Self::until(Formula::True, interval, f)
    }

    /// `□_I φ = ¬◇_I ¬φ`
    pub fn always(interval: Interval, f: Formula<T>) -> Self {
        Self::not(Self::eventually(interval, Self::not(f)))
    }

    /// Conjunction of all formulas; the tautology when empty.
    pub fn all(fs: impl IntoIterator<Item = Formula<T>>) -> Self {
        fs.into_iter()
            .reduce(Self::and)
            .unwrap_or(Formula::True)
    }

    /// `x ∈ {x : A x ≤ b}` as one predicate per facet, with the state
    /// coordinates named by `signals`.
    pub fn in_polytope(signals: &[String], poly: &HPolytope<T>) -> Self {
        Self::all(poly.a().rows_iter().zip(poly.b()).map(|(row, &b)| {
            let terms = signals
                .iter()
                .zip(row)
                .filter(|(_, &c)| c != T::zero())
                .map(|(s, &c)| (s.clone(), c))
                .collect();
            Self::pred(SignalExpr::Linear(terms), Cmp::Le, b)
        }))
    }

    /// Recognizes `□_I φ` and returns `(I, φ)`.
    pub fn as_always(&self) -> Option<(Interval, &Formula<T>)> {
        let Formula::Not(inner) = self else { return None };
        let Formula::Until { interval, lhs, rhs } = inner.as_ref() else {
            return None;
        };
        if **lhs != Formula::True {
            return None;
        }
        let Formula::Not(body) = rhs.as_ref() else { return None };
        Some((*interval, body))
    }

    /// Names of all signals referenced, sorted and deduplicated.
    pub fn signals(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_signals(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_signals(&self, out: &mut Vec<String>) {
        match self {
            Formula::True => {}
            Formula::Pred { expr, .. } => out.extend(expr.names().into_iter().map(String::from)),
            Formula::Not(f) => f.collect_signals(out),
            Formula::And(a, b) => {
                a.collect_signals(out);
                b.collect_signals(out);
            }
            Formula::Until { lhs, rhs, .. } => {
                lhs.collect_signals(out);
                rhs.collect_signals(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Pred { .. } => 0,
            Formula::Not(f) => 1 + f.depth(),
            Formula::And(a, b) => 1 + a.depth().max(b.depth()),
            Formula::Until { lhs, rhs, .. } => 1 + lhs.depth().max(rhs.depth()),
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x}")
    }
}

impl<T: Scalar> fmt::Display for SignalExpr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalExpr::Abs(s) => write!(f, "abs({s})"),
            SignalExpr::Linear(terms) if terms.is_empty() => write!(f, "0*_"),
            SignalExpr::Linear(terms) => {
                for (k, (name, c)) in terms.iter().enumerate() {
                    let neg = *c < T::zero();
                    match (k, neg) {
                        (0, false) => {}
                        (0, true) => write!(f, "-")?,
                        (_, false) => write!(f, " + ")?,
                        (_, true) => write!(f, " - ")?,
                    }
                    let mag = c.abs();
                    if mag == T::one() {
                        write!(f, "{name}")?;
                    } else {
                        write!(f, "{}*{name}", fmt_num(mag.as_f64()))?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", fmt_num(self.a), fmt_num(self.b))
    }
}

impl<T: Scalar> fmt::Display for Formula<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Pred { expr, cmp, threshold } => {
                let op = match cmp {
                    Cmp::Ge => ">=",
                    Cmp::Le => "<=",
                };
                write!(f, "{expr} {op} {}", fmt_num(threshold.as_f64()))
            }
            Formula::Not(inner) => write!(f, "!({inner})"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Until { interval, lhs, rhs } => write!(f, "({lhs} U{interval} {rhs})"),
        }
    }
}

impl<T: Scalar> std::str::FromStr for Formula<T> {
    type Err = StlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Multi-signal trajectory sampled every `step` seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace<T: Scalar> {
    step: f64,
    len: usize,
    signals: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn new(step: f64, signals: BTreeMap<String, Vec<T>>) -> Result<Self, StlError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(StlError::InvalidTrace(format!("step {step} must be positive")));
        }
        let len = signals.values().next().map_or(0, Vec::len);
        if len == 0 {
            return Err(StlError::InvalidTrace("trace needs at least one sample".into()));
        }
        if let Some((name, v)) = signals.iter().find(|(_, v)| v.len() != len) {
            return Err(StlError::InvalidTrace(format!(
                "signal `{name}` has {} samples, expected {len}",
                v.len()
            )));
        }
        Ok(Self { step, len, signals })
    }

    /// Convenience constructor from `(name, samples)` pairs.
    pub fn from_pairs<S: Into<String>>(
        step: f64,
        pairs: impl IntoIterator<Item = (S, Vec<T>)>,
    ) -> Result<Self, StlError> {
        Self::new(step, pairs.into_iter().map(|(n, v)| (n.into(), v)).collect())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn signal(&self, name: &str) -> Result<&[T], StlError> {
        self.signals
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| StlError::UnknownSignal(name.to_string()))
    }

    pub fn signal_names(&self) -> impl Iterator<Item = &str> {
        self.signals.keys().map(String::as_str)
    }
}
