//! Two interconnected systems with linear gains `λ_1(y_2) = μ_1 d_1 + ν_1 y_2`
//! and `λ_2(y_1) = μ_2 d_2 + ν_2 y_1`, solved through the contract search
//! and compared with the closed form.

use serde::{Deserialize, Serialize};

use super::{HarnessError, Stage, SCHEMA_VERSION};
use crate::contract::{
    search_contract, small_gain_closed_form, ContractError, GainEntry, GainFamily, SearchOptions, SmallGain,
};
use crate::epigraph::EpigraphApprox;
use crate::geometry::HPolytope;

/// `normal · (y_1, y_2) ≤ offset`: the epigraph boundary of one gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub subsystem: usize,
    pub normal: [f64; 2],
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallGainDemo {
    pub schema_version: u32,
    pub mu: [f64; 2],
    pub nu: [f64; 2],
    pub d: [f64; 2],
    /// Side of the square `[0, domain]²` the epigraphs are cropped to.
    pub domain: f64,
    pub halfplanes: Vec<HalfPlane>,
    /// Minimal contract `(y_1, y_2)` found by the search.
    pub minimal_point: Option<[f64; 2]>,
    /// Subsystems whose epigraphs do not intersect.
    pub infeasible: Option<Vec<usize>>,
    pub closed_form: SmallGain<f64>,
    pub nodes: usize,
}

impl SmallGainDemo {
    /// Largest componentwise gap between the search and the closed form,
    /// when both are bounded.
    pub fn discrepancy(&self) -> Option<f64> {
        match (self.minimal_point, self.closed_form) {
            (Some([a, b]), SmallGain::Bounded { y1, y2 }) => Some((a - y1).abs().max((b - y2).abs())),
            _ => None,
        }
    }
}

/// Epigraph of `y_own ≥ c + ν y_other` in `(y_other, y_own)` coordinates,
/// cropped to `y_other ∈ [0, domain]`.
fn epigraph(c: f64, nu: f64, domain: f64) -> Result<EpigraphApprox<f64>, HarnessError> {
    let m = c + nu * domain + domain;
    let poly = HPolytope::from_rows(
        vec![vec![nu, -1.0], vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![-c, 0.0, domain, m],
    )
    .map_err(|e| HarnessError::stage(Stage::Epigraph, e))?;
    Ok(EpigraphApprox::convex(poly, m))
}

pub fn smallgain_demo(mu: [f64; 2], nu: [f64; 2], d: [f64; 2]) -> Result<SmallGainDemo, HarnessError> {
    for v in mu.iter().chain(&nu).chain(&d) {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(HarnessError::Config("gains and disturbances must be finite and nonnegative".into()));
        }
    }
    let c = [mu[0] * d[0], mu[1] * d[1]];
    let domain = 1e4 * (1.0 + c[0] + c[1]) * (1.0 + nu[0] + nu[1]);
    let family = GainFamily::new(vec![
        GainEntry::approx(vec![1], epigraph(c[0], nu[0], domain)?),
        GainEntry::approx(vec![0], epigraph(c[1], nu[1], domain)?),
    ])
    .map_err(|e| HarnessError::stage(Stage::Search, e))?;
    let closed_form = small_gain_closed_form(mu[0], mu[1], nu[0], nu[1], d[0], d[1])
        .map_err(|e| HarnessError::stage(Stage::Search, e))?;
    let (minimal_point, infeasible, nodes) = match search_contract(&family, &SearchOptions::default()) {
        Ok(r) => (Some([r.params.y_max[0], r.params.y_max[1]]), None, r.nodes),
        Err(ContractError::Infeasible { subsystems }) => (None, Some(subsystems), 0),
        Err(e) => return Err(HarnessError::stage(Stage::Search, e)),
    };
    Ok(SmallGainDemo {
        schema_version: SCHEMA_VERSION,
        mu,
        nu,
        d,
        domain,
        halfplanes: vec![
            HalfPlane {
                subsystem: 0,
                normal: [-1.0, nu[0]],
                offset: -c[0],
            },
            HalfPlane {
                subsystem: 1,
                normal: [nu[1], -1.0],
                offset: -c[1],
            },
        ],
        minimal_point,
        infeasible,
        closed_form,
        nodes,
    })
}
