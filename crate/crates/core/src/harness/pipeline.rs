//! Synthesis stages and their artifacts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Approximation, Expectation, PipelineConfig, Plant};
use super::simulate::{simulate, standard_formulas, verify_trace, RunTrace, TraceVerdict, VerdictStatus};
use super::{HarnessError, Stage, SCHEMA_VERSION};
use crate::contract::{
    check_validity, refine, search_contract, ContractError, ContractParams, GainEntry, GainFamily, RefineOptions,
    SearchOptions, Termination, Validity,
};
use crate::epigraph::{
    hull_inner_approx, monotone_cells_approx, sample_gain, EpigraphApprox, GainSampleSet, GridSpec,
};
use crate::geometry::HPolytope;
use crate::invariant::{
    compute_rci, gain_evaluate, output_bound, verify_rci, RciOptions, RciResult, RciStatus, VerificationReport,
};

/// Sampled gain of one bus. Buses without neighbors have a constant gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusGain {
    pub id: usize,
    pub neighbors: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<GainSampleSet<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainArtifact {
    pub schema_version: u32,
    pub problem_hash: String,
    pub buses: Vec<BusGain>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusEpigraph {
    pub id: usize,
    pub neighbors: Vec<usize>,
    pub approx: EpigraphApprox<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpigraphArtifact {
    pub schema_version: u32,
    pub problem_hash: String,
    pub approximation: Approximation,
    pub buses: Vec<BusEpigraph>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractArtifact {
    pub schema_version: u32,
    pub problem_hash: String,
    pub ids: Vec<usize>,
    pub y_max: Vec<f64>,
    pub objective: f64,
    pub pieces: Vec<usize>,
    pub nodes: usize,
    pub validity: Validity<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementArtifact {
    pub schema_version: u32,
    pub problem_hash: String,
    pub ids: Vec<usize>,
    pub initial: Vec<f64>,
    pub y_max: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub iterates: Vec<Vec<f64>>,
    pub validity: Validity<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRci {
    pub id: usize,
    pub y_max: f64,
    pub neighbor_bound: Vec<f64>,
    pub output_bound: f64,
    pub rci: RciResult<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RciArtifact {
    pub schema_version: u32,
    pub problem_hash: String,
    pub y_max: Vec<f64>,
    pub buses: Vec<BusRci>,
}

impl RciArtifact {
    pub fn bus(&self, id: usize) -> Option<&BusRci> {
        self.buses.iter().find(|b| b.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusVerification {
    pub id: usize,
    pub report: VerificationReport<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationArtifact {
    pub schema_version: u32,
    pub problem_hash: String,
    pub density: usize,
    pub all_passed: bool,
    pub buses: Vec<BusVerification>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub id: usize,
    pub output_bound: f64,
    pub y_max: f64,
    pub holds: bool,
}

/// Outcome of one scenario. The full trace is kept in memory only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub name: String,
    pub supervised: bool,
    pub expectation: Expectation,
    pub met: bool,
    pub steps: usize,
    pub interventions: usize,
    pub min_barrier: Option<f64>,
    pub max_generator_frequency: f64,
    pub halted: Option<super::simulate::Halt>,
    pub verdicts: Vec<TraceVerdict>,
    #[serde(skip)]
    pub trace: Option<RunTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub name: String,
    pub problem_hash: String,
    pub gains: GainArtifact,
    pub epigraphs: EpigraphArtifact,
    pub contract: ContractArtifact,
    pub refinement: RefinementArtifact,
    pub rcis: RciArtifact,
    pub verification: VerificationArtifact,
    pub consistency: Vec<ConsistencyCheck>,
    pub scenarios: Vec<ScenarioRun>,
}

impl PipelineReport {
    pub fn all_expectations_met(&self) -> bool {
        self.scenarios.iter().all(|s| s.met)
    }
}

fn check_hash(stage: Stage, cfg: &PipelineConfig, found: &str) -> Result<(), HarnessError> {
    if found != cfg.problem_hash() {
        return Err(HarnessError::stage(
            stage,
            "input artifact was produced from a different configuration",
        ));
    }
    Ok(())
}

fn grid_for(cfg: &PipelineConfig, dim: usize) -> Result<GridSpec<f64>, HarnessError> {
    GridSpec::uniform(dim, 0.0, cfg.synthesis.grid.upper, cfg.synthesis.grid.counts)
        .map_err(|e| HarnessError::Config(e.to_string()))
}

/// Samples every bus gain on the configured grid.
pub fn sample_gains(cfg: &PipelineConfig, plant: &Plant) -> Result<GainArtifact, HarnessError> {
    let min_scale = cfg.synthesis.min_scale;
    let buses = (0..plant.len())
        .into_par_iter()
        .map(|i| {
            let prob = &plant.problems[i];
            let tmpl = &plant.templates[i];
            let id = plant.ids[i];
            let neighbors = prob.subsystem().neighbors().to_vec();
            if neighbors.is_empty() {
                let v = gain_evaluate(prob, tmpl, &[], min_scale).map_err(|e| HarnessError::stage(Stage::Sample, e))?;
                return Ok(BusGain {
                    id,
                    neighbors,
                    samples: None,
                    constant: Some(v),
                });
            }
            let grid = grid_for(cfg, neighbors.len())?;
            let samples = sample_gain(|y: &[f64]| gain_evaluate(prob, tmpl, y, min_scale), &grid, cfg.synthesis.m_crop)
                .map_err(|e| HarnessError::stage(Stage::Sample, format!("bus {id}: {e}")))?;
            Ok(BusGain {
                id,
                neighbors,
                samples: Some(samples),
                constant: None,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(GainArtifact {
        schema_version: SCHEMA_VERSION,
        problem_hash: cfg.problem_hash(),
        buses,
    })
}

/// One-dimensional epigraph `λ ≤ y ≤ M` of a constant gain.
fn constant_epigraph(id: usize, value: f64, m_crop: Option<f64>) -> Result<EpigraphApprox<f64>, HarnessError> {
    if !value.is_finite() {
        return Err(HarnessError::Infeasible { buses: vec![id] });
    }
    let m = m_crop.unwrap_or(if value > 0.0 { 2.0 * value } else { value + 1.0 });
    if m <= value {
        return Err(HarnessError::stage(Stage::Epigraph, format!("bus {id}: crop {m} is below the gain {value}")));
    }
    let poly = HPolytope::from_rows(vec![vec![-1.0], vec![1.0]], vec![-value, m])
        .map_err(|e| HarnessError::stage(Stage::Epigraph, e))?;
    Ok(EpigraphApprox::convex(poly, m))
}

pub fn build_epigraphs(cfg: &PipelineConfig, gains: &GainArtifact) -> Result<EpigraphArtifact, HarnessError> {
    check_hash(Stage::Epigraph, cfg, &gains.problem_hash)?;
    let approximation = cfg.synthesis.approximation;
    let buses = gains
        .buses
        .iter()
        .map(|g| {
            let approx = match (&g.samples, g.constant) {
                (Some(s), _) => match approximation {
                    Approximation::MonotoneCells => monotone_cells_approx(s),
                    Approximation::Hull => hull_inner_approx(s),
                }
                .map_err(|e| HarnessError::stage_with(Stage::Epigraph, format!("bus {}: {e}", g.id), g))?,
                (None, Some(v)) => constant_epigraph(g.id, v, cfg.synthesis.m_crop)?,
                (None, None) => {
                    return Err(HarnessError::stage(Stage::Epigraph, format!("bus {} has no gain data", g.id)))
                }
            };
            Ok(BusEpigraph {
                id: g.id,
                neighbors: g.neighbors.clone(),
                approx,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(EpigraphArtifact {
        schema_version: SCHEMA_VERSION,
        problem_hash: gains.problem_hash.clone(),
        approximation,
        buses,
    })
}

fn positions(plant: &Plant, ids: &[usize]) -> Result<Vec<usize>, HarnessError> {
    ids.iter()
        .map(|id| {
            plant
                .index
                .get(id)
                .copied()
                .ok_or_else(|| HarnessError::Config(format!("unknown bus {id}")))
        })
        .collect()
}

fn approx_family(plant: &Plant, epi: &EpigraphArtifact) -> Result<GainFamily<f64>, HarnessError> {
    if epi.buses.iter().map(|b| b.id).ne(plant.ids.iter().copied()) {
        return Err(HarnessError::stage(Stage::Search, "epigraph buses do not match the network"));
    }
    let entries = epi
        .buses
        .iter()
        .map(|b| Ok(GainEntry::approx(positions(plant, &b.neighbors)?, b.approx.clone())))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    GainFamily::new(entries).map_err(|e| HarnessError::stage(Stage::Search, e))
}

/// Gains evaluated through invariant-set computations; `+∞` where undefined.
fn callable_family(cfg: &PipelineConfig, plant: &Plant) -> Result<GainFamily<f64>, HarnessError> {
    let entries = (0..plant.len())
        .map(|i| {
            let prob = plant.problems[i].clone();
            let tmpl = plant.templates[i].clone();
            let min_scale = cfg.synthesis.min_scale;
            let nbrs = plant.neighbor_indices(i);
            GainEntry::callable(nbrs, move |y: &[f64]| {
                gain_evaluate(&prob, &tmpl, y, min_scale).unwrap_or(f64::INFINITY)
            })
        })
        .collect();
    GainFamily::new(entries).map_err(|e| HarnessError::stage(Stage::Refine, e))
}

pub fn solve_contract(cfg: &PipelineConfig, plant: &Plant, epi: &EpigraphArtifact) -> Result<ContractArtifact, HarnessError> {
    check_hash(Stage::Search, cfg, &epi.problem_hash)?;
    let family = approx_family(plant, epi)?;
    let opts = SearchOptions {
        weights: cfg.synthesis.weights.clone(),
        ..SearchOptions::default()
    };
    let res = search_contract(&family, &opts).map_err(|e| match e {
        ContractError::Infeasible { subsystems } => HarnessError::Infeasible {
            buses: subsystems.iter().map(|&i| plant.ids[i]).collect(),
        },
        other => HarnessError::stage(Stage::Search, other),
    })?;
    let validity = check_validity(&res.params, &family, <f64 as crate::Scalar>::FEAS_TOL)
        .map_err(|e| HarnessError::stage(Stage::Search, e))?;
    Ok(ContractArtifact {
        schema_version: SCHEMA_VERSION,
        problem_hash: epi.problem_hash.clone(),
        ids: plant.ids.clone(),
        y_max: res.params.y_max,
        objective: res.objective,
        pieces: res.pieces,
        nodes: res.nodes,
        validity,
    })
}

/// Runs the value iteration on the exact gains from the searched contract.
pub fn refine_contract(
    cfg: &PipelineConfig,
    plant: &Plant,
    contract: &ContractArtifact,
) -> Result<RefinementArtifact, HarnessError> {
    check_hash(Stage::Refine, cfg, &contract.problem_hash)?;
    let family = callable_family(cfg, plant)?;
    let params = ContractParams::new(contract.y_max.clone()).map_err(|e| HarnessError::stage(Stage::Refine, e))?;
    let opts = RefineOptions {
        tol: cfg.synthesis.refine_tol,
        max_iters: cfg.synthesis.max_iters,
        ..RefineOptions::default()
    };
    let log = refine(&params, &family, &opts).map_err(|e| HarnessError::stage_with(Stage::Refine, &e, contract))?;
    let y_max = log.last().y_max;
    let validity = Validity::Valid(log.certificate.clone());
    Ok(RefinementArtifact {
        schema_version: SCHEMA_VERSION,
        problem_hash: contract.problem_hash.clone(),
        ids: plant.ids.clone(),
        initial: contract.y_max.clone(),
        iterations: log.iterations(),
        termination: log.termination,
        iterates: log.iterates,
        y_max,
        validity,
    })
}

/// Largest invariant set of every bus under the contract `y_max`, with its
/// output bound capped at the bus's own contract bound.
pub fn compute_rcis(cfg: &PipelineConfig, plant: &Plant, y_max: &[f64]) -> Result<RciArtifact, HarnessError> {
    if y_max.len() != plant.len() {
        return Err(HarnessError::stage(Stage::Rci, "contract length does not match the network"));
    }
    let buses = (0..plant.len())
        .into_par_iter()
        .map(|i| {
            let id = plant.ids[i];
            let bound: Vec<f64> = plant.neighbor_indices(i).iter().map(|&j| y_max[j]).collect();
            let prob = plant.problems[i]
                .with_neighbor_bound(bound.clone())
                .map_err(|e| HarnessError::stage(Stage::Rci, e))?;
            let rci = compute_rci(&prob, &plant.templates[i], &RciOptions::largest(Some(y_max[i])))
                .map_err(|e| HarnessError::stage(Stage::Rci, format!("bus {id}: {e}")))?;
            if rci.status != RciStatus::Invariant {
                let reason = rci.reason.clone().unwrap_or_else(|| format!("{:?}", rci.status));
                return Err(HarnessError::stage_with(Stage::Rci, format!("bus {id}: {reason}"), &rci));
            }
            let set = rci.set().map_err(|e| HarnessError::stage(Stage::Rci, e))?;
            let h = prob.output_row().map_err(|e| HarnessError::stage(Stage::Rci, e))?;
            let ob = output_bound(&set, h).map_err(|e| HarnessError::stage(Stage::Rci, e))?;
            Ok(BusRci {
                id,
                y_max: y_max[i],
                neighbor_bound: bound,
                output_bound: ob,
                rci,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(RciArtifact {
        schema_version: SCHEMA_VERSION,
        problem_hash: cfg.problem_hash(),
        y_max: y_max.to_vec(),
        buses,
    })
}

/// Grid verification of every invariant set; the artifact records failures
/// rather than raising them.
pub fn verify_rcis(cfg: &PipelineConfig, plant: &Plant, rcis: &RciArtifact) -> Result<VerificationArtifact, HarnessError> {
    check_hash(Stage::Verify, cfg, &rcis.problem_hash)?;
    let density = cfg.synthesis.verify_density;
    let buses = rcis
        .buses
        .par_iter()
        .map(|b| {
            let i = *plant
                .index
                .get(&b.id)
                .ok_or_else(|| HarnessError::stage(Stage::Verify, format!("unknown bus {}", b.id)))?;
            let prob = plant.problems[i]
                .with_neighbor_bound(b.neighbor_bound.clone())
                .map_err(|e| HarnessError::stage(Stage::Verify, e))?;
            let set = b.rci.set().map_err(|e| HarnessError::stage(Stage::Verify, e))?;
            let report = verify_rci(&set, &prob, density).map_err(|e| HarnessError::stage(Stage::Verify, e))?;
            Ok(BusVerification { id: b.id, report })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(VerificationArtifact {
        schema_version: SCHEMA_VERSION,
        problem_hash: rcis.problem_hash.clone(),
        density,
        all_passed: buses.iter().all(|b| b.report.all_passed()),
        buses,
    })
}

pub fn check_consistency(rcis: &RciArtifact) -> Vec<ConsistencyCheck> {
    rcis.buses
        .iter()
        .map(|b| ConsistencyCheck {
            id: b.id,
            output_bound: b.output_bound,
            y_max: b.y_max,
            holds: b.output_bound <= b.y_max + 1e-9,
        })
        .collect()
}

fn scenario_met(expect: Expectation, verdicts: &[TraceVerdict], halted: bool) -> bool {
    let violated = |prefix: &str| {
        verdicts
            .iter()
            .any(|v| v.name.starts_with(prefix) && v.status == VerdictStatus::Violated)
    };
    match expect {
        Expectation::Safe => !halted && verdicts.iter().all(|v| v.status != VerdictStatus::Violated),
        Expectation::ExitsRci => violated("rci_"),
        Expectation::None => true,
    }
}

/// Simulates the selected scenarios (all when `only` is `None`) and checks
/// the standard formulas on each trace. `force_unsupervised` switches the
/// filter off everywhere.
pub fn run_scenarios(
    cfg: &PipelineConfig,
    plant: &Plant,
    rcis: &RciArtifact,
    only: Option<&str>,
    force_unsupervised: bool,
) -> Result<Vec<ScenarioRun>, HarnessError> {
    let selected: Vec<_> = match only {
        Some(name) => vec![cfg.scenario(name)?],
        None => cfg.scenarios.iter().collect(),
    };
    let formulas = standard_formulas(cfg, plant, Some(rcis))?;
    selected
        .par_iter()
        .map(|sc| {
            let supervised = sc.supervised && !force_unsupervised;
            let trace = simulate(cfg, plant, sc, Some(rcis), supervised)?;
            let verdicts = verify_trace(&trace, &formulas)?;
            let expectation = sc.expectation();
            let met = scenario_met(expectation, &verdicts, trace.halted.is_some());
            let min_barrier = trace
                .buses
                .iter()
                .flat_map(|b| b.barrier.iter().flatten())
                .copied()
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
            let max_generator_frequency = trace
                .buses
                .iter()
                .filter(|b| b.generator)
                .flat_map(|b| b.omega.iter().flatten())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(ScenarioRun {
                name: sc.name.clone(),
                supervised,
                expectation,
                met,
                steps: trace.steps(),
                interventions: trace.buses.iter().map(|b| b.intervened.iter().filter(|&&f| f).count()).sum(),
                min_barrier,
                max_generator_frequency,
                halted: trace.halted.clone(),
                verdicts,
                trace: Some(trace),
            })
        })
        .collect()
}

/// Runs every stage in order and the configured scenarios. Fails with a
/// verification error if an invariant set does not verify or exceeds its
/// contract bound.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, HarnessError> {
    run_pipeline_with(cfg, None, false)
}

/// [`run_pipeline`] restricted to one scenario and optionally with the
/// filter switched off.
pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    only: Option<&str>,
    force_unsupervised: bool,
) -> Result<PipelineReport, HarnessError> {
    if let Some(name) = only {
        cfg.scenario(name)?;
    }
    let plant = cfg.build()?;
    let gains = sample_gains(cfg, &plant)?;
    let epigraphs = build_epigraphs(cfg, &gains)?;
    let contract = solve_contract(cfg, &plant, &epigraphs)?;
    let refinement = refine_contract(cfg, &plant, &contract)?;
    let rcis = compute_rcis(cfg, &plant, &refinement.y_max)?;
    let verification = verify_rcis(cfg, &plant, &rcis)?;
    if !verification.all_passed {
        let failed: Vec<usize> = verification
            .buses
            .iter()
            .filter(|b| !b.report.all_passed())
            .map(|b| b.id)
            .collect();
        return Err(HarnessError::Verification {
            stage: Stage::Verify,
            message: format!("invariant sets of buses {failed:?} fail grid verification"),
        });
    }
    let consistency = check_consistency(&rcis);
    if let Some(c) = consistency.iter().find(|c| !c.holds) {
        return Err(HarnessError::Verification {
            stage: Stage::Consistency,
            message: format!("bus {}: output bound {} exceeds contract {}", c.id, c.output_bound, c.y_max),
        });
    }
    let scenarios = run_scenarios(cfg, &plant, &rcis, only, force_unsupervised)?;
    Ok(PipelineReport {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        problem_hash: cfg.problem_hash(),
        gains,
        epigraphs,
        contract,
        refinement,
        rcis,
        verification,
        consistency,
        scenarios,
    })
}
