//! Scenario simulation under the barrier filter and trace verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Plant, Scenario};
use super::pipeline::RciArtifact;
use super::{HarnessError, Stage, SCHEMA_VERSION};
use crate::network::BusKind;
use crate::stl::{evaluate, first_violation, Formula, Interval, Trace};
use crate::supervisor::{cbf_filter, cbf_value, Cbf, FilterProblem};

/// Per-step record of one bus. `theta` is the bus output; `omega` is the
/// state frequency on generators and the finite-difference angle rate on
/// loads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusTrace {
    pub id: usize,
    pub generator: bool,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    pub u0: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub intervened: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

/// Why and where a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halt {
    pub step: usize,
    pub bus: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema_version: u32,
    pub scenario: String,
    pub supervised: bool,
    pub step_time: f64,
    pub horizon: usize,
    pub buses: Vec<BusTrace>,
    pub halted: Option<Halt>,
}

impl RunTrace {
    /// Number of recorded steps.
    pub fn steps(&self) -> usize {
        self.buses.first().map_or(0, |b| b.theta.len())
    }
}

fn sim_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::stage(Stage::Simulate, e)
}

/// Barriers of every bus, in plant order, when invariant sets are given.
fn barriers(cfg: &PipelineConfig, plant: &Plant, rcis: Option<&RciArtifact>) -> Result<Option<Vec<Cbf<f64>>>, HarnessError> {
    let Some(rcis) = rcis else {
        return Ok(None);
    };
    plant
        .ids
        .iter()
        .map(|&id| {
            let b = rcis
                .bus(id)
                .ok_or_else(|| sim_err(format!("no invariant set for bus {id}")))?;
            cfg.cbf_for(id, &b.rci)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn disturbance(sc: &Scenario, bus: usize, dim: usize, step: usize) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    for e in sc.events.iter().filter(|e| e.bus == bus) {
        d[e.channel] += e.value_at(step);
    }
    d
}

/// Synchronous closed-loop simulation of one scenario. With `supervised`
/// every student proposal passes through the barrier filter; a filter
/// failure halts the run at that step.
pub fn simulate(
    cfg: &PipelineConfig,
    plant: &Plant,
    sc: &Scenario,
    rcis: Option<&RciArtifact>,
    supervised: bool,
) -> Result<RunTrace, HarnessError> {
    let net = &plant.network;
    let ts = net.step_time();
    let horizon = sc.horizon.unwrap_or(cfg.simulation.horizon);
    let cbfs = barriers(cfg, plant, rcis)?;
    if supervised && cbfs.is_none() {
        return Err(sim_err("a supervised run needs invariant sets for every bus"));
    }
    let students: Vec<_> = plant.ids.iter().map(|&id| cfg.student_for(id, Some(sc))).collect();
    let mut states = net.zeros(|d| d.state);
    for init in &sc.initial {
        states.insert(init.bus, init.state.clone());
    }
    let mut buses: Vec<BusTrace> = plant
        .ids
        .iter()
        .enumerate()
        .map(|(i, &id)| BusTrace {
            id,
            generator: plant.is_generator(i),
            theta: Vec::with_capacity(horizon),
            omega: plant.kinds[i].map(|_| Vec::with_capacity(horizon)),
            u0: Vec::with_capacity(horizon),
            u: Vec::with_capacity(horizon),
            intervened: Vec::with_capacity(horizon),
            barrier: cbfs.as_ref().map(|_| Vec::with_capacity(horizon)),
            states: Vec::with_capacity(horizon),
        })
        .collect();
    let mut halted = None;

    'run: for k in 0..horizon {
        let t = k as f64 * ts;
        let outputs = net.outputs(&states).map_err(sim_err)?;
        let mut inputs = BTreeMap::new();
        let mut dists = BTreeMap::new();
        let mut records = Vec::with_capacity(plant.len());
        for (i, sub) in net.subsystems().iter().enumerate() {
            let id = sub.id();
            let dims = sub.dims();
            let x = &states[&id];
            let y_n = net.neighbor_outputs(id, &outputs).map_err(sim_err)?;
            let u0 = students[i].control(x, t, dims.input);
            let cbf = cbfs.as_ref().map(|c| &c[i]);
            let barrier = cbf.map(|c| cbf_value(c, x)).transpose().map_err(sim_err)?;
            let (u, intervened) = match (supervised, cbf) {
                (true, Some(cbf)) => {
                    let prob = FilterProblem {
                        subsystem: sub,
                        step_time: ts,
                        disturbance: plant.problems[i].disturbance(),
                        input: plant.problems[i].input(),
                    };
                    match cbf_filter(cbf, &prob, x, &y_n, &u0) {
                        Ok(r) => (r.u_star, r.intervened),
                        Err(e) => {
                            halted = Some(Halt {
                                step: k,
                                bus: id,
                                message: e.to_string(),
                            });
                            break 'run;
                        }
                    }
                }
                _ => (u0.clone(), false),
            };
            inputs.insert(id, u.clone());
            dists.insert(id, disturbance(sc, id, dims.disturbance, k));
            records.push((outputs[&id][0], u0, u, intervened, barrier));
        }
        let (next, _) = net.step(&states, &inputs, &dists).map_err(sim_err)?;
        for ((bus, (theta, u0, u, intervened, barrier)), i) in buses.iter_mut().zip(records).zip(0..) {
            let x = &states[&bus.id];
            if let Some(omega) = bus.omega.as_mut() {
                let w = match plant.kinds[i] {
                    Some(BusKind::Generator) => x[1],
                    _ => (next[&bus.id][0] - x[0]) / ts,
                };
                omega.push(w);
            }
            bus.theta.push(theta);
            bus.u0.push(u0);
            bus.u.push(u);
            bus.intervened.push(intervened);
            if let (Some(bs), Some(b)) = (bus.barrier.as_mut(), barrier) {
                bs.push(b);
            }
            bus.states.push(x.clone());
        }
        if let Some((&id, _)) = next.iter().find(|(_, x)| x.iter().any(|v| !v.is_finite())) {
            halted = Some(Halt {
                step: k + 1,
                bus: id,
                message: "state is no longer finite".into(),
            });
            break;
        }
        states = next;
    }
    Ok(RunTrace {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        supervised,
        step_time: ts,
        horizon,
        buses,
        halted,
    })
}

fn channel_signals(prefix: &str, id: usize, values: &[Vec<f64>], signals: &mut BTreeMap<String, Vec<f64>>) {
    let width = values.first().map_or(0, Vec::len);
    for c in 0..width {
        let name = if width == 1 { format!("{prefix}{id}") } else { format!("{prefix}{id}_{c}") };
        signals.insert(name, values.iter().map(|v| v[c]).collect());
    }
}

/// Signals `theta{id}`, `w{id}`, `u{id}`, `u0{id}`, `b{id}` and `x{id}_{j}`.
/// Multi-channel inputs are split into `u{id}_{c}`.
pub fn to_stl_trace(trace: &RunTrace) -> Result<Trace<f64>, HarnessError> {
    let mut signals = BTreeMap::new();
    for b in &trace.buses {
        signals.insert(format!("theta{}", b.id), b.theta.clone());
        if let Some(w) = &b.omega {
            signals.insert(format!("w{}", b.id), w.clone());
        }
        if let Some(bs) = &b.barrier {
            signals.insert(format!("b{}", b.id), bs.clone());
        }
        channel_signals("u", b.id, &b.u, &mut signals);
        channel_signals("u0", b.id, &b.u0, &mut signals);
        let n = b.states.first().map_or(0, Vec::len);
        for j in 0..n {
            signals.insert(format!("x{}_{j}", b.id), b.states.iter().map(|x| x[j]).collect());
        }
    }
    Trace::new(trace.step_time, signals).map_err(|e| HarnessError::stage(Stage::VerifyTrace, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedFormula {
    pub name: String,
    pub bus: Option<usize>,
    pub formula: Formula<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Holds,
    HoldsOnPrefix,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub name: String,
    pub bus: Option<usize>,
    pub status: VerdictStatus,
    pub first_violation: Option<usize>,
}

/// The formulas checked on every run:
/// - `frequency_{id}`: `□ |w| ≤ limit` on generator buses,
/// - `barrier_{id}`: `□ b ≥ 0`,
/// - `rci_{id}`: `□ x ∈ S`,
/// - `assumption_{id}`: `□ |theta_j| ≤ y_j` for every neighbor `j`.
///
/// The last three need invariant sets.
pub fn standard_formulas(
    cfg: &PipelineConfig,
    plant: &Plant,
    rcis: Option<&RciArtifact>,
) -> Result<Vec<NamedFormula>, HarnessError> {
    let always = |f| Formula::always(Interval::unbounded(), f);
    let mut out = Vec::new();
    for (i, &id) in plant.ids.iter().enumerate() {
        if plant.is_generator(i) {
            out.push(NamedFormula {
                name: format!("frequency_{id}"),
                bus: Some(id),
                formula: always(Formula::abs_le(&format!("w{id}"), cfg.supervisor.frequency_limit)),
            });
        }
        let Some(rcis) = rcis else { continue };
        let b = rcis
            .bus(id)
            .ok_or_else(|| HarnessError::stage(Stage::VerifyTrace, format!("no invariant set for bus {id}")))?;
        out.push(NamedFormula {
            name: format!("barrier_{id}"),
            bus: Some(id),
            formula: always(Formula::ge(&format!("b{id}"), 0.0)),
        });
        let set = b.rci.set().map_err(|e| HarnessError::stage(Stage::VerifyTrace, e))?;
        let names: Vec<String> = (0..set.dim()).map(|j| format!("x{id}_{j}")).collect();
        out.push(NamedFormula {
            name: format!("rci_{id}"),
            bus: Some(id),
            formula: always(Formula::in_polytope(&names, &set)),
        });
        let neighbors = plant.problems[i].subsystem().neighbors();
        if !neighbors.is_empty() {
            let bounds = neighbors.iter().map(|j| {
                let y = rcis.y_max[plant.index[j]];
                Formula::abs_le(&format!("theta{j}"), y)
            });
            out.push(NamedFormula {
                name: format!("assumption_{id}"),
                bus: Some(id),
                formula: always(Formula::all(bounds)),
            });
        }
    }
    Ok(out)
}

/// Evaluates each formula at time 0. An empty trace holds on its (empty)
/// prefix.
pub fn verify_trace(trace: &RunTrace, formulas: &[NamedFormula]) -> Result<Vec<TraceVerdict>, HarnessError> {
    if formulas.is_empty() {
        return Ok(Vec::new());
    }
    if trace.steps() == 0 {
        return Ok(formulas
            .iter()
            .map(|f| TraceVerdict {
                name: f.name.clone(),
                bus: f.bus,
                status: VerdictStatus::HoldsOnPrefix,
                first_violation: None,
            })
            .collect());
    }
    let tr = to_stl_trace(trace)?;
    let err = |e| HarnessError::stage(Stage::VerifyTrace, e);
    formulas
        .iter()
        .map(|f| {
            let v = evaluate(&f.formula, &tr, 0).map_err(err)?;
            let status = match (v.holds, v.prefix_only) {
                (false, _) => VerdictStatus::Violated,
                (true, true) => VerdictStatus::HoldsOnPrefix,
                (true, false) => VerdictStatus::Holds,
            };
            let first = if v.holds { None } else { first_violation(&f.formula, &tr).map_err(err)? };
            Ok(TraceVerdict {
                name: f.name.clone(),
                bus: f.bus,
                status,
                first_violation: first,
            })
        })
        .collect()
}
