//! Pipeline configuration and the plant it describes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{content_hash, HarnessError, SCHEMA_VERSION};
use crate::geometry::AxisBox;
use crate::invariant::{RciProblem, RciTemplate};
use crate::network::{
    build_microgrid, AffineRealization, BusKind, BusSpec, LineSpec, NetworkSystem, Subsystem,
};
use crate::supervisor::{Cbf, StudentController};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub network: NetworkSpec,
    pub simulation: SimulationConfig,
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    Microgrid {
        buses: Vec<BusConfig>,
        lines: Vec<LineSpec<f64>>,
    },
    Affine {
        subsystems: Vec<AffineSubsystemConfig>,
    },
}

/// A microgrid bus. The template defaults to the bus kind
/// (`"generator"` or `"load"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    #[serde(flatten)]
    pub spec: BusSpec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSubsystemConfig {
    pub id: usize,
    pub neighbors: Vec<usize>,
    pub realization: AffineRealization<f64>,
    pub template: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub ts: f64,
    pub horizon: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approximation {
    #[default]
    MonotoneCells,
    Hull,
}

/// Gain sampling grid: `counts` points per axis on `[0, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub counts: usize,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Symmetric bound on every input channel.
    pub u_max: f64,
    /// Symmetric bound on every disturbance channel.
    pub d_max: f64,
    pub templates: BTreeMap<String, RciTemplate<f64>>,
    pub grid: GridConfig,
    #[serde(default)]
    pub min_scale: f64,
    #[serde(default)]
    pub m_crop: Option<f64>,
    #[serde(default)]
    pub approximation: Approximation,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_density")]
    pub verify_density: usize,
}

fn default_refine_tol() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    10_000
}

fn default_density() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorConfig {
    /// Barrier gain; defaults to `0.5 / ts`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
    #[serde(default = "default_eps_abs")]
    pub eps_abs: f64,
    #[serde(default = "StudentController::zero")]
    pub student: StudentController<f64>,
    #[serde(default)]
    pub overrides: Vec<BusOverride>,
    /// Bound checked on generator frequencies in supervised runs.
    #[serde(default = "default_frequency_limit")]
    pub frequency_limit: f64,
}

fn default_eps_rel() -> f64 {
    0.1
}

fn default_eps_abs() -> f64 {
    1e-6
}

fn default_frequency_limit() -> f64 {
    5e-3
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            kappa: None,
            eps_rel: default_eps_rel(),
            eps_abs: default_eps_abs(),
            student: StudentController::zero(),
            overrides: Vec::new(),
            frequency_limit: default_frequency_limit(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusOverride {
    pub bus: usize,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub student: Option<StudentController<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Constant from `start_step` until `end_step`.
    #[default]
    Step,
    /// Sign flips every `period` steps.
    Square { period: usize },
}

/// Scripted disturbance on one channel of one bus, active on
/// `[start_step, end_step)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEvent {
    pub bus: usize,
    pub start_step: usize,
    #[serde(default)]
    pub end_step: Option<usize>,
    pub magnitude: f64,
    #[serde(default)]
    pub kind: EventKind,
    #[serde(default)]
    pub channel: usize,
}

impl DisturbanceEvent {
    pub fn value_at(&self, step: usize) -> f64 {
        if step < self.start_step || self.end_step.is_some_and(|e| step >= e) {
            return 0.0;
        }
        match self.kind {
            EventKind::Step => self.magnitude,
            EventKind::Square { period } => {
                if ((step - self.start_step) / period.max(1)).is_multiple_of(2) {
                    self.magnitude
                } else {
                    -self.magnitude
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentOverride {
    pub bus: usize,
    pub student: StudentController<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub bus: usize,
    pub state: Vec<f64>,
}

/// What a scenario is expected to show.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// Every standard formula holds.
    Safe,
    /// At least one bus leaves its invariant set.
    ExitsRci,
    /// Recorded without a pass/fail judgement.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_true")]
    pub supervised: bool,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub events: Vec<DisturbanceEvent>,
    #[serde(default)]
    pub students: Vec<StudentOverride>,
    #[serde(default)]
    pub initial: Vec<InitialState>,
    #[serde(default)]
    pub expect: Option<Expectation>,
}

fn default_true() -> bool {
    true
}

impl Scenario {
    /// Explicit expectation, or `Safe` for supervised runs and `None`
    /// otherwise.
    pub fn expectation(&self) -> Expectation {
        self.expect.unwrap_or(if self.supervised { Expectation::Safe } else { Expectation::None })
    }
}

/// The network, per-bus synthesis problems and templates described by a
/// configuration. Buses are indexed in configuration order.
#[derive(Clone, Debug)]
pub struct Plant {
    pub network: NetworkSystem<f64>,
    pub ids: Vec<usize>,
    pub index: BTreeMap<usize, usize>,
    pub kinds: Vec<Option<BusKind>>,
    /// Problems with a zero neighbor bound.
    pub problems: Vec<RciProblem<f64>>,
    pub templates: Vec<RciTemplate<f64>>,
}

impl Plant {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Neighbor positions of bus `i` in the parameter vector.
    pub fn neighbor_indices(&self, i: usize) -> Vec<usize> {
        self.problems[i]
            .subsystem()
            .neighbors()
            .iter()
            .map(|j| self.index[j])
            .collect()
    }

    pub fn is_generator(&self, i: usize) -> bool {
        self.kinds[i] == Some(BusKind::Generator)
    }
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hash of the synthesis problem: the network, step time, bounds,
    /// templates and minimum scale. Grids, tolerances, supervisor settings
    /// and scenarios do not enter it.
    pub fn problem_hash(&self) -> String {
        content_hash(&(
            &self.network,
            self.simulation.ts,
            self.synthesis.u_max,
            self.synthesis.d_max,
            &self.synthesis.templates,
            self.synthesis.min_scale,
        ))
    }

    pub fn step_time(&self) -> f64 {
        self.simulation.ts
    }

    pub fn kappa_for(&self, bus: usize) -> f64 {
        self.supervisor
            .overrides
            .iter()
            .find(|o| o.bus == bus)
            .and_then(|o| o.kappa)
            .or(self.supervisor.kappa)
            .unwrap_or(0.5 / self.simulation.ts)
    }

    pub fn student_for(&self, bus: usize, scenario: Option<&Scenario>) -> StudentController<f64> {
        scenario
            .and_then(|s| s.students.iter().find(|o| o.bus == bus).map(|o| o.student.clone()))
            .or_else(|| {
                self.supervisor
                    .overrides
                    .iter()
                    .find(|o| o.bus == bus)
                    .and_then(|o| o.student.clone())
            })
            .unwrap_or_else(|| self.supervisor.student.clone())
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario, HarnessError> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| cfg_err(format!("unknown scenario {name:?}")))
    }

    /// Barrier of bus `bus` built from the offsets of its invariant set.
    pub fn cbf_for(&self, bus: usize, rci: &crate::invariant::RciResult<f64>) -> Result<Cbf<f64>, HarnessError> {
        Cbf::from_rci(rci, self.kappa_for(bus))
            .map(|c| c.with_active_band(self.supervisor.eps_rel, self.supervisor.eps_abs))
            .map_err(|e| HarnessError::stage(super::Stage::Simulate, e))
    }

    /// Checks everything that does not require building the plant.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let syn = &self.synthesis;
        let ts = self.simulation.ts;
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(cfg_err("simulation.ts must be positive"));
        }
        if self.simulation.horizon == 0 {
            return Err(cfg_err("simulation.horizon must be positive"));
        }
        for (name, v) in [("u_max", syn.u_max), ("d_max", syn.d_max), ("grid.upper", syn.grid.upper)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(cfg_err(format!("synthesis.{name} must be finite and nonnegative")));
            }
        }
        if syn.grid.counts < 2 {
            return Err(cfg_err("synthesis.grid.counts must be at least 2"));
        }
        if !(0.0..=1.0).contains(&syn.min_scale) {
            return Err(cfg_err("synthesis.min_scale must lie in [0, 1]"));
        }
        if !(syn.refine_tol > 0.0) || syn.max_iters == 0 || syn.verify_density == 0 {
            return Err(cfg_err("refine_tol, max_iters and verify_density must be positive"));
        }
        if syn.m_crop.is_some_and(|m| !(m > 0.0 && m.is_finite())) {
            return Err(cfg_err("synthesis.m_crop must be positive"));
        }
        let sup = &self.supervisor;
        let kappas = std::iter::once(sup.kappa).chain(sup.overrides.iter().map(|o| o.kappa));
        for k in kappas.flatten() {
            if !(k * ts > 0.0 && k * ts < 1.0) {
                return Err(cfg_err(format!("kappa {k} gives kappa*ts outside (0, 1)")));
            }
        }
        if !(sup.eps_rel >= 0.0 && sup.eps_abs >= 0.0) {
            return Err(cfg_err("supervisor active band must be nonnegative"));
        }
        let ids = self.bus_ids();
        let mut seen = BTreeSet::new();
        for s in &self.scenarios {
            if !seen.insert(&s.name) {
                return Err(cfg_err(format!("duplicate scenario {:?}", s.name)));
            }
            let horizon = s.horizon.unwrap_or(self.simulation.horizon);
            if horizon == 0 {
                return Err(cfg_err(format!("scenario {:?}: horizon must be positive", s.name)));
            }
            for e in &s.events {
                if !ids.contains(&e.bus) {
                    return Err(cfg_err(format!("scenario {:?}: unknown bus {}", s.name, e.bus)));
                }
                if e.start_step >= horizon {
                    return Err(cfg_err(format!("scenario {:?}: event starts after the horizon", s.name)));
                }
                if !e.magnitude.is_finite() {
                    return Err(cfg_err(format!("scenario {:?}: magnitude must be finite", s.name)));
                }
            }
            // Summed disturbance per bus channel must stay inside the declared box.
            let mut channels: BTreeMap<(usize, usize), Vec<&DisturbanceEvent>> = BTreeMap::new();
            for e in &s.events {
                channels.entry((e.bus, e.channel)).or_default().push(e);
            }
            for ((bus, ch), events) in &channels {
                for k in 0..horizon {
                    let total: f64 = events.iter().map(|e| e.value_at(k)).sum();
                    if total.abs() > syn.d_max + 1e-12 {
                        return Err(cfg_err(format!(
                            "scenario {:?}: disturbance {total} on bus {bus} channel {ch} at step {k} exceeds d_max",
                            s.name
                        )));
                    }
                }
            }
            for o in s.students.iter().map(|o| o.bus).chain(s.initial.iter().map(|i| i.bus)) {
                if !ids.contains(&o) {
                    return Err(cfg_err(format!("scenario {:?}: unknown bus {o}", s.name)));
                }
            }
        }
        for o in &sup.overrides {
            if !ids.contains(&o.bus) {
                return Err(cfg_err(format!("supervisor override for unknown bus {}", o.bus)));
            }
        }
        Ok(())
    }

    fn bus_ids(&self) -> BTreeSet<usize> {
        match &self.network {
            NetworkSpec::Microgrid { buses, .. } => buses.iter().map(|b| b.spec.id).collect(),
            NetworkSpec::Affine { subsystems } => subsystems.iter().map(|s| s.id).collect(),
        }
    }

    /// Builds the network and the per-bus synthesis problems.
    pub fn build(&self) -> Result<Plant, HarnessError> {
        self.validate()?;
        let ts = self.simulation.ts;
        let (network, kinds, template_names) = match &self.network {
            NetworkSpec::Microgrid { buses, lines } => {
                let specs: Vec<BusSpec<f64>> = buses.iter().map(|b| b.spec.clone()).collect();
                let net = build_microgrid(&specs, lines, ts).map_err(|e| cfg_err(e.to_string()))?;
                let kinds = buses.iter().map(|b| Some(b.spec.kind)).collect();
                let names = buses
                    .iter()
                    .map(|b| {
                        b.template.clone().unwrap_or_else(|| match b.spec.kind {
                            BusKind::Generator => "generator".to_owned(),
                            BusKind::Load => "load".to_owned(),
                        })
                    })
                    .collect::<Vec<_>>();
                (net, kinds, names)
            }
            NetworkSpec::Affine { subsystems } => {
                let subs = subsystems
                    .iter()
                    .map(|s| Subsystem::from_affine(s.id, s.neighbors.clone(), s.realization.clone()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| cfg_err(e.to_string()))?;
                let net = NetworkSystem::new(subs, ts).map_err(|e| cfg_err(e.to_string()))?;
                let names = subsystems.iter().map(|s| s.template.clone()).collect();
                (net, vec![None; subsystems.len()], names)
            }
        };
        let ids: Vec<usize> = network.subsystems().iter().map(|s| s.id()).collect();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut problems = Vec::with_capacity(ids.len());
        let mut templates = Vec::with_capacity(ids.len());
        for (sub, name) in network.subsystems().iter().zip(&template_names) {
            let dims = sub.dims();
            if dims.output != 1 {
                return Err(cfg_err(format!("bus {}: contracts need a scalar output", sub.id())));
            }
            let neighbor_outputs = sub
                .neighbors()
                .iter()
                .map(|j| network.subsystem(*j).map_or(0, |n| n.dims().output))
                .sum::<usize>();
            if neighbor_outputs != sub.coupling_dim() {
                return Err(cfg_err(format!("bus {}: coupling must stack scalar neighbor outputs", sub.id())));
            }
            let tmpl = self
                .synthesis
                .templates
                .get(name)
                .ok_or_else(|| cfg_err(format!("bus {}: unknown template {name:?}", sub.id())))?;
            if tmpl.dim() != dims.state {
                return Err(cfg_err(format!(
                    "bus {}: template {name:?} has dimension {} but the state has {}",
                    sub.id(),
                    tmpl.dim(),
                    dims.state
                )));
            }
            let u = AxisBox::symmetric(&vec![self.synthesis.u_max; dims.input]).map_err(|e| cfg_err(e.to_string()))?;
            let d = AxisBox::symmetric(&vec![self.synthesis.d_max; dims.disturbance])
                .map_err(|e| cfg_err(e.to_string()))?;
            let prob = RciProblem::new(sub.clone(), u, d, vec![0.0; sub.coupling_dim()])
                .map_err(|e| cfg_err(e.to_string()))?;
            problems.push(prob);
            templates.push(tmpl.clone());
        }
        for s in &self.scenarios {
            for e in &s.events {
                let sub = network.subsystem(e.bus).expect("validated bus");
                if e.channel >= sub.dims().disturbance {
                    return Err(cfg_err(format!("scenario {:?}: bus {} has no channel {}", s.name, e.bus, e.channel)));
                }
            }
            for init in &s.initial {
                let sub = network.subsystem(init.bus).expect("validated bus");
                if init.state.len() != sub.dims().state {
                    return Err(cfg_err(format!("scenario {:?}: initial state of bus {} has the wrong size", s.name, init.bus)));
                }
            }
        }
        if let Some(w) = &self.synthesis.weights {
            if w.len() != ids.len() {
                return Err(cfg_err("synthesis.weights must have one entry per bus"));
            }
        }
        Ok(Plant {
            network,
            ids,
            index,
            kinds,
            problems,
            templates,
        })
    }
}
