//! End-to-end orchestration: configuration, the synthesis pipeline, scenario
//! simulation with the barrier filter, trace verification and plot data.
//!
//! Every stage reads and writes serializable artifacts so that stages can run
//! independently. The harness is fixed to `f64`.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

mod config;
mod demo;
mod emit;
mod pipeline;
mod simulate;

pub use config::{
    AffineSubsystemConfig, Approximation, BusConfig, BusOverride, DisturbanceEvent, EventKind, Expectation,
    GridConfig, InitialState, NetworkSpec, PipelineConfig, Plant, Scenario, SimulationConfig, StudentOverride,
    SupervisorConfig, SynthesisConfig,
};
pub use demo::{smallgain_demo, HalfPlane, SmallGainDemo};
pub use emit::{emit_rci_json, RciPlotJson, RciPolytopeJson, emit_smallgain_json, emit_trace_csv, read_json, write_json, TRACE_SIGNALS};
pub use pipeline::{
    build_epigraphs, check_consistency, compute_rcis, refine_contract, run_pipeline, run_pipeline_with, run_scenarios, sample_gains, solve_contract,
    verify_rcis, BusEpigraph, BusGain, BusRci, BusVerification, ConsistencyCheck, ContractArtifact, EpigraphArtifact,
    GainArtifact, PipelineReport, RciArtifact, RefinementArtifact, ScenarioRun, VerificationArtifact,
};
pub use simulate::{
    simulate, standard_formulas, to_stl_trace, verify_trace, BusTrace, Halt, NamedFormula, RunTrace, TraceVerdict,
    VerdictStatus,
};

/// Version stamped into every artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Sample,
    Epigraph,
    Search,
    Refine,
    Rci,
    Verify,
    Consistency,
    Simulate,
    VerifyTrace,
    Emit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&name)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage {
        stage: Stage,
        message: String,
        /// Partial results useful for diagnosing the failure.
        artifact: Option<serde_json::Value>,
    },
    #[error("no valid contract: epigraphs of buses {buses:?} do not intersect")]
    Infeasible { buses: Vec<usize> },
    #[error("verification failed in stage {stage}: {message}")]
    Verification { stage: Stage, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl HarnessError {
    pub(crate) fn stage(stage: Stage, err: impl fmt::Display) -> Self {
        HarnessError::Stage {
            stage,
            message: err.to_string(),
            artifact: None,
        }
    }

    pub(crate) fn stage_with(stage: Stage, err: impl fmt::Display, artifact: &impl Serialize) -> Self {
        HarnessError::Stage {
            stage,
            message: err.to_string(),
            artifact: serde_json::to_value(artifact).ok(),
        }
    }

    /// Process exit code: 2 infeasible contract, 3 verification failure,
    /// 4 configuration error, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Infeasible { .. } => 2,
            HarnessError::Verification { .. } => 3,
            HarnessError::Config(_) => 4,
            _ => 1,
        }
    }
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn content_hash(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}
