//! Plot data: one CSV per bus signal and JSON descriptions of polytopes.
//!
//! Trace CSVs are named `bus{id}_{signal}.csv` with the columns
//! `step,time_s,value`. Vector signals with more than one channel are split
//! into `{signal}_{channel}`. Intervention flags are written as 0 or 1.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::demo::SmallGainDemo;
use super::pipeline::RciArtifact;
use super::simulate::RunTrace;
use super::{HarnessError, SCHEMA_VERSION};
use crate::geometry::enumerate_vertices;

/// Signals written per bus, in file-name form.
pub const TRACE_SIGNALS: [&str; 6] = ["theta", "omega", "u0", "u", "intervened", "barrier"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<(), HarnessError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn write_series(path: &Path, step_time: f64, values: impl Iterator<Item = f64>) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["step", "time_s", "value"]).map_err(csv_err)?;
    for (k, v) in values.enumerate() {
        w.write_record([k.to_string(), (k as f64 * step_time).to_string(), v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn channels(name: &str, values: &[Vec<f64>]) -> Vec<(String, Vec<f64>)> {
    let width = values.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| {
            let label = if width == 1 { name.to_owned() } else { format!("{name}_{c}") };
            (label, values.iter().map(|v| v[c]).collect())
        })
        .collect()
}

/// Writes the trace into `dir` and returns the files in write order.
pub fn emit_trace_csv(trace: &RunTrace, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for b in &trace.buses {
        let mut series: Vec<(String, Vec<f64>)> = vec![("theta".into(), b.theta.clone())];
        if let Some(w) = &b.omega {
            series.push(("omega".into(), w.clone()));
        }
        series.extend(channels("u0", &b.u0));
        series.extend(channels("u", &b.u));
        series.push(("intervened".into(), b.intervened.iter().map(|&f| f64::from(u8::from(f))).collect()));
        if let Some(bs) = &b.barrier {
            series.push(("barrier".into(), bs.clone()));
        }
        for (name, values) in series {
            let path = dir.join(format!("bus{}_{name}.csv", b.id));
            write_series(&path, trace.step_time, values.into_iter())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Facet description of one invariant set. `vertices` is filled for
/// two-dimensional sets, in counterclockwise order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RciPolytopeJson {
    pub id: usize,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub y_max: f64,
    pub output_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RciPlotJson {
    pub schema_version: u32,
    pub buses: Vec<RciPolytopeJson>,
}

fn ccw(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let n = pts.len().max(1) as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    pts.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.total_cmp(&tb)
    });
    pts
}

pub fn emit_rci_json(rcis: &RciArtifact, path: impl AsRef<Path>) -> Result<RciPlotJson, HarnessError> {
    let mut buses = Vec::with_capacity(rcis.buses.len());
    for b in &rcis.buses {
        let vertices = if b.rci.p.ncols() == 2 {
            let set = b.rci.set().map_err(|e| HarnessError::stage(super::Stage::Emit, e))?;
            let v = enumerate_vertices(&set).map_err(|e| HarnessError::stage(super::Stage::Emit, e))?;
            Some(ccw(v.into_iter().map(|p| [p[0], p[1]]).collect()))
        } else {
            None
        };
        buses.push(RciPolytopeJson {
            id: b.id,
            p: b.rci.p.rows_iter().map(<[f64]>::to_vec).collect(),
            q: b.rci.q.clone(),
            y_max: b.y_max,
            output_bound: b.output_bound,
            vertices,
        });
    }
    let out = RciPlotJson {
        schema_version: SCHEMA_VERSION,
        buses,
    };
    write_json(path, &out)?;
    Ok(out)
}

pub fn emit_smallgain_json(demo: &SmallGainDemo, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    write_json(path, demo)
}
