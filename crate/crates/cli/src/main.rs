//! `agc`: command-line front end for contract synthesis, invariant sets,
//! supervised simulation and trace verification.
//!
//! Every stage reads its inputs from and writes its artifact to the `--out`
//! directory, so stages can run one at a time or all at once with
//! `agc pipeline`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agcontract::harness::{
    build_epigraphs, check_consistency, compute_rcis, emit_rci_json, emit_smallgain_json, emit_trace_csv, read_json,
    refine_contract, run_pipeline_with, run_scenarios, sample_gains, smallgain_demo, solve_contract,
    standard_formulas, verify_rcis, verify_trace, write_json, ContractArtifact, EpigraphArtifact, GainArtifact,
    HarnessError, PipelineConfig, RciArtifact, RefinementArtifact, RunTrace, ScenarioRun, Stage, VerdictStatus,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "agc", version, about = "Assume-guarantee contract synthesis for networked systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; stages read earlier artifacts from here.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Only this scenario.
    #[arg(long)]
    scenario: Option<String>,
    /// Switch the barrier filter off in every scenario.
    #[arg(long)]
    no_supervisor: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Worked two-system example.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
    },
    /// Gain sampling.
    Gains {
        #[command(subcommand)]
        action: GainsCommand,
    },
    /// Epigraph approximations.
    Epi {
        #[command(subcommand)]
        action: EpiCommand,
    },
    /// Contract search and refinement.
    Contract {
        #[command(subcommand)]
        action: ContractCommand,
    },
    /// Invariant sets at the contract bounds.
    Rci {
        #[command(subcommand)]
        action: RciCommand,
    },
    /// Simulate scenarios and write traces.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scenarios: ScenarioArgs,
    },
    /// Check the standard formulas on recorded traces.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Run every stage and all scenarios.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Grid points per gain axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Refinement step tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        scenarios: ScenarioArgs,
    },
}

#[derive(Subcommand, Debug)]
enum DemoCommand {
    /// Small-gain interconnection solved by contract search.
    Smallgain {
        /// Disturbance gains `mu1,mu2`.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0])]
        mu: Vec<f64>,
        /// Coupling gains `nu1,nu2`.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.5])]
        nu: Vec<f64>,
        /// Disturbance bounds `d1,d2`.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0])]
        d: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum GainsCommand {
    Sample {
        #[command(flatten)]
        common: Common,
        /// Grid points per gain axis.
        #[arg(long)]
        grid: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum EpiCommand {
    Build {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand, Debug)]
enum ContractCommand {
    Solve {
        #[command(flatten)]
        common: Common,
    },
    Refine {
        #[command(flatten)]
        common: Common,
        /// Refinement step tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum RciCommand {
    Compute {
        #[command(flatten)]
        common: Common,
    },
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

const GAINS: &str = "gains.json";
const EPIGRAPHS: &str = "epigraphs.json";
const CONTRACT: &str = "contract.json";
const REFINEMENT: &str = "refinement.json";
const RCIS: &str = "rci.json";
const RCI_PLOT: &str = "rci_plot.json";
const VERIFICATION: &str = "verification.json";
const REPORT: &str = "report.json";

fn load(common: &Common) -> Result<PipelineConfig, HarnessError> {
    PipelineConfig::from_path(&common.config)
}

fn with_grid(mut cfg: PipelineConfig, grid: Option<usize>) -> Result<PipelineConfig, HarnessError> {
    if let Some(g) = grid {
        cfg.synthesis.grid.counts = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_tol(mut cfg: PipelineConfig, tol: Option<f64>) -> Result<PipelineConfig, HarnessError> {
    if let Some(t) = tol {
        cfg.synthesis.refine_tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn trace_dir(out: &Path, scenario: &str) -> PathBuf {
    out.join("traces").join(scenario)
}

fn write_run(out: &Path, trace: &RunTrace) -> Result<(), HarnessError> {
    let dir = trace_dir(out, &trace.scenario);
    write_json(dir.join("trace.json"), trace)?;
    emit_trace_csv(trace, &dir)?;
    Ok(())
}

fn summarize(runs: &[ScenarioRun]) -> Result<(), HarnessError> {
    for r in runs {
        let violated: Vec<&str> = r
            .verdicts
            .iter()
            .filter(|v| v.status == VerdictStatus::Violated)
            .map(|v| v.name.as_str())
            .collect();
        println!(
            "scenario {}: supervised={} steps={} interventions={} expectation={:?} met={} violated={:?}",
            r.name, r.supervised, r.steps, r.interventions, r.expectation, r.met, violated
        );
    }
    let unmet: Vec<&str> = runs.iter().filter(|r| !r.met).map(|r| r.name.as_str()).collect();
    if unmet.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Verification {
            stage: Stage::VerifyTrace,
            message: format!("scenarios {unmet:?} do not meet their expectations"),
        })
    }
}

/// The refined contract when present, otherwise the searched one.
fn contract_bounds(out: &Path) -> Result<Vec<f64>, HarnessError> {
    let refined = out.join(REFINEMENT);
    if refined.exists() {
        Ok(read_json::<RefinementArtifact>(refined)?.y_max)
    } else {
        Ok(read_json::<ContractArtifact>(out.join(CONTRACT))?.y_max)
    }
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Demo {
            which: DemoCommand::Smallgain { mu, nu, d, out },
        } => {
            let pair = |name: &str, v: &[f64]| match v {
                [a, b] => Ok([*a, *b]),
                _ => Err(HarnessError::Config(format!("--{name} takes two comma-separated values"))),
            };
            let demo = smallgain_demo(pair("mu", &mu)?, pair("nu", &nu)?, pair("d", &d)?)?;
            emit_smallgain_json(&demo, out.join("smallgain.json"))?;
            println!("closed form: {:?}", demo.closed_form);
            match (&demo.minimal_point, &demo.infeasible) {
                (Some(p), _) => {
                    println!("minimal contract: y1={} y2={} ({} nodes)", p[0], p[1], demo.nodes);
                    Ok(())
                }
                (None, Some(buses)) => Err(HarnessError::Infeasible { buses: buses.clone() }),
                (None, None) => Ok(()),
            }
        }
        Command::Gains {
            action: GainsCommand::Sample { common, grid },
        } => {
            let cfg = with_grid(load(&common)?, grid)?;
            let plant = cfg.build()?;
            let gains = sample_gains(&cfg, &plant)?;
            write_json(common.out.join(GAINS), &gains)?;
            for b in &gains.buses {
                let holes = b.samples.as_ref().map_or(0, |s| s.holes().len());
                println!("bus {}: {} neighbors, {} holes", b.id, b.neighbors.len(), holes);
            }
            Ok(())
        }
        Command::Epi {
            action: EpiCommand::Build { common },
        } => {
            let cfg = load(&common)?;
            let gains: GainArtifact = read_json(common.out.join(GAINS))?;
            let epi = build_epigraphs(&cfg, &gains)?;
            write_json(common.out.join(EPIGRAPHS), &epi)?;
            for b in &epi.buses {
                println!("bus {}: {} pieces", b.id, b.approx.pieces().len());
            }
            Ok(())
        }
        Command::Contract {
            action: ContractCommand::Solve { common },
        } => {
            let cfg = load(&common)?;
            let plant = cfg.build()?;
            let epi: EpigraphArtifact = read_json(common.out.join(EPIGRAPHS))?;
            let contract = solve_contract(&cfg, &plant, &epi)?;
            write_json(common.out.join(CONTRACT), &contract)?;
            println!("contract {:?} (objective {}, {} nodes)", contract.y_max, contract.objective, contract.nodes);
            Ok(())
        }
        Command::Contract {
            action: ContractCommand::Refine { common, tol },
        } => {
            let cfg = with_tol(load(&common)?, tol)?;
            let plant = cfg.build()?;
            let contract: ContractArtifact = read_json(common.out.join(CONTRACT))?;
            let refined = refine_contract(&cfg, &plant, &contract)?;
            write_json(common.out.join(REFINEMENT), &refined)?;
            println!(
                "refined {:?} after {} iterations ({:?})",
                refined.y_max, refined.iterations, refined.termination
            );
            Ok(())
        }
        Command::Rci {
            action: RciCommand::Compute { common },
        } => {
            let cfg = load(&common)?;
            let plant = cfg.build()?;
            let bounds = contract_bounds(&common.out)?;
            let rcis = compute_rcis(&cfg, &plant, &bounds)?;
            write_json(common.out.join(RCIS), &rcis)?;
            emit_rci_json(&rcis, common.out.join(RCI_PLOT))?;
            for b in &rcis.buses {
                println!("bus {}: scale {} output bound {} (contract {})", b.id, b.rci.scale, b.output_bound, b.y_max);
            }
            Ok(())
        }
        Command::Rci {
            action: RciCommand::Verify { common },
        } => {
            let cfg = load(&common)?;
            let plant = cfg.build()?;
            let rcis: RciArtifact = read_json(common.out.join(RCIS))?;
            let report = verify_rcis(&cfg, &plant, &rcis)?;
            write_json(common.out.join(VERIFICATION), &report)?;
            for b in &report.buses {
                println!("bus {}: {}/{} checks passed", b.id, b.report.passed, b.report.checks);
            }
            if !report.all_passed {
                return Err(HarnessError::Verification {
                    stage: Stage::Verify,
                    message: "some invariant sets fail grid verification".into(),
                });
            }
            if let Some(c) = check_consistency(&rcis).iter().find(|c| !c.holds) {
                return Err(HarnessError::Verification {
                    stage: Stage::Consistency,
                    message: format!("bus {}: output bound {} exceeds contract {}", c.id, c.output_bound, c.y_max),
                });
            }
            Ok(())
        }
        Command::Simulate { common, scenarios } => {
            let cfg = load(&common)?;
            let plant = cfg.build()?;
            let rcis: RciArtifact = read_json(common.out.join(RCIS))?;
            let runs = run_scenarios(&cfg, &plant, &rcis, scenarios.scenario.as_deref(), scenarios.no_supervisor)?;
            for r in &runs {
                if let Some(t) = &r.trace {
                    write_run(&common.out, t)?;
                }
            }
            summarize(&runs)
        }
        Command::Verify { common, scenario } => {
            let cfg = load(&common)?;
            let plant = cfg.build()?;
            let rcis: RciArtifact = read_json(common.out.join(RCIS))?;
            let formulas = standard_formulas(&cfg, &plant, Some(&rcis))?;
            let names: Vec<String> = match scenario {
                Some(n) => vec![cfg.scenario(&n)?.name.clone()],
                None => cfg.scenarios.iter().map(|s| s.name.clone()).collect(),
            };
            let mut failed = Vec::new();
            for name in names {
                let dir = trace_dir(&common.out, &name);
                let trace: RunTrace = read_json(dir.join("trace.json"))?;
                let verdicts = verify_trace(&trace, &formulas)?;
                write_json(dir.join("verdicts.json"), &verdicts)?;
                let violated: Vec<&str> = verdicts
                    .iter()
                    .filter(|v| v.status == VerdictStatus::Violated)
                    .map(|v| v.name.as_str())
                    .collect();
                println!("scenario {name}: {} formulas, violated {violated:?}", verdicts.len());
                if trace.supervised && !violated.is_empty() {
                    failed.push(name);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Verification {
                    stage: Stage::VerifyTrace,
                    message: format!("supervised scenarios {failed:?} violate their formulas"),
                })
            }
        }
        Command::Pipeline {
            common,
            grid,
            tol,
            scenarios,
        } => {
            let cfg = with_tol(with_grid(load(&common)?, grid)?, tol)?;
            let report = run_pipeline_with(&cfg, scenarios.scenario.as_deref(), scenarios.no_supervisor)?;
            let out = &common.out;
            write_json(out.join(GAINS), &report.gains)?;
            write_json(out.join(EPIGRAPHS), &report.epigraphs)?;
            write_json(out.join(CONTRACT), &report.contract)?;
            write_json(out.join(REFINEMENT), &report.refinement)?;
            write_json(out.join(RCIS), &report.rcis)?;
            emit_rci_json(&report.rcis, out.join(RCI_PLOT))?;
            write_json(out.join(VERIFICATION), &report.verification)?;
            write_json(out.join(REPORT), &report)?;
            for r in &report.scenarios {
                if let Some(t) = &r.trace {
                    write_run(out, t)?;
                }
            }
            println!("contract {:?}", report.refinement.y_max);
            summarize(&report.scenarios)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 4 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
