//! The `simnet` command line.
//!
//! Reports go to stdout as JSON and a short summary goes to stderr. Exit codes:
//! 0 certified, 1 a check failed (the report says which), 2 bad input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use simnet_core::small_gain::SwitchingPolicy;
use simnet_core::swing::{self, SwingParams};
use simnet_core::{LocalCertificate, ToleranceProfile};

use crate::export::export_run;
use crate::format::{load_certificates, load_network, save_certificates, save_network, write_json};
use crate::parallel::{configured_threads, thread_pool};
use crate::pipeline::{
    check_pairing, compose_network, simulate_network, summarize_run, swing_run, verify_network,
    Controller, InputError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "simnet",
    version,
    about = "Compositional simulation certificates for switched linear networks"
)]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Relative slack for semidefinite checks.
    #[arg(long, global = true, default_value_t = ToleranceProfile::default().psd_tol)]
    pub tol_psd: f64,
    /// Relative slack for equality and eigenvalue checks.
    #[arg(long, global = true, default_value_t = ToleranceProfile::default().eig_tol)]
    pub tol_eig: f64,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Network JSON file.
    pub network: PathBuf,
    /// Certificate JSON file.
    pub certificates: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    /// All nodes switch together.
    Synchronized,
    /// Nodes switch independently.
    Arbitrary,
}

impl From<PolicyArg> for SwitchingPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Synchronized => SwitchingPolicy::Synchronized,
            PolicyArg::Arbitrary => SwitchingPolicy::Arbitrary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ControllerArg {
    Zero,
    Identity,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a network (and optionally certificates) and check shapes.
    Validate {
        network: PathBuf,
        certificates: Option<PathBuf>,
    },
    /// Run the local checks and derive gains for every node.
    Verify {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Small-gain test, weights and composed certificate.
    Compose {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "synchronized")]
        policy: PolicyArg,
        /// Sampled checks of the composed inequality (0 skips).
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lockstep simulation of the concrete and abstract networks.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Steps between mode changes.
        #[arg(long, default_value_t = 5)]
        period: usize,
        #[arg(long, value_enum, default_value = "zero")]
        controller: ControllerArg,
        /// Run CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the swing-equation ring and its certificates.
    SwingGen {
        #[arg(long, default_value_t = 3)]
        nodes: usize,
        /// Network JSON.
        #[arg(short, long, default_value = "net.json")]
        out: PathBuf,
        /// Certificate JSON; defaults to `certs.json` next to the network.
        #[arg(long)]
        certs: Option<PathBuf>,
    },
    /// Certify and simulate the swing-equation ring.
    SwingRun {
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        period: usize,
        /// Run CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    nodes: usize,
    modes: Vec<usize>,
    edges: usize,
    certificates: Option<usize>,
}

#[derive(Serialize)]
struct SwingGenReport {
    nodes: usize,
    network: String,
    certificates: String,
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    composition: &'a crate::pipeline::CompositionReport,
    simulation: Option<crate::pipeline::SimulationReport>,
    csv: Option<String>,
}

struct Outcome {
    json: String,
    summary: String,
    passed: bool,
}

impl Outcome {
    fn new<T: Serialize>(report: &T, summary: String, passed: bool) -> Self {
        Self {
            json: serde_json::to_string_pretty(report).expect("reports serialize"),
            summary,
            passed,
        }
    }
}

fn load_pair(
    inputs: &Inputs,
) -> Result<(simnet_core::NetworkSpec, Vec<LocalCertificate>), InputError> {
    let spec = load_network(&inputs.network)?;
    let certs = load_certificates(&inputs.certificates)?;
    check_pairing(&spec, &certs)?;
    Ok((spec, certs))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn execute(cfg: &CliConfig) -> Result<Outcome, InputError> {
    let tol = ToleranceProfile {
        psd_tol: cfg.tol_psd,
        eig_tol: cfg.tol_eig,
        ..ToleranceProfile::default()
    };
    if !(tol.psd_tol.is_finite()
        && tol.psd_tol >= 0.0
        && tol.eig_tol.is_finite()
        && tol.eig_tol >= 0.0)
    {
        return Err(InputError::Usage(
            "tolerances must be finite and nonnegative".into(),
        ));
    }
    match &cfg.command {
        Command::Validate {
            network,
            certificates,
        } => {
            let spec = load_network(network)?;
            let certs = match certificates {
                Some(p) => {
                    let certs = load_certificates(p)?;
                    check_pairing(&spec, &certs)?;
                    for (pos, c) in certs.iter().enumerate() {
                        c.check_shapes(
                            spec.concrete.subsystem(pos),
                            spec.abstraction.as_ref().expect("checked").subsystem(pos),
                        )?;
                    }
                    Some(certs.len())
                }
                None => None,
            };
            let report = ValidateReport {
                valid: true,
                nodes: spec.concrete.len(),
                modes: spec
                    .concrete
                    .subsystems()
                    .iter()
                    .map(|s| s.mode_count())
                    .collect(),
                edges: spec.concrete.graph().edges().len(),
                certificates: certs,
            };
            let summary = format!("valid: {} nodes", report.nodes);
            Ok(Outcome::new(&report, summary, true))
        }
        Command::Verify { inputs } => {
            let (spec, certs) = load_pair(inputs)?;
            let (report, _) = verify_network(&spec, &certs, &tol)?;
            let failed = report.nodes.iter().filter(|n| n.gains.is_none()).count();
            let summary = if report.passed {
                format!("verified: {} nodes", report.nodes.len())
            } else {
                format!(
                    "verification failed on {failed} of {} nodes",
                    report.nodes.len()
                )
            };
            Ok(Outcome::new(&report, summary, report.passed))
        }
        Command::Compose {
            inputs,
            policy,
            samples,
            seed,
            out,
        } => {
            let (spec, certs) = load_pair(inputs)?;
            let (report, _) =
                compose_network(&spec, &certs, (*policy).into(), &tol, *samples, *seed)?;
            if let Some(path) = out {
                write_json(path, &report)?;
            }
            let summary = match (&report.failure, report.lambda_inf) {
                (None, Some(l)) => format!(
                    "certified: bound {:.6}, lambda_inf {l:.6}",
                    report.radius_or_bound.unwrap_or(f64::NAN)
                ),
                (Some(f), _) => format!("not certified: {f}"),
                (None, None) => "not certified".into(),
            };
            Ok(Outcome::new(&report, summary, report.satisfied))
        }
        Command::Simulate {
            inputs,
            horizon,
            seed,
            period,
            controller,
            out,
        } => {
            let (spec, certs) = load_pair(inputs)?;
            let (comp, composed) =
                compose_network(&spec, &certs, SwitchingPolicy::Synchronized, &tol, 0, *seed)?;
            let Some(composed) = composed else {
                let summary = format!(
                    "not certified: {}",
                    comp.failure.clone().unwrap_or_default()
                );
                let report = SimulateOutput {
                    composition: &comp,
                    simulation: None,
                    csv: None,
                };
                return Ok(Outcome::new(&report, summary, false));
            };
            let controller = match controller {
                ControllerArg::Zero => Controller::Zero,
                ControllerArg::Identity => Controller::Identity,
            };
            let run = simulate_network(
                &spec, &certs, &composed, controller, *period, *horizon, *seed,
            )?;
            if let Some(path) = out {
                export_run(path, &run, &spec.concrete)?;
            }
            let sim = summarize_run(&run, &composed, *seed);
            let passed = sim.passed;
            let summary = format!(
                "simulated {} steps: bound {}, decrease {}",
                horizon,
                pass_word(sim.trajectory_bound.passed),
                pass_word(sim.v_decrease.passed)
            );
            let report = SimulateOutput {
                composition: &comp,
                simulation: Some(sim),
                csv: out.as_deref().map(display),
            };
            Ok(Outcome::new(&report, summary, passed))
        }
        Command::SwingGen { nodes, out, certs } => {
            let params = SwingParams::with_nodes(*nodes);
            params.validate()?;
            let spec = swing::generate_network(&params)?;
            let cs = swing::closed_form_certificates(&params)?;
            let certs_path = certs
                .clone()
                .unwrap_or_else(|| out.parent().unwrap_or(Path::new("")).join("certs.json"));
            save_network(out, &spec)?;
            save_certificates(&certs_path, &cs)?;
            let report = SwingGenReport {
                nodes: *nodes,
                network: display(out),
                certificates: display(&certs_path),
            };
            let summary = format!("wrote {} and {}", report.network, report.certificates);
            Ok(Outcome::new(&report, summary, true))
        }
        Command::SwingRun {
            nodes,
            horizon,
            seed,
            period,
            out,
        } => {
            let params = SwingParams {
                switch_period: *period,
                ..SwingParams::with_nodes(*nodes)
            };
            params.validate()?;
            let (report, exp) = swing_run(&params, *horizon, *seed, &tol)?;
            if let Some(path) = out {
                export_run(path, &exp.run, &exp.pipeline.spec.concrete)?;
            }
            let summary = format!(
                "swing ring of {} nodes: error ratio {:.3e}, bound {}",
                nodes,
                report.error_ratio.unwrap_or(f64::NAN),
                pass_word(report.simulation.trajectory_bound.passed)
            );
            Ok(Outcome::new(&report, summary, report.passed))
        }
    }
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

fn input_error(kind: &str, message: String) -> i32 {
    eprintln!("simnet: error: {message}");
    let report = ErrorReport {
        error: ErrorDetail { kind, message },
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("serializable")
    );
    EXIT_INPUT
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match CliConfig::try_parse_from(argv) {
        Ok(cfg) => cfg,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            return input_error("usage", line.to_string());
        }
    };
    let pool = thread_pool(configured_threads());
    match pool.install(|| execute(&cfg)) {
        Ok(outcome) => {
            println!("{}", outcome.json);
            let _ = std::io::stdout().flush();
            eprintln!("{}", outcome.summary);
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
        Err(e) => input_error(e.kind(), e.to_string().replace('\n', " ")),
    }
}
