//! End-to-end steps behind the CLI subcommands, returning serializable
//! reports.

use rayon::prelude::*;
use serde::Serialize;
use simnet_core::certificate::{
    derive_gains, verify_decay, verify_output_dominance, verify_structure,
};
use simnet_core::linalg::Vector;
use simnet_core::network::{NetworkError, NetworkSpec, SwitchingSignal};
use simnet_core::sampling::ScaledBoxSampler;
use simnet_core::simulator::{
    check_trajectory_bound, check_v_decrease, check_v_dominates_error, simulate_lockstep,
    BoundConstants, SimError, SimulationRun, TraceReport,
};
use simnet_core::small_gain::{
    build_gain_operator, check_small_gain, compose_certificate, construct_mu, ComposedCertificate,
    SmallGainError, SwitchingPolicy, Weights,
};
use simnet_core::swing::{self, SwingError, SwingParams};
use simnet_core::{CertError, LocalCertificate, LocalGains, ToleranceProfile};
use thiserror::Error;

use crate::parallel::par_check_composed;

/// Errors caused by the inputs rather than by a failed check.
#[derive(Debug, Error)]
pub enum InputError {
    #[error(transparent)]
    Format(#[from] crate::format::FormatError),
    #[error(transparent)]
    Export(#[from] crate::export::ExportError),
    #[error("network has {nodes} nodes but {certs} certificates were given")]
    CertificateCount { nodes: usize, certs: usize },
    #[error("certificate {position} has id {found}, expected {expected}")]
    CertificateId {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("network file has no abstract_subsystems")]
    MissingAbstraction,
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Certificate(#[from] CertError),
    #[error(transparent)]
    SmallGain(#[from] SmallGainError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Swing(#[from] SwingError),
}

impl InputError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Format(e) => e.kind(),
            Self::Export(_) => "io",
            Self::CertificateCount { .. } | Self::CertificateId { .. } => "certificate",
            Self::MissingAbstraction | Self::Network(_) => "network",
            Self::Usage(_) => "usage",
            Self::Certificate(_) => "certificate",
            Self::SmallGain(_) => "small_gain",
            Self::Simulation(_) => "simulation",
            Self::Swing(_) => "swing",
        }
    }
}

pub fn check_pairing(spec: &NetworkSpec, certs: &[LocalCertificate]) -> Result<(), InputError> {
    let nodes = spec.concrete.len();
    if certs.len() != nodes {
        return Err(InputError::CertificateCount {
            nodes,
            certs: certs.len(),
        });
    }
    for (pos, (sub, cert)) in spec.concrete.subsystems().iter().zip(certs).enumerate() {
        if sub.id != cert.id {
            return Err(InputError::CertificateId {
                position: pos,
                expected: sub.id,
                found: cert.id,
            });
        }
    }
    if spec.abstraction.is_none() {
        return Err(InputError::MissingAbstraction);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GainsReport {
    pub alpha: f64,
    pub lambda: f64,
    pub rho_int: f64,
    pub rho_ext: f64,
    pub p_exp: u32,
    pub q_exp: u32,
}

impl From<&LocalGains> for GainsReport {
    fn from(g: &LocalGains) -> Self {
        Self {
            alpha: g.alpha,
            lambda: g.lambda,
            rho_int: g.rho_int,
            rho_ext: g.rho_ext,
            p_exp: g.p_exp,
            q_exp: g.q_exp,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub passed: bool,
    /// Smallest eigenvalue margin, or largest residual for equality checks.
    pub value: f64,
    pub threshold: f64,
    pub violation: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeReport {
    pub id: usize,
    pub output_dominance: CheckSummary,
    pub decay: CheckSummary,
    pub structure: CheckSummary,
    pub gains: Option<GainsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub nodes: Vec<NodeReport>,
}

fn verify_node(
    cert: &LocalCertificate,
    spec: &NetworkSpec,
    pos: usize,
    tol: &ToleranceProfile,
) -> Result<(NodeReport, Option<LocalGains>), CertError> {
    let c = spec.concrete.subsystem(pos);
    let a = spec.abstraction.as_ref().expect("checked").subsystem(pos);
    let dom = verify_output_dominance(cert, c, a, tol)?;
    let worst = dom
        .modes
        .iter()
        .min_by(|x, y| x.margin.min_eigenvalue.total_cmp(&y.margin.min_eigenvalue))
        .expect("at least one mode");
    let output_dominance = CheckSummary {
        passed: dom.passed(),
        value: worst.margin.min_eigenvalue,
        threshold: worst.margin.threshold,
        violation: dom.first_violation().map(|m| {
            format!(
                "mode {}: min eigenvalue {:e}, output residual {:e}",
                m.mode, m.margin.min_eigenvalue, m.output_residual
            )
        }),
    };
    let dec = verify_decay(cert, c, tol)?;
    let worst = dec
        .pairs
        .iter()
        .min_by(|x, y| x.margin.min_eigenvalue.total_cmp(&y.margin.min_eigenvalue))
        .expect("at least one pair");
    let decay = CheckSummary {
        passed: dec.passed(),
        value: worst.margin.min_eigenvalue,
        threshold: worst.margin.threshold,
        violation: dec.first_violation().map(|p| {
            format!(
                "pair ({}, {}): min eigenvalue {:e}",
                p.from, p.to, p.margin.min_eigenvalue
            )
        }),
    };
    let st = verify_structure(cert, c, a, tol)?;
    let worst = st
        .modes
        .iter()
        .map(|m| m.state_residual.max(m.coupling_residual))
        .fold(0.0, f64::max);
    let structure = CheckSummary {
        passed: st.passed(),
        value: worst,
        threshold: st
            .modes
            .iter()
            .map(|m| m.bound)
            .fold(f64::INFINITY, f64::min),
        violation: st.first_violation().map(|m| {
            format!(
                "mode {}: residuals {:e}, {:e} > {:e}",
                m.mode, m.state_residual, m.coupling_residual, m.bound
            )
        }),
    };
    let gains = if dom.passed() && dec.passed() && st.passed() {
        Some(derive_gains(cert, c, a, tol)?)
    } else {
        None
    };
    Ok((
        NodeReport {
            id: cert.id,
            output_dominance,
            decay,
            structure,
            gains: gains.as_ref().map(GainsReport::from),
        },
        gains,
    ))
}

/// Runs the three local checks and extracts gains for every node.
pub fn verify_network(
    spec: &NetworkSpec,
    certs: &[LocalCertificate],
    tol: &ToleranceProfile,
) -> Result<(VerifyReport, Option<Vec<LocalGains>>), InputError> {
    check_pairing(spec, certs)?;
    let results = certs
        .par_iter()
        .enumerate()
        .map(|(pos, cert)| verify_node(cert, spec, pos, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = results.iter().all(|(_, g)| g.is_some());
    let gains = passed.then(|| results.iter().map(|(_, g)| g.expect("passed")).collect());
    let nodes = results.into_iter().map(|(r, _)| r).collect();
    Ok((VerifyReport { passed, nodes }, gains))
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    pub worst_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompositionReport {
    pub satisfied: bool,
    pub policy: &'static str,
    pub radius_or_bound: Option<f64>,
    pub lambda_inf: Option<f64>,
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
    pub alpha_total: Option<f64>,
    pub rho_ext_coeff: Option<f64>,
    pub max_column_sum: Option<f64>,
    pub mu: Vec<f64>,
    pub dissipation: Option<SampleSummary>,
    pub failure: Option<String>,
}

pub fn policy_name(p: SwitchingPolicy) -> &'static str {
    match p {
        SwitchingPolicy::Synchronized => "synchronized",
        SwitchingPolicy::Arbitrary => "arbitrary",
    }
}

impl CompositionReport {
    fn failed(policy: SwitchingPolicy, failure: String) -> Self {
        Self {
            satisfied: false,
            policy: policy_name(policy),
            radius_or_bound: None,
            lambda_inf: None,
            mu_min: None,
            mu_max: None,
            alpha_total: None,
            rho_ext_coeff: None,
            max_column_sum: None,
            mu: Vec::new(),
            dissipation: None,
            failure: Some(failure),
        }
    }
}

/// Verification, small-gain test, weights and composed certificate. When
/// `samples > 0` the composed dissipation inequality is also sampled.
pub fn compose_network(
    spec: &NetworkSpec,
    certs: &[LocalCertificate],
    policy: SwitchingPolicy,
    tol: &ToleranceProfile,
    samples: usize,
    seed: u64,
) -> Result<(CompositionReport, Option<ComposedCertificate>), InputError> {
    let (verify, gains) = verify_network(spec, certs, tol)?;
    let Some(gains) = gains else {
        let bad: Vec<String> = verify
            .nodes
            .iter()
            .filter(|n| n.gains.is_none())
            .map(|n| n.id.to_string())
            .collect();
        return Ok((
            CompositionReport::failed(
                policy,
                format!("local verification failed for nodes {}", bad.join(", ")),
            ),
            None,
        ));
    };
    let op = build_gain_operator(&gains, &spec.concrete, policy)?;
    let sg = check_small_gain(&op, tol)?;
    let mut report = CompositionReport::failed(policy, String::new());
    report.radius_or_bound = Some(sg.radius_or_bound);
    report.max_column_sum = Some(sg.max_column_sum);
    if !sg.satisfied {
        report.failure = Some(format!(
            "small-gain bound {} is not below 1",
            sg.radius_or_bound
        ));
        return Ok((report, None));
    }
    let core = match construct_mu(&op, tol) {
        Ok(core) => core,
        Err(e @ (SmallGainError::NoFeasibleRate { .. } | SmallGainError::WeightCheck { .. })) => {
            report.failure = Some(e.to_string());
            return Ok((report, None));
        }
        Err(e) => return Err(e.into()),
    };
    let composed = compose_certificate(&core, &op);
    report.lambda_inf = Some(composed.lambda_inf);
    report.mu_min = Some(composed.mu.min());
    report.mu_max = Some(composed.mu.max());
    report.alpha_total = Some(composed.alpha_total);
    report.rho_ext_coeff = Some(composed.rho_ext_coeff);
    report.mu = match &composed.mu {
        Weights::PerNode(mu) => mu.clone(),
        Weights::Uniform(w) => vec![*w; spec.concrete.len()],
    };
    report.failure = None;
    report.satisfied = true;
    if samples > 0 {
        let d = par_check_composed(&composed, spec, certs, samples, seed)?;
        report.satisfied = d.passed();
        if !d.passed() {
            report.failure = Some(format!(
                "{} sampled violations of the composed inequality",
                d.violations
            ));
        }
        report.dissipation = Some(SampleSummary {
            samples,
            seed,
            violations: d.violations,
            worst_slack: d.worst_slack,
        });
    }
    Ok((report, Some(composed)))
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub passed: bool,
    pub steps: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub first_violation: Option<usize>,
}

impl From<TraceReport> for TraceSummary {
    fn from(r: TraceReport) -> Self {
        Self {
            passed: r.passed(),
            steps: r.steps,
            violations: r.violations,
            worst_margin: r.worst_margin,
            first_violation: r.first_violation,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub theta: f64,
    pub beta: f64,
    pub gamma_ext_coeff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub passed: bool,
    pub horizon: usize,
    pub seed: u64,
    pub bound: BoundReport,
    pub trajectory_bound: TraceSummary,
    pub v_decrease: TraceSummary,
    pub v_dominates_error: TraceSummary,
    pub error_initial: Option<f64>,
    pub error_final: Option<f64>,
}

pub fn summarize_run(
    run: &SimulationRun,
    composed: &ComposedCertificate,
    seed: u64,
) -> SimulationReport {
    let bound = BoundConstants::from_certificate(composed);
    let trajectory_bound: TraceSummary = check_trajectory_bound(run, &bound).into();
    let v_decrease: TraceSummary = check_v_decrease(run, composed).into();
    let v_dominates_error: TraceSummary = check_v_dominates_error(run, composed).into();
    SimulationReport {
        passed: trajectory_bound.passed && v_decrease.passed && v_dominates_error.passed,
        horizon: run.horizon,
        seed,
        bound: BoundReport {
            theta: bound.theta,
            beta: bound.beta,
            gamma_ext_coeff: bound.gamma_ext_coeff,
        },
        trajectory_bound,
        v_decrease,
        v_dominates_error,
        error_initial: run.error_trace.first().copied(),
        error_final: run.error_trace.last().copied(),
    }
}

/// Abstract controller used by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    /// `û ≡ 0`.
    Zero,
    /// `û = x̂`; needs square abstract input matrices.
    Identity,
}

/// Seeded initial states in `[−1, 1]` per coordinate, concrete then abstract
/// for each node.
pub fn initial_states(spec: &NetworkSpec, seed: u64) -> (Vec<Vector>, Vec<Vector>) {
    let abs = spec.abstraction.as_ref().expect("checked");
    let mut sampler = ScaledBoxSampler::new(seed);
    spec.concrete
        .subsystems()
        .iter()
        .zip(abs.subsystems())
        .map(|(c, a)| {
            (
                sampler.unit_box(c.dims().state),
                sampler.unit_box(a.dims().state),
            )
        })
        .unzip()
}

/// Every node cycles through its own modes, switching every `period` steps.
pub fn cycling_signal(spec: &NetworkSpec, period: usize) -> SwitchingSignal {
    match spec.concrete.uniform_mode_count() {
        Some(r) => SwitchingSignal::cycling(period, r),
        None => SwitchingSignal::PerNode(
            spec.concrete
                .subsystems()
                .iter()
                .map(|s| (period, (0..s.mode_count()).collect()))
                .collect(),
        ),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_network(
    spec: &NetworkSpec,
    certs: &[LocalCertificate],
    composed: &ComposedCertificate,
    controller: Controller,
    period: usize,
    horizon: usize,
    seed: u64,
) -> Result<SimulationRun, InputError> {
    if period == 0 {
        return Err(InputError::Usage("--period must be positive".into()));
    }
    let abs = spec
        .abstraction
        .as_ref()
        .ok_or(InputError::MissingAbstraction)?;
    if controller == Controller::Identity {
        for sub in abs.subsystems() {
            let d = sub.dims();
            if d.state != d.input {
                return Err(InputError::Usage(format!(
                    "identity controller needs equal abstract state and input widths (node {})",
                    sub.id
                )));
            }
        }
    }
    let (x0, x_hat0) = initial_states(spec, seed);
    let switching = cycling_signal(spec, period);
    let run = simulate_lockstep(
        spec,
        certs,
        composed,
        &x0,
        &x_hat0,
        |_, x_hat| match controller {
            Controller::Identity => x_hat.to_vec(),
            Controller::Zero => abs
                .subsystems()
                .iter()
                .map(|s| Vector::zeros(s.dims().input))
                .collect(),
        },
        &switching,
        horizon,
    )?;
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct SwingRunReport {
    pub passed: bool,
    pub nodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub alpha: f64,
    pub lambda: f64,
    pub rho_int_formula: f64,
    pub rho_int_reference: f64,
    pub rho_ext_formula: f64,
    pub rho_ext_reference: f64,
    pub small_gain_bound_formula: f64,
    pub small_gain_bound_reference: f64,
    pub lambda_inf: f64,
    pub simulation: SimulationReport,
    /// `error(horizon) / error(0)`.
    pub error_ratio: Option<f64>,
    pub max_final_frequency: Option<f64>,
    pub max_initial_magnitude: Option<f64>,
}

pub fn swing_run(
    params: &SwingParams,
    horizon: usize,
    seed: u64,
    tol: &ToleranceProfile,
) -> Result<(SwingRunReport, swing::SwingExperiment), InputError> {
    let q = swing::reproduce_quantities(params, tol)?;
    let exp = swing::run_experiment(params, horizon, seed, tol)?;
    let simulation = summarize_run(&exp.run, &exp.pipeline.composed, seed);
    let run = &exp.run;
    let error_ratio = match (run.error_trace.first(), run.error_trace.last()) {
        (Some(&e0), Some(&e)) if e0 > 0.0 => Some(e / e0),
        _ => None,
    };
    let max_abs = |vs: &[Vector]| {
        vs.iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |a, b| a.max(b.abs()))
    };
    let max_final_frequency = run.outputs.last().map(|y| max_abs(y));
    let max_initial_magnitude = run
        .states
        .first()
        .map(|x| max_abs(x).max(max_abs(&run.abstract_states[0])));
    let report = SwingRunReport {
        passed: simulation.passed,
        nodes: params.n_nodes,
        horizon,
        seed,
        alpha: q.alpha,
        lambda: q.lambda,
        rho_int_formula: q.rho_int_formula,
        rho_int_reference: q.rho_int_reference,
        rho_ext_formula: q.rho_ext_formula,
        rho_ext_reference: q.rho_ext_reference,
        small_gain_bound_formula: q.small_gain_bound_formula,
        small_gain_bound_reference: q.small_gain_bound_reference,
        lambda_inf: exp.pipeline.composed.lambda_inf,
        simulation,
        error_ratio,
        max_final_frequency,
        max_initial_magnitude,
    };
    Ok((report, exp))
}
