//! Lockstep simulation of a concrete network and its abstraction, with the
//! concrete inputs refined from abstract ones through the interfaces.

use alloc::vec::Vec;

use thiserror::Error;

use crate::certificate::{CertError, LocalCertificate, SAMPLE_SLACK};
use crate::linalg::Vector;
use crate::network::{NetworkError, NetworkSpec, SwitchingSignal};
use crate::small_gain::{ComposedCertificate, SmallGainError};

/// Absolute slack of the trajectory envelope.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("abstract network required")]
    MissingAbstraction,
    #[error("expected {expected} certificates, got {got}")]
    CertificateCount { expected: usize, got: usize },
    #[error("controller returned {got} inputs at step {step}, expected {expected}")]
    Controller {
        step: usize,
        expected: usize,
        got: usize,
    },
    #[error("switching signal covers {available} steps, horizon needs {needed}")]
    Horizon { needed: usize, available: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Certificate(#[from] CertError),
    #[error(transparent)]
    SmallGain(#[from] SmallGainError),
}

/// Traces of a lockstep run. Entries indexed by `k` run over `0..=horizon`;
/// inputs are recorded for every step, including the last one, where they
/// are not applied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationRun {
    pub horizon: usize,
    pub modes: Vec<Vec<usize>>,
    pub states: Vec<Vec<Vector>>,
    pub abstract_states: Vec<Vec<Vector>>,
    /// External outputs `y_ii(k)`.
    pub outputs: Vec<Vec<Vector>>,
    pub abstract_outputs: Vec<Vec<Vector>>,
    pub refined_inputs: Vec<Vec<Vector>>,
    pub abstract_inputs: Vec<Vec<Vector>>,
    /// Composed `V(x(k), x̂(k))` under `σ(k)`.
    pub v_trace: Vec<f64>,
    /// `(Σ_i |y_ii(k) − ŷ_ii(k)|²)^{1/2}`.
    pub error_trace: Vec<f64>,
    /// `(Σ_i |û_i(k)|²)^{1/2}`.
    pub u_hat_norm: Vec<f64>,
}

impl SimulationRun {
    pub fn steps(&self) -> usize {
        self.error_trace.len()
    }
}

/// Constants of the trajectory envelope
/// `|y(k) − ŷ(k)| ≤ θ βᵏ V(0)^{1/2} + γ_ext(sup_{j≤k} |û(j)|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub theta: f64,
    pub beta: f64,
    /// `γ_ext(t) = gamma_ext_coeff · t`.
    pub gamma_ext_coeff: f64,
}

impl BoundConstants {
    /// Iterating `V(k+1) ≤ (1 − λ) V(k) + ρ |û|²` gives
    /// `V(k) ≤ (1 − λ)ᵏ V(0) + ρ sup|û|² / λ`; combined with `α |y − ŷ|² ≤ V`
    /// and `√(a + b) ≤ √a + √b` this yields `θ = α^{−1/2}`,
    /// `β = (1 − λ)^{1/2}` and `γ_ext(t) = t (ρ / (λ α))^{1/2}`.
    pub fn from_certificate(composed: &ComposedCertificate) -> Self {
        let alpha = composed.alpha_total;
        let lambda = composed.lambda_inf;
        Self {
            theta: 1.0 / libm::sqrt(alpha),
            beta: libm::sqrt(1.0 - lambda),
            gamma_ext_coeff: libm::sqrt(composed.rho_ext_coeff / (lambda * alpha)),
        }
    }

    pub fn envelope(&self, k: usize, v0: f64, u_hat_sup: f64) -> f64 {
        self.theta * libm::pow(self.beta, k as f64) * libm::sqrt(v0.max(0.0))
            + self.gamma_ext_coeff * u_hat_sup
    }
}

/// Runs both networks for `horizon` steps under the shared switching signal.
///
/// At each step the abstract input comes from `controller(k, x̂(k))`, the
/// abstract internal inputs are wired from abstract outputs, the concrete
/// ones from concrete outputs, and `u_i` is the interface of node `i`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_lockstep<F>(
    spec: &NetworkSpec,
    certs: &[LocalCertificate],
    composed: &ComposedCertificate,
    x0: &[Vector],
    x_hat0: &[Vector],
    mut controller: F,
    switching: &SwitchingSignal,
    horizon: usize,
) -> Result<SimulationRun, SimError>
where
    F: FnMut(usize, &[Vector]) -> Vec<Vector>,
{
    let concrete = &spec.concrete;
    let abstraction = spec
        .abstraction
        .as_ref()
        .ok_or(SimError::MissingAbstraction)?;
    let n = concrete.len();
    if certs.len() != n {
        return Err(SimError::CertificateCount {
            expected: n,
            got: certs.len(),
        });
    }
    if let Some(available) = switching.horizon() {
        if available <= horizon {
            return Err(SimError::Horizon {
                needed: horizon + 1,
                available,
            });
        }
    }
    let mut run = SimulationRun {
        horizon,
        ..Default::default()
    };
    let mut x: Vec<Vector> = x0.to_vec();
    let mut x_hat: Vec<Vector> = x_hat0.to_vec();
    for k in 0..=horizon {
        let modes = switching.modes_at(k, concrete)?;
        let u_hat = controller(k, &x_hat);
        if u_hat.len() != n {
            return Err(SimError::Controller {
                step: k,
                expected: n,
                got: u_hat.len(),
            });
        }
        let y_full = concrete.outputs(&x, &modes)?;
        let y_hat_full = abstraction.outputs(&x_hat, &modes)?;
        let w = concrete.wire_outputs(&y_full, &modes)?;
        let w_hat = abstraction.wire_outputs(&y_hat_full, &modes)?;
        let y = concrete.external_outputs(&y_full, &modes);
        let y_hat = abstraction.external_outputs(&y_hat_full, &modes);
        let mut u = Vec::with_capacity(n);
        for (pos, cert) in certs.iter().enumerate() {
            u.push(cert.interface_input(
                &x[pos],
                &x_hat[pos],
                &u_hat[pos],
                &w_hat[pos],
                modes[pos],
            )?);
        }
        let err_sq: f64 = y
            .iter()
            .zip(&y_hat)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        let u_sq: f64 = u_hat.iter().map(Vector::norm_squared).sum();
        run.v_trace
            .push(composed.evaluate_v(certs, &x, &x_hat, &modes)?);
        run.error_trace.push(libm::sqrt(err_sq));
        run.u_hat_norm.push(libm::sqrt(u_sq));
        let (x_next, x_hat_next) = if k < horizon {
            (
                concrete.advance(&x, &u, &w, &modes),
                abstraction.advance(&x_hat, &u_hat, &w_hat, &modes),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        run.states.push(core::mem::replace(&mut x, x_next));
        run.abstract_states
            .push(core::mem::replace(&mut x_hat, x_hat_next));
        run.outputs.push(y);
        run.abstract_outputs.push(y_hat);
        run.refined_inputs.push(u);
        run.abstract_inputs.push(u_hat);
        run.modes.push(modes);
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceReport {
    pub steps: usize,
    pub violations: usize,
    /// Minimum over steps of `bound − value`.
    pub worst_margin: f64,
    pub first_violation: Option<usize>,
}

impl TraceReport {
    fn new() -> Self {
        Self {
            steps: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            first_violation: None,
        }
    }

    fn record(&mut self, k: usize, margin: f64, violated: bool) {
        self.steps += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if violated {
            self.violations += 1;
            self.first_violation.get_or_insert(k);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `error(k) ≤ θ βᵏ √V(0) + γ_ext(sup_{j≤k} |û(j)|) + 1e−9` for every `k`.
pub fn check_trajectory_bound(run: &SimulationRun, bound: &BoundConstants) -> TraceReport {
    let mut rep = TraceReport::new();
    let Some(&v0) = run.v_trace.first() else {
        return rep;
    };
    let mut sup = 0.0_f64;
    for (k, (&e, &u)) in run.error_trace.iter().zip(&run.u_hat_norm).enumerate() {
        sup = sup.max(u);
        let margin = bound.envelope(k, v0, sup) - e;
        rep.record(k, margin, margin < -BOUND_SLACK);
    }
    rep
}

/// `V(k+1) − V(k) ≤ −λ∞ V(k) + μ̄ ρ̄_ext |û(k)|²` along the run.
pub fn check_v_decrease(run: &SimulationRun, composed: &ComposedCertificate) -> TraceReport {
    let mut rep = TraceReport::new();
    for k in 0..run.v_trace.len().saturating_sub(1) {
        let v = run.v_trace[k];
        let u = run.u_hat_norm[k];
        let lhs = run.v_trace[k + 1] - v;
        let rhs = -composed.lambda_inf * v + composed.external_gain(u * u);
        let margin = rhs - lhs;
        rep.record(k, margin, margin < -SAMPLE_SLACK * (1.0 + v.abs()));
    }
    rep
}

/// `V(k) ≥ α · error(k)²` at every step.
pub fn check_v_dominates_error(run: &SimulationRun, composed: &ComposedCertificate) -> TraceReport {
    let mut rep = TraceReport::new();
    for (k, (&v, &e)) in run.v_trace.iter().zip(&run.error_trace).enumerate() {
        let margin = v - composed.alpha_total * e * e;
        rep.record(k, margin, margin < -SAMPLE_SLACK * (1.0 + v.abs()));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, SymMatrix};
    use crate::network::{Block, Mode, SwitchedLinearSubsystem};
    use crate::small_gain::{SwitchingPolicy, Weights};
    use alloc::vec;

    fn scalar(a: f64) -> SwitchedLinearSubsystem {
        SwitchedLinearSubsystem {
            id: 0,
            modes: vec![Mode {
                a: Matrix::from_element(1, 1, a),
                b: Matrix::from_element(1, 1, 1.0),
                c: Matrix::from_element(1, 1, 1.0),
                d: Matrix::zeros(1, 0),
                out_blocks: vec![Block::new(0, 0..1)],
                in_blocks: vec![],
            }],
        }
    }

    fn setup(a: f64) -> (NetworkSpec, Vec<LocalCertificate>, ComposedCertificate) {
        let spec = NetworkSpec::new(vec![scalar(a)], &[], Some(vec![scalar(a)])).unwrap();
        let m = |v| Matrix::from_element(1, 1, v);
        let cert = LocalCertificate {
            id: 0,
            kappa: 0.5,
            m: vec![SymMatrix::identity(1)],
            k: vec![m(0.0)],
            p: m(1.0),
            q: vec![m(0.0)],
            r: vec![m(1.0)],
            t: vec![Matrix::zeros(1, 0)],
            transitions: None,
        };
        let composed = ComposedCertificate {
            mu: Weights::PerNode(vec![1.0]),
            lambda_inf: 0.5,
            alpha_total: 1.0,
            rho_ext_coeff: 0.0,
            p_exp: 2,
            q_exp: 2,
            b_exp: 2,
            policy: SwitchingPolicy::Synchronized,
        };
        (spec, vec![cert], composed)
    }

    #[test]
    fn deadbeat_error_vanishes_after_one_step() {
        let (spec, certs, composed) = setup(0.0);
        let run = simulate_lockstep(
            &spec,
            &certs,
            &composed,
            &[Vector::from_element(1, 3.0)],
            &[Vector::from_element(1, -1.0)],
            |_, xh| xh.iter().map(|_| Vector::zeros(1)).collect(),
            &SwitchingSignal::constant(0),
            4,
        )
        .unwrap();
        assert_eq!(run.steps(), 5);
        assert_eq!(run.error_trace[0], 4.0);
        assert!(run.error_trace[1..].iter().all(|&e| e == 0.0));
        let bound = BoundConstants::from_certificate(&composed);
        assert!(check_trajectory_bound(&run, &bound).passed());
        assert!(check_v_decrease(&run, &composed).passed());
        assert!(check_v_dominates_error(&run, &composed).passed());
    }

    #[test]
    fn zero_error_zero_input() {
        let (spec, certs, composed) = setup(0.3);
        let x = [Vector::from_element(1, 2.0)];
        let run = simulate_lockstep(
            &spec,
            &certs,
            &composed,
            &x,
            &x,
            |_, xh| xh.iter().map(|_| Vector::zeros(1)).collect(),
            &SwitchingSignal::constant(0),
            10,
        )
        .unwrap();
        assert!(run.error_trace.iter().all(|&e| e == 0.0));
        let rep = check_trajectory_bound(&run, &BoundConstants::from_certificate(&composed));
        assert!(rep.passed());
        assert_eq!(rep.steps, 11);
    }

    #[test]
    fn geometric_decay_without_input() {
        let (spec, certs, composed) = setup(0.3);
        let run = simulate_lockstep(
            &spec,
            &certs,
            &composed,
            &[Vector::from_element(1, 1.0)],
            &[Vector::zeros(1)],
            |_, xh| xh.iter().map(|_| Vector::zeros(1)).collect(),
            &SwitchingSignal::constant(0),
            20,
        )
        .unwrap();
        for k in 0..20 {
            assert!(run.v_trace[k + 1] <= (1.0 - composed.lambda_inf) * run.v_trace[k]);
        }
    }

    #[test]
    fn controller_and_horizon_errors() {
        let (spec, certs, composed) = setup(0.3);
        let x = [Vector::zeros(1)];
        let err = simulate_lockstep(
            &spec,
            &certs,
            &composed,
            &x,
            &x,
            |_, _| vec![],
            &SwitchingSignal::constant(0),
            2,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Controller { step: 0, .. }));
        let table = SwitchingSignal::Table(vec![vec![0]; 2]);
        let err = simulate_lockstep(
            &spec,
            &certs,
            &composed,
            &x,
            &x,
            |_, xh| xh.to_vec(),
            &table,
            2,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Horizon { .. }));
    }

    #[test]
    fn empty_run_reports_nothing() {
        let run = SimulationRun::default();
        let bound = BoundConstants {
            theta: 1.0,
            beta: 0.5,
            gamma_ext_coeff: 0.0,
        };
        assert_eq!(check_trajectory_bound(&run, &bound).steps, 0);
    }
}
