//! Ring of swing-equation buses whose topology switches between
//! "fed by the predecessor" (mode 0) and "fed by the successor" (mode 1).
//!
//! Each bus has state `(δ, ω)` and
//!
//! ```text
//! x⁺ = [1, 1; −l/m, 1 − d/m] x + [0; l/m] δ_g + [0; 1/m] u,
//! y  = [ω; δ]
//! ```
//!
//! where `g` is the feeding neighbour of the active mode. The first output row
//! is external, the second is sent to the node this bus feeds.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::certificate::{derive_gains, CertError, LocalCertificate, LocalGains};
use crate::linalg::{Matrix, SymMatrix, ToleranceProfile, Vector};
use crate::network::{
    Block, Mode, NetworkError, NetworkSpec, SwitchedLinearSubsystem, SwitchingSignal,
};
use crate::sampling::ScaledBoxSampler;
use crate::simulator::{simulate_lockstep, BoundConstants, SimError, SimulationRun};
use crate::small_gain::{
    check_small_gain, compose_certificate, construct_mu, templated_operator, ComposedCertificate,
    NodeTemplate, SmallGainError, SmallGainReport,
};

/// Reference values reported for the default parameters.
pub const RHO_INT_REFERENCE: f64 = 0.1455;
pub const RHO_EXT_REFERENCE: f64 = 8.1487e-11;
pub const SMALL_GAIN_REFERENCE: f64 = 0.7275;

/// Certificate matrix used for both modes.
pub const M_CERT: [f64; 4] = [11.20, 12.50, 12.50, 17.83];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwingError {
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error(transparent)]
    Matrix(#[from] crate::linalg::MatrixError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Certificate(#[from] CertError),
    #[error(transparent)]
    SmallGain(#[from] SmallGainError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwingParams {
    pub n_nodes: usize,
    /// Inertia.
    pub m: f64,
    /// Damping.
    pub d: f64,
    /// Self coupling; carried for completeness, it does not enter the model.
    pub l_self: f64,
    /// Coupling to the predecessor (mode 0).
    pub l_prev: f64,
    /// Coupling to the successor (mode 1).
    pub l_next: f64,
    pub kappa: f64,
    pub switch_period: usize,
}

impl Default for SwingParams {
    fn default() -> Self {
        Self {
            n_nodes: 3,
            m: 1e5,
            d: 1.0,
            l_self: 4e3,
            l_prev: 4e3,
            l_next: 4e3,
            kappa: 0.2,
            switch_period: 5,
        }
    }
}

impl SwingParams {
    pub fn with_nodes(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SwingError> {
        let bad = |m| Err(SwingError::Params(m));
        if self.n_nodes < 3 {
            return bad("a ring needs at least 3 nodes");
        }
        if !(self.m > 0.0 && self.m.is_finite() && self.d > 0.0 && self.d.is_finite()) {
            return bad("m and d must be positive and finite");
        }
        if self.d / (2.0 * self.m) >= 1.0 {
            return bad("d / (2m) must be below 1");
        }
        if ![self.l_self, self.l_prev, self.l_next]
            .iter()
            .all(|l| l.is_finite())
        {
            return bad("couplings must be finite");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad("kappa must lie in (0, 1)");
        }
        if self.switch_period == 0 {
            return bad("switch period must be positive");
        }
        Ok(())
    }

    /// `c = 1 − d/(2m)`.
    pub fn c(&self) -> f64 {
        1.0 - self.d / (2.0 * self.m)
    }

    /// Coupling of mode `s`.
    pub fn coupling(&self, s: usize) -> f64 {
        if s == 0 {
            self.l_prev
        } else {
            self.l_next
        }
    }

    fn source(&self, i: usize, s: usize) -> usize {
        let n = self.n_nodes;
        if s == 0 {
            (i + n - 1) % n
        } else {
            (i + 1) % n
        }
    }

    fn dest(&self, i: usize, s: usize) -> usize {
        self.source(i, 1 - s)
    }

    /// `B̂ = d/(2m) − 0.6`.
    pub fn b_hat(&self) -> f64 {
        self.d / (2.0 * self.m) - 0.6
    }
}

fn blocks(params: &SwingParams, i: usize, s: usize) -> (Vec<Block>, Vec<Block>) {
    (
        vec![Block::new(i, 0..1), Block::new(params.dest(i, s), 1..2)],
        vec![Block::new(params.source(i, s), 0..1)],
    )
}

fn output_matrix() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

/// Bus `i` of the ring.
pub fn concrete_subsystem(params: &SwingParams, i: usize) -> SwitchedLinearSubsystem {
    let (m, d) = (params.m, params.d);
    SwitchedLinearSubsystem {
        id: i,
        modes: (0..2)
            .map(|s| {
                let l = params.coupling(s);
                let (out_blocks, in_blocks) = blocks(params, i, s);
                Mode {
                    a: Matrix::from_row_slice(2, 2, &[1.0, 1.0, -l / m, 1.0 - d / m]),
                    b: Matrix::from_row_slice(2, 1, &[0.0, 1.0 / m]),
                    c: output_matrix(),
                    d: Matrix::from_row_slice(2, 1, &[0.0, l / m]),
                    out_blocks,
                    in_blocks,
                }
            })
            .collect(),
    }
}

/// `P = [1; c − 1]`.
pub fn projection(params: &SwingParams) -> Matrix {
    Matrix::from_row_slice(2, 1, &[1.0, params.c() - 1.0])
}

/// Scalar abstraction `x̂⁺ = c x̂ + B̂ û` with outputs `C P x̂` and no coupling.
pub fn abstract_subsystem(params: &SwingParams, i: usize) -> SwitchedLinearSubsystem {
    let p = projection(params);
    SwitchedLinearSubsystem {
        id: i,
        modes: (0..2)
            .map(|s| {
                let (out_blocks, in_blocks) = blocks(params, i, s);
                Mode {
                    a: Matrix::from_element(1, 1, params.c()),
                    b: Matrix::from_element(1, 1, params.b_hat()),
                    c: output_matrix() * &p,
                    d: Matrix::zeros(1, 1),
                    out_blocks,
                    in_blocks,
                }
            })
            .collect(),
    }
}

/// The ring and its abstraction.
pub fn generate_network(params: &SwingParams) -> Result<NetworkSpec, SwingError> {
    params.validate()?;
    let n = params.n_nodes;
    let concrete = (0..n).map(|i| concrete_subsystem(params, i)).collect();
    let abstraction = (0..n).map(|i| abstract_subsystem(params, i)).collect();
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        edges.push((params.source(i, 0), i));
        edges.push((params.source(i, 1), i));
    }
    Ok(NetworkSpec::new(concrete, &edges, Some(abstraction))?)
}

/// Closed-form certificate of bus `i`: `K = [l − 9m/16, d − 1.5m]`,
/// `Q = l`, `T = −l`, `R = (BᵀMB)⁻¹ BᵀM P B̂`, and the fixed `M`.
pub fn closed_form_certificate(
    params: &SwingParams,
    i: usize,
) -> Result<LocalCertificate, SwingError> {
    params.validate()?;
    let m_cert = SymMatrix::from_row_slice(2, &M_CERT)?;
    let p = projection(params);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0 / params.m]);
    let bm = b.transpose() * m_cert.matrix();
    let r = (&bm * &p * params.b_hat())[(0, 0)] / (&bm * &b)[(0, 0)];
    let per_mode =
        |f: &dyn Fn(f64) -> Matrix| (0..2).map(|s| f(params.coupling(s))).collect::<Vec<_>>();
    Ok(LocalCertificate {
        id: i,
        kappa: params.kappa,
        m: vec![m_cert.clone(), m_cert],
        k: per_mode(&|l| {
            Matrix::from_row_slice(
                1,
                2,
                &[l - 9.0 / 16.0 * params.m, params.d - 1.5 * params.m],
            )
        }),
        p,
        q: per_mode(&|l| Matrix::from_element(1, 1, l)),
        r: vec![Matrix::from_element(1, 1, r); 2],
        t: per_mode(&|l| Matrix::from_element(1, 1, -l)),
        transitions: None,
    })
}

/// Certificates of every bus.
pub fn closed_form_certificates(params: &SwingParams) -> Result<Vec<LocalCertificate>, SwingError> {
    (0..params.n_nodes)
        .map(|i| closed_form_certificate(params, i))
        .collect()
}

/// Computed gains next to the reference values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingQuantities {
    pub alpha: f64,
    pub lambda: f64,
    pub rho_int_formula: f64,
    pub rho_int_reference: f64,
    pub rho_ext_formula: f64,
    pub rho_ext_reference: f64,
    /// `ρ_int N̄ / (α λ)`.
    pub small_gain_bound_formula: f64,
    pub small_gain_bound_reference: f64,
    /// Small-gain verdict from the computed gains.
    pub satisfied: bool,
    pub satisfied_reference: bool,
}

pub fn reproduce_quantities(
    params: &SwingParams,
    tol: &ToleranceProfile,
) -> Result<SwingQuantities, SwingError> {
    let cert = closed_form_certificate(params, 0)?;
    let g = derive_gains(
        &cert,
        &concrete_subsystem(params, 0),
        &abstract_subsystem(params, 0),
        tol,
    )?;
    let bound = g.rho_int / (g.alpha * g.lambda);
    let reference = RHO_INT_REFERENCE / (g.alpha * g.lambda);
    Ok(SwingQuantities {
        alpha: g.alpha,
        lambda: g.lambda,
        rho_int_formula: g.rho_int,
        rho_int_reference: RHO_INT_REFERENCE,
        rho_ext_formula: g.rho_ext,
        rho_ext_reference: RHO_EXT_REFERENCE,
        small_gain_bound_formula: bound,
        small_gain_bound_reference: SMALL_GAIN_REFERENCE,
        satisfied: bound < 1.0,
        satisfied_reference: reference < 1.0,
    })
}

/// One template covering every bus: one feeding neighbour and one fed
/// neighbour per topology.
pub fn ring_template(gains: LocalGains) -> NodeTemplate {
    NodeTemplate {
        gains,
        in_degree: 1,
        out_degree: 1,
        feeds: vec![0],
    }
}

/// Certified pipeline for the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingPipeline {
    pub spec: NetworkSpec,
    pub certs: Vec<LocalCertificate>,
    pub gains: LocalGains,
    pub small_gain: SmallGainReport,
    pub composed: ComposedCertificate,
}

/// Generates the ring, verifies every certificate, and composes the templated
/// network certificate.
pub fn certify(params: &SwingParams, tol: &ToleranceProfile) -> Result<SwingPipeline, SwingError> {
    let spec = generate_network(params)?;
    let certs = closed_form_certificates(params)?;
    let abstraction = spec
        .abstraction
        .as_ref()
        .expect("generated with abstraction");
    let mut gains = None;
    for (pos, cert) in certs.iter().enumerate() {
        let g = derive_gains(
            cert,
            spec.concrete.subsystem(pos),
            abstraction.subsystem(pos),
            tol,
        )?;
        gains.get_or_insert(g);
    }
    let gains = gains.expect("at least three nodes");
    let op = templated_operator(vec![ring_template(gains)])?;
    let small_gain = check_small_gain(&op, tol)?;
    if !small_gain.satisfied {
        return Err(SmallGainError::NotSatisfied {
            radius: small_gain.radius_or_bound,
        }
        .into());
    }
    let core = construct_mu(&op, tol)?;
    let composed = compose_certificate(&core, &op);
    Ok(SwingPipeline {
        spec,
        certs,
        gains,
        small_gain,
        composed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwingExperiment {
    pub pipeline: SwingPipeline,
    pub bound: BoundConstants,
    pub run: SimulationRun,
}

/// Seeded initial conditions in `[−1, 1]` per coordinate: concrete state then
/// abstract state, node by node.
pub fn initial_conditions(n_nodes: usize, seed: u64) -> (Vec<Vector>, Vec<Vector>) {
    let mut sampler = ScaledBoxSampler::new(seed);
    (0..n_nodes)
        .map(|_| (sampler.unit_box(2), sampler.unit_box(1)))
        .unzip()
}

/// Runs the ring with abstract controller `û = x̂` and synchronized switching
/// every `switch_period` steps.
pub fn run_experiment(
    params: &SwingParams,
    horizon: usize,
    seed: u64,
    tol: &ToleranceProfile,
) -> Result<SwingExperiment, SwingError> {
    let pipeline = certify(params, tol)?;
    let (x0, x_hat0) = initial_conditions(params.n_nodes, seed);
    let switching = SwitchingSignal::cycling(params.switch_period, 2);
    let run = simulate_lockstep(
        &pipeline.spec,
        &pipeline.certs,
        &pipeline.composed,
        &x0,
        &x_hat0,
        |_, x_hat| x_hat.to_vec(),
        &switching,
        horizon,
    )?;
    let bound = BoundConstants::from_certificate(&pipeline.composed);
    Ok(SwingExperiment {
        pipeline,
        bound,
        run,
    })
}
