//! Gain operators, the small-gain test and the composed network certificate.
//!
//! Local gains are collected into `Λ = diag(λ_i)` and `Γ = (γ_ij)` with
//! `γ_ij = ρ_int,i N̄_i / α_j` for `j ∈ I_i`. Because the interconnection
//! depends on the active modes, one `Γ` is built per topology (see
//! [`SwitchingPolicy`]) and a single weight vector `μ` must satisfy
//!
//! ```text
//! (−λ_j μ_j + Σ_i μ_i γ_ij) / μ_j ≤ −λ∞      for every topology and every j.
//! ```
//!
//! Infinite networks are handled through [`NodeTemplate`]s with uniform gains,
//! where the maximal column sum of `Ψ = Λ⁻¹Γ` bounds the spectral radius.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::certificate::{CertError, LocalCertificate, LocalGains};
use crate::linalg::{spectral_radius, Matrix, MatrixError, ToleranceProfile, Vector};
use crate::network::{Network, NetworkError, NetworkSpec};
use crate::sampling::ScaledBoxSampler;

/// Strict margin for `r(Ψ) < 1`.
pub const RADIUS_MARGIN: f64 = 1e-9;
/// Margin required of the shifted operator during the `λ∞` bisection.
pub const FEASIBILITY_MARGIN: f64 = 1e-6;
/// Absolute tolerance of the `λ∞` bisection.
pub const BISECTION_TOL: f64 = 1e-6;
/// Slack admitted in the componentwise weight inequality.
pub const MU_CHECK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmallGainError {
    #[error("expected gains for {expected} nodes, got {got}")]
    MissingGains { expected: usize, got: usize },
    #[error("synchronized switching requires every node to have the same number of modes")]
    NonUniformModes,
    #[error("gains of node {node} out of range: {detail}")]
    InvalidGains { node: usize, detail: &'static str },
    #[error("template {template}: {detail}")]
    InvalidTemplate {
        template: usize,
        detail: &'static str,
    },
    #[error("weighted column sum {value} is not finite")]
    UnboundedColumnSums { value: f64 },
    #[error("small-gain condition not satisfied: radius bound {radius}")]
    NotSatisfied { radius: f64 },
    #[error("no feasible decay rate found in (0, {lambda_min})")]
    NoFeasibleRate { lambda_min: f64 },
    #[error("weight vector fails the decay inequality at node {node}: {value} > {bound}")]
    WeightCheck { node: usize, value: f64, bound: f64 },
    #[error("singular system while constructing weights")]
    Singular,
    #[error("abstract network required")]
    MissingAbstraction,
    #[error("expected {expected} certificates, got {got}")]
    CertificateCount { expected: usize, got: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Certificate(#[from] CertError),
}

/// Which mode combinations the composed certificate must cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchingPolicy {
    /// All nodes share the mode index at every step; one `Γ_s` per mode.
    #[default]
    Synchronized,
    /// Nodes switch independently; a single `Γ` over the union of
    /// neighbours with `N̄_i = max_s |I_i(s)|`.
    Arbitrary,
}

/// A node class of a templated (possibly infinite) network.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTemplate {
    pub gains: LocalGains,
    /// `N̄` for nodes of this template.
    pub in_degree: usize,
    /// Maximal number of nodes a node of this template feeds in one topology.
    pub out_degree: usize,
    /// Templates this template may feed.
    pub feeds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainOperator {
    Finite {
        ids: Vec<usize>,
        lambda: Vec<f64>,
        alpha: Vec<f64>,
        rho_ext: Vec<f64>,
        /// One `Γ` per topology.
        gamma: Vec<Matrix>,
        policy: SwitchingPolicy,
    },
    Templated {
        templates: Vec<NodeTemplate>,
    },
}

fn check_gains(node: usize, g: &LocalGains) -> Result<(), SmallGainError> {
    let bad = |detail| Err(SmallGainError::InvalidGains { node, detail });
    if !(g.lambda > 0.0 && g.lambda < 1.0) {
        return bad("lambda not in (0, 1)");
    }
    if !(g.alpha > 0.0 && g.alpha.is_finite()) {
        return bad("alpha not positive");
    }
    if !(g.rho_int >= 0.0 && g.rho_int.is_finite() && g.rho_ext >= 0.0 && g.rho_ext.is_finite()) {
        return bad("gains not finite and nonnegative");
    }
    Ok(())
}

/// Assembles `Λ` and one `Γ` per topology of `network`.
pub fn build_gain_operator(
    gains: &[LocalGains],
    network: &Network,
    policy: SwitchingPolicy,
) -> Result<GainOperator, SmallGainError> {
    let n = network.len();
    if gains.len() != n {
        return Err(SmallGainError::MissingGains {
            expected: n,
            got: gains.len(),
        });
    }
    for (pos, g) in gains.iter().enumerate() {
        check_gains(network.subsystem(pos).id, g)?;
    }
    let alpha: Vec<f64> = gains.iter().map(|g| g.alpha).collect();
    let gamma = match policy {
        SwitchingPolicy::Synchronized => {
            let r = network
                .uniform_mode_count()
                .ok_or(SmallGainError::NonUniformModes)?;
            (0..r)
                .map(|s| {
                    let mut m = Matrix::zeros(n, n);
                    for (i, g) in gains.iter().enumerate() {
                        let sources: Vec<usize> = network.sources_in_mode(i, s).collect();
                        let degree = sources.len() as f64;
                        for j in sources {
                            m[(i, j)] = g.rho_int * degree / alpha[j];
                        }
                    }
                    m
                })
                .collect()
        }
        SwitchingPolicy::Arbitrary => {
            let mut m = Matrix::zeros(n, n);
            for (i, g) in gains.iter().enumerate() {
                let modes = network.subsystem(i).mode_count();
                let degree = (0..modes)
                    .map(|s| network.sources_in_mode(i, s).count())
                    .max()
                    .unwrap_or(0) as f64;
                for s in 0..modes {
                    for j in network.sources_in_mode(i, s) {
                        m[(i, j)] = g.rho_int * degree / alpha[j];
                    }
                }
            }
            vec![m]
        }
    };
    Ok(GainOperator::Finite {
        ids: network.subsystems().iter().map(|s| s.id).collect(),
        lambda: gains.iter().map(|g| g.lambda).collect(),
        alpha,
        rho_ext: gains.iter().map(|g| g.rho_ext).collect(),
        gamma,
        policy,
    })
}

/// Validates templates and returns the templated operator.
pub fn templated_operator(templates: Vec<NodeTemplate>) -> Result<GainOperator, SmallGainError> {
    if templates.is_empty() {
        return Err(SmallGainError::InvalidTemplate {
            template: 0,
            detail: "no templates",
        });
    }
    for (t, tpl) in templates.iter().enumerate() {
        check_gains(t, &tpl.gains).map_err(|e| match e {
            SmallGainError::InvalidGains { detail, .. } => SmallGainError::InvalidTemplate {
                template: t,
                detail,
            },
            other => other,
        })?;
        if tpl.feeds.iter().any(|&u| u >= templates.len()) {
            return Err(SmallGainError::InvalidTemplate {
                template: t,
                detail: "feeds an unknown template",
            });
        }
        if tpl.out_degree > 0 && tpl.feeds.is_empty() {
            return Err(SmallGainError::InvalidTemplate {
                template: t,
                detail: "positive out-degree without fed templates",
            });
        }
    }
    Ok(GainOperator::Templated { templates })
}

impl GainOperator {
    /// `min α_i`.
    pub fn alpha_min(&self) -> f64 {
        match self {
            Self::Finite { alpha, .. } => alpha.iter().copied().fold(f64::INFINITY, f64::min),
            Self::Templated { templates } => templates
                .iter()
                .map(|t| t.gains.alpha)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `min λ_i`.
    pub fn lambda_min(&self) -> f64 {
        match self {
            Self::Finite { lambda, .. } => lambda.iter().copied().fold(f64::INFINITY, f64::min),
            Self::Templated { templates } => templates
                .iter()
                .map(|t| t.gains.lambda)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `max ρ_ext,i`.
    pub fn rho_ext_max(&self) -> f64 {
        match self {
            Self::Finite { rho_ext, .. } => rho_ext.iter().copied().fold(0.0, f64::max),
            Self::Templated { templates } => templates
                .iter()
                .map(|t| t.gains.rho_ext)
                .fold(0.0, f64::max),
        }
    }

    /// `Ψ_s = Λ⁻¹ Γ_s` for every topology (finite operators only).
    pub fn psi(&self) -> Vec<Matrix> {
        match self {
            Self::Finite { lambda, gamma, .. } => gamma
                .iter()
                .map(|g| Matrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / lambda[i]))
                .collect(),
            Self::Templated { .. } => Vec::new(),
        }
    }

    fn template_sums(&self, templates: &[NodeTemplate]) -> Vec<(f64, f64)> {
        let _ = self;
        templates
            .iter()
            .map(|t| {
                let (mut g, mut p) = (0.0_f64, 0.0_f64);
                for &u in &t.feeds {
                    let fed = &templates[u];
                    let row = fed.gains.rho_int * fed.in_degree as f64;
                    g = g.max(row);
                    p = p.max(row / fed.gains.lambda);
                }
                let k = t.out_degree as f64 / t.gains.alpha;
                (k * g, k * p)
            })
            .collect()
    }

    /// `sup_j Σ_i γ_ij` over all topologies.
    pub fn max_column_sum(&self) -> f64 {
        match self {
            Self::Finite { gamma, .. } => gamma.iter().flat_map(max_column_sum).fold(0.0, f64::max),
            Self::Templated { templates } => self
                .template_sums(templates)
                .iter()
                .map(|s| s.0)
                .fold(0.0, f64::max),
        }
    }
}

fn max_column_sum(m: &Matrix) -> Option<f64> {
    (0..m.ncols()).map(|j| m.column(j).sum()).reduce(f64::max)
}

/// Outcome of the small-gain test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallGainReport {
    /// `r(Ψ)` for a single finite topology, a joint upper bound for several,
    /// or the maximal column sum of `Ψ` for templates.
    pub radius_or_bound: f64,
    pub satisfied: bool,
    pub max_column_sum: f64,
}

/// Upper bound on the joint spectral radius of `{N_s}` for the monotone map
/// `G(ν) = max_s N_sᵀ ν`: Collatz-Wielandt ratios `max_j G(ν)_j / ν_j` along a
/// shifted power iteration from the all-ones vector. Every ratio is a valid
/// bound for every mixed selection of rows of the `N_sᵀ`; the smallest one
/// seen is returned. With a single matrix this is `r(N)` up to `eig_tol`.
pub fn joint_radius_bound(mats: &[Matrix], tol: &ToleranceProfile) -> Result<f64, SmallGainError> {
    let n = mats.first().map_or(0, Matrix::nrows);
    if n == 0 {
        return Ok(0.0);
    }
    let scale = mats
        .iter()
        .filter_map(max_column_sum)
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let apply = |v: &Vector| -> Vector {
        let mut out = Vector::zeros(n);
        for m in mats {
            let y = m.tr_mul(v);
            out.zip_apply(&y, |a, b| *a = a.max(b));
        }
        out
    };
    let mut v = Vector::from_element(n, 1.0);
    let mut best = f64::INFINITY;
    let mut last = f64::NAN;
    for _ in 0..tol.iter_max {
        let g = apply(&v);
        let ratio = g
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a / b)
            .fold(0.0_f64, f64::max);
        best = best.min(ratio);
        if (ratio - last).abs() <= tol.eig_tol * ratio.max(1.0) {
            break;
        }
        last = ratio;
        let mut next = v + g / scale;
        let norm = next.max();
        next /= norm;
        v = next;
    }
    Ok(best)
}

pub fn check_small_gain(
    op: &GainOperator,
    tol: &ToleranceProfile,
) -> Result<SmallGainReport, SmallGainError> {
    let stat = op.max_column_sum();
    if !stat.is_finite() {
        return Err(SmallGainError::UnboundedColumnSums { value: stat });
    }
    let radius = match op {
        GainOperator::Finite { .. } => {
            let psi = op.psi();
            if psi.len() == 1 {
                spectral_radius(&psi[0], tol)?
            } else {
                joint_radius_bound(&psi, tol)?
            }
        }
        GainOperator::Templated { templates } => {
            let bound = op
                .template_sums(templates)
                .iter()
                .map(|s| s.1)
                .fold(0.0, f64::max);
            if !bound.is_finite() {
                return Err(SmallGainError::UnboundedColumnSums { value: bound });
            }
            bound
        }
    };
    let satisfied = match op {
        GainOperator::Finite { .. } => radius < 1.0 - RADIUS_MARGIN,
        GainOperator::Templated { .. } => radius < 1.0,
    };
    Ok(SmallGainReport {
        radius_or_bound: radius,
        satisfied,
        max_column_sum: stat,
    })
}

/// Node weights of the composed certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// The same weight for every node (templated operators).
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl Weights {
    pub fn get(&self, pos: usize) -> f64 {
        match self {
            Self::Uniform(w) => *w,
            Self::PerNode(w) => w[pos],
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Self::Uniform(w) => *w,
            Self::PerNode(w) => w.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Self::Uniform(w) => *w,
            Self::PerNode(w) => w.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Weights and network decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MuCore {
    pub mu: Weights,
    pub lambda_inf: f64,
    /// `max` over topologies and nodes of the weighted decay expression plus
    /// `λ∞`; at most [`MU_CHECK_SLACK`].
    pub worst_excess: f64,
}

fn shifted(gamma: &Matrix, lambda: &[f64], rate: f64) -> Matrix {
    Matrix::from_fn(gamma.nrows(), gamma.ncols(), |i, j| {
        gamma[(i, j)] / (lambda[j] - rate)
    })
}

fn feasible(
    gamma: &[Matrix],
    lambda: &[f64],
    rate: f64,
    tol: &ToleranceProfile,
) -> Result<bool, SmallGainError> {
    let t: Vec<Matrix> = gamma.iter().map(|g| shifted(g, lambda, rate)).collect();
    let r = if t.len() == 1 {
        spectral_radius(&t[0], tol)?
    } else {
        joint_radius_bound(&t, tol)?
    };
    Ok(r <= 1.0 - FEASIBILITY_MARGIN)
}

/// Solves `μ = 1 + max_s T_sᵀ μ` by policy iteration; with one topology this
/// is `(I − Tᵀ) μ = 1`.
fn solve_weights(t: &[Matrix], tol: &ToleranceProfile) -> Result<Vector, SmallGainError> {
    let n = t[0].nrows();
    let ones = Vector::from_element(n, 1.0);
    let mut policy = vec![0usize; n];
    let mut mu = Vector::zeros(n);
    for _ in 0..tol.iter_max.max(1) {
        let mut sys = Matrix::identity(n, n);
        for (j, &s) in policy.iter().enumerate() {
            for i in 0..n {
                sys[(j, i)] -= t[s][(i, j)];
            }
        }
        mu = sys.lu().solve(&ones).ok_or(SmallGainError::Singular)?;
        let mut changed = false;
        for j in 0..n {
            let current = t[policy[j]].column(j).dot(&mu);
            for (s, ts) in t.iter().enumerate() {
                let v = ts.column(j).dot(&mu);
                if v > current * (1.0 + 1e-12) + 1e-300 {
                    policy[j] = s;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(mu)
}

/// Largest feasible `λ∞` (by bisection) and weights satisfying the decay
/// inequality for every topology.
pub fn construct_mu(op: &GainOperator, tol: &ToleranceProfile) -> Result<MuCore, SmallGainError> {
    match op {
        GainOperator::Templated { templates } => {
            let sums = op.template_sums(templates);
            let lambda_inf = templates
                .iter()
                .zip(&sums)
                .map(|(t, s)| t.gains.lambda - s.0)
                .fold(f64::INFINITY, f64::min);
            if lambda_inf.is_nan() || lambda_inf <= 0.0 {
                return Err(SmallGainError::NoFeasibleRate {
                    lambda_min: op.lambda_min(),
                });
            }
            Ok(MuCore {
                mu: Weights::Uniform(1.0),
                lambda_inf,
                worst_excess: 0.0,
            })
        }
        GainOperator::Finite { lambda, gamma, .. } => {
            let lambda_min = op.lambda_min();
            if !feasible(gamma, lambda, 0.0, tol)? {
                return Err(SmallGainError::NoFeasibleRate { lambda_min });
            }
            let (mut lo, mut hi) = (0.0, lambda_min);
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if feasible(gamma, lambda, mid, tol)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let lambda_inf = lo;
            if lambda_inf.is_nan() || lambda_inf <= BISECTION_TOL {
                return Err(SmallGainError::NoFeasibleRate { lambda_min });
            }
            let t: Vec<Matrix> = gamma
                .iter()
                .map(|g| shifted(g, lambda, lambda_inf))
                .collect();
            let mut mu = solve_weights(&t, tol)?;
            let min = mu.min();
            if min.is_nan() || min <= 0.0 {
                return Err(SmallGainError::Singular);
            }
            mu /= min;
            let mu: Vec<f64> = mu.iter().copied().collect();
            let worst_excess = weight_excess(&mu, lambda, gamma, lambda_inf)?;
            Ok(MuCore {
                mu: Weights::PerNode(mu),
                lambda_inf,
                worst_excess,
            })
        }
    }
}

/// Checks `(−λ_j μ_j + Σ_i μ_i γ_ij) / μ_j ≤ −λ∞ + slack` for every node and
/// topology and returns the largest excess over `−λ∞`.
pub fn weight_excess(
    mu: &[f64],
    lambda: &[f64],
    gamma: &[Matrix],
    lambda_inf: f64,
) -> Result<f64, SmallGainError> {
    let mut worst = f64::NEG_INFINITY;
    for g in gamma {
        for j in 0..mu.len() {
            let inflow: f64 = (0..mu.len()).map(|i| mu[i] * g[(i, j)]).sum();
            let value = (-lambda[j] * mu[j] + inflow) / mu[j];
            let excess = value + lambda_inf;
            if excess > MU_CHECK_SLACK {
                return Err(SmallGainError::WeightCheck {
                    node: j,
                    value,
                    bound: -lambda_inf + MU_CHECK_SLACK,
                });
            }
            worst = worst.max(excess);
        }
    }
    Ok(worst)
}

/// The network-level simulation function `V = Σ μ_i V_i` and its gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedCertificate {
    pub mu: Weights,
    pub lambda_inf: f64,
    pub alpha_total: f64,
    pub rho_ext_coeff: f64,
    pub p_exp: u32,
    pub q_exp: u32,
    pub b_exp: u32,
    pub policy: SwitchingPolicy,
}

pub fn compose_certificate(core: &MuCore, op: &GainOperator) -> ComposedCertificate {
    let policy = match op {
        GainOperator::Finite { policy, .. } => *policy,
        GainOperator::Templated { .. } => SwitchingPolicy::Synchronized,
    };
    ComposedCertificate {
        mu: core.mu.clone(),
        lambda_inf: core.lambda_inf,
        alpha_total: core.mu.min() * op.alpha_min(),
        rho_ext_coeff: core.mu.max() * op.rho_ext_max(),
        p_exp: 2,
        q_exp: 2,
        b_exp: 2,
        policy,
    }
}

impl ComposedCertificate {
    /// `Σ_i μ_i V_{i,s_i}(x_i, x̂_i)`.
    pub fn evaluate_v(
        &self,
        certs: &[LocalCertificate],
        states: &[Vector],
        abstract_states: &[Vector],
        modes: &[usize],
    ) -> Result<f64, SmallGainError> {
        if certs.len() != states.len()
            || states.len() != abstract_states.len()
            || modes.len() != states.len()
        {
            return Err(SmallGainError::CertificateCount {
                expected: states.len(),
                got: certs.len(),
            });
        }
        let mut v = 0.0;
        for (pos, cert) in certs.iter().enumerate() {
            v += self.mu.get(pos)
                * cert.evaluate_v(&states[pos], &abstract_states[pos], modes[pos])?;
        }
        Ok(v)
    }

    /// `ρ_ext(t) = μ̄ ρ̄_ext t^q` evaluated at `t² = Σ |û_i|²`.
    pub fn external_gain(&self, u_hat_sq: f64) -> f64 {
        self.rho_ext_coeff * u_hat_sq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedWitness {
    pub modes: Vec<usize>,
    pub next_modes: Vec<usize>,
    pub v: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedReport {
    pub samples: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub witness: Option<ComposedWitness>,
}

impl ComposedReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn sample_modes(
    sampler: &mut ScaledBoxSampler,
    certs: &[LocalCertificate],
    policy: SwitchingPolicy,
) -> (Vec<usize>, Vec<usize>) {
    match policy {
        SwitchingPolicy::Synchronized => {
            let pairs: Vec<(usize, usize)> = certs[0]
                .mode_pairs()
                .into_iter()
                .filter(|p| certs.iter().all(|c| c.mode_pairs().contains(p)))
                .collect();
            let (s, s2) = pairs[sampler.index(pairs.len())];
            (vec![s; certs.len()], vec![s2; certs.len()])
        }
        SwitchingPolicy::Arbitrary => certs
            .iter()
            .map(|c| {
                let pairs = c.mode_pairs();
                pairs[sampler.index(pairs.len())]
            })
            .unzip(),
    }
}

/// Samples the network-level dissipation inequality
/// `V(x⁺, x̂⁺) − V(x, x̂) ≤ −λ∞ V(x, x̂) + μ̄ ρ̄_ext |û|²`
/// with interface inputs and consistent wiring on both networks.
pub fn check_composed_dissipation(
    composed: &ComposedCertificate,
    spec: &NetworkSpec,
    certs: &[LocalCertificate],
    samples: usize,
    seed: u64,
) -> Result<ComposedReport, SmallGainError> {
    let concrete = &spec.concrete;
    let abstraction = spec
        .abstraction
        .as_ref()
        .ok_or(SmallGainError::MissingAbstraction)?;
    let n = concrete.len();
    if certs.len() != n {
        return Err(SmallGainError::CertificateCount {
            expected: n,
            got: certs.len(),
        });
    }
    if let SwitchingPolicy::Synchronized = composed.policy {
        concrete
            .uniform_mode_count()
            .ok_or(SmallGainError::NonUniformModes)?;
    }
    for (pos, cert) in certs.iter().enumerate() {
        cert.check_shapes(concrete.subsystem(pos), abstraction.subsystem(pos))?;
    }
    let mut sampler = ScaledBoxSampler::new(seed);
    let mut report = ComposedReport {
        samples,
        violations: 0,
        worst_slack: f64::INFINITY,
        witness: None,
    };
    for _ in 0..samples {
        let (modes, next_modes) = sample_modes(&mut sampler, certs, composed.policy);
        let mut xs = Vec::with_capacity(n);
        let mut x_hats = Vec::with_capacity(n);
        let mut u_hats = Vec::with_capacity(n);
        for (pos, cert) in certs.iter().enumerate() {
            let dh = abstraction.subsystem(pos).dims();
            let x_hat = sampler.vector(dh.state);
            xs.push(&cert.p * &x_hat + sampler.vector(cert.p.nrows()));
            x_hats.push(x_hat);
            u_hats.push(sampler.vector(dh.input));
        }
        let w_hat = abstraction.assemble_internal_input(&x_hats, &modes)?;
        let mut inputs = Vec::with_capacity(n);
        for (pos, cert) in certs.iter().enumerate() {
            inputs.push(cert.interface_input(
                &xs[pos],
                &x_hats[pos],
                &u_hats[pos],
                &w_hat[pos],
                modes[pos],
            )?);
        }
        let next = concrete.step_with_modes(&xs, &inputs, &modes)?;
        let next_hat = abstraction.step_with_modes(&x_hats, &u_hats, &modes)?;
        let v = composed.evaluate_v(certs, &xs, &x_hats, &modes)?;
        let v_next =
            composed.evaluate_v(certs, &next.next_states, &next_hat.next_states, &next_modes)?;
        let u_sq: f64 = u_hats.iter().map(|u| u.norm_squared()).sum();
        let lhs = v_next - v;
        let rhs = -composed.lambda_inf * v + composed.external_gain(u_sq);
        let slack = rhs - lhs;
        report.worst_slack = report.worst_slack.min(slack);
        if slack < -crate::certificate::SAMPLE_SLACK * (1.0 + v.abs()) {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some(ComposedWitness {
                    modes,
                    next_modes,
                    v,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(report)
}
