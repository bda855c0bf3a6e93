//! Quadratic simulation functions between a switched linear subsystem and its
//! abstraction.
//!
//! A [`LocalCertificate`] carries per-mode matrices `M_s, K_s, Q_s, R_s, T_s`,
//! a shared `P` and a decay rate `κ`. The simulation function is
//! `V_s(x, x̂) = (x − P x̂)ᵀ M_s (x − P x̂)` and the interface
//! `ν(x, x̂, û, ŵ, s) = K_s (x − P x̂) + Q_s x̂ + R_s û + T_s ŵ`.
//!
//! The certificate is valid when, for every mode `s` and admissible
//! transition `(s, s')`:
//!
//! * `C_sᵀ C_s ⪯ M_s` and `C_s P = Ĉ_s` (output dominance),
//! * `3 F_sᵀ M_{s'} F_s ⪯ (1 − κ) M_s` with `F_s = A_s + B_s K_s` (decay),
//! * `A_s P = P Â_s − B_s Q_s` and `D_s = P D̂_s − B_s T_s` (structure).
//!
//! Under these conditions the local dissipation inequality holds with
//! `α = 1`, `λ = κ`, `ρ_int = 3 max |√M_{s'} D_s|²` and
//! `ρ_ext = 3 max |√M_{s'} (B_s R_s − P B̂_s)|²` (induced 2-norms).

use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{
    max_abs, principal_sqrt, psd_margin, solve_linear_least_squares, spectral_norm, Matrix,
    MatrixError, PsdMargin, SymMatrix, ToleranceProfile, Vector,
};
use crate::network::{Mode, SwitchedLinearSubsystem};
use crate::sampling::ScaledBoxSampler;

/// Admissible slack for sampled dissipation checks, relative to `1 + |V|`.
pub const SAMPLE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error("certificate {node}: {what} has shape {got:?}, expected {expected:?}")]
    Shape {
        node: usize,
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("certificate {node}: {what} has {got} modes, expected {expected}")]
    ModeCount {
        node: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("certificate {node}: kappa {kappa} not in (0, 1)")]
    Kappa { node: usize, kappa: f64 },
    #[error("certificate {node}: transition ({from}, {to}) references a missing mode")]
    Transition { node: usize, from: usize, to: usize },
    #[error("certificate {node}: {check} check failed: {detail}")]
    Verification {
        node: usize,
        check: &'static str,
        detail: alloc::string::String,
    },
    #[error("abstraction infeasible for this P: mode {mode}, {equation} residual {residual:e} > {bound:e}")]
    Infeasible {
        mode: usize,
        equation: &'static str,
        residual: f64,
        bound: f64,
    },
    #[error("Lyapunov iteration diverged after {iterations} iterations (growth factor {growth})")]
    Divergence { iterations: usize, growth: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    VectorLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCertificate {
    pub id: usize,
    pub kappa: f64,
    pub m: Vec<SymMatrix>,
    pub k: Vec<Matrix>,
    pub p: Matrix,
    pub q: Vec<Matrix>,
    pub r: Vec<Matrix>,
    pub t: Vec<Matrix>,
    /// Ordered mode pairs `(s, s')` that may occur consecutively. `None`
    /// admits every pair.
    pub transitions: Option<Vec<(usize, usize)>>,
}

/// Gains of the local dissipation inequality (both norm exponents are 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGains {
    pub alpha: f64,
    pub lambda: f64,
    pub rho_int: f64,
    pub rho_ext: f64,
    pub p_exp: u32,
    pub q_exp: u32,
}

impl LocalCertificate {
    pub fn mode_count(&self) -> usize {
        self.m.len()
    }

    pub fn mode_pairs(&self) -> Vec<(usize, usize)> {
        match &self.transitions {
            Some(t) => t.clone(),
            None => {
                let r = self.mode_count();
                (0..r).flat_map(|s| (0..r).map(move |s2| (s, s2))).collect()
            }
        }
    }

    /// Shape and mode-count consistency against a concrete subsystem and its
    /// abstraction.
    pub fn check_shapes(
        &self,
        concrete: &SwitchedLinearSubsystem,
        abstraction: &SwitchedLinearSubsystem,
    ) -> Result<(), CertError> {
        let node = self.id;
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(CertError::Kappa {
                node,
                kappa: self.kappa,
            });
        }
        let r = concrete.mode_count();
        let counts = [
            ("M", self.m.len()),
            ("K", self.k.len()),
            ("Q", self.q.len()),
            ("R", self.r.len()),
            ("T", self.t.len()),
            ("abstraction", abstraction.mode_count()),
        ];
        for (what, got) in counts {
            if got != r {
                return Err(CertError::ModeCount {
                    node,
                    what,
                    expected: r,
                    got,
                });
            }
        }
        for &(s, s2) in &self.mode_pairs() {
            if s >= r || s2 >= r {
                return Err(CertError::Transition {
                    node,
                    from: s,
                    to: s2,
                });
            }
        }
        let d = concrete.dims();
        let dh = abstraction.dims();
        let shape = |what, got: (usize, usize), expected: (usize, usize)| {
            if got == expected {
                Ok(())
            } else {
                Err(CertError::Shape {
                    node,
                    what,
                    expected,
                    got,
                })
            }
        };
        shape("P", self.p.shape(), (d.state, dh.state))?;
        for s in 0..r {
            shape("M", self.m[s].matrix().shape(), (d.state, d.state))?;
            shape("K", self.k[s].shape(), (d.input, d.state))?;
            shape("Q", self.q[s].shape(), (d.input, dh.state))?;
            shape("R", self.r[s].shape(), (d.input, dh.input))?;
            shape("T", self.t[s].shape(), (d.input, dh.internal))?;
        }
        Ok(())
    }

    fn error(&self, x: &Vector, x_hat: &Vector) -> Result<Vector, CertError> {
        check_len("x", x, self.p.nrows())?;
        check_len("x_hat", x_hat, self.p.ncols())?;
        Ok(x - &self.p * x_hat)
    }

    /// `V_s(x, x̂)`.
    pub fn evaluate_v(&self, x: &Vector, x_hat: &Vector, mode: usize) -> Result<f64, CertError> {
        let e = self.error(x, x_hat)?;
        Ok(self.m[mode].quadratic_form(&e).max(0.0))
    }

    /// The interface `u = K_s (x − P x̂) + Q_s x̂ + R_s û + T_s ŵ`.
    pub fn interface_input(
        &self,
        x: &Vector,
        x_hat: &Vector,
        u_hat: &Vector,
        w_hat: &Vector,
        mode: usize,
    ) -> Result<Vector, CertError> {
        let e = self.error(x, x_hat)?;
        check_len("u_hat", u_hat, self.r[mode].ncols())?;
        check_len("w_hat", w_hat, self.t[mode].ncols())?;
        Ok(&self.k[mode] * e
            + &self.q[mode] * x_hat
            + &self.r[mode] * u_hat
            + &self.t[mode] * w_hat)
    }
}

fn check_len(what: &'static str, v: &Vector, expected: usize) -> Result<(), CertError> {
    if v.len() != expected {
        return Err(CertError::VectorLength {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

fn gram(c: &Matrix) -> Result<SymMatrix, MatrixError> {
    SymMatrix::new(c.transpose() * c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceMode {
    pub mode: usize,
    pub margin: PsdMargin,
    /// `‖C_s P − Ĉ_s‖_max`.
    pub output_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub modes: Vec<DominanceMode>,
}

impl DominanceReport {
    pub fn passed(&self) -> bool {
        self.modes.iter().all(|m| m.passed)
    }

    pub fn first_violation(&self) -> Option<&DominanceMode> {
        self.modes.iter().find(|m| !m.passed)
    }
}

/// `C_sᵀ C_s ⪯ M_s` and `C_s P = Ĉ_s` for every mode.
pub fn verify_output_dominance(
    cert: &LocalCertificate,
    concrete: &SwitchedLinearSubsystem,
    abstraction: &SwitchedLinearSubsystem,
    tol: &ToleranceProfile,
) -> Result<DominanceReport, CertError> {
    cert.check_shapes(concrete, abstraction)?;
    let mut modes = Vec::with_capacity(cert.mode_count());
    for (s, (cm, am)) in concrete.modes.iter().zip(&abstraction.modes).enumerate() {
        let margin = psd_margin(&gram(&cm.c)?, &cert.m[s], tol)?;
        let output_residual = max_abs(&(&cm.c * &cert.p - &am.c));
        modes.push(DominanceMode {
            mode: s,
            margin,
            output_residual,
            passed: margin.holds() && output_residual <= tol.eig_tol,
        });
    }
    Ok(DominanceReport { modes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayPair {
    pub from: usize,
    pub to: usize,
    /// Margin of `3 F_sᵀ M_{s'} F_s ⪯ (1 − κ) M_s`.
    pub margin: PsdMargin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub pairs: Vec<DecayPair>,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.margin.holds())
    }

    pub fn first_violation(&self) -> Option<&DecayPair> {
        self.pairs.iter().find(|p| !p.margin.holds())
    }
}

fn closed_loop(mode: &Mode, k: &Matrix) -> Matrix {
    &mode.a + &mode.b * k
}

/// `3 F_sᵀ M_{s'} F_s ⪯ (1 − κ) M_s` for every admissible pair.
pub fn verify_decay(
    cert: &LocalCertificate,
    concrete: &SwitchedLinearSubsystem,
    tol: &ToleranceProfile,
) -> Result<DecayReport, CertError> {
    let r = concrete.mode_count();
    if cert.mode_count() != r || cert.k.len() != r {
        return Err(CertError::ModeCount {
            node: cert.id,
            what: "M/K",
            expected: r,
            got: cert.mode_count().min(cert.k.len()),
        });
    }
    let mut pairs = Vec::new();
    for (s, s2) in cert.mode_pairs() {
        if s >= r || s2 >= r {
            return Err(CertError::Transition {
                node: cert.id,
                from: s,
                to: s2,
            });
        }
        let f = closed_loop(&concrete.modes[s], &cert.k[s]);
        let lhs = SymMatrix::new((f.transpose() * cert.m[s2].matrix() * &f) * 3.0)?;
        let rhs = SymMatrix::new(cert.m[s].matrix() * (1.0 - cert.kappa))?;
        pairs.push(DecayPair {
            from: s,
            to: s2,
            margin: psd_margin(&lhs, &rhs, tol)?,
        });
    }
    Ok(DecayReport { pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureMode {
    pub mode: usize,
    /// `‖A_s P − P Â_s + B_s Q_s‖_max`.
    pub state_residual: f64,
    /// `‖D_s − P D̂_s + B_s T_s‖_max`.
    pub coupling_residual: f64,
    pub bound: f64,
}

impl StructureMode {
    pub fn passed(&self) -> bool {
        self.state_residual <= self.bound && self.coupling_residual <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub modes: Vec<StructureMode>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.modes.iter().all(StructureMode::passed)
    }

    pub fn first_violation(&self) -> Option<&StructureMode> {
        self.modes.iter().find(|m| !m.passed())
    }
}

/// Residuals of the structural equations, bounded by `eig_tol·(1 + ‖A_s‖)`.
pub fn verify_structure(
    cert: &LocalCertificate,
    concrete: &SwitchedLinearSubsystem,
    abstraction: &SwitchedLinearSubsystem,
    tol: &ToleranceProfile,
) -> Result<StructureReport, CertError> {
    cert.check_shapes(concrete, abstraction)?;
    let p = &cert.p;
    let modes = concrete
        .modes
        .iter()
        .zip(&abstraction.modes)
        .enumerate()
        .map(|(s, (cm, am))| StructureMode {
            mode: s,
            state_residual: max_abs(&(&cm.a * p - p * &am.a + &cm.b * &cert.q[s])),
            coupling_residual: max_abs(&(&cm.d - p * &am.d + &cm.b * &cert.t[s])),
            bound: tol.eig_tol * (1.0 + spectral_norm(&cm.a)),
        })
        .collect();
    Ok(StructureReport { modes })
}

/// Runs the three verifications and extracts the local gains.
pub fn derive_gains(
    cert: &LocalCertificate,
    concrete: &SwitchedLinearSubsystem,
    abstraction: &SwitchedLinearSubsystem,
    tol: &ToleranceProfile,
) -> Result<LocalGains, CertError> {
    use alloc::format;
    let fail = |check, detail| CertError::Verification {
        node: cert.id,
        check,
        detail,
    };
    let dom = verify_output_dominance(cert, concrete, abstraction, tol)?;
    if let Some(v) = dom.first_violation() {
        return Err(fail(
            "output dominance",
            format!(
                "mode {}: min eigenvalue {:e}, output residual {:e}",
                v.mode, v.margin.min_eigenvalue, v.output_residual
            ),
        ));
    }
    let decay = verify_decay(cert, concrete, tol)?;
    if let Some(v) = decay.first_violation() {
        return Err(fail(
            "decay",
            format!(
                "pair ({}, {}): min eigenvalue {:e}",
                v.from, v.to, v.margin.min_eigenvalue
            ),
        ));
    }
    let structure = verify_structure(cert, concrete, abstraction, tol)?;
    if let Some(v) = structure.first_violation() {
        return Err(fail(
            "structure",
            format!(
                "mode {}: residuals {:e}, {:e} > {:e}",
                v.mode, v.state_residual, v.coupling_residual, v.bound
            ),
        ));
    }
    let roots = cert
        .m
        .iter()
        .map(|m| principal_sqrt(m, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rho_int = 0.0_f64;
    let mut rho_ext = 0.0_f64;
    for (s, s2) in cert.mode_pairs() {
        let cm = &concrete.modes[s];
        let root = roots[s2].matrix();
        let coupling = spectral_norm(&(root * &cm.d));
        let mismatch = &cm.b * &cert.r[s] - &cert.p * &abstraction.modes[s].b;
        let external = spectral_norm(&(root * mismatch));
        rho_int = rho_int.max(3.0 * coupling * coupling);
        rho_ext = rho_ext.max(3.0 * external * external);
    }
    Ok(LocalGains {
        alpha: 1.0,
        lambda: cert.kappa,
        rho_int,
        rho_ext,
        p_exp: 2,
        q_exp: 2,
    })
}

/// A sampled point of the local dissipation check.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationWitness {
    pub from_mode: usize,
    pub to_mode: usize,
    pub x: Vector,
    pub x_hat: Vector,
    pub w: Vector,
    pub w_hat: Vector,
    pub u_hat: Vector,
    /// `V_{s'}(x⁺, x̂⁺) − V_s(x, x̂)`.
    pub lhs: f64,
    /// `−λ V_s + ρ_ext |û|² + ρ_int |w − ŵ|²`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub samples: usize,
    pub violations: usize,
    /// Minimum over samples of `rhs − lhs`.
    pub worst_slack: f64,
    /// First violating sample, if any.
    pub witness: Option<DissipationWitness>,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples the local dissipation inequality with the interface input.
///
/// Points are parameterized as `x = P x̂ + e`, `w = ŵ + v` with `x̂`, `e`,
/// `ŵ`, `v` and `û` drawn from independently scaled boxes (see
/// [`ScaledBoxSampler`]).
pub fn check_dissipation_sampled(
    cert: &LocalCertificate,
    concrete: &SwitchedLinearSubsystem,
    abstraction: &SwitchedLinearSubsystem,
    gains: &LocalGains,
    samples: usize,
    seed: u64,
) -> Result<DissipationReport, CertError> {
    cert.check_shapes(concrete, abstraction)?;
    let pairs = cert.mode_pairs();
    let d = concrete.dims();
    let dh = abstraction.dims();
    let mut sampler = ScaledBoxSampler::new(seed);
    let mut report = DissipationReport {
        samples,
        violations: 0,
        worst_slack: f64::INFINITY,
        witness: None,
    };
    for _ in 0..samples {
        let (s, s2) = pairs[sampler.index(pairs.len())];
        let x_hat = sampler.vector(dh.state);
        let x = &cert.p * &x_hat + sampler.vector(d.state);
        let w_hat = sampler.vector(dh.internal);
        let w = &w_hat + sampler.vector(d.internal);
        let u_hat = sampler.vector(dh.input);
        let u = cert.interface_input(&x, &x_hat, &u_hat, &w_hat, s)?;
        let (cm, am) = (&concrete.modes[s], &abstraction.modes[s]);
        let x_next = &cm.a * &x + &cm.b * &u + &cm.d * &w;
        let x_hat_next = &am.a * &x_hat + &am.b * &u_hat + &am.d * &w_hat;
        let v = cert.evaluate_v(&x, &x_hat, s)?;
        let v_next = cert.evaluate_v(&x_next, &x_hat_next, s2)?;
        let lhs = v_next - v;
        let rhs = -gains.lambda * v
            + gains.rho_ext * u_hat.norm_squared()
            + gains.rho_int * (&w - &w_hat).norm_squared();
        let slack = rhs - lhs;
        report.worst_slack = report.worst_slack.min(slack);
        if slack < -SAMPLE_SLACK * (1.0 + v.abs()) {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some(DissipationWitness {
                    from_mode: s,
                    to_mode: s2,
                    x,
                    x_hat,
                    w,
                    w_hat,
                    u_hat,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedM {
    pub m: SymMatrix,
    pub iterations: usize,
}

/// Mode-independent certificate matrix from the fixed-point iteration
/// `M ← Σ_s C_sᵀ C_s + Σ_s F̃_sᵀ M F̃_s`, `F̃_s = √(3/(1−κ)) (A_s + B_s K_s)`.
///
/// The fixed point dominates every `C_sᵀ C_s` and every `F̃_sᵀ M F̃_s`, hence
/// satisfies both matrix inequalities for all mode pairs. Divergence only
/// means this conservative scheme failed.
pub fn synthesize_m(
    concrete: &SwitchedLinearSubsystem,
    k: &[Matrix],
    kappa: f64,
    tol: &ToleranceProfile,
) -> Result<SynthesizedM, CertError> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(CertError::Kappa {
            node: concrete.id,
            kappa,
        });
    }
    if k.len() != concrete.mode_count() {
        return Err(CertError::ModeCount {
            node: concrete.id,
            what: "K",
            expected: concrete.mode_count(),
            got: k.len(),
        });
    }
    let n = concrete.dims().state;
    let gain = libm::sqrt(3.0 / (1.0 - kappa));
    let scaled: Vec<Matrix> = concrete
        .modes
        .iter()
        .zip(k)
        .map(|(mode, k)| closed_loop(mode, k) * gain)
        .collect();
    let base = concrete
        .modes
        .iter()
        .fold(Matrix::zeros(n, n), |acc, mode| {
            acc + mode.c.transpose() * &mode.c
        });
    let base_norm = base.norm().max(f64::MIN_POSITIVE);
    let mut m = base.clone();
    let mut prev_step = f64::NAN;
    let mut growth = f64::NAN;
    for it in 1..=tol.iter_max {
        let next = scaled
            .iter()
            .fold(base.clone(), |acc, f| acc + f.transpose() * &m * f);
        let step = (&next - &m).norm();
        if prev_step.is_finite() && prev_step > 0.0 {
            growth = step / prev_step;
        }
        prev_step = step;
        m = next;
        let size = m.norm();
        if !size.is_finite() || size > 1e12 * base_norm {
            return Err(CertError::Divergence {
                iterations: it,
                growth,
            });
        }
        if step <= tol.eig_tol * size {
            let m = SymMatrix::new(m)?;
            let cert = LocalCertificate {
                id: concrete.id,
                kappa,
                m: alloc::vec![m.clone(); concrete.mode_count()],
                k: k.to_vec(),
                p: Matrix::identity(n, n),
                q: Vec::new(),
                r: Vec::new(),
                t: Vec::new(),
                transitions: None,
            };
            let decay = verify_decay(&cert, concrete, tol)?;
            let dominated = concrete
                .modes
                .iter()
                .map(|mode| psd_margin(&gram(&mode.c)?, &m, tol).map(|mg| mg.holds()))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .all(|b| b);
            if !decay.passed() || !dominated {
                return Err(CertError::Verification {
                    node: concrete.id,
                    check: "synthesized M",
                    detail: alloc::string::String::from("fixed point failed re-verification"),
                });
            }
            return Ok(SynthesizedM { m, iterations: it });
        }
    }
    Err(CertError::Divergence {
        iterations: tol.iter_max,
        growth,
    })
}

/// Matrices completing an abstraction for a given `P` and `Â`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralSolution {
    pub q: Vec<Matrix>,
    pub t: Vec<Matrix>,
    pub c_hat: Vec<Matrix>,
    pub d_hat: Vec<Matrix>,
    pub r: Vec<Matrix>,
}

/// Inputs to [`solve_structural`]; `d_hat` defaults to zero.
#[derive(Debug, Clone, Copy)]
pub struct AbstractionChoice<'a> {
    pub p: &'a Matrix,
    pub a_hat: &'a [Matrix],
    pub b_hat: &'a [Matrix],
    pub d_hat: Option<&'a [Matrix]>,
    pub m: &'a [SymMatrix],
}

/// Solves the structural equations by least squares:
/// `B_s Q_s = P Â_s − A_s P`, `B_s T_s = P D̂_s − D_s`, `Ĉ_s = C_s P`, and the
/// external-gain minimizer `R_s = argmin |√M_s (B_s R − P B̂_s)|`, which equals
/// `(B_sᵀ M_s B_s)⁻¹ B_sᵀ M_s P B̂_s` when `B_s` has full column rank.
pub fn solve_structural(
    concrete: &SwitchedLinearSubsystem,
    choice: AbstractionChoice<'_>,
    tol: &ToleranceProfile,
) -> Result<StructuralSolution, CertError> {
    let r = concrete.mode_count();
    let node = concrete.id;
    for (what, got) in [
        ("A_hat", choice.a_hat.len()),
        ("B_hat", choice.b_hat.len()),
        ("M", choice.m.len()),
        ("D_hat", choice.d_hat.map_or(r, <[Matrix]>::len)),
    ] {
        if got != r {
            return Err(CertError::ModeCount {
                node,
                what,
                expected: r,
                got,
            });
        }
    }
    let p = choice.p;
    let d = concrete.dims();
    let n_hat = p.ncols();
    if p.nrows() != d.state {
        return Err(CertError::Shape {
            node,
            what: "P",
            expected: (d.state, n_hat),
            got: p.shape(),
        });
    }
    let mut sol = StructuralSolution {
        q: Vec::with_capacity(r),
        t: Vec::with_capacity(r),
        c_hat: Vec::with_capacity(r),
        d_hat: Vec::with_capacity(r),
        r: Vec::with_capacity(r),
    };
    for (s, mode) in concrete.modes.iter().enumerate() {
        let a_hat = &choice.a_hat[s];
        if a_hat.shape() != (n_hat, n_hat) {
            return Err(CertError::Shape {
                node,
                what: "A_hat",
                expected: (n_hat, n_hat),
                got: a_hat.shape(),
            });
        }
        let d_hat = match choice.d_hat {
            Some(dh) => dh[s].clone(),
            None => Matrix::zeros(n_hat, d.internal),
        };
        if d_hat.shape() != (n_hat, d.internal) {
            return Err(CertError::Shape {
                node,
                what: "D_hat",
                expected: (n_hat, d.internal),
                got: d_hat.shape(),
            });
        }
        let b_hat = &choice.b_hat[s];
        if b_hat.nrows() != n_hat {
            return Err(CertError::Shape {
                node,
                what: "B_hat",
                expected: (n_hat, b_hat.ncols()),
                got: b_hat.shape(),
            });
        }
        let scale = tol.eig_tol * (1.0 + spectral_norm(&mode.a)) * (1.0 + spectral_norm(p));
        let target = p * a_hat - &mode.a * p;
        let (q, res) = solve_linear_least_squares(&mode.b, &target, tol)?;
        if res > scale {
            return Err(CertError::Infeasible {
                mode: s,
                equation: "A P = P A_hat - B Q",
                residual: res,
                bound: scale,
            });
        }
        let target = p * &d_hat - &mode.d;
        let (t, res) = solve_linear_least_squares(&mode.b, &target, tol)?;
        if res > scale {
            return Err(CertError::Infeasible {
                mode: s,
                equation: "D = P D_hat - B T",
                residual: res,
                bound: scale,
            });
        }
        let root = principal_sqrt(&choice.m[s], tol)?;
        let (r_s, _) = solve_linear_least_squares(
            &(root.matrix() * &mode.b),
            &(root.matrix() * p * b_hat),
            tol,
        )?;
        sol.q.push(q);
        sol.t.push(t);
        sol.c_hat.push(&mode.c * p);
        sol.d_hat.push(d_hat);
        sol.r.push(r_s);
    }
    Ok(sol)
}

/// Builds the abstract subsystem `(Â_s, B̂_s, Ĉ_s, D̂_s)` with the concrete
/// block partitions.
pub fn build_abstraction(
    concrete: &SwitchedLinearSubsystem,
    a_hat: &[Matrix],
    b_hat: &[Matrix],
    sol: &StructuralSolution,
) -> SwitchedLinearSubsystem {
    SwitchedLinearSubsystem {
        id: concrete.id,
        modes: concrete
            .modes
            .iter()
            .enumerate()
            .map(|(s, mode)| Mode {
                a: a_hat[s].clone(),
                b: b_hat[s].clone(),
                c: sol.c_hat[s].clone(),
                d: sol.d_hat[s].clone(),
                out_blocks: mode.out_blocks.clone(),
                in_blocks: mode.in_blocks.clone(),
            })
            .collect(),
    }
}
