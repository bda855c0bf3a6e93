//! Seeded generator of small certified networks, used for property tests and
//! benchmarks.
//!
//! Every node has an invertible input matrix, so the structural equations are
//! always solvable, and closed-loop matrices of spectral norm `f_norm`, so a
//! common certificate matrix exists for every mode pair. In each mode the
//! interconnection is a random fixed-point-free permutation of the nodes
//! (every node feeds and is fed by exactly one other node) or empty.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certificate::{
    build_abstraction, derive_gains, solve_structural, synthesize_m, AbstractionChoice, CertError,
    LocalCertificate, LocalGains,
};
use crate::linalg::{principal_sqrt, spectral_norm, Matrix, ToleranceProfile};
use crate::network::{Block, Mode, NetworkError, NetworkSpec, SwitchedLinearSubsystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomNetworkConfig {
    pub max_nodes: usize,
    pub max_modes: usize,
    pub max_state: usize,
    pub kappa: f64,
    /// Spectral norm of every closed-loop matrix `A_s + B_s K_s`.
    pub f_norm: f64,
    /// Upper bound imposed on `ρ_int` by rescaling `D`.
    pub rho_int_max: f64,
}

impl Default for RandomNetworkConfig {
    fn default() -> Self {
        Self {
            max_nodes: 4,
            max_modes: 3,
            max_state: 3,
            kappa: 0.3,
            f_norm: 0.2,
            rho_int_max: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedNetwork {
    pub spec: NetworkSpec,
    pub certs: Vec<LocalCertificate>,
    pub gains: Vec<LocalGains>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RandomNetworkError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Certificate(#[from] CertError),
    #[error(transparent)]
    Matrix(#[from] crate::linalg::MatrixError),
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

fn with_norm(m: Matrix, norm: f64) -> Matrix {
    let s = spectral_norm(&m);
    if s == 0.0 {
        m
    } else {
        m * (norm / s)
    }
}

fn derangement(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

struct NodeShape {
    n: usize,
    n_hat: usize,
    m_hat: usize,
    q_ext: usize,
}

/// A random certified network with its abstraction. `D̂ = 0` everywhere.
pub fn random_certified_network(
    seed: u64,
    config: &RandomNetworkConfig,
    tol: &ToleranceProfile,
) -> Result<CertifiedNetwork, RandomNetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(1..=config.max_nodes.max(1));
    let modes = rng.random_range(1..=config.max_modes.max(1));
    let coupled = nodes >= 2 && rng.random_bool(0.8);
    let h = rng.random_range(1..=2);
    // feeds[s][i]: node fed by i in mode s.
    let feeds: Vec<Vec<usize>> = (0..modes)
        .map(|_| {
            if coupled {
                derangement(&mut rng, nodes)
            } else {
                Vec::new()
            }
        })
        .collect();
    let shapes: Vec<NodeShape> = (0..nodes)
        .map(|_| {
            let n = rng.random_range(1..=config.max_state.max(1));
            NodeShape {
                n,
                n_hat: rng.random_range(1..=n),
                m_hat: rng.random_range(1..=2),
                q_ext: rng.random_range(1..=2),
            }
        })
        .collect();
    let internal = if coupled { h } else { 0 };

    let mut concrete = Vec::with_capacity(nodes);
    let mut abstraction = Vec::with_capacity(nodes);
    let mut certs = Vec::with_capacity(nodes);
    for (i, shape) in shapes.iter().enumerate() {
        let n = shape.n;
        let q = shape.q_ext + internal;
        let mut sub = SwitchedLinearSubsystem {
            id: i,
            modes: Vec::with_capacity(modes),
        };
        let mut ks = Vec::with_capacity(modes);
        for feed in &feeds {
            let a = uniform(&mut rng, n, n);
            let b = Matrix::identity(n, n) + uniform(&mut rng, n, n) * 0.3;
            let f = with_norm(uniform(&mut rng, n, n), config.f_norm);
            let b_inv = b.clone().try_inverse().expect("diagonally dominant");
            ks.push(&b_inv * (f - &a));
            let mut out_blocks = vec![Block::new(i, 0..shape.q_ext)];
            let mut in_blocks = Vec::new();
            if coupled {
                out_blocks.push(Block::new(feed[i], shape.q_ext..q));
                let src = feed.iter().position(|&d| d == i).expect("permutation");
                in_blocks.push(Block::new(src, 0..h));
            }
            sub.modes.push(Mode {
                a,
                b,
                c: uniform(&mut rng, q, n),
                d: uniform(&mut rng, n, internal),
                out_blocks,
                in_blocks,
            });
        }
        let synth = synthesize_m(&sub, &ks, config.kappa, tol)?;
        let root = principal_sqrt(&synth.m, tol)?;
        // Rescale coupling so that 3 |√M D_s|² ≤ rho_int_max for every mode.
        let worst = sub
            .modes
            .iter()
            .map(|m| spectral_norm(&(root.matrix() * &m.d)))
            .fold(0.0_f64, f64::max);
        if worst > 0.0 {
            let target = libm::sqrt(config.rho_int_max / 3.0);
            for m in &mut sub.modes {
                m.d *= target / worst;
            }
        }
        let p = uniform(&mut rng, n, shape.n_hat);
        let a_hat: Vec<Matrix> = (0..modes)
            .map(|_| uniform(&mut rng, shape.n_hat, shape.n_hat) * 0.5)
            .collect();
        let b_hat: Vec<Matrix> = (0..modes)
            .map(|_| uniform(&mut rng, shape.n_hat, shape.m_hat))
            .collect();
        let ms = vec![synth.m.clone(); modes];
        let sol = solve_structural(
            &sub,
            AbstractionChoice {
                p: &p,
                a_hat: &a_hat,
                b_hat: &b_hat,
                d_hat: None,
                m: &ms,
            },
            tol,
        )?;
        abstraction.push(build_abstraction(&sub, &a_hat, &b_hat, &sol));
        certs.push(LocalCertificate {
            id: i,
            kappa: config.kappa,
            m: ms,
            k: ks,
            p,
            q: sol.q,
            r: sol.r,
            t: sol.t,
            transitions: None,
        });
        concrete.push(sub);
    }
    let mut edges = Vec::new();
    for f in &feeds {
        for (j, &i) in f.iter().enumerate() {
            edges.push((j, i));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let spec = NetworkSpec::new(concrete, &edges, Some(abstraction))?;
    let abs = spec
        .abstraction
        .as_ref()
        .expect("constructed with abstraction");
    let gains = certs
        .iter()
        .enumerate()
        .map(|(pos, c)| derive_gains(c, spec.concrete.subsystem(pos), abs.subsystem(pos), tol))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CertifiedNetwork { spec, certs, gains })
}
