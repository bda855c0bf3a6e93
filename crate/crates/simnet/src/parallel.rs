//! Parallel drivers over the sequential kernels of `simnet-core`.
//!
//! Sampled checks are split into fixed-size chunks with derived seeds, so the
//! result depends only on `(samples, seed)` and not on the number of threads.

use rayon::prelude::*;
use simnet_core::certificate::{check_dissipation_sampled, DissipationReport};
use simnet_core::network::{NetworkSpec, SwitchedLinearSubsystem};
use simnet_core::small_gain::{
    check_composed_dissipation, ComposedCertificate, ComposedReport, SmallGainError,
};
use simnet_core::{CertError, LocalCertificate, LocalGains};

/// Samples per chunk.
pub const CHUNK: usize = 64;

pub const THREADS_ENV: &str = "SIMNET_THREADS";

/// Thread count from `SIMNET_THREADS` (`0` or unset means automatic).
pub fn configured_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

pub fn thread_pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

pub fn chunk_seed(seed: u64, chunk: usize) -> u64 {
    seed ^ (chunk as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn chunks(samples: usize) -> Vec<(usize, usize)> {
    (0..samples.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(samples - c * CHUNK)))
        .collect()
}

pub fn par_check_dissipation(
    cert: &LocalCertificate,
    concrete: &SwitchedLinearSubsystem,
    abstraction: &SwitchedLinearSubsystem,
    gains: &LocalGains,
    samples: usize,
    seed: u64,
) -> Result<DissipationReport, CertError> {
    let parts = chunks(samples)
        .into_par_iter()
        .map(|(c, n)| {
            check_dissipation_sampled(cert, concrete, abstraction, gains, n, chunk_seed(seed, c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = DissipationReport {
        samples,
        violations: 0,
        worst_slack: f64::INFINITY,
        witness: None,
    };
    for p in parts {
        out.violations += p.violations;
        out.worst_slack = out.worst_slack.min(p.worst_slack);
        if out.witness.is_none() {
            out.witness = p.witness;
        }
    }
    Ok(out)
}

pub fn par_check_composed(
    composed: &ComposedCertificate,
    spec: &NetworkSpec,
    certs: &[LocalCertificate],
    samples: usize,
    seed: u64,
) -> Result<ComposedReport, SmallGainError> {
    let parts = chunks(samples)
        .into_par_iter()
        .map(|(c, n)| check_composed_dissipation(composed, spec, certs, n, chunk_seed(seed, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = ComposedReport {
        samples,
        violations: 0,
        worst_slack: f64::INFINITY,
        witness: None,
    };
    for p in parts {
        out.violations += p.violations;
        out.worst_slack = out.worst_slack.min(p.worst_slack);
        if out.witness.is_none() {
            out.witness = p.witness;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_samples() {
        assert_eq!(chunks(0), vec![]);
        assert_eq!(chunks(130), vec![(0, 64), (1, 64), (2, 2)]);
    }
}
