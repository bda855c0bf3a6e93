//! Independent reference computations compared against the library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simnet_core::linalg::{spectral_radius_dense, spectral_radius_power};
use simnet_core::random::{random_certified_network, CertifiedNetwork, RandomNetworkConfig};
use simnet_core::simulator::simulate_lockstep;
use simnet_core::small_gain::{
    build_gain_operator, check_small_gain, compose_certificate, construct_mu, ComposedCertificate,
    SwitchingPolicy,
};
use simnet_core::{Matrix, Network, SwitchingSignal, ToleranceProfile, Vector};

fn stack(parts: &[Vector]) -> Vector {
    Vector::from_iterator(
        parts.iter().map(|v| v.len()).sum(),
        parts.iter().flat_map(|v| v.iter().copied()),
    )
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut acc = 0;
    let mut out = vec![0];
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

/// `x⁺ = A_stack x + B_stack u` built directly from the blocks: the diagonal
/// holds `A_i`, and each wire `j → i` contributes `D_i[:, cols] C_j[rows, :]`.
fn monolithic(net: &Network, modes: &[usize]) -> (Matrix, Matrix) {
    let subs = net.subsystems();
    let xo = offsets(subs.iter().map(|s| s.dims().state));
    let uo = offsets(subs.iter().map(|s| s.dims().input));
    let mut a = Matrix::zeros(xo[subs.len()], xo[subs.len()]);
    let mut b = Matrix::zeros(xo[subs.len()], uo[subs.len()]);
    for (i, sub) in subs.iter().enumerate() {
        let m = &sub.modes[modes[i]];
        a.view_mut((xo[i], xo[i]), (m.a.nrows(), m.a.ncols()))
            .copy_from(&m.a);
        b.view_mut((xo[i], uo[i]), (m.b.nrows(), m.b.ncols()))
            .copy_from(&m.b);
        for blk in &m.in_blocks {
            let j = net.position(blk.peer).unwrap();
            let src = net.subsystem(j);
            let rows = src.out_block(modes[j], sub.id).unwrap().range.clone();
            let coupling = m.d.columns(blk.range.start, blk.width())
                * src.modes[modes[j]].c.rows(rows.start, rows.len());
            let mut target = a.view_mut((xo[i], xo[j]), (coupling.nrows(), coupling.ncols()));
            target += &coupling;
        }
    }
    (a, b)
}

fn compose(net: &CertifiedNetwork, tol: &ToleranceProfile) -> ComposedCertificate {
    let op = build_gain_operator(
        &net.gains,
        &net.spec.concrete,
        SwitchingPolicy::Synchronized,
    )
    .unwrap();
    assert!(check_small_gain(&op, tol).unwrap().satisfied);
    compose_certificate(&construct_mu(&op, tol).unwrap(), &op)
}

#[test]
fn stacked_update_matches_network_step() {
    let tol = ToleranceProfile::default();
    let cfg = RandomNetworkConfig::default();
    for seed in 0..50 {
        let net = random_certified_network(seed, &cfg, &tol).unwrap();
        let concrete = &net.spec.concrete;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        // Wiring is per mode, so all nodes share one mode index.
        let s = rng.random_range(0..concrete.subsystem(0).mode_count());
        let modes = vec![s; concrete.len()];
        let x: Vec<Vector> = concrete
            .subsystems()
            .iter()
            .map(|s| Vector::from_fn(s.dims().state, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let u: Vec<Vector> = concrete
            .subsystems()
            .iter()
            .map(|s| Vector::from_fn(s.dims().input, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let step = concrete.step_with_modes(&x, &u, &modes).unwrap();
        let (a, b) = monolithic(concrete, &modes);
        let expected = &a * stack(&x) + &b * stack(&u);
        let got = stack(&step.next_states);
        let err = (expected - got).amax();
        assert!(err <= 1e-12, "seed {seed}: {err}");
    }
}

#[test]
fn dense_and_power_radius_agree() {
    let tol = ToleranceProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..50 {
        let n = rng.random_range(1..=64);
        let density = rng.random_range(0.3..=1.0);
        let mut m = Matrix::from_fn(n, n, |_, _| {
            if rng.random_bool(density) {
                rng.random_range(0.0..1.0)
            } else {
                0.0
            }
        });
        // Keep the matrix irreducible so the Perron root is well separated.
        for i in 0..n {
            m[(i, (i + 1) % n)] += 0.1;
        }
        let dense = spectral_radius_dense(&m).unwrap();
        let power = spectral_radius_power(&m, &tol).unwrap();
        assert!(
            (dense - power).abs() <= 1e-8,
            "case {case} (n = {n}): {dense} vs {power}"
        );
    }
}

#[test]
fn abstraction_is_matched_exactly() {
    let tol = ToleranceProfile::default();
    let cfg = RandomNetworkConfig::default();
    for seed in 0..20 {
        let net = random_certified_network(seed, &cfg, &tol).unwrap();
        let composed = compose(&net, &tol);
        let abs = net.spec.abstraction.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_hat0: Vec<Vector> = abs
            .subsystems()
            .iter()
            .map(|s| Vector::from_fn(s.dims().state, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let x0: Vec<Vector> = net
            .certs
            .iter()
            .zip(&x_hat0)
            .map(|(c, xh)| &c.p * xh)
            .collect();
        let modes = net.spec.concrete.subsystem(0).mode_count();
        let schedule: Vec<Vec<usize>> = (0..=50)
            .map(|_| {
                let s = rng.random_range(0..modes);
                vec![s; net.spec.concrete.len()]
            })
            .collect();
        let zero: Vec<Vector> = abs
            .subsystems()
            .iter()
            .map(|s| Vector::zeros(s.dims().input))
            .collect();
        let run = simulate_lockstep(
            &net.spec,
            &net.certs,
            &composed,
            &x0,
            &x_hat0,
            |_, _| zero.clone(),
            &SwitchingSignal::Table(schedule),
            50,
        )
        .unwrap();
        for (k, (y, y_hat)) in run.outputs.iter().zip(&run.abstract_outputs).enumerate() {
            for (a, b) in y.iter().zip(y_hat) {
                let err = (a - b).amax();
                assert!(err <= 1e-12, "seed {seed}, step {k}: {err}");
            }
        }
    }
}
