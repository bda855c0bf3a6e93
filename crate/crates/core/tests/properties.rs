//! Seeded property tests over randomly generated certified networks.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simnet_core::certificate::{check_dissipation_sampled, verify_decay, verify_output_dominance};
use simnet_core::linalg::{column_sums, spectral_radius};
use simnet_core::network::{Block, Mode};
use simnet_core::random::{random_certified_network, CertifiedNetwork, RandomNetworkConfig};
use simnet_core::simulator::{
    check_trajectory_bound, check_v_dominates_error, simulate_lockstep, BoundConstants,
};
use simnet_core::small_gain::{
    build_gain_operator, check_small_gain, compose_certificate, construct_mu, templated_operator,
    weight_excess, GainOperator, NodeTemplate, SwitchingPolicy,
};
use simnet_core::{
    LocalGains, Matrix, Network, SwitchedLinearSubsystem, SwitchingSignal, ToleranceProfile, Vector,
};

fn network(seed: u64) -> CertifiedNetwork {
    random_certified_network(
        seed,
        &RandomNetworkConfig::default(),
        &ToleranceProfile::default(),
    )
    .unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
}

fn close(a: &Vector, b: &Vector) -> bool {
    (a - b).amax() <= 1e-12 * (1.0 + a.amax().max(b.amax()))
}

fn gains(lambda: f64, rho_int: f64) -> LocalGains {
    LocalGains {
        alpha: 1.0,
        lambda,
        rho_int,
        rho_ext: 1.0,
        p_exp: 2,
        q_exp: 2,
    }
}

/// Scalar directed ring where node `i` feeds `i + 1`.
fn scalar_ring(n: usize) -> Network {
    let subs = (0..n)
        .map(|i| SwitchedLinearSubsystem {
            id: i,
            modes: vec![Mode {
                a: Matrix::from_element(1, 1, 0.5),
                b: Matrix::identity(1, 1),
                c: Matrix::from_element(2, 1, 1.0),
                d: Matrix::from_element(1, 1, 1.0),
                out_blocks: vec![Block::new(i, 0..1), Block::new((i + 1) % n, 1..2)],
                in_blocks: vec![Block::new((i + n - 1) % n, 0..1)],
            }],
        })
        .collect();
    Network::new(subs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn internal_input_is_linear(seed in 0u64..10_000, alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let net = network(seed);
        let concrete = &net.spec.concrete;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = vec![0; concrete.len()];
        let dims: Vec<usize> = concrete.subsystems().iter().map(|s| s.dims().state).collect();
        let x: Vec<Vector> = dims.iter().map(|&d| random_vector(&mut rng, d)).collect();
        let x2: Vec<Vector> = dims.iter().map(|&d| random_vector(&mut rng, d)).collect();
        let mixed: Vec<Vector> = x.iter().zip(&x2).map(|(a, b)| a * alpha + b * beta).collect();
        let w = concrete.assemble_internal_input(&x, &modes).unwrap();
        let w2 = concrete.assemble_internal_input(&x2, &modes).unwrap();
        let wm = concrete.assemble_internal_input(&mixed, &modes).unwrap();
        for ((a, b), m) in w.iter().zip(&w2).zip(&wm) {
            prop_assert!(close(&(a * alpha + b * beta), m));
        }
    }

    #[test]
    fn interface_is_linear_in_its_arguments(seed in 0u64..10_000, alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let net = network(seed);
        let abs = net.spec.abstraction.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for (pos, cert) in net.certs.iter().enumerate() {
            let d = net.spec.concrete.subsystem(pos).dims();
            let dh = abs.subsystem(pos).dims();
            let s = rng.random_range(0..cert.mode_count());
            let mut z = || {
                (
                    random_vector(&mut rng, d.state),
                    random_vector(&mut rng, dh.state),
                    random_vector(&mut rng, dh.input),
                    random_vector(&mut rng, dh.internal),
                )
            };
            let (x1, xh1, u1, w1) = z();
            let (x2, xh2, u2, w2) = z();
            let nu1 = cert.interface_input(&x1, &xh1, &u1, &w1, s).unwrap();
            let nu2 = cert.interface_input(&x2, &xh2, &u2, &w2, s).unwrap();
            let nu = cert
                .interface_input(
                    &(&x1 * alpha + &x2 * beta),
                    &(&xh1 * alpha + &xh2 * beta),
                    &(&u1 * alpha + &u2 * beta),
                    &(&w1 * alpha + &w2 * beta),
                    s,
                )
                .unwrap();
            prop_assert!(close(&(nu1 * alpha + nu2 * beta), &nu));
        }
    }

    #[test]
    fn v_is_quadratic(seed in 0u64..10_000, t in -10.0..10.0f64) {
        let net = network(seed);
        let abs = net.spec.abstraction.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (pos, cert) in net.certs.iter().enumerate() {
            let x = random_vector(&mut rng, net.spec.concrete.subsystem(pos).dims().state);
            let xh = random_vector(&mut rng, abs.subsystem(pos).dims().state);
            let v = cert.evaluate_v(&x, &xh, 0).unwrap();
            let vt = cert.evaluate_v(&(&x * t), &(&xh * t), 0).unwrap();
            prop_assert!((vt - t * t * v).abs() <= 1e-10 * (1.0 + vt.abs()));
        }
    }

    #[test]
    fn certified_nodes_pass_sampled_dissipation(seed in 0u64..10_000, sample_seed in any::<u64>()) {
        let net = network(seed);
        let abs = net.spec.abstraction.as_ref().unwrap();
        for (pos, cert) in net.certs.iter().enumerate() {
            let r = check_dissipation_sampled(
                cert,
                net.spec.concrete.subsystem(pos),
                abs.subsystem(pos),
                &net.gains[pos],
                200,
                sample_seed,
            )
            .unwrap();
            prop_assert_eq!(r.violations, 0, "node {}: worst slack {}", pos, r.worst_slack);
        }
    }

    #[test]
    fn v_dominates_output_error(seed in 0u64..10_000) {
        let net = network(seed);
        let abs = net.spec.abstraction.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (pos, cert) in net.certs.iter().enumerate() {
            let (c, a) = (net.spec.concrete.subsystem(pos), abs.subsystem(pos));
            for _ in 0..20 {
                let s = rng.random_range(0..cert.mode_count());
                let x = random_vector(&mut rng, c.dims().state);
                let xh = random_vector(&mut rng, a.dims().state);
                let err = (&c.modes[s].c * &x - &a.modes[s].c * &xh).norm_squared();
                let v = cert.evaluate_v(&x, &xh, s).unwrap();
                prop_assert!(v >= net.gains[pos].alpha * err - 1e-9 * (1.0 + v));
            }
        }
    }

    #[test]
    fn weights_meet_the_decay_rate(seed in 0u64..10_000) {
        let net = network(seed);
        let tol = ToleranceProfile::default();
        let op = build_gain_operator(&net.gains, &net.spec.concrete, SwitchingPolicy::Synchronized).unwrap();
        let core = construct_mu(&op, &tol).unwrap();
        let GainOperator::Finite { lambda, gamma, .. } = &op else { unreachable!() };
        let mu: Vec<f64> = (0..net.spec.concrete.len()).map(|i| core.mu.get(i)).collect();
        let excess = weight_excess(&mu, lambda, gamma, core.lambda_inf).unwrap();
        prop_assert!(excess <= 1e-9);
        prop_assert!(mu.iter().all(|&m| m >= 1.0));
    }

    #[test]
    fn weaker_coupling_never_slows_decay(seed in 0u64..10_000, theta in 0.05..1.0f64) {
        let net = network(seed);
        prop_assume!(net.spec.concrete.len() >= 2);
        let tol = ToleranceProfile::default();
        let rate = |scale: f64| {
            let g: Vec<LocalGains> = net
                .gains
                .iter()
                .map(|g| LocalGains { rho_int: g.rho_int * scale, ..*g })
                .collect();
            let op = build_gain_operator(&g, &net.spec.concrete, SwitchingPolicy::Synchronized).unwrap();
            construct_mu(&op, &tol).unwrap().lambda_inf
        };
        prop_assert!(rate(theta) >= rate(1.0));
    }

    #[test]
    fn synthesized_certificates_are_self_consistent(seed in 0u64..10_000) {
        let net = network(seed);
        let tol = ToleranceProfile::default();
        let abs = net.spec.abstraction.as_ref().unwrap();
        for (pos, cert) in net.certs.iter().enumerate() {
            let c = net.spec.concrete.subsystem(pos);
            prop_assert!(verify_decay(cert, c, &tol).unwrap().passed());
            prop_assert!(verify_output_dominance(cert, c, abs.subsystem(pos), &tol).unwrap().passed());
        }
    }

    #[test]
    fn runs_are_deterministic_and_prefix_stable(seed in 0u64..10_000, short in 1usize..30) {
        let net = network(seed);
        let tol = ToleranceProfile::default();
        let op = build_gain_operator(&net.gains, &net.spec.concrete, SwitchingPolicy::Synchronized).unwrap();
        prop_assume!(check_small_gain(&op, &tol).unwrap().satisfied);
        let composed = compose_certificate(&construct_mu(&op, &tol).unwrap(), &op);
        let abs = net.spec.abstraction.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: Vec<Vector> = net.spec.concrete.subsystems().iter().map(|s| random_vector(&mut rng, s.dims().state)).collect();
        let xh0: Vec<Vector> = abs.subsystems().iter().map(|s| random_vector(&mut rng, s.dims().state)).collect();
        let modes = net.spec.concrete.subsystem(0).mode_count();
        let switching = SwitchingSignal::cycling(3, modes);
        // Open loop and bounded: feeding x̂ back could blow the abstraction up
        // until rounding dominates both V and the error.
        let controller = |k: usize, _: &[Vector]| -> Vec<Vector> {
            abs.subsystems()
                .iter()
                .map(|s| Vector::from_element(s.dims().input, (k as f64).sin()))
                .collect()
        };
        let run = |h| simulate_lockstep(&net.spec, &net.certs, &composed, &x0, &xh0, controller, &switching, h).unwrap();
        let long = run(40);
        prop_assert_eq!(&long, &run(40));
        let prefix = run(short);
        prop_assert_eq!(&prefix.error_trace[..], &long.error_trace[..=short]);
        prop_assert_eq!(&prefix.v_trace[..], &long.v_trace[..=short]);
        let bound = BoundConstants::from_certificate(&composed);
        prop_assert!(check_trajectory_bound(&prefix, &bound).passed());
        prop_assert!(check_trajectory_bound(&long, &bound).passed());
        prop_assert!(check_v_dominates_error(&long, &composed).passed());
    }
}

#[test]
fn templated_bound_dominates_finite_rings() {
    let tol = ToleranceProfile::default();
    let g = gains(0.5, 0.2);
    let template = templated_operator(vec![NodeTemplate {
        gains: g,
        in_degree: 1,
        out_degree: 1,
        feeds: vec![0],
    }])
    .unwrap();
    let bound = check_small_gain(&template, &tol).unwrap().radius_or_bound;
    for n in 3..=64 {
        let net = scalar_ring(n);
        let op = build_gain_operator(&vec![g; n], &net, SwitchingPolicy::Synchronized).unwrap();
        let r = check_small_gain(&op, &tol).unwrap().radius_or_bound;
        assert!(r <= bound + 1e-9, "n = {n}: {r} > {bound}");
    }
}

#[test]
fn radius_stays_below_column_sums() {
    let tol = ToleranceProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let m = Matrix::from_fn(n, n, |_, _| {
            if rng.random_bool(0.5) {
                rng.random_range(0.0..2.0)
            } else {
                0.0
            }
        });
        let r = spectral_radius(&m, &tol).unwrap();
        let max_sum = column_sums(&m).into_iter().fold(0.0, f64::max);
        assert!(r <= max_sum * (1.0 + 1e-12) + 1e-12);
    }
}
