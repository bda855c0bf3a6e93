use simnet_core::certificate::{
    check_dissipation_sampled, derive_gains, verify_decay, verify_output_dominance,
    verify_structure,
};
use simnet_core::network::Block;
use simnet_core::simulator::{check_trajectory_bound, check_v_decrease};
use simnet_core::small_gain::{build_gain_operator, check_small_gain, SwitchingPolicy};
use simnet_core::swing::{
    certify, closed_form_certificates, generate_network, reproduce_quantities, run_experiment,
    SwingParams,
};
use simnet_core::{LocalGains, ToleranceProfile};

#[test]
fn certificate_has_positive_margins() {
    let tol = ToleranceProfile::default();
    let params = SwingParams::default();
    let spec = generate_network(&params).unwrap();
    let abs = spec.abstraction.as_ref().unwrap();
    for (pos, cert) in closed_form_certificates(&params)
        .unwrap()
        .iter()
        .enumerate()
    {
        let (c, a) = (spec.concrete.subsystem(pos), abs.subsystem(pos));
        let dom = verify_output_dominance(cert, c, a, &tol).unwrap();
        assert!(dom.modes.iter().all(|m| m.margin.min_eigenvalue > 0.0));
        let decay = verify_decay(cert, c, &tol).unwrap();
        assert_eq!(decay.pairs.len(), 4);
        assert!(decay.pairs.iter().all(|p| p.margin.min_eigenvalue > 0.0));
        let st = verify_structure(cert, c, a, &tol).unwrap();
        assert!(st.passed(), "{st:?}");
    }
}

#[test]
fn gains_and_both_small_gain_ratios() {
    let q = reproduce_quantities(&SwingParams::default(), &ToleranceProfile::default()).unwrap();
    assert_eq!(q.alpha, 1.0);
    assert_eq!(q.lambda, 0.2);
    assert!(
        (q.rho_int_formula - 0.085584).abs() < 1e-6,
        "{}",
        q.rho_int_formula
    );
    assert!(q.satisfied && q.satisfied_reference);
    assert!((q.small_gain_bound_reference - 0.7275).abs() < 1e-12);
}

#[test]
fn ring_is_rotation_invariant() {
    let params = SwingParams::with_nodes(7);
    let spec = generate_network(&params).unwrap();
    let n = params.n_nodes;
    let shift = |b: &Block| Block::new((b.peer + 1) % n, b.range.clone());
    for i in 0..n {
        let (a, b) = (
            spec.concrete.subsystem(i),
            spec.concrete.subsystem((i + 1) % n),
        );
        for (ma, mb) in a.modes.iter().zip(&b.modes) {
            assert_eq!((&ma.a, &ma.b, &ma.c, &ma.d), (&mb.a, &mb.b, &mb.c, &mb.d));
            assert_eq!(
                ma.out_blocks.iter().map(shift).collect::<Vec<_>>(),
                mb.out_blocks
            );
            assert_eq!(
                ma.in_blocks.iter().map(shift).collect::<Vec<_>>(),
                mb.in_blocks
            );
        }
    }
    let mut rotated: Vec<(usize, usize)> = spec
        .edges()
        .iter()
        .map(|&(j, i)| ((j + 1) % n, (i + 1) % n))
        .collect();
    rotated.sort_unstable();
    let mut edges = spec.edges();
    edges.sort_unstable();
    assert_eq!(rotated, edges);
}

#[test]
fn templated_bound_equals_finite_rings() {
    let tol = ToleranceProfile::default();
    let templated = certify(&SwingParams::default(), &tol)
        .unwrap()
        .small_gain
        .radius_or_bound;
    for n in [3, 10, 50] {
        let params = SwingParams::with_nodes(n);
        let spec = generate_network(&params).unwrap();
        let abs = spec.abstraction.as_ref().unwrap();
        let gains: Vec<_> = closed_form_certificates(&params)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(pos, c)| {
                derive_gains(c, spec.concrete.subsystem(pos), abs.subsystem(pos), &tol).unwrap()
            })
            .collect();
        let op =
            build_gain_operator(&gains, &spec.concrete, SwitchingPolicy::Synchronized).unwrap();
        let r = check_small_gain(&op, &tol).unwrap().radius_or_bound;
        assert!((r - templated).abs() <= 1e-9, "n = {n}: {r} vs {templated}");
    }
}

#[test]
fn experiment_converges_within_the_envelope() {
    let exp = run_experiment(
        &SwingParams::with_nodes(20),
        100,
        3,
        &ToleranceProfile::default(),
    )
    .unwrap();
    assert!(check_trajectory_bound(&exp.run, &exp.bound).passed());
    assert!(check_v_decrease(&exp.run, &exp.pipeline.composed).passed());
    let e = &exp.run.error_trace;
    assert!(e[100] / e[0] < 1e-3);
}

#[test]
fn weakened_coupling_gain_is_refuted() {
    let tol = ToleranceProfile::default();
    let params = SwingParams::default();
    let spec = generate_network(&params).unwrap();
    let abs = spec.abstraction.as_ref().unwrap();
    let cert = &closed_form_certificates(&params).unwrap()[0];
    let (c, a) = (spec.concrete.subsystem(0), abs.subsystem(0));
    let g = derive_gains(cert, c, a, &tol).unwrap();
    assert!(check_dissipation_sampled(cert, c, a, &g, 1000, 1)
        .unwrap()
        .passed());
    let weak = LocalGains {
        rho_int: g.rho_int / 10.0,
        ..g
    };
    let r = check_dissipation_sampled(cert, c, a, &weak, 1000, 1).unwrap();
    assert!(r.violations > 0);
    let w = r.witness.unwrap();
    assert!(w.lhs > w.rhs);
}
