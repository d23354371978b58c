use nve_synth::cli::{config_from_output, parse_config, ScenarioConfig, Scenario};
use nve_synth::dynamics::{jc_gate, rotation_matrix, run_schedule, selective_rotation_gate, Engine, Mode};
use nve_synth::model::SystemParams;
use nve_synth::ops::{partial_trace, CVector, DensityMatrix, HilbertSpace, StateVector, C64, G};
use nve_synth::protocols::coherent_prediction;
use nve_synth::synthesis::{apply_inverse, solve_timing, synthesize, timing_residual, TargetState, TimingCondition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state_from(space: &HilbertSpace, re: &[f64], im: &[f64]) -> Option<StateVector> {
    let v = CVector::from_iterator(space.total(), re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)));
    if v.norm() < 1e-3 {
        return None;
    }
    StateVector::normalized(space.clone(), v).ok()
}

fn excitations(psi: &StateVector) -> f64 {
    let space = psi.space();
    (0..space.total())
        .map(|i| {
            let l = space.label_of(i);
            let e = if l[0] == G { 0 } else { 1 };
            (e + l[1] + l[2]) as f64 * psi.amplitudes()[i].norm_sqr()
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_is_unitary(theta in -10.0..10.0f64, alpha in -10.0..10.0f64, beta in -10.0..10.0f64) {
        let m = rotation_matrix(theta, alpha, beta);
        for i in 0..2 {
            for j in 0..2 {
                let dot: C64 = (0..2).map(|k| m[k][i].conj() * m[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gates_keep_norm(
        re in prop::collection::vec(-1.0..1.0f64, 32),
        im in prop::collection::vec(-1.0..1.0f64, 32),
        t in 0.0..20.0f64,
        theta in 0.0..6.3f64,
        class in -3i64..=3,
    ) {
        let space = HilbertSpace::new(vec![2, 4, 4]).unwrap();
        let Some(psi) = state_from(&space, &re, &im) else { return Ok(()) };
        let p = SystemParams::default();
        let a = jc_gate(&psi, Mode::One, t, &p).unwrap();
        let b = jc_gate(&a, Mode::Two, t, &p).unwrap();
        let c = selective_rotation_gate(&b, class, theta, 0.3, -0.7).unwrap();
        prop_assert!((c.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resonant_gates_conserve_excitations(
        re in prop::collection::vec(-1.0..1.0f64, 32),
        im in prop::collection::vec(-1.0..1.0f64, 32),
        t in -20.0..20.0f64,
    ) {
        let space = HilbertSpace::new(vec![2, 4, 4]).unwrap();
        let Some(psi) = state_from(&space, &re, &im) else { return Ok(()) };
        let p = SystemParams::default();
        let out = jc_gate(&psi, Mode::Two, t, &p).unwrap();
        prop_assert!((excitations(&out) - excitations(&psi)).abs() < 1e-10);
        let back = jc_gate(&out, Mode::Two, -t, &p).unwrap();
        prop_assert!((back.amplitudes() - psi.amplitudes()).norm() < 1e-10);
    }

    #[test]
    fn synthesis_reaches_random_targets(seed in any::<u64>(), n1 in 0usize..=2, n2 in 0usize..=2) {
        let target = TargetState::random(n1, n2, &mut ChaCha8Rng::seed_from_u64(seed));
        let p = SystemParams::default();
        let report = synthesize(&target, &p).unwrap();
        prop_assert!(report.achieved_fidelity >= 1.0 - 1e-6);
        prop_assert!(report.inverse_residual <= 1e-9);
        let space = target.system_space();
        let psi0 = StateVector::basis(&space, &[G, 0, 0]).unwrap();
        let out = run_schedule(&report.schedule, &psi0, &Engine::Analytic, &p).unwrap();
        let psi_t = target.to_state(&space).unwrap();
        prop_assert!(out.final_state.fidelity(&psi_t).unwrap() >= 1.0 - 1e-6);
        let back = apply_inverse(&report.schedule, &psi_t, &p).unwrap();
        prop_assert!(back.amplitude(&[G, 0, 0]).unwrap().norm_sqr() >= 1.0 - 1e-9);
        prop_assert!(report.schedule.active_time() <= report.predicted_time * (1.0 + 1e-12));
    }

    #[test]
    fn solved_timings_satisfy_single_conditions(c in 0.2..5.0f64, v in -0.99..0.99f64) {
        for cond in [TimingCondition::SinZero(c), TimingCondition::CosZero(c), TimingCondition::CosEquals(c, v)] {
            let (t, res) = solve_timing(&[cond], 10.0).unwrap();
            prop_assert!(t > 0.0 && t <= 10.0 * std::f64::consts::PI + 1e-9);
            prop_assert!(res < 1e-20);
            prop_assert!((timing_residual(&[cond], t) - res).abs() < 1e-24);
        }
    }

    #[test]
    fn coherent_amplitudes_stay_bounded(t in 0.0..2000.0f64, g1 in 0.0..0.01f64, g2 in 0.0..0.01f64) {
        let p = SystemParams { g1, g2, ..SystemParams::default() };
        let c = coherent_prediction(&p, t).unwrap();
        let bound = (g1 / p.delta1).powi(2) + (g2 / p.delta2).powi(2);
        prop_assert!(c.alpha.norm_sqr() + c.beta.norm_sqr() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn partial_trace_keeps_trace(
        re in prop::collection::vec(-1.0..1.0f64, 18),
        im in prop::collection::vec(-1.0..1.0f64, 18),
        keep in 0usize..3,
    ) {
        let space = HilbertSpace::new(vec![2, 3, 3]).unwrap();
        let Some(psi) = state_from(&space, &re, &im) else { return Ok(()) };
        let rho: DensityMatrix = psi.to_density();
        let reduced = partial_trace(&rho, &[keep]).unwrap();
        prop_assert!((reduced.trace() - 1.0).abs() < 1e-12);
        prop_assert!(reduced.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn params_round_trip_through_output(delta in 20.0..400.0f64, omega in 0.0..5.0f64, seed in 0..=i64::MAX as u64) {
        let mut c = ScenarioConfig::new(Scenario::Fig4a);
        c.params = SystemParams { delta, omega, ..SystemParams::default() };
        c.seed = seed;
        let reparsed = parse_config(&c.to_toml()).unwrap();
        prop_assert_eq!(&reparsed, &c);
        let doc: String = c.to_toml().lines().map(|l| format!("# {l}\n")).collect();
        prop_assert_eq!(config_from_output(&doc).unwrap(), c);
    }
}
