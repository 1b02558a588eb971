use lz_landscape::noise::{monte_carlo_noisy_objective, noise_report, predicted_decrease, NoiseKind, NoiseSpec};
use lz_landscape::optimizer::{maximize, trap_run, OptimizerConfig, TrapExperiment};
use lz_landscape::{propagate, ControlPulse, ObjectiveSpec, State2, DEFAULT_NODES_PER_SEGMENT};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng) -> State2 {
    let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    State2::normalized(Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])).unwrap()
}

fn optimized_flip() -> ControlPulse {
    let spec = ObjectiveSpec::transition(State2::basis(0), State2::basis(1));
    let rec = trap_run(&spec, &TrapExperiment::new(40, 17), 0).unwrap();
    assert!(rec.final_value > 0.999);
    ControlPulse::uniform(rec.total_time, rec.final_amplitudes).unwrap()
}

#[test]
fn bounds_and_sign_on_optimized_pulses() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 100 {
        let spec = ObjectiveSpec::transition(random_state(&mut rng), random_state(&mut rng));
        let n = rng.gen_range(6..=20);
        let t = rng.gen_range(3.0..8.0);
        let start = ControlPulse::uniform(t, (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let run = maximize(&spec, &start, 1.0, &OptimizerConfig::default()).unwrap();
        if run.value < 0.99 {
            continue;
        }
        let trace = propagate(&run.pulse, 1.0, DEFAULT_NODES_PER_SEGMENT).unwrap();
        let sigma = rng.gen_range(0.0..0.1);
        let awn = predicted_decrease(&spec, &trace, &NoiseSpec::new(NoiseKind::Additive, sigma).unwrap()).unwrap();
        let mwn = predicted_decrease(
            &spec,
            &trace,
            &NoiseSpec::new(NoiseKind::Multiplicative, sigma).unwrap(),
        )
        .unwrap();
        assert!(
            awn.decrease >= 0.0 && awn.decrease <= sigma * sigma * t + 1e-12,
            "{awn:?}"
        );
        assert!(
            mwn.decrease >= 0.0 && mwn.decrease <= sigma * sigma * run.pulse.energy() + 1e-12,
            "{mwn:?}"
        );
        assert!((awn.bound - sigma * sigma * t).abs() < 1e-15);
        checked += 1;
    }
}

#[test]
fn monte_carlo_agrees_with_second_order_prediction() {
    // allowance for the fourth-order term: (σ²T)²
    let pulse = optimized_flip();
    let trace = propagate(&pulse, 1.0, DEFAULT_NODES_PER_SEGMENT).unwrap();
    let spec = ObjectiveSpec::transition(State2::basis(0), State2::basis(1));
    for sigma in [0.01, 0.02, 0.05] {
        let noise = NoiseSpec::new(NoiseKind::Additive, sigma).unwrap();
        let r = noise_report(&spec, &trace, &noise, 10_000, 0.0625, 99, 4).unwrap();
        let slack = 3.0 * r.monte_carlo.standard_error + (sigma * sigma * pulse.total_time()).powi(2);
        let gap = (r.observed_decrease() - r.prediction.decrease).abs();
        assert!(gap <= slack, "sigma {sigma}: gap {gap:e} > {slack:e}");
    }
}

#[test]
fn noise_step_refinement_is_consistent() {
    let pulse = optimized_flip();
    let spec = ObjectiveSpec::transition(State2::basis(0), State2::basis(1));
    let noise = NoiseSpec::new(NoiseKind::Additive, 0.02).unwrap();
    let coarse = monte_carlo_noisy_objective(&spec, &pulse, 1.0, &noise, 10_000, 0.125, 3, 4).unwrap();
    let fine = monte_carlo_noisy_objective(&spec, &pulse, 1.0, &noise, 10_000, 0.0625, 3, 4).unwrap();
    let se = coarse.standard_error.hypot(fine.standard_error);
    assert!((coarse.mean - fine.mean).abs() <= 3.0 * se, "{coarse:?} vs {fine:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_additive(a in prop::collection::vec(-10.0..10.0f64, 1..12), b in prop::collection::vec(-10.0..10.0f64, 1..12), ta in 0.1..5.0f64, tb in 0.1..5.0f64) {
        let pa = ControlPulse::uniform(ta, a).unwrap();
        let pb = ControlPulse::uniform(tb, b).unwrap();
        let joined = pa.concat(&pb);
        let by_segment: f64 = joined.segments().map(|s| s.amplitude * s.amplitude * s.duration()).sum();
        prop_assert_eq!(joined.energy(), by_segment);
        prop_assert!((joined.energy() - (pa.energy() + pb.energy())).abs() <= 1e-12 * joined.energy().max(1.0));
        prop_assert!(joined.energy() >= 0.0);
    }

    #[test]
    fn gate_decrease_equals_bounds(amps in prop::collection::vec(-6.0..6.0f64, 1..10), t in 0.5..8.0f64, sigma in 0.0..0.2f64) {
        let pulse = ControlPulse::uniform(t, amps).unwrap();
        let trace = propagate(&pulse, 1.0, DEFAULT_NODES_PER_SEGMENT).unwrap();
        let gate = ObjectiveSpec::gate(*trace.final_propagator());
        let awn = predicted_decrease(&gate, &trace, &NoiseSpec::new(NoiseKind::Additive, sigma).unwrap()).unwrap();
        let mwn = predicted_decrease(&gate, &trace, &NoiseSpec::new(NoiseKind::Multiplicative, sigma).unwrap()).unwrap();
        prop_assert!((awn.decrease - sigma * sigma * t).abs() < 1e-12);
        prop_assert!((mwn.decrease - sigma * sigma * pulse.energy()).abs() < 1e-12 * (1.0 + pulse.energy()));
    }
}
