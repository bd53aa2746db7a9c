use proptest::prelude::*;

use t2flow::diagnostics::{conserved_ab, record};
use t2flow::evolution::{evolve, rhs, EvolutionConfig};
use t2flow::fields::PeriodicGrid;
use t2flow::initial_data::{make_initial_data, SamplerMode, SamplerSpec};
use t2flow::io::{checkpoint_bytes, checkpoint_from_bytes, sha256_hex};

fn random_mode() -> impl Strategy<Value = SamplerMode> {
    prop_oneof![
        Just(SamplerMode::PolarisedRandom),
        Just(SamplerMode::B0Random),
        Just(SamplerMode::GenericRandom),
    ]
}

fn spec(mode: SamplerMode, seed: u64, b: f64) -> SamplerSpec {
    let mut s = SamplerSpec::new(mode, seed);
    s.m_max = 4;
    if mode == SamplerMode::GenericRandom {
        s.target_b = b;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn checkpoints_round_trip_bit_exactly(mode in random_mode(), seed in any::<u64>(), b in -0.3f64..0.3) {
        let grid = PeriodicGrid::new(32).unwrap();
        let state = make_initial_data(&spec(mode, seed, b), &grid).unwrap();
        let bytes = checkpoint_bytes(&state);
        let back = checkpoint_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &state);
        prop_assert_eq!(checkpoint_bytes(&back), bytes);
    }

    #[test]
    fn generation_is_deterministic(mode in random_mode(), seed in any::<u64>()) {
        let grid = PeriodicGrid::new(32).unwrap();
        let s = spec(mode, seed, 0.1);
        let a = sha256_hex(&checkpoint_bytes(&make_initial_data(&s, &grid).unwrap()));
        let b = sha256_hex(&checkpoint_bytes(&make_initial_data(&s, &grid).unwrap()));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sampled_b_matches_class(mode in random_mode(), seed in any::<u64>(), b in -0.3f64..0.3) {
        let grid = PeriodicGrid::new(32).unwrap();
        let state = make_initial_data(&spec(mode, seed, b), &grid).unwrap();
        let (_, got) = conserved_ab(&state);
        let want = if mode == SamplerMode::GenericRandom { b } else { 0.0 };
        prop_assert!((got - want).abs() < 1e-14, "B = {got}, expected {want}");
    }

    #[test]
    fn pi_q_flux_telescopes(seed in any::<u64>(), b in -0.3f64..0.3, half in 8usize..40) {
        let Ok(grid) = PeriodicGrid::new(2 * half) else {
            return Ok(());
        };
        let state = make_initial_data(&spec(SamplerMode::GenericRandom, seed, b), &grid).unwrap();
        let d = rhs(&state).unwrap();
        let scale: f64 = d.d_pi_q.iter().map(|x| x.abs()).sum();
        prop_assert!(d.d_pi_q.iter().sum::<f64>().abs() <= 1e-13 * (1.0 + scale));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn short_runs_conserve_b(seed in any::<u64>(), b in 0.05f64..0.3) {
        let grid = PeriodicGrid::new(64).unwrap();
        let state = make_initial_data(&spec(SamplerMode::GenericRandom, seed, b), &grid).unwrap();
        let config = EvolutionConfig { output_interval: 0.25, ..EvolutionConfig::default() };
        let mut worst = 0.0f64;
        evolve(state, 1.0, &config, |_, r| worst = worst.max((r.b_const / b - 1.0).abs())).unwrap();
        prop_assert!(worst < 1e-12, "relative drift {worst}");
    }

    #[test]
    fn polarised_data_stays_polarised(seed in any::<u64>()) {
        let grid = PeriodicGrid::new(64).unwrap();
        let state = make_initial_data(&spec(SamplerMode::PolarisedRandom, seed, 0.0), &grid).unwrap();
        let config = EvolutionConfig { output_interval: 0.5, ..EvolutionConfig::default() };
        let end = evolve(state, 1.0, &config, |_, _| {}).unwrap();
        prop_assert!(end.q.iter().chain(&end.pi_q).all(|x| *x == 0.0));
        let rec = record(&end, 0.0);
        prop_assert_eq!(rec.eq_diag, 0.0);
    }
}
