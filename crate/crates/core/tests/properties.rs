use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use isde::dynamics::simulate_path;
use isde::picard::picard_solve;
use isde::qwiener::sample_increments;
use isde::wellposedness::{theorem1_check, theorem2_check};
use isde::{ControlSignal, ImpulseEvent, LipschitzBundle, NoiseSpec, ProblemSpec, SemigroupSpec, SpectralState};

fn scalar_spec(mu: f64, y0: f64, node: usize, d: f64, e: f64, v: f64) -> ProblemSpec {
    ProblemSpec::new(
        SemigroupSpec::for_horizon(vec![mu], 1.0).unwrap(),
        NoiseSpec::new(vec![1.0]).unwrap(),
        1.0,
        SpectralState::new(vec![y0]).unwrap(),
    )
    .with_impulses(vec![ImpulseEvent::new(
        node as f64 / 64.0,
        DMatrix::from_element(1, 1, d),
        DMatrix::from_element(1, 1, e),
        DVector::from_element(1, v),
    )
    .unwrap()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_impulsive_solution_is_explicit(
        mu in -5.0f64..1.0,
        y0 in -2.0f64..2.0,
        node in 1usize..64,
        d in -0.9f64..0.9,
        e in -1.0f64..1.0,
        v in -1.0f64..1.0,
    ) {
        let spec = scalar_spec(mu, y0, node, d, e, v);
        let grid = spec.grid(1.0 / 64.0, None).unwrap();
        let noise = sample_increments(&spec.noise, &grid, 0, 0).unwrap();
        let u = ControlSignal::zero(1.0, 1, 1).unwrap();
        let path = simulate_path(&spec, &u, &noise).unwrap();
        let t1 = node as f64 / 64.0;
        let want = (mu * (1.0 - t1)).exp() * ((1.0 + d) * (mu * t1).exp() * y0 + e * v);
        let got = path.final_state().as_slice()[0];
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn theorem_two_constant_is_linear_in_lipschitz(
        lg in 0.0f64..1.0,
        lh in 0.0f64..1.0,
        scale in 0.0f64..4.0,
    ) {
        let spec = scalar_spec(-1.0, 1.0, 32, 0.5, 1.0, 0.2);
        let base = theorem2_check(&spec, &LipschitzBundle::new(0.0, 0.0, lg, lh).unwrap()).unwrap();
        let scaled = theorem2_check(&spec, &LipschitzBundle::new(0.0, 0.0, scale * lg, scale * lh).unwrap()).unwrap();
        prop_assert!((scaled.k - scale * base.k).abs() <= 1e-12 * scaled.k.max(1.0));
        if scale <= 1.0 && base.verdict {
            prop_assert!(scaled.verdict);
        }
    }

    #[test]
    fn theorem_one_verdict_is_monotone_in_growth(
        gg in 0.0f64..0.2,
        gh in 0.0f64..0.2,
        shrink in 0.0f64..1.0,
    ) {
        let spec = scalar_spec(-2.0, 1.0, 16, 0.0, 0.0, 0.0);
        let big = theorem1_check(&spec, &LipschitzBundle::new(gg, gh, 0.0, 0.0).unwrap()).unwrap();
        let small = theorem1_check(&spec, &LipschitzBundle::new(shrink * gg, shrink * gh, 0.0, 0.0).unwrap()).unwrap();
        prop_assert!(small.script_n <= big.script_n);
        prop_assert!(small.k <= big.k);
        if big.verdict {
            prop_assert!(small.verdict);
        }
    }

    #[test]
    fn increments_depend_only_on_seed_and_index(seed in any::<u64>(), index in 0u64..1000) {
        let ns = NoiseSpec::new(vec![1.0, 0.3]).unwrap();
        let grid: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        let a = sample_increments(&ns, &grid, seed, index).unwrap();
        let b = sample_increments(&ns, &grid, seed, index).unwrap();
        let c = sample_increments(&ns, &grid, seed, index + 1).unwrap();
        let all = |p: &isde::qwiener::NoisePath| (0..p.steps()).flat_map(|n| p.row(n).to_vec()).collect::<Vec<_>>();
        prop_assert_eq!(all(&a), all(&b));
        prop_assert_ne!(all(&a), all(&c));
    }

    #[test]
    fn coarsening_preserves_total_increment(seed in any::<u64>(), factor in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let ns = NoiseSpec::new(vec![0.5]).unwrap();
        let grid: Vec<f64> = (0..=32).map(|i| i as f64 / 32.0).collect();
        let fine = sample_increments(&ns, &grid, seed, 0).unwrap();
        let coarse = fine.coarsen(factor).unwrap();
        let total = |p: &isde::qwiener::NoisePath| (0..p.steps()).map(|n| p.row(n)[0]).sum::<f64>();
        prop_assert_eq!(coarse.steps(), 32 / factor);
        prop_assert!((total(&fine) - total(&coarse)).abs() < 1e-12);
    }
}

#[test]
fn picard_with_state_independent_fields_stops_after_two_sweeps() {
    let spec = scalar_spec(-1.0, 1.0, 32, 0.5, 1.0, 0.2);
    let grid = spec.grid(1.0 / 64.0, None).unwrap();
    let noises: Vec<_> = (0..8)
        .map(|i| sample_increments(&spec.noise, &grid, 3, i).unwrap())
        .collect();
    let u = ControlSignal::zero(1.0, 1, 1).unwrap();
    let r = picard_solve(&spec, &u, &noises, 1e-12, 10).unwrap();
    assert!(r.converged);
    assert_eq!(r.distances.len(), 2);
    assert_eq!(r.distances[1], 0.0);
}
