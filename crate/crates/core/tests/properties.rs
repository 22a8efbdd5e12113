use erosion_flow::analytics::{kappa, lambda_coalescing};
use erosion_flow::generator::{apply_generator, consistency_check, PwLinear};
use erosion_flow::lattice::{ArrowField, Window};
use erosion_flow::npoint::erosion_theta_family;
use erosion_flow::paths::{sample_theta_pair, CouplingParams, TimeGrid};
use erosion_flow::stats::{local_time_tanaka, occupation_diagonal};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tanaka_sums_are_nonnegative(path in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
        let scale: f64 = path.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!(local_time_tanaka(&path).unwrap() >= -1e-12 * scale);
    }

    #[test]
    fn kappa_scales_and_dominates_lambda(t in 1e-3f64..50.0, x in 0.0f64..8.0) {
        let k = kappa(t, x).unwrap();
        let scaled = t.sqrt() * kappa(1.0, x / t.sqrt()).unwrap();
        prop_assert!((k - scaled).abs() <= 1e-13 * (1.0 + k));
        prop_assert!(kappa(t, -x).unwrap() == k);
        let l = lambda_coalescing(t, x).unwrap();
        prop_assert!((4.0 / (std::f64::consts::PI * t)).sqrt() * l <= k + 1e-12);
    }

    #[test]
    fn erosion_families_are_consistent(theta in 0.0f64..5.0, k_max in 2usize..24) {
        let fam = erosion_theta_family(theta, k_max).unwrap();
        let rep = consistency_check(&fam, k_max - 1);
        prop_assert!(rep.complete);
        prop_assert!(rep.consistency.is_empty(), "{:?}", rep.consistency);
        prop_assert!(rep.positivity.is_empty());
    }

    #[test]
    fn symmetric_functions_have_permutation_invariant_generators(
        base in proptest::collection::vec(-3i32..3, 4),
        rot in 0usize..4,
        theta in 0.1f64..3.0,
    ) {
        let fam = erosion_theta_family(theta, 6).unwrap();
        let g = PwLinear::pairwise_distance_sum(4);
        let x: Vec<f64> = base.iter().map(|&v| v as f64).collect();
        let mut y = x.clone();
        y.rotate_left(rot);
        let (ax, ay) = (apply_generator(&fam, &g, &x, 0.0).unwrap(), apply_generator(&fam, &g, &y, 0.0).unwrap());
        prop_assert!((ax - ay).abs() < 1e-12, "{} vs {}", ax, ay);
    }

    #[test]
    fn arrow_fields_round_trip(signs in proptest::collection::vec(prop_oneof![Just(-1i64), Just(1i64)], 1..400)) {
        // A single row with 2 * len lattice points holds len sites of matching parity.
        let w = Window::new(0, 2 * signs.len() as i64 - 1, 0, 0).unwrap();
        prop_assume!(w.n_sites() == signs.len());
        let f = ArrowField::from_signs(w, 42, &signs).unwrap();
        prop_assert_eq!(f.signs().collect::<Vec<_>>(), signs);
        prop_assert_eq!(ArrowField::from_json(&f.to_json().unwrap()).unwrap(), f.clone());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        prop_assert_eq!(ArrowField::read_binary(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn theta_pairs_are_well_formed(seed in any::<u64>(), theta in 0.2f64..4.0, x in -1.0f64..1.0) {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let params = CouplingParams::new(0.0, 0.0, theta).unwrap();
        let (pair, clock) = sample_theta_pair(x, 0.0, &params, &g, 4, seed).unwrap();
        pair.validate().unwrap();
        let occ = occupation_diagonal(&pair);
        prop_assert!((0.0..=1.0).contains(&occ));
        prop_assert!(clock.clock_residual(g.dt) < 1e-12);
        prop_assert!(clock.exact_occupation.windows(2).all(|w| w[1] >= w[0]));
    }
}
