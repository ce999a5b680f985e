//! Property tests for the crate's structural invariants.

use mmdiff_core::diffusion::{eps_to_score, score_to_eps};
use mmdiff_core::field::{Field, JointField, JointLayout};
use mmdiff_core::metrics::{disorientation, SymmetryGroup};
use mmdiff_core::schedule::NoiseSchedule;
use mmdiff_core::solver::{ess, systematic_resample_indices};
use proptest::prelude::*;

fn schedule() -> NoiseSchedule {
    NoiseSchedule::linear(64, 1e-3, 0.15).expect("valid schedule")
}

proptest! {
    #[test]
    fn score_eps_are_mutual_inverses(
        score in prop::collection::vec(-50.0f64..50.0, 1..12),
        t in 1usize..=64,
    ) {
        let s = schedule();
        let eps = score_to_eps(&score, t, &s);
        let back = eps_to_score(&eps, t, &s);
        for (a, b) in back.iter().zip(&score) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_bar_is_monotone_and_in_unit_interval(
        steps in 1usize..200,
        beta_start in 0.0f64..0.05,
        extra in 0.0f64..0.3,
    ) {
        let s = NoiseSchedule::linear(steps, beta_start, (beta_start + extra).min(0.999)).unwrap();
        let mut prev = 1.0;
        for t in 0..=steps {
            let ab = s.alpha_bar(t);
            prop_assert!(ab > 0.0 && ab <= 1.0);
            prop_assert!(ab <= prev + 1e-15);
            prev = ab;
        }
    }

    #[test]
    fn ess_stays_within_bounds(
        raw in prop::collection::vec(-30.0f64..5.0, 1..64),
    ) {
        let n = raw.len() as f64;
        let value = ess(&raw).unwrap();
        prop_assert!(value >= 1.0 - 1e-9);
        prop_assert!(value <= n + 1e-9);
    }

    #[test]
    fn systematic_counts_obey_floor_ceil_bracket(
        raw in prop::collection::vec(0.0f64..1.0, 1..16),
        u in 0.0f64..1.0,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-9);
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let n = weights.len();
        let idx = systematic_resample_indices(&weights, u);
        prop_assert_eq!(idx.len(), n);
        let mut counts = vec![0usize; n];
        for i in idx {
            counts[i] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let expect = n as f64 * weights[i];
            // floating-point cumulative sums can put an exact boundary on
            // either side; allow the bracket to widen by strict rounding slop
            prop_assert!(c as f64 >= expect.floor() - 1e-9, "i={} c={} expect={}", i, c, expect);
            prop_assert!(c as f64 <= expect.ceil() + 1e-9, "i={} c={} expect={}", i, c, expect);
        }
    }

    #[test]
    fn joint_field_flatten_is_a_bijection(
        h in 1usize..5,
        w in 1usize..5,
        c_main in 1usize..4,
        c_aux in 1usize..4,
        seed in any::<u64>(),
    ) {
        let layout = JointLayout { h, w, c_main, c_aux };
        let mut rng = mmdiff_core::rng::rng_from_seed(seed);
        let values = mmdiff_core::rng::standard_normal_vec(&mut rng, layout.joint_len());
        let names: Vec<String> = (0..c_main + c_aux).map(|i| format!("c{i}")).collect();
        let jf = JointField::from_flat(&layout, &values, names.clone()).unwrap();
        prop_assert_eq!(jf.flatten(), values.clone());
        let main2 = Field::from_data(h, w, c_main, jf.main.data.clone()).unwrap();
        prop_assert_eq!(main2.data, values[..layout.main_len()].to_vec());
    }

    #[test]
    fn disorientation_is_a_quotient_metric(
        a in -10.0f64..10.0,
        b in -10.0f64..10.0,
        c in -10.0f64..10.0,
        m in 1usize..6,
        k in -3i32..3,
    ) {
        let g = SymmetryGroup::new(m).unwrap();
        // symmetry
        prop_assert!((disorientation(a, b, g) - disorientation(b, a, g)).abs() < 1e-9);
        // group invariance
        let shifted = b + k as f64 * g.period();
        prop_assert!((disorientation(a, b, g) - disorientation(a, shifted, g)).abs() < 1e-8);
        // range bound
        let d = disorientation(a, b, g);
        prop_assert!((0.0..=180.0 / m as f64 + 1e-9).contains(&d));
        // triangle inequality on the quotient circle
        prop_assert!(
            disorientation(a, c, g) <= disorientation(a, b, g) + disorientation(b, c, g) + 1e-8
        );
    }
}
