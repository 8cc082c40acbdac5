use dpweights::calibration::{empirical_term, max_supported_epsilon, noise_scale, sensitivity, BoundBranch};
use dpweights::simulate::log_grid;
use dpweights::{NoiseVariant, PrivacyBudget, TrainingConfig};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = TrainingConfig> {
    (1u64..50, 1e-6f64..1e-1, 0.1f64..10.0, 2u64..100_000, 1u64..512)
        .prop_map(|(e, lr, c, n, b)| TrainingConfig::new(e, lr, c, n, b.min(n)).unwrap())
}

fn l1_coefficient(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

#[test]
fn split_sigma_strictly_decreasing_on_log_grid() {
    let cfg = TrainingConfig::new(10, 5e-5, 1.0, 1000, 10).unwrap();
    let grid = log_grid(0.01, 1000.0, 2000).unwrap();
    let sigmas: Vec<f64> = grid
        .iter()
        .map(|&e| noise_scale(&cfg, &PrivacyBudget::new(e, 1e-6).unwrap(), NoiseVariant::Split).sigma)
        .collect();
    for (w, e) in sigmas.windows(2).zip(grid.windows(2)) {
        assert!(w[1] < w[0], "sigma not decreasing between eps {} and {}", e[0], e[1]);
    }
}

#[test]
fn empirical_term_at_one_is_the_printed_constant() {
    assert_eq!(empirical_term(1.0).unwrap(), 0.009760);
}

proptest! {
    #[test]
    fn sensitivity_scales_exactly(cfg in config()) {
        let dw = sensitivity(&cfg).delta_w();
        let doubled_e = TrainingConfig::new(cfg.epochs() * 2, cfg.learning_rate(), cfg.clipping_norm(), cfg.dataset_size(), cfg.batch_size()).unwrap();
        let ratio = sensitivity(&doubled_e).delta_w() / dw;
        prop_assert!((ratio - 2.0).abs() <= 2.0 * f64::EPSILON, "{ratio}");
        if cfg.dataset_size() <= u64::MAX / 2 {
            let doubled_n = TrainingConfig::new(cfg.epochs(), cfg.learning_rate(), cfg.clipping_norm(), cfg.dataset_size() * 2, cfg.batch_size()).unwrap();
            let ratio = sensitivity(&doubled_n).delta_w() / dw;
            prop_assert!((ratio - 0.5).abs() <= f64::EPSILON, "{ratio}");
        }
    }

    #[test]
    fn split_sigma_decreasing_in_epsilon(cfg in config(), e1 in 0.01f64..1000.0, f in 1.0001f64..10.0, delta in 1e-12f64..0.5) {
        let e2 = e1 * f;
        let s1 = noise_scale(&cfg, &PrivacyBudget::new(e1, delta).unwrap(), NoiseVariant::Split).sigma;
        let s2 = noise_scale(&cfg, &PrivacyBudget::new(e2, delta).unwrap(), NoiseVariant::Split).sigma;
        prop_assert!(s2 < s1);
    }

    #[test]
    fn split_sigma_dominates_classical_term(cfg in config(), eps in 1e-3f64..1e4, delta in 1e-15f64..0.9) {
        let b = PrivacyBudget::new(eps, delta).unwrap();
        let s = noise_scale(&cfg, &b, NoiseVariant::Split);
        let classical = l1_coefficient(delta) * sensitivity(&cfg).delta_w() / eps;
        prop_assert!(s.sigma >= classical);
        prop_assert!(s.sigma2 >= 0.0);
    }

    #[test]
    fn empirical_term_decreasing(e in 1e-4f64..1e4, f in 1.001f64..100.0) {
        prop_assert!(empirical_term(e * f).unwrap() < empirical_term(e).unwrap());
    }

    #[test]
    fn bound_is_minimum_of_branches(dw in 1e-12f64..10.0, delta in 1e-15f64..0.99) {
        let b = max_supported_epsilon(dw, delta).unwrap();
        prop_assert!(b.log_delta >= 0.0 && b.mixed >= 0.0 && b.empirical >= 0.0);
        let brute = b.log_delta.min(b.mixed).min(b.empirical);
        prop_assert_eq!(b.value, brute);
        let expected = if brute == b.log_delta {
            BoundBranch::LogDelta
        } else if brute == b.mixed {
            BoundBranch::Mixed
        } else {
            BoundBranch::Empirical
        };
        prop_assert_eq!(b.branch, expected);
    }
}
