#![allow(clippy::excessive_precision)]

use dpweights::calibration::sensitivity;
use dpweights::mechanism::container::{from_bytes, load_weights, save_weights, to_bytes};
use dpweights::mechanism::{apply_noise, noise_then_account, BudgetGuard, NoiseOptions, Tensor, TensorData, WeightSet};
use dpweights::{Error, NoiseVariant, PrivacyBudget, TrainingConfig};
use proptest::prelude::*;

fn zeros(n: usize) -> WeightSet {
    let mut ws = WeightSet::default();
    ws.insert("w", Tensor::new(vec![n], TensorData::F64(vec![0.0; n])).unwrap());
    ws
}

fn values(ws: &WeightSet, name: &str) -> Vec<f64> {
    ws.get(name).unwrap().data().to_f64()
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn empirical_moments_within_five_standard_errors() {
    let n = 1_000_000;
    for (sigma, seed) in [(1.0, 1u64), (0.25, 2), (3.0, 3)] {
        let (noisy, receipt) = apply_noise(&zeros(n), sigma, seed, &NoiseOptions::default()).unwrap();
        let (mean, var) = moments(&values(&noisy, "w"));
        let std = var.sqrt();
        let nf = n as f64;
        let mean_se = sigma / nf.sqrt();
        let std_se = 1.0 / (2.0 * nf).sqrt();
        assert!(mean.abs() <= 5.0 * mean_se, "sigma {sigma}: mean {mean}");
        assert!((std / sigma - 1.0).abs() <= 5.0 * std_se, "sigma {sigma}: std {std}");
        if mean.abs() > 4.0 * mean_se || (std / sigma - 1.0).abs() > 4.0 * std_se {
            eprintln!("note: sigma {sigma} moments beyond 4 standard errors");
        }
        // the receipt reports the same draws
        assert!((receipt.tensors[0].mean - mean).abs() < 1e-12);
        assert!((receipt.tensors[0].std - std).abs() < 1e-9);
    }
}

#[test]
fn independent_noise_variances_add() {
    let n = 1_000_000;
    let (s1, s2) = (0.6, 0.8);
    let (once, _) = apply_noise(&zeros(n), s1, 11, &NoiseOptions::default()).unwrap();
    let (twice, _) = apply_noise(&once, s2, 12, &NoiseOptions::default()).unwrap();
    let (_, var) = moments(&values(&twice, "w"));
    let want = s1 * s1 + s2 * s2;
    let se = want * (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((var - want).abs() <= 3.0 * se, "{var} vs {want}");
}

#[test]
fn many_tensors_round_trip_and_reproduce() {
    let mut ws = WeightSet::default();
    for i in 0..1000 {
        let len = 1 + i % 7;
        let data = if i % 2 == 0 {
            TensorData::F32((0..len).map(|j| j as f32 * 0.5).collect())
        } else {
            TensorData::F64((0..len).map(|j| -(j as f64)).collect())
        };
        ws.insert(format!("layer.{i:04}.weight"), Tensor::new(vec![len], data).unwrap());
    }
    ws.metadata = Some([("format".to_string(), "pt".to_string())].into_iter().collect());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.safetensors");
    let (noisy, receipt) = apply_noise(&ws, 0.01, 5, &NoiseOptions::default()).unwrap();
    save_weights(&noisy, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, noisy);
    assert_eq!(receipt.tensors.len(), 1000);
    let (again, _) = apply_noise(&ws, 0.01, 5, &NoiseOptions::default()).unwrap();
    assert_eq!(to_bytes(&again), std::fs::read(&path).unwrap());
}

#[test]
fn excluded_prefixes_pass_through() {
    let mut ws = zeros(10);
    ws.insert(
        "embed.pos",
        Tensor::new(vec![3], TensorData::F32(vec![1.0, 2.0, 3.0])).unwrap(),
    );
    let opts = NoiseOptions {
        exclude_prefixes: vec!["embed.".into()],
    };
    let (noisy, receipt) = apply_noise(&ws, 1.0, 0, &opts).unwrap();
    assert_eq!(noisy.get("embed.pos"), ws.get("embed.pos"));
    assert_ne!(noisy.get("w"), ws.get("w"));
    assert!(receipt.tensors[1].skipped);
}

#[test]
fn guard_refuses_unsupported_budget() {
    let cfg = TrainingConfig::new(10, 5e-5, 1.0, 1000, 10).unwrap();
    let budget = PrivacyBudget::new(10.0, 1e-6).unwrap();
    let ws = zeros(100);
    let err = noise_then_account(
        &ws,
        &cfg,
        &budget,
        NoiseVariant::Split,
        1,
        BudgetGuard::Enforce,
        &NoiseOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { .. }));
    assert!(err.to_string().contains("max_supported_epsilon"));
    let (_, receipt) = noise_then_account(
        &ws,
        &cfg,
        &budget,
        NoiseVariant::Split,
        1,
        BudgetGuard::Override,
        &NoiseOptions::default(),
    )
    .unwrap();
    let check = receipt.budget_check.unwrap();
    assert!(!check.passed && check.overridden);
    assert!((receipt.sigma - 0.008_155_361_723_739_339).abs() < 1e-15);
    let sigma1 = (2.0 * (1.25e6f64).ln()).sqrt() * sensitivity(&cfg).delta_w() / 10.0;
    assert!((receipt.noise_scale.unwrap().sigma1 / sigma1 - 1.0).abs() < 1e-14);
}

#[test]
fn corrupt_header_reports_offset() {
    let mut bytes = to_bytes(&zeros(4));
    bytes[12] = b'!';
    match from_bytes(&bytes) {
        Err(Error::Parse { offset, .. }) => assert!(offset >= 8),
        other => panic!("{other:?}"),
    }
}

fn any_payload() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![
            any::<f64>(),
            Just(f64::NAN),
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
            Just(-0.0),
        ],
        0..64,
    )
}

proptest! {
    #[test]
    fn round_trip_is_bit_exact(v64 in any_payload(), bits32 in prop::collection::vec(any::<u32>(), 0..64)) {
        let mut ws = WeightSet::default();
        ws.insert("a", Tensor::new(vec![v64.len()], TensorData::F64(v64.clone())).unwrap());
        let v32: Vec<f32> = bits32.iter().map(|&b| f32::from_bits(b)).collect();
        ws.insert("b", Tensor::new(vec![v32.len()], TensorData::F32(v32)).unwrap());
        let bytes = to_bytes(&ws);
        let back = from_bytes(&bytes).unwrap();
        prop_assert_eq!(to_bytes(&back), bytes);
        match back.get("a").unwrap().data() {
            TensorData::F64(got) => {
                prop_assert!(got.iter().zip(&v64).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            _ => prop_assert!(false),
        }
        match back.get("b").unwrap().data() {
            TensorData::F32(got) => {
                prop_assert!(got.iter().zip(&bits32).all(|(x, &y)| x.to_bits() == y));
            }
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn permuting_tensor_order_keeps_noise(seed in any::<u64>(), n in 1usize..6) {
        let names: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let mut fwd = WeightSet::default();
        let mut rev = WeightSet::default();
        for name in &names {
            fwd.insert(name.clone(), Tensor::new(vec![5], TensorData::F64(vec![0.0; 5])).unwrap());
        }
        for name in names.iter().rev() {
            rev.insert(name.clone(), Tensor::new(vec![5], TensorData::F64(vec![0.0; 5])).unwrap());
        }
        let (a, _) = apply_noise(&fwd, 1.0, seed, &NoiseOptions::default()).unwrap();
        let (b, _) = apply_noise(&rev, 1.0, seed, &NoiseOptions::default()).unwrap();
        for name in &names {
            prop_assert_eq!(a.get(name), b.get(name));
        }
    }
}
