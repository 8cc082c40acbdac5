//! Weight checkpoints and the Gaussian mechanism applied to them.

pub mod container;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::calibration::{self, BudgetCheck, NoiseScale, NoiseVariant, PrivacyBudget, TrainingConfig};
use crate::error::{Error, Result};
use crate::rng;

pub use container::{load_weights, save_weights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F64 => "F64",
        }
    }

    pub fn size(&self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Flat row-major tensor payload.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::LengthMismatch(format!(
                "shape {shape:?} holds {numel} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    fn byte_len(&self) -> usize {
        self.numel() * self.dtype().size()
    }
}

/// Named tensors in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightSet {
    tensors: IndexMap<String, Tensor>,
    pub metadata: Option<IndexMap<String, String>>,
}

impl WeightSet {
    /// Insert or replace a tensor; new names go to the end.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

/// Summary of the noise actually drawn for one tensor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorNoiseSummary {
    pub name: String,
    pub count: u64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 draws.
    pub std: f64,
    pub skipped: bool,
}

/// Audit record of one noising run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseReceipt {
    pub schema_version: &'static str,
    pub seed: u64,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<NoiseScale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<PrivacyBudget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_check: Option<BudgetCheckRecord>,
    pub tensors: Vec<TensorNoiseSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetCheckRecord {
    pub passed: bool,
    pub overridden: bool,
    pub max_supported_epsilon: f64,
    pub binding_branch: calibration::BoundBranch,
}

/// Options for [`apply_noise`].
#[derive(Clone, Debug, Default)]
pub struct NoiseOptions {
    /// Tensors whose name starts with any of these prefixes pass through untouched.
    pub exclude_prefixes: Vec<String>,
}

impl NoiseOptions {
    fn excludes(&self, name: &str) -> bool {
        self.exclude_prefixes.iter().any(|p| name.starts_with(p.as_str()))
    }
}

/// Welford accumulator for the drawn noise.
#[derive(Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

fn noise_tensor(name: &str, t: &Tensor, sigma: f64, seed: u64) -> (Tensor, TensorNoiseSummary) {
    let mut rng = rng::substream(seed, name.as_bytes());
    let mut moments = Moments::default();
    let mut draw = || {
        let z: f64 = rng.sample(StandardNormal);
        let n = sigma * z;
        moments.push(n);
        n
    };
    let data = match &t.data {
        // noise in f64, sum rounded to nearest f32
        TensorData::F32(v) => TensorData::F32(v.iter().map(|&w| (f64::from(w) + draw()) as f32).collect()),
        TensorData::F64(v) => TensorData::F64(v.iter().map(|&w| w + draw()).collect()),
    };
    let summary = TensorNoiseSummary {
        name: name.to_string(),
        count: moments.n,
        mean: moments.mean,
        std: moments.std(),
        skipped: false,
    };
    (
        Tensor {
            shape: t.shape.clone(),
            data,
        },
        summary,
    )
}

/// Add independent `N(0, sigma^2)` noise to every element.
///
/// The noise for element `i` of tensor `name` is a function of
/// `(seed, name, i)` only.
pub fn apply_noise(ws: &WeightSet, sigma: f64, seed: u64, options: &NoiseOptions) -> Result<(WeightSet, NoiseReceipt)> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!(
            "noise standard deviation must be positive and finite, got {sigma}"
        )));
    }
    let work = |(name, t): (&String, &Tensor)| {
        if options.excludes(name) {
            (
                t.clone(),
                TensorNoiseSummary {
                    name: name.clone(),
                    count: 0,
                    mean: 0.0,
                    std: 0.0,
                    skipped: true,
                },
            )
        } else {
            noise_tensor(name, t, sigma, seed)
        }
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = ws.tensors.par_iter().map(work).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = ws.tensors.iter().map(work).collect();

    let mut tensors = IndexMap::with_capacity(ws.tensors.len());
    let mut summaries = Vec::with_capacity(ws.tensors.len());
    for (name, (tensor, summary)) in ws.tensors.keys().zip(results) {
        tensors.insert(name.clone(), tensor);
        summaries.push(summary);
    }
    let noisy = WeightSet {
        tensors,
        metadata: ws.metadata.clone(),
    };
    let receipt = NoiseReceipt {
        schema_version: crate::SCHEMA_VERSION,
        seed,
        sigma,
        noise_scale: None,
        budget: None,
        config: None,
        budget_check: None,
        tensors: summaries,
    };
    Ok((noisy, receipt))
}

/// What to do when the budget check fails.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BudgetGuard {
    /// Refuse with [`Error::BudgetExceeded`].
    #[default]
    Enforce,
    /// Proceed and record the failed check in the receipt.
    Override,
}

/// Calibrate the noise scale, check the budget, then noise every tensor.
pub fn noise_then_account(
    ws: &WeightSet,
    cfg: &TrainingConfig,
    budget: &PrivacyBudget,
    variant: NoiseVariant,
    seed: u64,
    guard: BudgetGuard,
    options: &NoiseOptions,
) -> Result<(WeightSet, NoiseReceipt)> {
    let sensitivity = calibration::sensitivity(cfg);
    let check: BudgetCheck = calibration::check_budget(budget, sensitivity);
    if guard == BudgetGuard::Enforce {
        check.into_result()?;
    } else if !check.within {
        log::warn!("budget check overridden: {check}");
    }
    let scale = calibration::noise_scale(cfg, budget, variant);
    let (noisy, mut receipt) = apply_noise(ws, scale.sigma, seed, options)?;
    receipt.noise_scale = Some(scale);
    receipt.budget = Some(*budget);
    receipt.config = Some(*cfg);
    receipt.budget_check = Some(BudgetCheckRecord {
        passed: check.within,
        overridden: !check.within,
        max_supported_epsilon: check.bound.value,
        binding_branch: check.bound.branch,
    });
    Ok((noisy, receipt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(n: usize) -> WeightSet {
        let mut ws = WeightSet::default();
        ws.insert("z", Tensor::new(vec![n], TensorData::F64(vec![0.0; n])).unwrap());
        ws
    }

    #[test]
    fn tensor_shape_must_match() {
        assert!(Tensor::new(vec![2, 3], TensorData::F32(vec![0.0; 5])).is_err());
        assert!(Tensor::new(vec![0], TensorData::F32(vec![])).is_ok());
        assert!(Tensor::new(vec![], TensorData::F64(vec![1.0])).is_ok());
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let ws = zeros(4);
        assert!(apply_noise(&ws, 0.0, 1, &NoiseOptions::default()).is_err());
        assert!(apply_noise(&ws, -1.0, 1, &NoiseOptions::default()).is_err());
        assert!(apply_noise(&ws, f64::NAN, 1, &NoiseOptions::default()).is_err());
    }

    #[test]
    fn deterministic_for_identical_seed() {
        let ws = zeros(1000);
        let (a, _) = apply_noise(&ws, 0.5, 42, &NoiseOptions::default()).unwrap();
        let (b, _) = apply_noise(&ws, 0.5, 42, &NoiseOptions::default()).unwrap();
        assert_eq!(container::to_bytes(&a), container::to_bytes(&b));
        let (c, _) = apply_noise(&ws, 0.5, 43, &NoiseOptions::default()).unwrap();
        assert_ne!(container::to_bytes(&a), container::to_bytes(&c));
    }

    #[test]
    fn names_get_separate_streams() {
        let mut ws = WeightSet::default();
        ws.insert("a", Tensor::new(vec![8], TensorData::F64(vec![0.0; 8])).unwrap());
        ws.insert("b", Tensor::new(vec![8], TensorData::F64(vec![0.0; 8])).unwrap());
        let (noisy, _) = apply_noise(&ws, 1.0, 7, &NoiseOptions::default()).unwrap();
        assert_ne!(noisy.get("a").unwrap().data, noisy.get("b").unwrap().data);
    }

    #[test]
    fn order_does_not_change_noise() {
        let t = |v: f64| Tensor::new(vec![16], TensorData::F64(vec![v; 16])).unwrap();
        let mut ab = WeightSet::default();
        ab.insert("a", t(1.0));
        ab.insert("b", t(2.0));
        let mut ba = WeightSet::default();
        ba.insert("b", t(2.0));
        ba.insert("a", t(1.0));
        let (x, _) = apply_noise(&ab, 0.3, 9, &NoiseOptions::default()).unwrap();
        let (y, _) = apply_noise(&ba, 0.3, 9, &NoiseOptions::default()).unwrap();
        assert_eq!(x.get("a"), y.get("a"));
        assert_eq!(x.get("b"), y.get("b"));
    }

    #[test]
    fn f32_noise_is_rounded_from_f64() {
        let mut ws = WeightSet::default();
        ws.insert("h", Tensor::new(vec![64], TensorData::F32(vec![1.5; 64])).unwrap());
        let mut w64 = WeightSet::default();
        w64.insert("h", Tensor::new(vec![64], TensorData::F64(vec![1.5; 64])).unwrap());
        let (a, _) = apply_noise(&ws, 0.1, 3, &NoiseOptions::default()).unwrap();
        let (b, _) = apply_noise(&w64, 0.1, 3, &NoiseOptions::default()).unwrap();
        let (TensorData::F32(a), TensorData::F64(b)) = (&a.get("h").unwrap().data, &b.get("h").unwrap().data) else {
            panic!("dtype changed");
        };
        for (x, y) in a.iter().zip(b) {
            assert_eq!(*x, *y as f32);
        }
    }

    #[test]
    fn excluded_prefixes_pass_through() {
        let mut ws = zeros(10);
        ws.insert("bias.0", Tensor::new(vec![3], TensorData::F32(vec![1.0; 3])).unwrap());
        let opts = NoiseOptions {
            exclude_prefixes: vec!["bias".into()],
        };
        let (noisy, receipt) = apply_noise(&ws, 1.0, 1, &opts).unwrap();
        assert_eq!(noisy.get("bias.0"), ws.get("bias.0"));
        assert!(receipt.tensors[1].skipped);
        assert_eq!(receipt.tensors[0].count, 10);
    }

    #[test]
    fn receipt_counts_match_elements() {
        let ws = zeros(123);
        let (_, r) = apply_noise(&ws, 2.0, 5, &NoiseOptions::default()).unwrap();
        assert_eq!(r.tensors.len(), 1);
        assert_eq!(r.tensors[0].count, 123);
    }

    #[test]
    fn guard_refuses_unsupported_epsilon() {
        let ws = zeros(4);
        let cfg = TrainingConfig::new(10, 5e-5, 1.0, 1000, 10).unwrap();
        let budget = PrivacyBudget::new(10.0, 1e-6).unwrap();
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
    }
}
