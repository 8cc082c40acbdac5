//! Sensitivity, noise-scale calibration and the epsilon validity bound.
//!
//! All logarithms are natural logarithms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerator of the empirical noise term `0.009760 / eps^0.078008`.
pub const EMPIRICAL_NUMERATOR: f64 = 0.009760;
/// Exponent of the empirical noise term.
pub const EMPIRICAL_EXPONENT: f64 = 0.078008;

/// Coefficient of the mixed term in the epsilon validity bound, as printed.
const BOUND_MIXED_COEFF: f64 = 0.0384;
/// Exponent denominator of the mixed branch.
const BOUND_MIXED_POWER: f64 = 0.922;
/// Denominator of the empirical branch, as printed.
const BOUND_EMPIRICAL_DENOM: f64 = 0.000191;
/// Exponent denominator of the empirical branch.
const BOUND_EMPIRICAL_POWER: f64 = 1.844;

/// The five training parameters that determine sensitivity and sampling rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainingConfig {
    epochs: u64,
    learning_rate: f64,
    clipping_norm: f64,
    dataset_size: u64,
    batch_size: u64,
}

impl TrainingConfig {
    pub fn new(
        epochs: u64,
        learning_rate: f64,
        clipping_norm: f64,
        dataset_size: u64,
        batch_size: u64,
    ) -> Result<Self> {
        if epochs < 1 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::invalid(
                "learning_rate",
                format!("must be positive and finite, got {learning_rate}"),
            ));
        }
        if !(clipping_norm.is_finite() && clipping_norm > 0.0) {
            return Err(Error::invalid(
                "clipping_norm",
                format!("must be positive and finite, got {clipping_norm}"),
            ));
        }
        if dataset_size < 1 {
            return Err(Error::invalid("dataset_size", "must be at least 1"));
        }
        if batch_size < 1 || batch_size > dataset_size {
            return Err(Error::invalid(
                "batch_size",
                format!("must be in 1..={dataset_size}, got {batch_size}"),
            ));
        }
        Ok(Self {
            epochs,
            learning_rate,
            clipping_norm,
            dataset_size,
            batch_size,
        })
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn clipping_norm(&self) -> f64 {
        self.clipping_norm
    }

    pub fn dataset_size(&self) -> u64 {
        self.dataset_size
    }

    pub fn batch_size(&self) -> u64 {
        self.batch_size
    }

    /// `q = B / N`, always in `(0, 1]`.
    pub fn sampling_rate(&self) -> f64 {
        self.batch_size as f64 / self.dataset_size as f64
    }
}

/// An `(epsilon, delta)` pair with `epsilon > 0` and `0 < delta < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must be positive and finite, got {epsilon}"),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Maximum change of any weight caused by a single record, in weight units.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Sensitivity(f64);

impl Sensitivity {
    pub fn new(delta_w: f64) -> Result<Self> {
        if !(delta_w.is_finite() && delta_w > 0.0) {
            return Err(Error::invalid(
                "delta_w",
                format!("must be positive and finite, got {delta_w}"),
            ));
        }
        Ok(Self(delta_w))
    }

    pub fn delta_w(&self) -> f64 {
        self.0
    }
}

/// Which closed form of the noise scale to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseVariant {
    /// `sigma = sqrt(2 ln(1.25/delta)) * dW/eps + 0.009760/eps^0.078008`.
    #[default]
    Split,
    /// `sigma = sqrt(2 ln(1.25/delta) * dW/eps + 0.009760/eps^0.078008)`.
    UnderSqrt,
}

impl NoiseVariant {
    pub const ALL: [NoiseVariant; 2] = [NoiseVariant::Split, NoiseVariant::UnderSqrt];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseVariant::Split => "split",
            NoiseVariant::UnderSqrt => "undersqrt",
        }
    }
}

impl fmt::Display for NoiseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "split" => Ok(NoiseVariant::Split),
            "undersqrt" => Ok(NoiseVariant::UnderSqrt),
            _ => Err(Error::invalid(
                "variant",
                format!("expected `split` or `undersqrt`, got `{s}`"),
            )),
        }
    }
}

/// A calibrated noise standard deviation with its two components.
///
/// For [`NoiseVariant::Split`], `sigma = sigma1 + sigma2`. For
/// [`NoiseVariant::UnderSqrt`], `sigma1` and `sigma2` are the two addends
/// under the square root and `sigma = sqrt(sigma1 + sigma2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseScale {
    pub sigma: f64,
    pub variant: NoiseVariant,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// `dW = E * eta * C / (N * B)`.
pub fn sensitivity(cfg: &TrainingConfig) -> Sensitivity {
    let num = cfg.epochs as f64 * cfg.learning_rate * cfg.clipping_norm;
    let den = cfg.dataset_size as f64 * cfg.batch_size as f64;
    Sensitivity(num / den)
}

/// `delta = 1 / N^2`; requires `N >= 2` so that `delta < 1`.
pub fn default_delta(dataset_size: u64) -> Result<f64> {
    if dataset_size < 2 {
        return Err(Error::invalid(
            "delta",
            format!("default 1/N^2 needs N >= 2, got N = {dataset_size}"),
        ));
    }
    let n = dataset_size as f64;
    Ok(1.0 / (n * n))
}

/// `0.009760 / eps^0.078008`.
pub fn empirical_term(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || epsilon.is_nan() {
        return Err(Error::Domain(format!(
            "empirical term needs epsilon > 0, got {epsilon}"
        )));
    }
    Ok(EMPIRICAL_NUMERATOR / epsilon.powf(EMPIRICAL_EXPONENT))
}

/// Noise scale from the training configuration.
pub fn noise_scale(cfg: &TrainingConfig, budget: &PrivacyBudget, variant: NoiseVariant) -> NoiseScale {
    noise_scale_for(sensitivity(cfg), budget, variant)
}

/// Noise scale for an explicit sensitivity.
pub fn noise_scale_for(sensitivity: Sensitivity, budget: &PrivacyBudget, variant: NoiseVariant) -> NoiseScale {
    let eps = budget.epsilon;
    let two_log = 2.0 * (1.25 / budget.delta).ln();
    // epsilon > 0 is guaranteed by PrivacyBudget
    let emp = EMPIRICAL_NUMERATOR / eps.powf(EMPIRICAL_EXPONENT);
    match variant {
        NoiseVariant::Split => {
            let sigma1 = two_log.sqrt() * sensitivity.0 / eps;
            NoiseScale {
                sigma: sigma1 + emp,
                variant,
                sigma1,
                sigma2: emp,
            }
        }
        NoiseVariant::UnderSqrt => {
            let sigma1 = two_log * sensitivity.0 / eps;
            NoiseScale {
                sigma: (sigma1 + emp).sqrt(),
                variant,
                sigma1,
                sigma2: emp,
            }
        }
    }
}

/// Branch of the three-way minimum in [`max_supported_epsilon`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// `4 ln(1.25/delta)`
    LogDelta,
    /// `(dW^2 / (4 ln(1.25/delta) dW^2 + 0.0384 dW sqrt(ln(1.25/delta))))^(1/0.922)`
    Mixed,
    /// `(dW^2 / 0.000191)^(1/1.844)`
    Empirical,
}

impl fmt::Display for BoundBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundBranch::LogDelta => "log_delta",
            BoundBranch::Mixed => "mixed",
            BoundBranch::Empirical => "empirical",
        })
    }
}

/// All three branches of the epsilon validity bound and which one binds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonBound {
    pub log_delta: f64,
    pub mixed: f64,
    pub empirical: f64,
    pub value: f64,
    pub branch: BoundBranch,
}

/// Largest epsilon for which the split noise scale is claimed to satisfy
/// `(eps, delta)`-DP: the minimum of three closed-form expressions.
///
/// Ties resolve to the earliest branch in the order listed in [`BoundBranch`].
pub fn max_supported_epsilon(delta_w: f64, delta: f64) -> Result<EpsilonBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("epsilon bound needs 0 < delta < 1, got {delta}")));
    }
    if !(delta_w.is_finite() && delta_w > 0.0) {
        return Err(Error::Domain(format!("epsilon bound needs delta_w > 0, got {delta_w}")));
    }
    let log_term = (1.25 / delta).ln();
    let dw2 = delta_w * delta_w;
    let log_delta = 4.0 * log_term;
    let mixed =
        (dw2 / (4.0 * log_term * dw2 + BOUND_MIXED_COEFF * delta_w * log_term.sqrt())).powf(1.0 / BOUND_MIXED_POWER);
    let empirical = (dw2 / BOUND_EMPIRICAL_DENOM).powf(1.0 / BOUND_EMPIRICAL_POWER);

    let mut value = log_delta;
    let mut branch = BoundBranch::LogDelta;
    if mixed < value {
        value = mixed;
        branch = BoundBranch::Mixed;
    }
    if empirical < value {
        value = empirical;
        branch = BoundBranch::Empirical;
    }
    Ok(EpsilonBound {
        log_delta,
        mixed,
        empirical,
        value,
        branch,
    })
}

/// Outcome of [`check_budget`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetCheck {
    pub within: bool,
    pub epsilon: f64,
    pub bound: EpsilonBound,
}

impl BudgetCheck {
    pub fn into_result(self) -> Result<Self> {
        if self.within {
            Ok(self)
        } else {
            Err(Error::BudgetExceeded {
                epsilon: self.epsilon,
                max_supported: self.bound.value,
                branch: self.bound.branch,
            })
        }
    }
}

impl fmt::Display for BudgetCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = if self.within { "<=" } else { ">" };
        write!(
            f,
            "epsilon {} {rel} max_supported_epsilon {} (binding branch: {})",
            self.epsilon, self.bound.value, self.bound.branch
        )
    }
}

/// `epsilon <= max_supported_epsilon(dW, delta)`, boundary inclusive.
pub fn check_budget(budget: &PrivacyBudget, sensitivity: Sensitivity) -> BudgetCheck {
    // PrivacyBudget and Sensitivity already enforce the bound's domain
    let bound = max_supported_epsilon(sensitivity.0, budget.delta)
        .expect("validated budget and sensitivity are inside the bound's domain");
    BudgetCheck {
        within: budget.epsilon <= bound.value,
        epsilon: budget.epsilon,
        bound,
    }
}
