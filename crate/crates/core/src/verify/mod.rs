//! Pointwise check of the density condition `pdf_w(x) <= e^eps pdf_w'(x) + delta`
//! for two Gaussians centred at `w = 0` and `w' = dW`.
//!
//! `Exact` mode uses true exponentials. `Taylor` mode replaces every
//! exponential with its truncated series, reproducing the solver encoding;
//! it returns `Inconclusive` whenever truncation could change the answer.

pub mod smtlib;

use serde::Serialize;

use crate::accounting::{self, ComposedBudget};
use crate::calibration::{self, NoiseVariant, PrivacyBudget, Sensitivity, TrainingConfig};
use crate::error::{Error, Result};

pub use smtlib::export_smtlib;

/// Default series length.
pub const DEFAULT_TAYLOR_TERMS: u32 = 20;
/// Default half-width of the grid around the two means, in units of sigma.
pub const DEFAULT_DOMAIN_SIGMAS: f64 = 8.0;
/// Minimum half-width the domain must cover, in units of sigma.
pub const REQUIRED_DOMAIN_SIGMAS: f64 = 6.0;
/// Grid points over the main domain.
pub const GRID_POINTS: usize = 10_001;
const TAIL_POINTS: usize = 2_001;

/// `sum_{i < terms} x^i / i!`, accumulated as printed: factorial and power
/// updated incrementally.
pub fn taylor_exp(x: f64, terms: u32) -> f64 {
    let mut result = 1.0;
    let mut factorial = 1.0;
    let mut power = 1.0;
    for i in 1..terms {
        factorial *= f64::from(i);
        power *= x;
        result += power / factorial;
    }
    result
}

/// Upper bound on `|e^x - taylor_exp(x, terms)|` for `x <= 0`: the Lagrange
/// remainder plus the rounding error of summing `terms` terms of size up to
/// `e^|x|`.
fn taylor_error_nonpositive(x: f64, terms: u32) -> f64 {
    let mut r = 1.0;
    for i in 1..=terms {
        r *= x.abs() / f64::from(i);
    }
    let rounding = 2.0 * f64::from(terms) * f64::EPSILON * taylor_exp(x.abs(), terms);
    r + rounding
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Taylor,
    Exact,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "taylor" => Ok(Mode::Taylor),
            "exact" => Ok(Mode::Exact),
            _ => Err(Error::invalid(
                "mode",
                format!("expected `taylor` or `exact`, got `{s}`"),
            )),
        }
    }
}

/// Parameters of one density-condition check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpConditionSpec {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub delta_w: f64,
    pub taylor_terms: u32,
    pub x_domain: (f64, f64),
}

impl DpConditionSpec {
    /// Spec with the default series length and domain `[-8 sigma, dW + 8 sigma]`.
    pub fn new(epsilon: f64, delta: f64, sigma: f64, delta_w: f64) -> Result<Self> {
        let pad = DEFAULT_DOMAIN_SIGMAS * sigma;
        Self::with_domain(
            epsilon,
            delta,
            sigma,
            delta_w,
            DEFAULT_TAYLOR_TERMS,
            (-pad, delta_w + pad),
        )
    }

    pub fn with_domain(
        epsilon: f64,
        delta: f64,
        sigma: f64,
        delta_w: f64,
        taylor_terms: u32,
        x_domain: (f64, f64),
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        if !(delta_w.is_finite() && delta_w >= 0.0) {
            return Err(Error::invalid("delta_w", format!("must be nonnegative, got {delta_w}")));
        }
        if taylor_terms < 2 {
            return Err(Error::invalid("taylor_terms", "need at least 2 terms"));
        }
        let (lo, hi) = x_domain;
        let need_lo = -REQUIRED_DOMAIN_SIGMAS * sigma;
        let need_hi = delta_w + REQUIRED_DOMAIN_SIGMAS * sigma;
        if !(lo.is_finite() && hi.is_finite() && lo <= need_lo && hi >= need_hi) {
            return Err(Error::invalid(
                "x_domain",
                format!("[{lo}, {hi}] must be finite and contain [{need_lo}, {need_hi}]"),
            ));
        }
        Ok(Self {
            epsilon,
            delta,
            sigma,
            delta_w,
            taylor_terms,
            x_domain,
        })
    }

    fn norm(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.sigma * self.sigma).sqrt()
    }

    fn exponent(&self, x: f64, mean: f64) -> f64 {
        let d = x - mean;
        -(d * d) / (2.0 * self.sigma * self.sigma)
    }

    /// `e^eps pdf_w'(x) + delta - pdf_w(x)` with true exponentials.
    pub fn exact_margin(&self, x: f64) -> f64 {
        let c = self.norm();
        let pdf_w = c * self.exponent(x, 0.0).exp();
        let pdf_wp = c * self.exponent(x, self.delta_w).exp();
        self.epsilon.exp() * pdf_wp + self.delta - pdf_w
    }

    /// Margin with every exponential replaced by the truncated series, plus
    /// a bound on how far truncation can move it.
    fn taylor_margin(&self, x: f64) -> TaylorEval {
        let c = self.norm();
        let n = self.taylor_terms;
        let (u, up) = (self.exponent(x, 0.0), self.exponent(x, self.delta_w));
        let t_w = taylor_exp(u, n);
        let t_wp = taylor_exp(up, n);
        let t_eps = taylor_exp(self.epsilon, n);
        let margin = t_eps * c * t_wp + self.delta - c * t_w;
        let rounding = 2.0 * f64::from(n) * f64::EPSILON * t_eps * c * t_wp.abs();
        let error = c * (taylor_error_nonpositive(u, n) + t_eps * taylor_error_nonpositive(up, n)) + rounding;
        TaylorEval {
            margin,
            error,
            negative_sum: t_w < 0.0 || t_wp < 0.0,
        }
    }

    /// `dW/2 - sigma^2 eps / dW`: left of this point `e^eps pdf_w' < pdf_w`.
    fn crossover(&self) -> Option<f64> {
        (self.delta_w > 0.0).then(|| self.delta_w / 2.0 - self.sigma * self.sigma * self.epsilon / self.delta_w)
    }
}

struct TaylorEval {
    margin: f64,
    error: f64,
    negative_sum: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Satisfied,
    Falsified,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationOutcome {
    pub status: Status,
    pub mode: Mode,
    /// Point with a strictly negative margin; present iff falsified.
    pub witness: Option<f64>,
    /// Smallest margin found.
    pub margin: f64,
    /// Where the smallest margin was found.
    pub margin_at: f64,
    pub points_checked: usize,
    /// Interval actually searched (the spec domain, widened by the tail search).
    pub searched_domain: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

/// Golden-section refinement of a local minimum bracketed by `[a, b]`.
fn refine_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Check the density condition over the spec's domain.
///
/// Exact mode also searches the left tail below the crossover point,
/// because the likelihood ratio `pdf_w / pdf_w'` grows without bound as
/// `x -> -inf` and the worst point can sit outside any fixed grid.
pub fn dp_condition_check(spec: &DpConditionSpec, mode: Mode) -> VerificationOutcome {
    match mode {
        Mode::Exact => check_exact(spec),
        Mode::Taylor => check_taylor(spec),
    }
}

fn check_exact(spec: &DpConditionSpec) -> VerificationOutcome {
    let (lo, hi) = spec.x_domain;
    let mut xs: Vec<f64> = linspace(lo, hi, GRID_POINTS).collect();
    let mut searched = (lo, hi);
    if let Some(x0) = spec.crossover() {
        if x0 < lo {
            let tail_lo = x0 - DEFAULT_DOMAIN_SIGMAS * spec.sigma;
            xs.extend(linspace(tail_lo, x0, TAIL_POINTS));
            searched.0 = tail_lo;
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let margins: Vec<f64> = xs.iter().map(|&x| spec.exact_margin(x)).collect();
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for (i, &m) in margins.iter().enumerate() {
        if m < best {
            best = m;
            best_i = i;
        }
    }
    let mut at = xs[best_i];
    let lo_i = best_i.saturating_sub(1);
    let hi_i = (best_i + 1).min(xs.len() - 1);
    if hi_i > lo_i {
        let (x, m) = refine_min(|x| spec.exact_margin(x), xs[lo_i], xs[hi_i]);
        if m < best {
            best = m;
            at = x;
        }
    }
    // margin tends to delta as x -> -inf
    let note = (spec.delta < best).then(|| "minimum margin attained in the -inf limit".to_string());
    if spec.delta < best {
        best = spec.delta;
        at = f64::NEG_INFINITY;
    }
    let falsified = best < 0.0;
    VerificationOutcome {
        status: if falsified {
            Status::Falsified
        } else {
            Status::Satisfied
        },
        mode: Mode::Exact,
        witness: falsified.then_some(at),
        margin: best,
        margin_at: at,
        points_checked: xs.len(),
        searched_domain: searched,
        note,
    }
}

fn check_taylor(spec: &DpConditionSpec) -> VerificationOutcome {
    let (lo, hi) = spec.x_domain;
    let mut best = f64::INFINITY;
    let mut at = lo;
    let mut witness = None;
    let mut uncertain = None;
    let mut negative_sum = None;
    let mut n = 0;
    for x in linspace(lo, hi, GRID_POINTS) {
        n += 1;
        let e = spec.taylor_margin(x);
        if e.margin < best {
            best = e.margin;
            at = x;
        }
        if e.negative_sum && negative_sum.is_none() {
            negative_sum = Some(x);
        }
        if e.margin + e.error < 0.0 {
            witness.get_or_insert(x);
        } else if e.margin - e.error < 0.0 {
            uncertain.get_or_insert(x);
        }
    }
    let (status, note) = if let Some(x) = witness {
        (
            Status::Falsified,
            Some(format!("truncated condition fails beyond its error bound at x = {x}")),
        )
    } else if let Some(x) = negative_sum {
        (
            Status::Inconclusive,
            Some(format!("series partial sum is negative at x = {x} (cancellation)")),
        )
    } else if let Some(x) = uncertain {
        (
            Status::Inconclusive,
            Some(format!("truncation error could flip the condition at x = {x}")),
        )
    } else {
        (Status::Satisfied, None)
    };
    VerificationOutcome {
        status,
        mode: Mode::Taylor,
        witness: (status == Status::Falsified).then_some(witness).flatten(),
        margin: best,
        margin_at: at,
        points_checked: n,
        searched_domain: (lo, hi),
        note,
    }
}

/// Both checks run by [`verify_composed`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComposedVerification {
    pub composed_budget: ComposedBudget,
    pub delta_w: f64,
    pub sigma_composed: f64,
    pub sigma_original: f64,
    pub composed: VerificationOutcome,
    pub original: VerificationOutcome,
}

/// Compose the budget `k` times, calibrate split-form noise for both the
/// composed and the original budget, and check both conditions.
pub fn verify_composed(
    budget: &PrivacyBudget,
    cfg: &TrainingConfig,
    k: u64,
    mode: Mode,
) -> Result<ComposedVerification> {
    verify_composed_with_terms(budget, calibration::sensitivity(cfg), k, mode, DEFAULT_TAYLOR_TERMS)
}

pub fn verify_composed_with_terms(
    budget: &PrivacyBudget,
    sensitivity: Sensitivity,
    k: u64,
    mode: Mode,
    taylor_terms: u32,
) -> Result<ComposedVerification> {
    let composed = accounting::advanced_composition(budget, k)?;
    let composed_pb = PrivacyBudget::new(composed.eps_prime, composed.delta_prime)?;
    let sigma_composed = calibration::noise_scale_for(sensitivity, &composed_pb, NoiseVariant::Split).sigma;
    let sigma_original = calibration::noise_scale_for(sensitivity, budget, NoiseVariant::Split).sigma;
    let dw = sensitivity.delta_w();

    let spec_for = |eps: f64, delta: f64, sigma: f64| {
        let pad = DEFAULT_DOMAIN_SIGMAS * sigma;
        DpConditionSpec::with_domain(eps, delta, sigma, dw, taylor_terms, (-pad, dw + pad))
    };
    let composed_spec = spec_for(composed.eps_prime, composed.delta_prime, sigma_composed)?;
    let original_spec = spec_for(budget.epsilon(), budget.delta(), sigma_original)?;
    Ok(ComposedVerification {
        composed_budget: composed,
        delta_w: dw,
        sigma_composed,
        sigma_original,
        composed: dp_condition_check(&composed_spec, mode),
        original: dp_condition_check(&original_spec, mode),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_exp_examples() {
        assert_eq!(taylor_exp(0.0, 1), 1.0);
        assert_eq!(taylor_exp(0.0, 20), 1.0);
        assert!((taylor_exp(1.0, 20) - std::f64::consts::E).abs() < 1e-15);
        // 50-digit value of the 20-term partial sum at -10
        let t = taylor_exp(-10.0, 20);
        assert!((t - -27.706_310_237_425_607_55).abs() < 1e-9);
        assert!((t - (-10f64).exp()).abs() > 27.0);
    }

    #[test]
    fn taylor_converges_on_small_arguments() {
        for i in 0..=100 {
            let x = -5.0 + 0.1 * f64::from(i);
            let err = (taylor_exp(x, 40) - x.exp()).abs();
            assert!(err < 1e-12, "x = {x}: {err}");
        }
    }

    #[test]
    fn identical_means_satisfied() {
        let spec = DpConditionSpec::new(0.5, 1e-6, 0.3, 0.0).unwrap();
        let out = dp_condition_check(&spec, Mode::Exact);
        assert_eq!(out.status, Status::Satisfied);
        assert!(out.margin >= spec.delta);
    }

    #[test]
    fn under_noised_spec_is_falsified() {
        let dw = 1.0;
        let spec = DpConditionSpec::new(0.01, 1e-12, dw / 100.0, dw).unwrap();
        let out = dp_condition_check(&spec, Mode::Exact);
        assert_eq!(out.status, Status::Falsified);
        let x = out.witness.unwrap();
        assert!(x >= out.searched_domain.0 && x <= out.searched_domain.1);
        assert!(spec.exact_margin(x) < 0.0);
        // log-ratio at the witness exceeds eps by far more than delta can absorb
        let log_ratio = dw * (dw - 2.0 * x) / (2.0 * spec.sigma * spec.sigma);
        assert!(log_ratio > spec.epsilon);
    }

    #[test]
    fn margin_agrees_with_direct_evaluation() {
        let spec = DpConditionSpec::new(0.2, 1e-3, 0.5, 1.0).unwrap();
        let out = dp_condition_check(&spec, Mode::Exact);
        if out.margin_at.is_finite() {
            assert!((spec.exact_margin(out.margin_at) - out.margin).abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_mode_never_claims_false_guarantee() {
        // default domain reaches exponents around -32, where the series is garbage
        let spec = DpConditionSpec::new(1.0, 1e-8, 0.01, 5e-8).unwrap();
        let out = dp_condition_check(&spec, Mode::Taylor);
        assert_eq!(out.status, Status::Inconclusive);
        assert!(out.note.unwrap().contains("negative"));
        // at 6 sigma the series cancels down to ~1e-9 absolute accuracy, so only a
        // delta above that rounding floor lets the condition resolve
        let narrow = DpConditionSpec::with_domain(1.0, 1e-3, 0.01, 5e-8, 80, (-0.0601, 0.0601)).unwrap();
        let out = dp_condition_check(&narrow, Mode::Taylor);
        assert_eq!(out.status, Status::Satisfied, "{:?}", out.note);
    }

    #[test]
    fn spec_validation() {
        assert!(DpConditionSpec::with_domain(1.0, 1e-6, 1.0, 1.0, 20, (-5.0, 8.0)).is_err());
        assert!(DpConditionSpec::with_domain(1.0, 1e-6, 1.0, 1.0, 1, (-8.0, 9.0)).is_err());
        assert!(DpConditionSpec::with_domain(1.0, 1e-6, 1.0, 1.0, 20, (-6.0, 7.0)).is_ok());
        assert!(DpConditionSpec::new(0.0, 1e-6, 1.0, 1.0).is_err());
        assert!(DpConditionSpec::new(1.0, 1e-6, 0.0, 1.0).is_err());
    }

    #[test]
    fn composed_single_step() {
        let cfg = TrainingConfig::new(10, 5e-5, 1.0, 1000, 10).unwrap();
        let b = PrivacyBudget::new(1.0, 1e-8).unwrap();
        let v = verify_composed(&b, &cfg, 1, Mode::Exact).unwrap();
        let expected = (2.0 * (1e8f64).ln()).sqrt();
        assert!((v.composed_budget.eps_prime - expected).abs() < 1e-12);
        assert_eq!(v.composed.status, Status::Satisfied);
        assert_eq!(v.original.status, Status::Satisfied);
    }

    #[test]
    fn composed_delta_overflow_propagates() {
        let cfg = TrainingConfig::new(10, 5e-5, 1.0, 1000, 10).unwrap();
        let b = PrivacyBudget::new(1.0, 0.01).unwrap();
        assert!(matches!(
            verify_composed(&b, &cfg, 100, Mode::Exact),
            Err(Error::ComposedDeltaOverflow { .. })
        ));
    }
}
