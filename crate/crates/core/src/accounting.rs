//! Privacy composition and conversion.
//!
//! Covers advanced composition of `(eps, delta)` guarantees, Rényi DP of the
//! Gaussian mechanism, amplification by subsampling, composition over epochs
//! and conversion of an RDP curve back to `(eps, delta)`.

use serde::Serialize;

use crate::calibration::{self, PrivacyBudget, TrainingConfig};
use crate::error::{Error, Result};

/// Result of composing one `(eps, delta)` mechanism `k` times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComposedBudget {
    pub eps_prime: f64,
    pub delta_prime: f64,
    pub k: u64,
}

/// `eps' = eps * sqrt(2 k ln(1/delta))`, `delta' = k delta + delta`.
pub fn advanced_composition(budget: &PrivacyBudget, k: u64) -> Result<ComposedBudget> {
    if k == 0 {
        return Err(Error::invalid("k", "number of compositions must be at least 1"));
    }
    let delta = budget.delta();
    let kf = k as f64;
    let delta_prime = kf * delta + delta;
    if delta_prime >= 1.0 {
        return Err(Error::ComposedDeltaOverflow { delta, k, delta_prime });
    }
    let eps_prime = budget.epsilon() * (2.0 * kf * (1.0 / delta).ln()).sqrt();
    Ok(ComposedBudget {
        eps_prime,
        delta_prime,
        k,
    })
}

/// One `(alpha, eps_rdp(alpha))` point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RdpPoint {
    pub alpha: f64,
    pub eps: f64,
}

/// RDP curve: points sorted strictly ascending by `alpha`, every `alpha > 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RdpCurve {
    points: Vec<RdpPoint>,
}

impl RdpCurve {
    pub fn new(points: Vec<RdpPoint>) -> Result<Self> {
        for p in &points {
            if !(p.alpha > 1.0) || !p.alpha.is_finite() {
                return Err(Error::invalid(
                    "alpha",
                    format!("RDP order must be finite and > 1, got {}", p.alpha),
                ));
            }
            if !(p.eps >= 0.0) {
                return Err(Error::invalid(
                    "eps_rdp",
                    format!("RDP epsilon must be nonnegative, got {}", p.eps),
                ));
            }
        }
        if let Some(w) = points.windows(2).find(|w| w[0].alpha >= w[1].alpha) {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "orders must be strictly ascending, got {} then {}",
                    w[0].alpha, w[1].alpha
                ),
            ));
        }
        Ok(Self { points })
    }

    /// Gaussian-mechanism curve `alpha * dW^2 / (2 sigma^2)` on `alphas`.
    pub fn gaussian(alphas: &[f64], delta_w: f64, sigma: f64) -> Result<Self> {
        let points = alphas
            .iter()
            .map(|&alpha| {
                Ok(RdpPoint {
                    alpha,
                    eps: rdp_epsilon(alpha, delta_w, sigma)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[RdpPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `eps_rdp(alpha) = alpha * dW^2 / (2 sigma^2)` for the Gaussian mechanism.
pub fn rdp_epsilon(alpha: f64, delta_w: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("RDP order must be > 1, got {alpha}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(gaussian_rdp(alpha, delta_w, sigma))
}

/// `alpha dW^2 / (2 sigma^2)` with the products and the quotient carried to
/// roughly twice f64 precision, so the result is within a hair of correct
/// rounding.
fn gaussian_rdp(alpha: f64, delta_w: f64, sigma: f64) -> f64 {
    let p = delta_w * delta_w;
    let p_err = delta_w.mul_add(delta_w, -p);
    let num = alpha * p;
    let num_err = alpha.mul_add(p, -num) + alpha * p_err;
    let den = sigma * sigma;
    let den_err = sigma.mul_add(sigma, -den);
    let q = num / den;
    let resid = (-q).mul_add(den, num) + num_err - q * den_err;
    (q + resid / den) / 2.0
}

/// Inverse of [`rdp_epsilon`] in `sigma`: `sigma^2 = dW^2 alpha / (2 eps_rdp)`.
///
/// The closed form is nudged by a few ulps so that feeding the result back
/// through [`rdp_epsilon`] lands as close to the target as f64 allows.
pub fn calibrate_sigma_from_rdp(delta_w: f64, alpha: f64, eps_rdp_target: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("RDP order must be > 1, got {alpha}")));
    }
    if !(delta_w > 0.0 && eps_rdp_target > 0.0) {
        return Err(Error::Domain(format!(
            "delta_w and target must be positive, got {delta_w} and {eps_rdp_target}"
        )));
    }
    let sigma = (alpha * (delta_w * delta_w) / (2.0 * eps_rdp_target)).sqrt();
    let miss = |s: f64| {
        let back = gaussian_rdp(alpha, delta_w, s);
        (back.to_bits() as i64 - eps_rdp_target.to_bits() as i64).unsigned_abs()
    };
    let mut best = (miss(sigma), sigma);
    for k in 1..=4u64 {
        for cand in [f64::from_bits(sigma.to_bits() + k), f64::from_bits(sigma.to_bits() - k)] {
            let m = miss(cand);
            if m < best.0 {
                best = (m, cand);
            }
        }
    }
    Ok(best.1)
}

fn check_subsample_args(alpha: u32, q: f64, base: f64) -> Result<()> {
    if alpha < 2 {
        return Err(Error::Domain(format!(
            "subsampled RDP needs an integer order >= 2, got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("sampling rate must be in [0, 1], got {q}")));
    }
    if !(base >= 0.0) {
        return Err(Error::Domain(format!("base RDP epsilon must be >= 0, got {base}")));
    }
    Ok(())
}

/// The subsampling upper bound exactly as printed:
/// `ln(1 + q^2 C(alpha, 2) (e^{(alpha-1) eps} - 1)) / (alpha - 1)`.
///
/// For `alpha >= 3` and `q` near 1 this can exceed `base`; see
/// [`subsampled_rdp`] for the clamped form.
pub fn subsampled_rdp_bound(alpha: u32, q: f64, base: f64) -> Result<f64> {
    check_subsample_args(alpha, q, base)?;
    let a = f64::from(alpha);
    let exponent = (a - 1.0) * base;
    let grown = exponent.exp_m1();
    if !grown.is_finite() {
        return Err(Error::RdpOverflow { alpha, exponent });
    }
    let binom = a * (a - 1.0) / 2.0;
    let inner = q * q * binom * grown;
    if !inner.is_finite() {
        return Err(Error::RdpOverflow { alpha, exponent });
    }
    Ok(inner.ln_1p() / (a - 1.0))
}

/// Subsampled RDP epsilon: the printed bound, never larger than `base`.
///
/// Sampling with `q = 1` is the unsampled mechanism, so `base` comes back
/// unchanged.
pub fn subsampled_rdp(alpha: u32, q: f64, base: f64) -> Result<f64> {
    check_subsample_args(alpha, q, base)?;
    if q == 1.0 {
        return Ok(base);
    }
    Ok(subsampled_rdp_bound(alpha, q, base)?.min(base))
}

/// `eps_total(alpha) = E * eps(alpha)`.
pub fn compose_over_epochs(curve: &RdpCurve, epochs: u64) -> RdpCurve {
    let e = epochs as f64;
    RdpCurve {
        points: curve
            .points
            .iter()
            .map(|p| RdpPoint {
                alpha: p.alpha,
                eps: p.eps * e,
            })
            .collect(),
    }
}

/// `(eps, delta)` obtained from an RDP curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpConversion {
    pub epsilon: f64,
    pub alpha: f64,
}

/// Penalty `ln(1/delta) / (alpha - 1)` added to each RDP point.
pub fn conversion_value(point: &RdpPoint, delta: f64) -> f64 {
    point.eps + (1.0 / delta).ln() / (point.alpha - 1.0)
}

/// `eps = min_alpha { eps_total(alpha) + ln(1/delta) / (alpha - 1) }`.
///
/// Ties go to the smaller `alpha`.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpConversion> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let mut best: Option<DpConversion> = None;
    for p in &curve.points {
        let value = conversion_value(p, delta);
        if best.is_none_or(|b| value < b.epsilon) {
            best = Some(DpConversion {
                epsilon: value,
                alpha: p.alpha,
            });
        }
    }
    best.ok_or(Error::Empty("RDP curve"))
}

/// `sigma_total = sqrt(sigma^2 + empirical_term(eps)^2)`.
pub fn sigma_total(sigma: f64, epsilon: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(sigma.hypot(calibration::empirical_term(epsilon)?))
}

/// Integer RDP orders `2..=256`.
pub fn default_alpha_grid() -> Vec<u32> {
    (2..=256).collect()
}

/// One order of the full pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PipelineRow {
    pub alpha: u32,
    pub base: f64,
    pub subsampled: f64,
    pub composed: f64,
    pub conversion: f64,
}

/// Output of [`full_pipeline_epsilon`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineResult {
    pub epsilon: f64,
    pub alpha: f64,
    pub delta_w: f64,
    pub sampling_rate: f64,
    /// Standard deviation actually used in the RDP terms.
    pub sigma_effective: f64,
    pub rows: Vec<PipelineRow>,
    /// Orders removed because the subsampling bound overflowed.
    pub dropped_alphas: Vec<u32>,
}

/// Inputs of [`full_pipeline_epsilon`].
#[derive(Clone, Debug)]
pub struct PipelineInput<'a> {
    pub cfg: &'a TrainingConfig,
    pub sigma: f64,
    pub delta: f64,
    pub alphas: &'a [u32],
    /// When set, `sigma` is first widened to `sigma_total(sigma, eps)`.
    pub empirical_epsilon: Option<f64>,
}

/// Training config and noise scale to `(eps, alpha*)`: Gaussian RDP at each
/// order, subsampling with `q = B/N`, composition over `E` epochs, then
/// conversion.
///
/// Orders whose subsampling bound overflows are dropped with a warning; the
/// call fails only if none survive.
pub fn full_pipeline_epsilon(input: &PipelineInput<'_>) -> Result<PipelineResult> {
    let PipelineInput {
        cfg,
        sigma,
        delta,
        alphas,
        empirical_epsilon,
    } = *input;
    if alphas.is_empty() {
        return Err(Error::Empty("alpha grid"));
    }
    if let Some(w) = alphas.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "alpha",
            format!("orders must be strictly ascending, got {} then {}", w[0], w[1]),
        ));
    }
    let sigma_effective = match empirical_epsilon {
        Some(eps) => sigma_total(sigma, eps)?,
        None => sigma,
    };
    let delta_w = calibration::sensitivity(cfg).delta_w();
    let q = cfg.sampling_rate();

    let mut points = Vec::with_capacity(alphas.len());
    let mut bases = Vec::with_capacity(alphas.len());
    let mut dropped = Vec::new();
    for &alpha in alphas {
        let base = rdp_epsilon(f64::from(alpha), delta_w, sigma_effective)?;
        match subsampled_rdp(alpha, q, base) {
            Ok(sub) => {
                points.push(RdpPoint {
                    alpha: f64::from(alpha),
                    eps: sub,
                });
                bases.push(base);
            }
            Err(e @ Error::RdpOverflow { .. }) => {
                log::warn!("dropping alpha = {alpha}: {e}");
                dropped.push(alpha);
            }
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(Error::Domain(
            "every alpha overflowed the subsampling bound; lower the grid".into(),
        ));
    }
    let subsampled = RdpCurve::new(points)?;
    let composed = compose_over_epochs(&subsampled, cfg.epochs());
    let conversion = rdp_to_dp(&composed, delta)?;

    let rows = subsampled
        .points()
        .iter()
        .zip(composed.points())
        .zip(&bases)
        .map(|((s, c), &base)| PipelineRow {
            alpha: s.alpha as u32,
            base,
            subsampled: s.eps,
            composed: c.eps,
            conversion: conversion_value(c, delta),
        })
        .collect();

    Ok(PipelineResult {
        epsilon: conversion.epsilon,
        alpha: conversion.alpha,
        delta_w,
        sampling_rate: q,
        sigma_effective,
        rows,
        dropped_alphas: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_reproduces_reported_value() {
        let b = PrivacyBudget::new(1.0, 1e-8).unwrap();
        let c = advanced_composition(&b, 1000).unwrap();
        assert!((c.eps_prime / 191.941_036_487_523_23 - 1.0).abs() < 1e-12);
        assert!((c.delta_prime - 1.001e-5).abs() < 1e-12);
    }

    #[test]
    fn composition_examples() {
        let b = PrivacyBudget::new(1.0, 1.0 / std::f64::consts::E).unwrap();
        let c = advanced_composition(&b, 1).unwrap();
        assert!((c.eps_prime - std::f64::consts::SQRT_2).abs() < 1e-15);
        let b = PrivacyBudget::new(2.0, 1e-4).unwrap();
        let c = advanced_composition(&b, 5).unwrap();
        assert!((c.eps_prime - 19.194_103_648_752_324_8).abs() < 1e-13);
    }

    #[test]
    fn composition_delta_overflow() {
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        assert!(advanced_composition(&b, 8).is_ok());
        assert!(matches!(
            advanced_composition(&b, 9),
            Err(Error::ComposedDeltaOverflow { k: 9, .. })
        ));
        assert!(advanced_composition(&b, 0).is_err());
    }

    #[test]
    fn rdp_epsilon_examples() {
        assert_eq!(rdp_epsilon(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(rdp_epsilon(2.0, 1.0, 2.0).unwrap(), 0.25);
        let v = rdp_epsilon(10.0, 5e-8, 0.01).unwrap();
        assert!((v / 1.25e-10 - 1.0).abs() < 1e-15);
        assert!(rdp_epsilon(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn subsampled_examples() {
        assert_eq!(subsampled_rdp(2, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(subsampled_rdp(2, 1.0, 0.7).unwrap(), 0.7);
        let v = subsampled_rdp(3, 0.01, 0.5).unwrap();
        assert!((v - 2.576_758_660_095_524_67e-4).abs() < 1e-18);
        // printed bound at q = 1, alpha = 2 collapses to the base
        let raw = subsampled_rdp_bound(2, 1.0, 0.7).unwrap();
        assert!((raw - 0.7).abs() < 1e-15);
        // q near 1, alpha >= 3: raw bound exceeds base, clamped form does not
        assert!(subsampled_rdp_bound(5, 0.9, 0.5).unwrap() > 0.5);
        assert_eq!(subsampled_rdp(5, 0.9, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn subsampled_overflow_is_reported() {
        assert!(matches!(
            subsampled_rdp(200, 0.01, 10.0),
            Err(Error::RdpOverflow { alpha: 200, .. })
        ));
        assert!(subsampled_rdp(1, 0.5, 0.1).is_err());
        assert!(subsampled_rdp(2, 1.5, 0.1).is_err());
    }

    #[test]
    fn compose_examples() {
        let c = RdpCurve::new(vec![RdpPoint { alpha: 2.0, eps: 0.1 }]).unwrap();
        assert_eq!(compose_over_epochs(&c, 1), c);
        let ten = compose_over_epochs(&c, 10);
        assert_eq!(ten.points()[0].alpha, 2.0);
        assert!((ten.points()[0].eps - 1.0).abs() < 1e-15);
        let two = RdpCurve::new(vec![
            RdpPoint { alpha: 2.0, eps: 0.1 },
            RdpPoint { alpha: 5.0, eps: 0.4 },
        ])
        .unwrap();
        let three = compose_over_epochs(&two, 3);
        for (a, b) in two.points().iter().zip(three.points()) {
            assert_eq!(a.alpha, b.alpha);
            assert_eq!(b.eps, 3.0 * a.eps);
        }
    }

    #[test]
    fn curve_validation() {
        assert!(RdpCurve::new(vec![RdpPoint { alpha: 1.0, eps: 0.0 }]).is_err());
        assert!(RdpCurve::new(vec![
            RdpPoint { alpha: 3.0, eps: 0.0 },
            RdpPoint { alpha: 3.0, eps: 0.0 },
        ])
        .is_err());
        assert!(RdpCurve::new(vec![RdpPoint { alpha: 2.0, eps: -1.0 }]).is_err());
    }

    #[test]
    fn rdp_to_dp_examples() {
        let c = RdpCurve::new(vec![RdpPoint { alpha: 2.0, eps: 0.0 }]).unwrap();
        let r = rdp_to_dp(&c, 1.0 / std::f64::consts::E).unwrap();
        assert!((r.epsilon - 1.0).abs() < 1e-15);

        let c = RdpCurve::new(vec![
            RdpPoint { alpha: 2.0, eps: 1.0 },
            RdpPoint { alpha: 4.0, eps: 0.5 },
        ])
        .unwrap();
        let r = rdp_to_dp(&c, 1e-6).unwrap();
        assert!((r.epsilon - 5.105_170_185_988_091_4).abs() < 1e-14);
        assert_eq!(r.alpha, 4.0);

        let empty = RdpCurve::new(vec![]).unwrap();
        assert!(matches!(rdp_to_dp(&empty, 0.1), Err(Error::Empty(_))));
    }

    #[test]
    fn rdp_to_dp_ties_prefer_smaller_alpha() {
        // 0 + 1/1 == 0.5 + 1/2 with ln(1/delta) = 1
        let c = RdpCurve::new(vec![
            RdpPoint { alpha: 2.0, eps: 0.0 },
            RdpPoint { alpha: 3.0, eps: 0.5 },
        ])
        .unwrap();
        let r = rdp_to_dp(&c, 1.0 / std::f64::consts::E).unwrap();
        assert_eq!(r.alpha, 2.0);
    }

    #[test]
    fn sigma_total_examples() {
        let v = sigma_total(1.0, 1.0).unwrap();
        assert!((v - (1.0f64 + 0.009760 * 0.009760).sqrt()).abs() < 1e-15);
        let s = 0.009760 * 3f64.sqrt();
        let v = sigma_total(s, 1.0).unwrap();
        assert!((v - s * (4.0f64 / 3.0).sqrt()).abs() < 1e-16);
        let big = 1e3 * 0.009760 * 10.0;
        let v = sigma_total(big, 0.5).unwrap();
        assert!((v / big - 1.0).abs() < 1e-8);
        assert_eq!(v, big.hypot(crate::calibration::empirical_term(0.5).unwrap()));
    }

    #[test]
    fn calibrate_examples() {
        assert_eq!(calibrate_sigma_from_rdp(1.0, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(calibrate_sigma_from_rdp(1.0, 8.0, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn pipeline_large_sigma_hits_penalty_limit() {
        let cfg = TrainingConfig::new(10, 5e-5, 1.0, 1000, 10).unwrap();
        let grid = default_alpha_grid();
        let r = full_pipeline_epsilon(&PipelineInput {
            cfg: &cfg,
            sigma: 1e9,
            delta: 1e-6,
            alphas: &grid,
            empirical_epsilon: None,
        })
        .unwrap();
        let limit = (1e6f64).ln() / 255.0;
        assert_eq!(r.alpha, 256.0);
        assert!((r.epsilon - limit).abs() < 1e-12);
    }

    #[test]
    fn pipeline_drops_overflowing_orders() {
        // dW = 0.5, q = 0.5, sigma = 0.1: (alpha - 1) eps passes 709 from alpha = 9
        let cfg = TrainingConfig::new(1, 1.0, 1.0, 2, 1).unwrap();
        let grid = default_alpha_grid();
        let r = full_pipeline_epsilon(&PipelineInput {
            cfg: &cfg,
            sigma: 0.1,
            delta: 1e-5,
            alphas: &grid,
            empirical_epsilon: None,
        })
        .unwrap();
        assert_eq!(r.dropped_alphas, (9..=256).collect::<Vec<u32>>());
        assert_eq!(r.rows.len() + r.dropped_alphas.len(), grid.len());
        assert!(r.epsilon.is_finite());
    }
}
