//! Monte-Carlo test of the privacy condition for a single scalar weight.
//!
//! With `x = 0` and `x' = dW`, draws `y = x + N(0, sigma^2)` and counts the
//! samples whose privacy loss `|ln(pdf(y; x) / pdf(y; x'))|` exceeds `eps`.

use std::fmt::Write as _;

use libm::erfc;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::calibration::{self, NoiseVariant, PrivacyBudget, TrainingConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Histogram resolution of [`SimulationReport::histogram`].
pub const HISTOGRAM_BINS: usize = 100;
/// Default sample count per epsilon.
pub const DEFAULT_SAMPLES: u64 = 1_000_000;

const STREAM_FAMILY: &str = "simulate";

/// `|((y - x')^2 - (y - x)^2) / (2 sigma^2)|`, the absolute log density ratio.
///
/// Evaluated as `(x - x')(2y - x - x') / (2 sigma^2)`, which avoids the
/// cancellation between the two squares when `|y| >> |x - x'|`.
pub fn privacy_loss(y: f64, x: f64, x_prime: f64, sigma: f64) -> f64 {
    let diff = x - x_prime;
    let sum = (y - x) + (y - x_prime);
    (diff * sum / (2.0 * sigma * sigma)).abs()
}

/// Upper tail of the standard normal, `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Exact probability that one draw violates the condition.
///
/// The loss is `dW |2y - dW| / (2 sigma^2)`, so a violation is
/// `|y - dW/2| > sigma^2 eps / dW` with `y ~ N(0, sigma^2)`; both tails are
/// summed.
pub fn analytic_violation_probability(delta_w: f64, sigma: f64, epsilon: f64) -> f64 {
    let half = delta_w / 2.0;
    let t = sigma * sigma * epsilon / delta_w;
    normal_sf((half + t) / sigma) + normal_sf((t - half) / sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub p999: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub epsilon: f64,
    pub delta: f64,
    pub variant: NoiseVariant,
    pub sigma: f64,
    pub delta_w: f64,
    pub num_samples: u64,
    pub violations: u64,
    pub violation_rate: f64,
    pub analytic_rate: f64,
    /// Largest `|noise|` drawn, used for the per-run loss bound.
    pub max_abs_noise: f64,
    pub loss: LossSummary,
    /// Uniform bins over `[0, max(eps, max loss)]`.
    pub histogram: Vec<HistogramBin>,
    pub seed: u64,
}

impl SimulationReport {
    /// `dW (2 max|n| + dW) / (2 sigma^2)`, an upper bound on every observed loss.
    pub fn loss_bound(&self) -> f64 {
        self.delta_w * (2.0 * self.max_abs_noise + self.delta_w) / (2.0 * self.sigma * self.sigma)
    }

    /// Three binomial standard errors around the analytic rate.
    pub fn binomial_tolerance(&self) -> f64 {
        let p = self.analytic_rate;
        3.0 * (p * (1.0 - p) / self.num_samples as f64).sqrt()
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

struct Point {
    epsilon: f64,
    delta: f64,
    variant: NoiseVariant,
    sigma: f64,
    delta_w: f64,
}

fn simulate_point(p: &Point, num_samples: u64, seed: u64, index: u64) -> SimulationReport {
    let mut rng = rng::indexed_substream(seed, STREAM_FAMILY, index);
    let (x, x_prime) = (0.0, p.delta_w);
    let mut losses = Vec::with_capacity(num_samples as usize);
    let mut violations = 0u64;
    let mut max_abs_noise = 0.0f64;
    let mut sum = 0.0;
    for _ in 0..num_samples {
        let z: f64 = rng.sample(StandardNormal);
        let noise = p.sigma * z;
        max_abs_noise = max_abs_noise.max(noise.abs());
        let loss = privacy_loss(x + noise, x, x_prime, p.sigma);
        if loss > p.epsilon {
            violations += 1;
        }
        sum += loss;
        losses.push(loss);
    }
    losses.sort_unstable_by(f64::total_cmp);
    let max = *losses.last().expect("num_samples >= 1");
    let summary = LossSummary {
        min: losses[0],
        max,
        mean: sum / num_samples as f64,
        p50: quantile(&losses, 0.5),
        p99: quantile(&losses, 0.99),
        p999: quantile(&losses, 0.999),
    };

    let hi = p.epsilon.max(max);
    let width = hi / HISTOGRAM_BINS as f64;
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &l in &losses {
        let bin = ((l / hi) * HISTOGRAM_BINS as f64) as usize;
        counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: i as f64 * width,
            count,
        })
        .collect();

    SimulationReport {
        epsilon: p.epsilon,
        delta: p.delta,
        variant: p.variant,
        sigma: p.sigma,
        delta_w: p.delta_w,
        num_samples,
        violations,
        violation_rate: violations as f64 / num_samples as f64,
        analytic_rate: analytic_violation_probability(p.delta_w, p.sigma, p.epsilon),
        max_abs_noise,
        loss: summary,
        histogram,
        seed,
    }
}

fn point(cfg: &TrainingConfig, budget: &PrivacyBudget, variant: NoiseVariant) -> Point {
    let sensitivity = calibration::sensitivity(cfg);
    let scale = calibration::noise_scale_for(sensitivity, budget, variant);
    Point {
        epsilon: budget.epsilon(),
        delta: budget.delta(),
        variant,
        sigma: scale.sigma,
        delta_w: sensitivity.delta_w(),
    }
}

/// Monte-Carlo violation rate for one budget; deterministic given `seed`.
pub fn run_simulation(
    cfg: &TrainingConfig,
    budget: &PrivacyBudget,
    variant: NoiseVariant,
    num_samples: u64,
    seed: u64,
) -> Result<SimulationReport> {
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    Ok(simulate_point(&point(cfg, budget, variant), num_samples, seed, 0))
}

/// Simulation at a raw `(dW, sigma, eps)` triple, bypassing calibration.
pub fn run_simulation_raw(
    delta_w: f64,
    sigma: f64,
    epsilon: f64,
    num_samples: u64,
    seed: u64,
) -> Result<SimulationReport> {
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    if !(delta_w > 0.0 && sigma > 0.0 && epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "dW, sigma and eps must be positive, got {delta_w}, {sigma}, {epsilon}"
        )));
    }
    let p = Point {
        epsilon,
        delta: f64::NAN,
        variant: NoiseVariant::Split,
        sigma,
        delta_w,
    };
    Ok(simulate_point(&p, num_samples, seed, 0))
}

/// How delta is chosen at each sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaRule {
    Fixed(f64),
    /// `1 / N^2`.
    InverseSquareDataset,
}

impl DeltaRule {
    pub fn resolve(&self, cfg: &TrainingConfig) -> Result<f64> {
        match *self {
            DeltaRule::Fixed(d) => Ok(d),
            DeltaRule::InverseSquareDataset => calibration::default_delta(cfg.dataset_size()),
        }
    }
}

/// `points` log-spaced values from `min` to `max`, endpoints exact.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::invalid(
            "eps grid",
            format!("need 0 < min <= max, got [{min}, {max}]"),
        ));
    }
    match points {
        0 => Err(Error::Empty("epsilon grid")),
        1 => Ok(vec![min]),
        _ => {
            let (lo, hi) = (min.log10(), max.log10());
            let step = (hi - lo) / (points - 1) as f64;
            let mut grid: Vec<f64> = (0..points).map(|i| 10f64.powf(lo + step * i as f64)).collect();
            grid[0] = min;
            grid[points - 1] = max;
            Ok(grid)
        }
    }
}

/// One report per `(variant, eps)`; sweep point `i` uses substream `i` for
/// every variant.
pub fn sweep(
    eps_grid: &[f64],
    cfg: &TrainingConfig,
    delta_rule: DeltaRule,
    variants: &[NoiseVariant],
    num_samples: u64,
    seed: u64,
) -> Result<Vec<SimulationReport>> {
    if eps_grid.is_empty() {
        return Err(Error::Empty("epsilon grid"));
    }
    if variants.is_empty() {
        return Err(Error::Empty("variant list"));
    }
    if num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    let delta = delta_rule.resolve(cfg)?;
    let mut jobs = Vec::with_capacity(eps_grid.len() * variants.len());
    for &variant in variants {
        for (i, &eps) in eps_grid.iter().enumerate() {
            let budget = PrivacyBudget::new(eps, delta)?;
            jobs.push((i as u64, point(cfg, &budget, variant)));
        }
    }
    let run = |(i, p): &(u64, Point)| simulate_point(p, num_samples, seed, *i);
    #[cfg(feature = "parallel")]
    let reports = jobs.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let reports = jobs.iter().map(run).collect();
    Ok(reports)
}

/// Sweep table: `epsilon,sigma,violation_rate,analytic_rate,max_loss,p999_loss,variant`.
pub fn sweep_csv(reports: &[SimulationReport]) -> String {
    let mut out = String::from("epsilon,sigma,violation_rate,analytic_rate,max_loss,p999_loss,variant\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epsilon, r.sigma, r.violation_rate, r.analytic_rate, r.loss.max, r.loss.p999, r.variant
        );
    }
    out
}
