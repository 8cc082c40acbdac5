//! Pairwise comparison battery for two series of run results.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::simulate::normal_sf;

/// Wilcoxon uses exact enumeration up to this many nonzero differences.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Wilcoxon {
    /// `min(W+, W-)` over the nonzero differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// `None` marks a statistic that is not applicable to the inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairwiseReport {
    pub n_a: usize,
    pub n_b: usize,
    pub paired: bool,
    pub mean_difference: f64,
    pub welch: Option<WelchTest>,
    pub ci95: Option<(f64, f64)>,
    pub rmse: Option<f64>,
    pub pearson_r: Option<f64>,
    pub mae: Option<f64>,
    pub r2: Option<f64>,
    pub mse: Option<f64>,
    pub medae: Option<f64>,
    /// `std(b) / |mean(b)|`, population standard deviation.
    pub cov: Option<f64>,
    pub mape: Option<f64>,
    /// Pairs left out of MAPE because `b` was zero.
    pub mape_skipped: usize,
    pub wilcoxon: Option<Wilcoxon>,
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Welch's unequal-variance t test with Welch–Satterthwaite degrees of
/// freedom, plus the 95% interval for `mean(a) - mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<(WelchTest, (f64, f64))> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return None;
    }
    let se = se2.sqrt();
    let diff = mean(a) - mean(b);
    let t = diff / se;
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    let crit = dist.inverse_cdf(0.975);
    Some((WelchTest { t, df, p_value }, (diff - crit * se, diff + crit * se)))
}

/// Midranks (1-based) of `values`, with ties averaged.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments whose positive-rank sum is `<= limit2 / 2`,
/// with ranks given doubled so every sum is an integer.
fn count_rank_sums_at_most(ranks2: &[u64], limit2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut ways = vec![0f64; total as usize + 1];
    ways[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if ways[s] != 0.0 {
                ways[s + r] += ways[s];
            }
        }
        reach += r;
    }
    ways[..=(limit2.min(total) as usize)].iter().sum()
}

/// Wilcoxon signed-rank test on paired differences `a - b`.
///
/// Zero differences are dropped. Up to [`WILCOXON_EXACT_MAX`] remaining
/// differences the two-sided p-value is exact; beyond that a normal
/// approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Option<Wilcoxon> {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return None;
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = w_plus.min(total - w_plus);

    if n <= WILCOXON_EXACT_MAX {
        let ranks2: Vec<u64> = ranks.iter().map(|r| (2.0 * r) as u64).collect();
        let count = count_rank_sums_at_most(&ranks2, (2.0 * statistic) as u64);
        let p_value = (2.0 * count / 2f64.powi(n as i32)).min(1.0);
        return Some(Wilcoxon {
            statistic,
            p_value,
            n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((statistic - mean + 0.5) / var.sqrt()).min(0.0);
    Some(Wilcoxon {
        statistic,
        p_value: (2.0 * normal_sf(-z)).min(1.0),
        n,
        exact: false,
    })
}

/// Pearson correlation; `None` if either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Full battery comparing `a` against the reference series `b`.
pub fn pairwise_compare(a: &[f64], b: &[f64], paired: bool) -> Result<PairwiseReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("comparison series"));
    }
    if paired && a.len() != b.len() {
        return Err(Error::invalid(
            "paired",
            format!("paired series need equal lengths, got {} and {}", a.len(), b.len()),
        ));
    }
    if let Some(v) = a.iter().chain(b).find(|v| !v.is_finite()) {
        return Err(Error::invalid("series", format!("values must be finite, got {v}")));
    }
    let welch = welch_t_test(a, b);
    let mut report = PairwiseReport {
        n_a: a.len(),
        n_b: b.len(),
        paired,
        mean_difference: mean(a) - mean(b),
        welch: welch.map(|w| w.0),
        ci95: welch.map(|w| w.1),
        rmse: None,
        pearson_r: None,
        mae: None,
        r2: None,
        mse: None,
        medae: None,
        cov: None,
        mape: None,
        mape_skipped: 0,
        wilcoxon: None,
    };
    let mb = mean(b);
    let var_b_pop = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / b.len() as f64;
    report.cov = (mb != 0.0).then(|| var_b_pop.sqrt() / mb.abs());
    if !paired {
        return Ok(report);
    }

    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let sse: f64 = diffs.iter().map(|d| d * d).sum();
    let mse = sse / n;
    report.mse = Some(mse);
    report.rmse = Some(mse.sqrt());
    report.mae = Some(abs.iter().sum::<f64>() / n);
    report.medae = Some(median(abs.clone()));
    report.pearson_r = pearson(a, b);
    let sst: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    report.r2 = (sst > 0.0).then(|| 1.0 - sse / sst);

    let mut ape = Vec::with_capacity(a.len());
    for (d, y) in abs.iter().zip(b) {
        if *y == 0.0 {
            report.mape_skipped += 1;
        } else {
            ape.push(d / y.abs());
        }
    }
    report.mape = (!ape.is_empty()).then(|| mean(&ape));
    report.wilcoxon = wilcoxon_signed_rank(&diffs);
    Ok(report)
}
