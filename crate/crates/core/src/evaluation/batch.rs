//! Grouped descriptive tables and pairwise model comparisons over run files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use super::stats::{mean, pairwise_compare, sample_variance, PairwiseReport};
use crate::error::{Error, Result};
use crate::SCHEMA_VERSION;

/// Metric columns of a run-results file, in output order.
pub const METRICS: [&str; 7] = [
    "perplexity_member",
    "perplexity_non_member",
    "roc_auc",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

/// Required header of a run-results file.
pub const RUN_COLUMNS: [&str; 11] = [
    "model",
    "batch_size",
    "epochs",
    "epsilon",
    "perplexity_member",
    "perplexity_non_member",
    "roc_auc",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub model: String,
    pub batch_size: u64,
    pub epochs: u64,
    /// `None` for a run trained without privacy (empty or `none` in the file).
    pub epsilon: Option<f64>,
    /// Values in [`METRICS`] order.
    pub metrics: [f64; 7],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    BatchSize,
    Epochs,
}

impl GroupKey {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BatchSize => "batch_size",
            Self::Epochs => "epochs",
        }
    }

    fn value(&self, r: &RunRecord) -> u64 {
        match self {
            Self::BatchSize => r.batch_size,
            Self::Epochs => r.epochs,
        }
    }
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "batch_size" | "batch" => Ok(Self::BatchSize),
            "epochs" | "epoch" => Ok(Self::Epochs),
            _ => Err(Error::invalid(
                "group_by",
                format!("expected batch_size or epochs, got `{s}`"),
            )),
        }
    }
}

/// Parse run records from CSV text. `source` names the input in errors.
pub fn parse_runs(reader: impl Read, source: &str) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("{source}: {e}")))?
        .clone();
    let mut idx = [0usize; 11];
    for (slot, name) in idx.iter_mut().zip(RUN_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{source}: missing column `{name}`")))?;
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let row = row + 1;
        let rec = rec.map_err(|e| Error::Schema(format!("{source}: {e}")))?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let bad = |i: usize, what: &str| {
            Error::Schema(format!(
                "{source}: row {row}, column `{}`: `{}` is not {what}",
                RUN_COLUMNS[i],
                field(i)
            ))
        };
        let model = field(0).to_string();
        if model.is_empty() {
            return Err(bad(0, "a model name"));
        }
        let batch_size = field(1).parse().map_err(|_| bad(1, "an integer"))?;
        let epochs = field(2).parse().map_err(|_| bad(2, "an integer"))?;
        let epsilon = match field(3).to_ascii_lowercase().as_str() {
            "" | "none" | "inf" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad(3, "a number"))?),
        };
        let mut metrics = [0.0; 7];
        for (k, m) in metrics.iter_mut().enumerate() {
            let v: f64 = field(4 + k).parse().map_err(|_| bad(4 + k, "a number"))?;
            if !v.is_finite() {
                return Err(bad(4 + k, "a finite number"));
            }
            *m = v;
        }
        out.push(RunRecord {
            model,
            batch_size,
            epochs,
            epsilon,
            metrics,
        });
    }
    Ok(out)
}

/// Read and concatenate run records from several files.
pub fn read_runs<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let file = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
        out.extend(parse_runs(file, &p.display().to_string())?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescriptiveRow {
    pub group_value: u64,
    pub model: String,
    pub n: usize,
    /// Keyed by metric name, in [`METRICS`] order.
    pub metrics: Vec<(String, MeanStd)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairwiseEntry {
    pub group_value: u64,
    pub model_a: String,
    pub model_b: String,
    pub metric: String,
    pub report: PairwiseReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchReport {
    pub schema_version: &'static str,
    pub group_by: GroupKey,
    pub descriptive: Vec<DescriptiveRow>,
    pub pairwise: Vec<PairwiseEntry>,
}

fn mean_std(v: &[f64]) -> MeanStd {
    MeanStd {
        mean: mean(v),
        std: if v.len() < 2 { 0.0 } else { sample_variance(v).sqrt() },
    }
}

/// Pair the runs of two models for one metric.
///
/// A model with a single run is broadcast against every run of the other.
/// Otherwise runs are joined on epsilon; if no epsilon is shared the two
/// series are compared unpaired.
fn align(a: &[&RunRecord], b: &[&RunRecord], metric: usize) -> (Vec<f64>, Vec<f64>, bool) {
    let va: Vec<f64> = a.iter().map(|r| r.metrics[metric]).collect();
    let vb: Vec<f64> = b.iter().map(|r| r.metrics[metric]).collect();
    if va.len() == 1 && vb.len() > 1 {
        return (vec![va[0]; vb.len()], vb, true);
    }
    if vb.len() == 1 && va.len() > 1 {
        let n = va.len();
        return (va, vec![vb[0]; n], true);
    }
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    let mut used = vec![false; b.len()];
    for ra in a {
        let hit = b
            .iter()
            .enumerate()
            .find(|(j, rb)| !used[*j] && rb.epsilon.map(f64::to_bits) == ra.epsilon.map(f64::to_bits));
        if let Some((j, rb)) = hit {
            used[j] = true;
            pa.push(ra.metrics[metric]);
            pb.push(rb.metrics[metric]);
        }
    }
    if pa.is_empty() {
        (va, vb, false)
    } else {
        (pa, pb, true)
    }
}

/// Group runs by `(group_key value, model)`; groups, models and metrics
/// appear in sorted, then [`METRICS`], order.
pub fn batch_report(runs: &[RunRecord], group_by: GroupKey) -> Result<BatchReport> {
    if runs.is_empty() {
        return Err(Error::Empty("run records"));
    }
    let mut groups: BTreeMap<u64, BTreeMap<&str, Vec<&RunRecord>>> = BTreeMap::new();
    for r in runs {
        groups
            .entry(group_by.value(r))
            .or_default()
            .entry(r.model.as_str())
            .or_default()
            .push(r);
    }
    for models in groups.values_mut() {
        for rs in models.values_mut() {
            rs.sort_by(|x, y| {
                let kx = x.epsilon.unwrap_or(f64::INFINITY);
                let ky = y.epsilon.unwrap_or(f64::INFINITY);
                kx.total_cmp(&ky)
            });
        }
    }

    let mut descriptive = Vec::new();
    let mut pairwise = Vec::new();
    for (&gv, models) in &groups {
        for (&model, rs) in models {
            let metrics = METRICS
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let v: Vec<f64> = rs.iter().map(|r| r.metrics[k]).collect();
                    (name.to_string(), mean_std(&v))
                })
                .collect();
            descriptive.push(DescriptiveRow {
                group_value: gv,
                model: model.to_string(),
                n: rs.len(),
                metrics,
            });
        }
        let names: Vec<&str> = models.keys().copied().collect();
        for (i, &ma) in names.iter().enumerate() {
            for &mb in &names[i + 1..] {
                for (k, metric) in METRICS.iter().enumerate() {
                    let (a, b, paired) = align(&models[ma], &models[mb], k);
                    pairwise.push(PairwiseEntry {
                        group_value: gv,
                        model_a: ma.to_string(),
                        model_b: mb.to_string(),
                        metric: metric.to_string(),
                        report: pairwise_compare(&a, &b, paired)?,
                    });
                }
            }
        }
    }
    Ok(BatchReport {
        schema_version: SCHEMA_VERSION,
        group_by,
        descriptive,
        pairwise,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn descriptive_csv(&self) -> String {
        let mut s = format!("{},model,n", self.group_by.as_str());
        for m in METRICS {
            let _ = write!(s, ",{m}_mean,{m}_std");
        }
        s.push('\n');
        for row in &self.descriptive {
            let _ = write!(s, "{},{},{}", row.group_value, row.model, row.n);
            for (_, ms) in &row.metrics {
                let _ = write!(s, ",{},{}", ms.mean, ms.std);
            }
            s.push('\n');
        }
        s
    }

    pub fn pairwise_csv(&self) -> String {
        let mut s = format!(
            "{},model_a,model_b,metric,n,paired,welch_t,welch_df,welch_p,ci95_low,ci95_high,\
             rmse,pearson_r,mae,r2,mse,medae,cov,mape,mape_skipped,wilcoxon_statistic,wilcoxon_p\n",
            self.group_by.as_str()
        );
        for e in &self.pairwise {
            let r = &e.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.group_value,
                e.model_a,
                e.model_b,
                e.metric,
                r.n_a,
                r.paired,
                opt(r.welch.map(|w| w.t)),
                opt(r.welch.map(|w| w.df)),
                opt(r.welch.map(|w| w.p_value)),
                opt(r.ci95.map(|c| c.0)),
                opt(r.ci95.map(|c| c.1)),
                opt(r.rmse),
                opt(r.pearson_r),
                opt(r.mae),
                opt(r.r2),
                opt(r.mse),
                opt(r.medae),
                opt(r.cov),
                opt(r.mape),
                r.mape_skipped,
                opt(r.wilcoxon.map(|w| w.statistic)),
                opt(r.wilcoxon.map(|w| w.p_value)),
            );
        }
        s
    }

    /// Plain-text `mean ± std` table, one block per group value.
    pub fn descriptive_text(&self) -> String {
        let mut s = String::new();
        let mut last = None;
        for row in &self.descriptive {
            if last != Some(row.group_value) {
                if last.is_some() {
                    s.push('\n');
                }
                let _ = writeln!(s, "{} = {}", self.group_by.as_str(), row.group_value);
                let _ = write!(s, "{:<24}", "model");
                for m in METRICS {
                    let _ = write!(s, " {m:>24}");
                }
                s.push('\n');
                last = Some(row.group_value);
            }
            let _ = write!(s, "{:<24}", row.model);
            for (_, ms) in &row.metrics {
                let cell = format!("{:.4} ± {:.4}", ms.mean, ms.std);
                let _ = write!(s, " {cell:>24}");
            }
            s.push('\n');
        }
        s
    }

    /// Plain-text comparison tables: one block per model pair and group,
    /// one `statistic for metric` row per line.
    pub fn pairwise_text(&self) -> String {
        let mut s = String::new();
        let mut last: Option<(u64, &str, &str)> = None;
        for e in &self.pairwise {
            let key = (e.group_value, e.model_a.as_str(), e.model_b.as_str());
            if last != Some(key) {
                if last.is_some() {
                    s.push('\n');
                }
                let _ = writeln!(
                    s,
                    "{} vs {} ({} = {})",
                    e.model_a,
                    e.model_b,
                    self.group_by.as_str(),
                    e.group_value
                );
                last = Some(key);
            }
            let r = &e.report;
            let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
            let rows: [(&str, String); 12] = [
                ("T-test statistic", fmt(r.welch.map(|w| w.t))),
                ("T-test p-value", fmt(r.welch.map(|w| w.p_value))),
                (
                    "95% CI",
                    r.ci95
                        .map_or_else(|| "n/a".to_string(), |c| format!("[{:.6}, {:.6}]", c.0, c.1)),
                ),
                ("RMSE", fmt(r.rmse)),
                ("Pearson correlation", fmt(r.pearson_r)),
                ("MAE", fmt(r.mae)),
                ("R-squared", fmt(r.r2)),
                ("MSE", fmt(r.mse)),
                ("MedAE", fmt(r.medae)),
                ("Coefficient of variation", fmt(r.cov)),
                ("MAPE", fmt(r.mape)),
                (
                    "Wilcoxon test",
                    r.wilcoxon.map_or_else(
                        || "n/a".to_string(),
                        |w| format!("W = {:.1}, p = {:.6}", w.statistic, w.p_value),
                    ),
                ),
            ];
            for (label, value) in rows {
                let _ = writeln!(s, "  {:<48} {value}", format!("{label} for {}", e.metric));
            }
        }
        s
    }
}
