//! Threshold membership-inference attack on confidence scores.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Confidence scores of training members and held-out non-members.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreSet {
    member: Vec<f64>,
    nonmember: Vec<f64>,
}

impl ScoreSet {
    pub fn new(member: Vec<f64>, nonmember: Vec<f64>) -> Result<Self> {
        if member.is_empty() {
            return Err(Error::Empty("member scores"));
        }
        if nonmember.is_empty() {
            return Err(Error::Empty("non-member scores"));
        }
        if let Some(v) = member.iter().chain(&nonmember).find(|v| !v.is_finite()) {
            return Err(Error::invalid("score", format!("scores must be finite, got {v}")));
        }
        Ok(Self { member, nonmember })
    }

    pub fn member(&self) -> &[f64] {
        &self.member
    }

    pub fn nonmember(&self) -> &[f64] {
        &self.nonmember
    }

    /// Same scores with the two cohorts exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            member: self.nonmember.clone(),
            nonmember: self.member.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MiaMetrics {
    pub threshold: f64,
    pub roc_auc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
    /// No score reached the threshold, so precision was set to 0.
    pub precision_undefined: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Midpoint of the two cohort means.
pub fn mia_threshold(scores: &ScoreSet) -> f64 {
    (mean(&scores.member) + mean(&scores.nonmember)) / 2.0
}

/// `P(member score > non-member score) + P(tie) / 2`, via midranks.
pub fn roc_auc(scores: &ScoreSet) -> f64 {
    let mut all: Vec<(f64, bool)> = scores
        .member
        .iter()
        .map(|&s| (s, true))
        .chain(scores.nonmember.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // doubled ranks keep the midrank sum an exact integer
    let mut member_rank2 = 0u64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1, midrank (i + j + 2) / 2
        let rank2 = (i + j + 2) as u64;
        let members = all[i..=j].iter().filter(|e| e.1).count() as u64;
        member_rank2 += members * rank2;
        i = j + 1;
    }
    let n1 = scores.member.len() as u64;
    let n0 = scores.nonmember.len() as u64;
    let u2 = member_rank2 - n1 * (n1 + 1);
    u2 as f64 / (2 * n1 * n0) as f64
}

/// Predict "member" iff `score >= threshold`; report the attack metrics on
/// the member class.
pub fn mia_evaluate(scores: &ScoreSet) -> MiaMetrics {
    let threshold = mia_threshold(scores);
    let tp = scores.member.iter().filter(|&&s| s >= threshold).count() as u64;
    let fp = scores.nonmember.iter().filter(|&&s| s >= threshold).count() as u64;
    let fn_ = scores.member.len() as u64 - tp;
    let tn = scores.nonmember.len() as u64 - fp;
    let total = (tp + fp + tn + fn_) as f64;
    let precision_undefined = tp + fp == 0;
    let precision = if precision_undefined {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fn_) as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MiaMetrics {
        threshold,
        roc_auc: roc_auc(scores),
        accuracy: (tp + tn) as f64 / total,
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision_undefined,
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
}

fn parse_f64(field: Option<&str>, name: &str, row: usize, path: &Path) -> Result<f64> {
    let raw = field.unwrap_or("");
    raw.parse().map_err(|_| {
        Error::Schema(format!(
            "{}: row {row}, column `{name}`: `{raw}` is not a number",
            path.display()
        ))
    })
}

/// One cohort from a CSV with a `score` column.
pub fn read_score_column(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let idx = column(&headers, "score", path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        out.push(parse_f64(rec.get(idx), "score", row + 1, path)?);
    }
    Ok(out)
}

/// Both cohorts from a `label,score` CSV; label `1`/`member`/`true` marks members.
pub fn read_labeled_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let label_idx = column(&headers, "label", path)?;
    let score_idx = column(&headers, "score", path)?;
    let (mut member, mut nonmember) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let score = parse_f64(rec.get(score_idx), "score", row + 1, path)?;
        match rec.get(label_idx).unwrap_or("").to_ascii_lowercase().as_str() {
            "1" | "member" | "true" => member.push(score),
            "0" | "nonmember" | "non_member" | "false" => nonmember.push(score),
            other => {
                return Err(Error::Schema(format!(
                    "{}: row {}, column `label`: unknown label `{other}`",
                    path.display(),
                    row + 1
                )))
            }
        }
    }
    ScoreSet::new(member, nonmember)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(m: &[f64], n: &[f64]) -> ScoreSet {
        ScoreSet::new(m.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(mia_threshold(&set(&[1.0, 1.0], &[0.0, 0.0, 0.0])), 0.5);
        assert!((mia_threshold(&set(&[0.8], &[0.4])) - 0.6).abs() < 1e-15);
        assert!((mia_threshold(&set(&[0.9, 0.7], &[0.2, 0.4])) - 0.55).abs() < 1e-15);
        assert!(matches!(ScoreSet::new(vec![], vec![1.0]), Err(Error::Empty(_))));
        assert!(ScoreSet::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn separated_sets() {
        let m = mia_evaluate(&set(&[0.9, 0.8, 0.95], &[0.1, 0.2]));
        assert_eq!(m.roc_auc, 1.0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn identical_sets_give_half_auc() {
        let s = set(&[0.3, 0.5, 0.9], &[0.3, 0.5, 0.9]);
        assert_eq!(roc_auc(&s), 0.5);
    }

    #[test]
    fn hand_example() {
        let m = mia_evaluate(&set(&[3.0, 1.0], &[2.0, 0.0]));
        assert_eq!(m.roc_auc, 0.75);
        assert_eq!(m.threshold, 1.5);
        assert_eq!(
            (m.true_positives, m.false_negatives, m.false_positives, m.true_negatives),
            (1, 1, 1, 1)
        );
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn threshold_tie_predicts_member() {
        // threshold 1.0, member score exactly on it
        let m = mia_evaluate(&set(&[1.0, 1.0], &[1.0, 1.0]));
        assert_eq!(m.true_positives, 2);
        assert_eq!(m.false_positives, 2);
        assert!(!m.precision_undefined);
    }
}
