use std::path::PathBuf;

use dpweights::evaluation::mia::{read_labeled_scores, read_score_column};
use dpweights::evaluation::{mia_evaluate, ScoreSet};
use serde_json::{json, Value};

use super::{header, Ctx};
use crate::args::MiaArgs;
use crate::failure::{CliResult, Failure};
use crate::output::{num, write_json};

pub fn run(a: &MiaArgs, ctx: &Ctx) -> CliResult {
    let r = &ctx.resolve;
    let labeled: Option<PathBuf> = r.pick(a.labeled.clone(), &["labeled"])?;
    let members: Option<PathBuf> = r.pick(a.members.clone(), &["members"])?;
    let nonmembers: Option<PathBuf> = r.pick(a.nonmembers.clone(), &["nonmembers"])?;
    let out: Option<PathBuf> = r.pick(a.out.clone(), &["out"])?;

    let scores = match (labeled, members, nonmembers) {
        (Some(p), None, None) => read_labeled_scores(p)?,
        (None, Some(m), Some(n)) => ScoreSet::new(read_score_column(m)?, read_score_column(n)?)?,
        _ => {
            return Err(Failure::usage(
                "give either --labeled, or both --members and --nonmembers",
            ))
        }
    };
    let metrics = mia_evaluate(&scores);

    let mut report = header("mia");
    report.insert("members".into(), json!(scores.member().len()));
    report.insert("nonmembers".into(), json!(scores.nonmember().len()));
    report.insert("metrics".into(), json!(metrics));
    let report = Value::Object(report);
    if let Some(p) = &out {
        write_json(p, &report)?;
    }
    ctx.out.emit(&report, || {
        format!(
            "threshold {}\nroc_auc   {}\naccuracy  {}\nprecision {}{}\nrecall    {}\nf1        {}\n",
            num(metrics.threshold),
            num(metrics.roc_auc),
            num(metrics.accuracy),
            num(metrics.precision),
            if metrics.precision_undefined {
                " (undefined)"
            } else {
                ""
            },
            num(metrics.recall),
            num(metrics.f1)
        )
    })
}
