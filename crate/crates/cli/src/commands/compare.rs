use std::path::PathBuf;

use dpweights::evaluation::{batch_report, read_runs, GroupKey};
use serde_json::Value;

use super::Ctx;
use crate::args::CompareArgs;
use crate::failure::CliResult;
use crate::output::{ensure_dir, write_atomic};

pub fn run(a: &CompareArgs, ctx: &Ctx) -> CliResult {
    let r = &ctx.resolve;
    let group: GroupKey = r.or(a.group_by, &["group_by"], GroupKey::BatchSize)?;
    let out_dir: Option<PathBuf> = r.pick(a.out_dir.clone(), &["out_dir"])?;

    let runs = read_runs(&a.runs)?;
    let report = batch_report(&runs, group)?;
    let json = report.to_json();

    if let Some(dir) = &out_dir {
        ensure_dir(dir)?;
        write_atomic(&dir.join("descriptive.csv"), report.descriptive_csv().as_bytes())?;
        write_atomic(&dir.join("pairwise.csv"), report.pairwise_csv().as_bytes())?;
        write_atomic(&dir.join("report.json"), format!("{json}\n").as_bytes())?;
    }
    let value: Value = serde_json::from_str(&json)?;
    ctx.out.emit(&value, || {
        let mut t = report.descriptive_text();
        t.push('\n');
        t += &report.pairwise_text();
        t
    })
}
