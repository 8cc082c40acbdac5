use std::fmt::Write;
use std::path::PathBuf;

use dpweights::calibration::sensitivity;
use dpweights::simulate::{log_grid, sweep, sweep_csv, DeltaRule};
use serde_json::{json, Value};

use super::{header, Ctx};
use crate::args::{SimulateArgs, SweepVariant};
use crate::failure::CliResult;
use crate::output::{ensure_dir, num, write_atomic, write_json};

pub fn run(a: &SimulateArgs, ctx: &Ctx) -> CliResult {
    let r = &ctx.resolve;
    let cfg = r.training(&a.training)?;
    let rule = match r.pick(a.delta, &["delta"])? {
        Some(d) => DeltaRule::Fixed(d),
        None => DeltaRule::InverseSquareDataset,
    };
    let delta = rule.resolve(&cfg)?;
    let eps_min: f64 = r.or(a.eps_min, &["eps_min"], 0.01)?;
    let eps_max: f64 = r.or(a.eps_max, &["eps_max"], 1000.0)?;
    let points: usize = r.or(a.eps_points, &["eps_points"], 31)?;
    let samples: u64 = r.or(a.samples, &["samples"], 100_000)?;
    let variants = r.or(a.variant, &["variant"], SweepVariant::Both)?.variants();
    let out_dir: Option<PathBuf> = r.pick(a.out_dir.clone(), &["out_dir"])?;

    let grid = log_grid(eps_min, eps_max, points)?;
    let reports = sweep(&grid, &cfg, rule, &variants, samples, ctx.seed)?;

    let mut report = header("simulate");
    report.insert("config".into(), json!(cfg));
    report.insert("delta_w".into(), json!(sensitivity(&cfg).delta_w()));
    report.insert(
        "delta_rule".into(),
        json!(match rule {
            DeltaRule::Fixed(_) => "fixed",
            DeltaRule::InverseSquareDataset => "inverse_square_dataset",
        }),
    );
    report.insert("delta".into(), json!(delta));
    report.insert("seed".into(), json!(ctx.seed));
    report.insert("samples".into(), json!(samples));
    report.insert("variants".into(), json!(variants));
    report.insert("epsilon_grid".into(), json!(grid));
    report.insert("reports".into(), json!(reports));
    let report = Value::Object(report);

    if let Some(dir) = &out_dir {
        ensure_dir(dir)?;
        write_json(&dir.join("report.json"), &report)?;
        write_atomic(&dir.join("sweep.csv"), sweep_csv(&reports).as_bytes())?;
    }
    ctx.out.emit(&report, || {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "{:>20}  {:<9}  {:>22}  {:>10}  {:>10}  {:>22}",
            "epsilon", "variant", "sigma", "violations", "analytic", "max_loss"
        );
        for rep in &reports {
            let _ = writeln!(
                t,
                "{:>20}  {:<9}  {:>22}  {:>10.6}  {:>10.6}  {:>22}",
                num(rep.epsilon),
                rep.variant.as_str(),
                num(rep.sigma),
                rep.violation_rate,
                rep.analytic_rate,
                num(rep.loss.max)
            );
        }
        t
    })
}
