use std::fmt::Write;

use dpweights::accounting::{advanced_composition, full_pipeline_epsilon, sigma_total, PipelineInput};
use dpweights::calibration::{noise_scale, sensitivity};
use dpweights::{NoiseVariant, PrivacyBudget};
use serde_json::{json, Value};

use super::{header, Ctx};
use crate::args::AccountArgs;
use crate::failure::{CliResult, Failure};
use crate::output::num;

pub fn run(a: &AccountArgs, ctx: &Ctx) -> CliResult {
    let r = &ctx.resolve;
    let cfg = r.training(&a.training)?;
    let epsilon: f64 = r.require(a.budget.epsilon, &["epsilon"])?;
    let (delta, _) = r.delta(a.budget.delta, &cfg)?;
    let budget = PrivacyBudget::new(epsilon, delta)?;
    let variant: NoiseVariant = r.or(a.variant, &["variant"], NoiseVariant::Split)?;
    let alpha_max: u32 = r.or(a.alpha_max, &["alpha_max"], 256)?;
    if alpha_max < 2 {
        return Err(Failure::usage(format!(
            "--alpha-max must be at least 2, got {alpha_max}"
        )));
    }
    let compositions: Option<u64> = r.pick(a.compositions, &["compositions"])?;
    let widen = a.sigma_total || r.or(None, &["sigma_total"], false)?;

    let (sigma, sigma_source) = match r.pick(a.sigma, &["sigma"])? {
        Some(s) => (s, "flag"),
        None => (noise_scale(&cfg, &budget, variant).sigma, variant.as_str()),
    };
    let alphas: Vec<u32> = (2..=alpha_max).collect();
    let pipeline = full_pipeline_epsilon(&PipelineInput {
        cfg: &cfg,
        sigma,
        delta,
        alphas: &alphas,
        empirical_epsilon: widen.then_some(epsilon),
    })?;
    let total = sigma_total(sigma, epsilon)?;
    let composition = compositions.map(|k| advanced_composition(&budget, k)).transpose()?;

    let mut report = header("account");
    report.insert(
        "inputs".into(),
        json!({
            "config": cfg,
            "epsilon": epsilon,
            "delta": delta,
            "sigma": sigma,
            "sigma_source": sigma_source,
            "alpha_max": alpha_max,
            "sigma_total_applied": widen,
        }),
    );
    report.insert("delta_w".into(), json!(sensitivity(&cfg).delta_w()));
    report.insert("sampling_rate".into(), json!(pipeline.sampling_rate));
    report.insert("sigma_effective".into(), json!(pipeline.sigma_effective));
    report.insert("rows".into(), json!(pipeline.rows));
    report.insert("dropped_alphas".into(), json!(pipeline.dropped_alphas));
    report.insert(
        "final".into(),
        json!({ "epsilon": pipeline.epsilon, "alpha": pipeline.alpha }),
    );
    report.insert("sigma_total".into(), json!(total));
    report.insert("composition".into(), json!(composition));

    ctx.out.emit(&Value::Object(report), || {
        let mut t = String::new();
        let _ = writeln!(t, "sigma                {} ({sigma_source})", num(sigma));
        let _ = writeln!(t, "sigma_total          {}", num(total));
        let _ = writeln!(t, "sampling rate q      {}", num(pipeline.sampling_rate));
        let _ = writeln!(
            t,
            "rdp epsilon          {} at alpha {} (delta {})",
            num(pipeline.epsilon),
            pipeline.alpha,
            num(delta)
        );
        if !pipeline.dropped_alphas.is_empty() {
            let _ = writeln!(
                t,
                "dropped orders       {} (bound overflow)",
                pipeline.dropped_alphas.len()
            );
        }
        if let Some(c) = composition {
            let _ = writeln!(
                t,
                "composed x{:<6}     epsilon {}, delta {}",
                c.k,
                num(c.eps_prime),
                num(c.delta_prime)
            );
        }
        t
    })
}
