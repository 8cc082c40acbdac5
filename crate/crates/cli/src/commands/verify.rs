use std::fmt::Write;
use std::path::PathBuf;

use dpweights::calibration::{noise_scale_for, sensitivity};
use dpweights::verify::{
    dp_condition_check, export_smtlib, verify_composed_with_terms, DpConditionSpec, Mode, Status, VerificationOutcome,
    DEFAULT_DOMAIN_SIGMAS, DEFAULT_TAYLOR_TERMS,
};
use dpweights::{NoiseVariant, PrivacyBudget};
use serde_json::{json, Value};

use super::{header, Ctx};
use crate::args::VerifyArgs;
use crate::failure::{CliResult, Failure, UNSATISFIED};
use crate::output::{num, write_atomic};

fn outcome_line(label: &str, sigma: f64, o: &VerificationOutcome) -> String {
    let status = match o.status {
        Status::Satisfied => "satisfied",
        Status::Falsified => "falsified",
        Status::Inconclusive => "inconclusive",
    };
    let mut s = format!("{label:<9} sigma {}  {status}, margin {}", num(sigma), num(o.margin));
    if let Some(x) = o.witness {
        let _ = write!(s, ", witness x = {}", num(x));
    }
    if let Some(note) = &o.note {
        let _ = write!(s, " ({note})");
    }
    s.push('\n');
    s
}

pub fn run(a: &VerifyArgs, ctx: &Ctx) -> CliResult {
    let r = &ctx.resolve;
    let cfg = r.training(&a.training)?;
    let epsilon: f64 = r.require(a.budget.epsilon, &["epsilon"])?;
    let (delta, _) = r.delta(a.budget.delta, &cfg)?;
    let budget = PrivacyBudget::new(epsilon, delta)?;
    let mode: Mode = r.or(a.mode, &["mode"], Mode::Exact)?;
    let terms: u32 = r.or(a.terms, &["terms"], DEFAULT_TAYLOR_TERMS)?;
    let compositions: Option<u64> = r.pick(a.compositions, &["compositions"])?;
    let smt_path: Option<PathBuf> = r.pick(a.emit_smt.clone(), &["emit_smt"])?;
    let strict = a.strict || r.or(None, &["strict"], false)?;

    let s = sensitivity(&cfg);
    let dw = s.delta_w();
    let (sigma, sigma_source) = match r.pick(a.sigma, &["sigma"])? {
        Some(v) => (v, "flag"),
        None => (noise_scale_for(s, &budget, NoiseVariant::Split).sigma, "split"),
    };
    let pad = DEFAULT_DOMAIN_SIGMAS * sigma;
    let spec = DpConditionSpec::with_domain(epsilon, delta, sigma, dw, terms, (-pad, dw + pad))?;
    let original = dp_condition_check(&spec, mode);
    let composed = compositions
        .map(|k| verify_composed_with_terms(&budget, s, k, mode, terms))
        .transpose()?;

    if let Some(p) = &smt_path {
        write_atomic(p, export_smtlib(&spec).as_bytes())?;
    }

    let all_satisfied = original.status == Status::Satisfied
        && composed.as_ref().is_none_or(|c| c.composed.status == Status::Satisfied);

    let mut report = header("verify");
    report.insert(
        "inputs".into(),
        json!({
            "config": cfg,
            "epsilon": epsilon,
            "delta": delta,
            "delta_w": dw,
            "mode": mode,
            "terms": terms,
            "compositions": compositions,
            "sigma_source": sigma_source,
        }),
    );
    report.insert(
        "original".into(),
        json!({ "sigma": sigma, "spec": spec, "outcome": original }),
    );
    report.insert(
        "composed".into(),
        match &composed {
            Some(c) => json!({
                "budget": c.composed_budget,
                "sigma": c.sigma_composed,
                "outcome": c.composed,
            }),
            None => Value::Null,
        },
    );
    report.insert("all_satisfied".into(), json!(all_satisfied));

    ctx.out.emit(&Value::Object(report), || {
        let mut t = format!(
            "mode {}, delta_w {}, terms {terms}\n",
            json!(mode).as_str().unwrap_or(""),
            num(dw)
        );
        t += &outcome_line("original", sigma, &original);
        if let Some(c) = &composed {
            let _ = writeln!(
                t,
                "composed x{}: epsilon {}, delta {}",
                c.composed_budget.k,
                num(c.composed_budget.eps_prime),
                num(c.composed_budget.delta_prime)
            );
            t += &outcome_line("composed", c.sigma_composed, &c.composed);
        }
        t
    })?;
    if strict && !all_satisfied {
        return Err(Failure::new(UNSATISFIED, anyhow::anyhow!("condition not satisfied")));
    }
    Ok(())
}
