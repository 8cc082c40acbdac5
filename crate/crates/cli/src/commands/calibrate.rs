use std::fmt::Write;

use dpweights::calibration::{check_budget, noise_scale_for, sensitivity};
use dpweights::{NoiseVariant, PrivacyBudget};
use serde_json::{json, Value};

use super::{header, Ctx};
use crate::args::CalibrateArgs;
use crate::failure::CliResult;
use crate::output::num;

pub fn run(a: &CalibrateArgs, ctx: &Ctx) -> CliResult {
    let cfg = ctx.resolve.training(&a.training)?;
    let epsilon: f64 = ctx.resolve.require(a.budget.epsilon, &["epsilon"])?;
    let (delta, defaulted) = ctx.resolve.delta(a.budget.delta, &cfg)?;
    let budget = PrivacyBudget::new(epsilon, delta)?;
    let s = sensitivity(&cfg);
    let split = noise_scale_for(s, &budget, NoiseVariant::Split);
    let under = noise_scale_for(s, &budget, NoiseVariant::UnderSqrt);
    let check = check_budget(&budget, s);

    let mut report = header("calibrate");
    report.insert("config".into(), json!(cfg));
    report.insert("epsilon".into(), json!(epsilon));
    report.insert("delta".into(), json!(delta));
    report.insert("delta_defaulted".into(), json!(defaulted));
    report.insert("delta_w".into(), json!(s.delta_w()));
    report.insert("split".into(), json!(split));
    report.insert("undersqrt".into(), json!(under));
    report.insert("max_supported_epsilon".into(), json!(check.bound));
    report.insert("within_supported_range".into(), json!(check.within));

    ctx.out.emit(&Value::Object(report), || {
        let mut t = String::new();
        let _ = writeln!(t, "delta_w              {}", num(s.delta_w()));
        let tag = if defaulted { " (1/N^2)" } else { "" };
        let _ = writeln!(t, "epsilon              {}", num(epsilon));
        let _ = writeln!(t, "delta                {}{tag}", num(delta));
        for ns in [split, under] {
            let label = format!("sigma[{}]", ns.variant);
            let _ = writeln!(
                t,
                "{label:<21}{}  (sigma1 {}, sigma2 {})",
                num(ns.sigma),
                num(ns.sigma1),
                num(ns.sigma2)
            );
        }
        let _ = writeln!(
            t,
            "max_supported_eps    {}  (binding: {})",
            num(check.bound.value),
            check.bound.branch
        );
        t
    })?;
    check.into_result()?;
    Ok(())
}
