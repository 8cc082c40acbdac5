use std::path::PathBuf;

use dpweights::mechanism::container::{load_weights, to_bytes};
use dpweights::mechanism::{noise_then_account, BudgetGuard, NoiseOptions};
use dpweights::{NoiseVariant, PrivacyBudget};
use serde_json::json;

use super::Ctx;
use crate::args::NoiseArgs;
use crate::failure::CliResult;
use crate::output::{num, write_atomic, write_json};

pub fn run(a: &NoiseArgs, ctx: &Ctx) -> CliResult {
    let input: PathBuf = ctx.resolve.require(a.input.clone(), &["in", "input"])?;
    let out: PathBuf = ctx.resolve.require(a.out.clone(), &["out", "output"])?;
    let receipt_path: Option<PathBuf> = ctx.resolve.pick(a.receipt.clone(), &["receipt"])?;
    let cfg = ctx.resolve.training(&a.training)?;
    let epsilon: f64 = ctx.resolve.require(a.budget.epsilon, &["epsilon"])?;
    let (delta, _) = ctx.resolve.delta(a.budget.delta, &cfg)?;
    let budget = PrivacyBudget::new(epsilon, delta)?;
    let variant: NoiseVariant = ctx.resolve.or(a.variant, &["variant"], NoiseVariant::Split)?;
    let allow = a.allow_unsupported_epsilon || ctx.resolve.or(None, &["allow_unsupported_epsilon"], false)?;
    let guard = if allow {
        BudgetGuard::Override
    } else {
        BudgetGuard::Enforce
    };
    let options = NoiseOptions {
        exclude_prefixes: a.exclude_prefix.clone(),
    };

    let weights = load_weights(&input)?;
    let (noisy, receipt) = noise_then_account(&weights, &cfg, &budget, variant, ctx.seed, guard, &options)?;
    if let Some(check) = receipt.budget_check.filter(|c| c.overridden) {
        log::warn!(
            "epsilon {epsilon} exceeds max_supported_epsilon {}; noised anyway",
            check.max_supported_epsilon
        );
    }

    write_atomic(&out, &to_bytes(&noisy))?;
    let value = json!(receipt);
    if let Some(p) = &receipt_path {
        write_json(p, &value)?;
    }
    ctx.out.emit(&value, || {
        let skipped = receipt.tensors.iter().filter(|t| t.skipped).count();
        format!(
            "noised {} of {} tensors ({} values) with sigma {} [{}], wrote {}\n",
            receipt.tensors.len() - skipped,
            receipt.tensors.len(),
            noisy.numel(),
            num(receipt.sigma),
            variant,
            out.display()
        )
    })
}
