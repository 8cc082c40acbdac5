//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; failures surface as a JS `Error` carrying the toolkit's message.

use dpweights::accounting::{full_pipeline_epsilon, PipelineInput};
use dpweights::calibration::{default_delta, max_supported_epsilon, noise_scale_for, sensitivity};
use dpweights::simulate::{log_grid, run_simulation_raw};
use dpweights::{NoiseVariant, PrivacyBudget, Result, TrainingConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn training(epochs: u32, lr: f64, clip: f64, dataset_size: u32, batch_size: u32) -> Result<TrainingConfig> {
    TrainingConfig::new(epochs.into(), lr, clip, dataset_size.into(), batch_size.into())
}

/// Both noise-scale variants over a log-spaced epsilon grid.
#[allow(clippy::too_many_arguments)]
pub fn noise_curve_json(
    epochs: u32,
    lr: f64,
    clip: f64,
    dataset_size: u32,
    batch_size: u32,
    delta: Option<f64>,
    eps_min: f64,
    eps_max: f64,
    points: u32,
) -> Result<String> {
    let cfg = training(epochs, lr, clip, dataset_size, batch_size)?;
    let delta = match delta {
        Some(d) => d,
        None => default_delta(cfg.dataset_size())?,
    };
    let s = sensitivity(&cfg);
    let bound = max_supported_epsilon(s.delta_w(), delta)?;
    let mut rows = Vec::new();
    for eps in log_grid(eps_min, eps_max, points as usize)? {
        let b = PrivacyBudget::new(eps, delta)?;
        let split = noise_scale_for(s, &b, NoiseVariant::Split);
        let under = noise_scale_for(s, &b, NoiseVariant::UnderSqrt);
        rows.push(json!({
            "epsilon": eps,
            "split": split.sigma,
            "undersqrt": under.sigma,
            "classical": split.sigma1,
            "empirical": split.sigma2,
        }));
    }
    Ok(json!({
        "delta_w": s.delta_w(),
        "delta": delta,
        "max_supported_epsilon": bound,
        "points": rows,
    })
    .to_string())
}

/// One Monte-Carlo run with means 0 and `delta_w`: loss histogram plus rates.
pub fn simulation_json(delta_w: f64, sigma: f64, epsilon: f64, samples: u32, seed: u32) -> Result<String> {
    let r = run_simulation_raw(delta_w, sigma, epsilon, samples.into(), seed.into())?;
    Ok(json!(r).to_string())
}

/// Per-order accounting table and the converted epsilon.
#[allow(clippy::too_many_arguments)]
pub fn rdp_json(
    epochs: u32,
    lr: f64,
    clip: f64,
    dataset_size: u32,
    batch_size: u32,
    sigma: f64,
    delta: f64,
    alpha_max: u32,
) -> Result<String> {
    let cfg = training(epochs, lr, clip, dataset_size, batch_size)?;
    let alphas: Vec<u32> = (2..=alpha_max.max(2)).collect();
    let r = full_pipeline_epsilon(&PipelineInput {
        cfg: &cfg,
        sigma,
        delta,
        alphas: &alphas,
        empirical_epsilon: None,
    })?;
    Ok(json!(r).to_string())
}

fn js(r: Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = noiseCurve)]
#[allow(clippy::too_many_arguments)]
pub fn noise_curve(
    epochs: u32,
    lr: f64,
    clip: f64,
    dataset_size: u32,
    batch_size: u32,
    delta: Option<f64>,
    eps_min: f64,
    eps_max: f64,
    points: u32,
) -> Result<String, JsError> {
    js(noise_curve_json(
        epochs,
        lr,
        clip,
        dataset_size,
        batch_size,
        delta,
        eps_min,
        eps_max,
        points,
    ))
}

#[wasm_bindgen]
pub fn simulate(delta_w: f64, sigma: f64, epsilon: f64, samples: u32, seed: u32) -> Result<String, JsError> {
    js(simulation_json(delta_w, sigma, epsilon, samples, seed))
}

#[wasm_bindgen(js_name = rdpCurve)]
#[allow(clippy::too_many_arguments)]
pub fn rdp_curve(
    epochs: u32,
    lr: f64,
    clip: f64,
    dataset_size: u32,
    batch_size: u32,
    sigma: f64,
    delta: f64,
    alpha_max: u32,
) -> Result<String, JsError> {
    js(rdp_json(
        epochs,
        lr,
        clip,
        dataset_size,
        batch_size,
        sigma,
        delta,
        alpha_max,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn curve_defaults_delta() {
        let v = parse(&noise_curve_json(10, 5e-5, 1.0, 1000, 10, None, 0.01, 1000.0, 11).unwrap());
        assert_eq!(v["delta"], 1e-6);
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 11);
        let first = pts[0]["split"].as_f64().unwrap();
        let last = pts[10]["split"].as_f64().unwrap();
        assert!(first > last);
    }

    #[test]
    fn simulation_reports_histogram() {
        let v = parse(&simulation_json(1.0, 1.0, 0.5, 5000, 3).unwrap());
        let counts: u64 = v["histogram"]
            .as_array()
            .unwrap()
            .iter()
            .map(|b| b["count"].as_u64().unwrap())
            .sum();
        assert_eq!(counts, 5000);
        assert!((v["analytic_rate"].as_f64().unwrap() - 0.658_655_253_931_457_1).abs() < 1e-15);
    }

    #[test]
    fn rdp_rows_cover_the_grid() {
        let v = parse(&rdp_json(10, 5e-5, 1.0, 1000, 10, 1e-6, 1e-6, 64).unwrap());
        assert_eq!(v["rows"].as_array().unwrap().len(), 63);
        assert!(v["epsilon"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(simulation_json(1.0, -1.0, 0.5, 10, 0).is_err());
        assert!(noise_curve_json(0, 5e-5, 1.0, 1000, 10, None, 0.01, 1.0, 3).is_err());
    }
}
