//! Browser bindings. Every export returns a JSON string so the page needs
//! no generated type glue beyond `wasm-bindgen`.

use serde::Serialize;
use serde_json::json;
use txcache::search::optimize_all;
use txcache::sim::{run_simulation_with_records, BroadcastMode};
use txcache::{delay_bound, PopularityModel, SystemConfig};
use wasm_bindgen::prelude::*;

fn system(scenario: u8, users: usize) -> Result<SystemConfig, String> {
    match scenario {
        1 => SystemConfig::scenario_one(users),
        2 => SystemConfig::scenario_two(users),
        s => return Err(format!("unknown scenario {s}")),
    }
    .map_err(|e| e.to_string())
}

fn zipf(cfg: &SystemConfig, alpha: f64) -> Result<PopularityModel, String> {
    PopularityModel::zipf(cfg.files, alpha).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct GainPoint {
    pub alpha: f64,
    pub achieved: f64,
    pub bound: f64,
    pub q_star: usize,
}

/// Achieved gain and gain ceiling at `steps + 1` evenly spaced exponents.
pub fn gain_curve_points(
    scenario: u8,
    users: usize,
    alpha_max: f64,
    steps: usize,
    qmax: usize,
) -> Result<Vec<GainPoint>, String> {
    let cfg = system(scenario, users)?;
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            let alpha = alpha_max * i as f64 / steps as f64;
            let m = zipf(&cfg, alpha)?;
            let (sol, trace) = optimize_all(&cfg, &m, qmax).map_err(|e| e.to_string())?;
            Ok(GainPoint {
                alpha,
                achieved: sol.gain,
                bound: delay_bound(&cfg, &m).gmax,
                q_star: trace.q_star,
            })
        })
        .collect()
}

pub fn optimize_json(scenario: u8, users: usize, alpha: f64, qmax: usize) -> Result<String, String> {
    let cfg = system(scenario, users)?;
    let m = zipf(&cfg, alpha)?;
    let (sol, trace) = optimize_all(&cfg, &m, qmax).map_err(|e| e.to_string())?;
    Ok(json!({
        "config": cfg,
        "q_star": trace.q_star,
        "n_star": sol.segmentation.table_boundaries(),
        "l_star": sol.allocation.table_levels(),
        "expected_delay": sol.expected_delay,
        "uniform_delay": sol.uniform_delay,
        "gain": sol.gain,
        "gain_bound": delay_bound(&cfg, &m).gmax,
        "evaluations": trace.evaluations,
    })
    .to_string())
}

pub fn dof_histogram_json(
    scenario: u8,
    users: usize,
    alpha: f64,
    trials: usize,
    seed: u64,
    bins: usize,
) -> Result<String, String> {
    let cfg = system(scenario, users)?;
    let m = zipf(&cfg, alpha)?;
    let (sol, _) = optimize_all(&cfg, &m, txcache::search::DEFAULT_MAX_SUBLIBRARIES)
        .map_err(|e| e.to_string())?;
    let (report, records) =
        run_simulation_with_records(&cfg, &m, &sol, trials, seed, BroadcastMode::Distinct)
            .map_err(|e| e.to_string())?;
    let bins = bins.max(1);
    let lo = records.iter().map(|r| r.dof).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.dof).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for r in &records {
        counts[(((r.dof - lo) / width) as usize).min(bins - 1)] += 1;
    }
    Ok(json!({
        "lo": lo,
        "width": width,
        "counts": counts,
        "dof_mean": report.dof_mean,
        "dof_std": report.dof_std,
        "analytic_dof": report.analytic_dof,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn gain_curve(scenario: u8, users: usize, alpha_max: f64, steps: usize, qmax: usize) -> Result<String, JsValue> {
    gain_curve_points(scenario, users, alpha_max, steps, qmax)
        .and_then(|p| serde_json::to_string(&p).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn optimize(scenario: u8, users: usize, alpha: f64, qmax: usize) -> Result<String, JsValue> {
    optimize_json(scenario, users, alpha, qmax).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn dof_histogram(
    scenario: u8,
    users: usize,
    alpha: f64,
    trials: usize,
    seed: u64,
    bins: usize,
) -> Result<String, JsValue> {
    dof_histogram_json(scenario, users, alpha, trials, seed, bins).map_err(|e| JsValue::from_str(&e))
}
