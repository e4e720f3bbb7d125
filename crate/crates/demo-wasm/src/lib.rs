//! Browser bindings. Each export is a thin wrapper over a plain function
//! taking and returning JSON, so the logic is testable natively.

use hetnet_core::campaign::{log_grid, monte_carlo, EmpiricalDistribution};
use hetnet_core::iulp::{run_algorithm, Algorithm, IulpOptions};
use hetnet_core::scenario::{generate_scenario, ScenarioConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest campaign the page may request; it runs on the UI thread.
pub const MAX_REALIZATIONS: usize = 50;

#[derive(Serialize)]
struct Snapshot {
    algorithm: Algorithm,
    utility: f64,
    bs_xy: Vec<[f64; 2]>,
    bs_tier: Vec<&'static str>,
    bs_power_w: Vec<f64>,
    user_xy: Vec<[f64; 2]>,
    priorities: Vec<f64>,
    association: Vec<usize>,
    rates_bps: Vec<f64>,
    tier_users: [usize; 3],
    outer_iterations: usize,
}

#[derive(Serialize)]
struct Curve {
    algorithm: Algorithm,
    mean_utility: f64,
    rate_bps: Vec<f64>,
    fraction: Vec<f64>,
}

fn parse_config(config_json: &str) -> Result<ScenarioConfig, String> {
    if config_json.trim().is_empty() {
        return Ok(ScenarioConfig::default());
    }
    serde_json::from_str(config_json).map_err(|e| format!("config: {e}"))
}

pub fn default_config_json() -> String {
    serde_json::to_string_pretty(&ScenarioConfig::default()).expect("config serializes")
}

/// One scenario, one algorithm: positions, association and rates.
pub fn simulate_json(config_json: &str, algo: &str) -> Result<String, String> {
    let cfg = parse_config(config_json)?;
    let algo: Algorithm = algo.parse().map_err(|e: hetnet_core::error::Error| e.to_string())?;
    let (scenario, placement) = generate_scenario(&cfg).map_err(|e| e.to_string())?;
    let r = run_algorithm(&scenario, algo, &IulpOptions::default()).map_err(|e| e.to_string())?;
    let snap = Snapshot {
        algorithm: algo,
        utility: r.utility,
        bs_xy: placement.bs_xy,
        bs_tier: scenario.tiers.iter().map(|t| t.name()).collect(),
        bs_power_w: r.bs_power_w,
        user_xy: placement.user_xy,
        priorities: scenario.priorities,
        association: r.association,
        rates_bps: r.rates_bps,
        tier_users: r.tier_users,
        outer_iterations: r.counters.outer_iterations,
    };
    serde_json::to_string(&snap).map_err(|e| e.to_string())
}

/// Small campaign over `n` seeds: mean utility and pooled rate CDF per
/// algorithm on a shared grid of `points` rates.
pub fn compare_json(config_json: &str, algos: &str, n: usize, points: usize) -> Result<String, String> {
    if n == 0 || n > MAX_REALIZATIONS {
        return Err(format!("realizations must be in 1..={MAX_REALIZATIONS}"));
    }
    let cfg = parse_config(config_json)?;
    let algos = Algorithm::parse_list(algos).map_err(|e| e.to_string())?;
    let summary = monte_carlo(&cfg, &algos, n, cfg.rng_seed, &IulpOptions::default()).map_err(|e| e.to_string())?;
    let dists = summary
        .algorithms
        .iter()
        .map(|a| EmpiricalDistribution::new(&a.rates_bps))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let lo = dists.iter().map(|d| d.min()).fold(f64::INFINITY, f64::min);
    let hi = dists.iter().map(|d| d.max()).fold(0.0, f64::max);
    let grid = log_grid(lo, hi, points.max(2));
    let curves: Vec<Curve> = summary
        .algorithms
        .iter()
        .zip(&dists)
        .map(|(a, d)| Curve {
            algorithm: a.algorithm,
            mean_utility: a.mean_utility,
            rate_bps: grid.clone(),
            fraction: grid.iter().map(|&r| d.cdf(r)).collect(),
        })
        .collect();
    serde_json::to_string(&curves).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn default_config() -> String {
    default_config_json()
}

#[wasm_bindgen]
pub fn simulate(config_json: &str, algo: &str) -> Result<String, JsValue> {
    simulate_json(config_json, algo).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare(config_json: &str, algos: &str, n: usize, points: usize) -> Result<String, JsValue> {
    compare_json(config_json, algos, n, points).map_err(|e| JsValue::from_str(&e))
}
