//! Monte-Carlo campaigns and the rate statistics built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iulp::{run_algorithms, Algorithm, IulpOptions, RunReport};
use crate::scenario::{generate_scenario, ScenarioConfig};

/// Points on the shared log-spaced rate grid of a campaign CDF.
pub const CDF_POINTS: usize = 200;

/// Probability levels at which rate gains are reported.
pub fn gain_levels() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

/// Sorted samples with step CDF and linearly interpolated quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if let Some(&bad) = samples.iter().find(|v| v.is_nan()) {
            return Err(Error::DomainError(bad));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Fraction of samples `<= r`.
    pub fn cdf(&self, r: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= r) as f64 / self.sorted.len() as f64
    }

    /// Quantile with linear interpolation between order statistics at
    /// position `(n - 1) p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::DomainError(p));
        }
        let h = (self.sorted.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(self.sorted.len() - 1);
        let frac = h - lo as f64;
        Ok(self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo]))
    }
}

pub fn empirical_cdf(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let dist = EmpiricalDistribution::new(samples)?;
    Ok(grid.iter().map(|&r| dist.cdf(r)).collect())
}

/// Ratio of the `p`-quantiles of `x` and `base`.
pub fn rate_gain(x: &EmpiricalDistribution, base: &EmpiricalDistribution, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(p));
    }
    let b = base.quantile(p)?;
    if b == 0.0 {
        return Err(Error::DegenerateQuantile { p, value: b });
    }
    Ok(x.quantile(p)? / b)
}

/// `n` points evenly spaced in log between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo; n];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    /// Mean served users per tier (macro, pico, femto).
    pub mean_users: [f64; 3],
    /// Mean per-BS transmit power per tier, in watts.
    pub mean_power_w: [f64; 3],
}

pub fn per_tier_stats(reports: &[RunReport]) -> Result<TierStats> {
    if reports.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = reports.len() as f64;
    let mut stats = TierStats { mean_users: [0.0; 3], mean_power_w: [0.0; 3] };
    for r in reports {
        for t in 0..3 {
            stats.mean_users[t] += r.tier_users[t] as f64 / n;
            stats.mean_power_w[t] += r.tier_power_w[t] / n;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub rate_bps: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub p: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub mean_utility: f64,
    /// Sample standard deviation; zero for a single realization.
    pub std_utility: f64,
    /// Per-seed utilities in seed order.
    pub utilities: Vec<f64>,
    /// All user rates of all realizations, in seed order.
    pub rates_bps: Vec<f64>,
    pub cdf: Vec<CdfPoint>,
    /// Gain against msinr-mp; empty when msinr-mp was not run.
    pub gains: Vec<GainPoint>,
    pub tiers: TierStats,
    pub outer_iterations: Vec<usize>,
    /// Per-seed utility traces.
    pub traces: Vec<Vec<f64>>,
    pub nonconverged: usize,
    pub invariant_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub realizations: usize,
    pub base_seed: u64,
    pub config: ScenarioConfig,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl CampaignSummary {
    pub fn get(&self, algo: Algorithm) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == algo)
    }

    pub fn any_nonconvergence(&self) -> bool {
        self.algorithms.iter().any(|a| a.nonconverged > 0)
    }

    pub fn any_violation(&self) -> bool {
        self.algorithms.iter().any(|a| !a.invariant_violations.is_empty())
    }
}

fn realization(config: &ScenarioConfig, algos: &[Algorithm], seed: u64, options: &IulpOptions) -> Result<Vec<RunReport>> {
    let cfg = ScenarioConfig { rng_seed: seed, ..config.clone() };
    let (scenario, _) = generate_scenario(&cfg)?;
    run_algorithms(&scenario, algos, options)
}

#[cfg(feature = "parallel")]
fn run_all(config: &ScenarioConfig, algos: &[Algorithm], seeds: &[u64], options: &IulpOptions) -> Vec<Result<Vec<RunReport>>> {
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| realization(config, algos, s, options)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(config: &ScenarioConfig, algos: &[Algorithm], seeds: &[u64], options: &IulpOptions) -> Vec<Result<Vec<RunReport>>> {
    seeds.iter().map(|&s| realization(config, algos, s, options)).collect()
}

/// Per-seed reports for seeds `base_seed .. base_seed + n`, indexed
/// `[seed][algorithm]`.
pub fn campaign_reports(
    config: &ScenarioConfig,
    algos: &[Algorithm],
    n: usize,
    base_seed: u64,
    options: &IulpOptions,
) -> Result<Vec<Vec<RunReport>>> {
    if n == 0 {
        return Err(Error::Config("campaign needs at least one realization".into()));
    }
    if algos.is_empty() {
        return Err(Error::Config("campaign needs at least one algorithm".into()));
    }
    config.validate()?;
    options.validate()?;
    let seeds: Vec<u64> = (0..n as u64).map(|k| base_seed + k).collect();
    run_all(config, algos, &seeds, options).into_iter().collect()
}

pub fn monte_carlo(
    config: &ScenarioConfig,
    algos: &[Algorithm],
    n: usize,
    base_seed: u64,
    options: &IulpOptions,
) -> Result<CampaignSummary> {
    let reports = campaign_reports(config, algos, n, base_seed, options)?;
    summarize(config, algos, base_seed, &reports)
}

/// Aggregates `[seed][algorithm]` reports in seed order.
pub fn summarize(
    config: &ScenarioConfig,
    algos: &[Algorithm],
    base_seed: u64,
    reports: &[Vec<RunReport>],
) -> Result<CampaignSummary> {
    if reports.is_empty() {
        return Err(Error::EmptySamples);
    }
    let column = |k: usize| -> Vec<RunReport> { reports.iter().map(|row| row[k].clone()).collect() };
    let pooled: Vec<Vec<f64>> = (0..algos.len())
        .map(|k| reports.iter().flat_map(|row| row[k].rates_bps.iter().copied()).collect())
        .collect();
    let dists = pooled.iter().map(|s| EmpiricalDistribution::new(s)).collect::<Result<Vec<_>>>()?;
    let lo = dists.iter().map(|d| d.min()).fold(f64::INFINITY, f64::min);
    let hi = dists.iter().map(|d| d.max()).fold(f64::NEG_INFINITY, f64::max);
    let grid = log_grid(lo, hi, CDF_POINTS);
    let base = algos.iter().position(|&a| a == Algorithm::MsinrMp);

    let mut out = Vec::with_capacity(algos.len());
    for (k, &algo) in algos.iter().enumerate() {
        let col = column(k);
        let utilities: Vec<f64> = col.iter().map(|r| r.utility).collect();
        let n = utilities.len() as f64;
        let mean = utilities.iter().sum::<f64>() / n;
        let std = if utilities.len() > 1 {
            (utilities.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let cdf = grid.iter().map(|&r| CdfPoint { rate_bps: r, fraction: dists[k].cdf(r) }).collect();
        let gains = match base {
            Some(b) => gain_levels()
                .into_iter()
                .map(|p| Ok(GainPoint { p, gain: rate_gain(&dists[k], &dists[b], p)? }))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let mut violations = Vec::new();
        for (s, r) in col.iter().enumerate() {
            for v in &r.invariant_violations {
                violations.push(format!("seed {}: {v}", base_seed + s as u64));
            }
        }
        out.push(AlgorithmSummary {
            algorithm: algo,
            mean_utility: mean,
            std_utility: std,
            utilities,
            rates_bps: pooled[k].clone(),
            cdf,
            gains,
            tiers: per_tier_stats(&col)?,
            outer_iterations: col.iter().map(|r| r.counters.outer_iterations).collect(),
            traces: col.iter().map(|r| r.utility_trace.clone()).collect(),
            nonconverged: col.iter().filter(|r| r.nonconvergence).count(),
            invariant_violations: violations,
        });
    }
    Ok(CampaignSummary { realizations: reports.len(), base_seed, config: config.clone(), algorithms: out })
}
