//! Alternating association / load-and-power optimization and the named
//! algorithm pipelines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::association::{compute_coefficients, dgp_associate, max_sinr_associate, DgpOptions, DgpStop};
use crate::error::{Error, Result};
use crate::icupa::{icupa_all, IcupaOptions};
use crate::loadpower::{ldpc_solve, LdpcOptions};
use crate::model::{
    derive_load_from_association, network_utility, user_rates, utility_upper_bound, weighted_utility, Association,
    NetworkState, Scenario, Tier,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IulpOptions {
    /// Relative utility change that ends the outer loop.
    pub xi: f64,
    pub t_max: usize,
    pub dgp: DgpOptions,
    pub ldpc: LdpcOptions,
    pub icupa: IcupaOptions,
}

impl Default for IulpOptions {
    fn default() -> Self {
        Self {
            xi: 1e-3,
            t_max: 20,
            dgp: DgpOptions::default(),
            ldpc: LdpcOptions::default(),
            icupa: IcupaOptions::default(),
        }
    }
}

impl IulpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0) {
            return Err(Error::Config("xi must be positive".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(self.ldpc.kkt_tol > 0.0) {
            return Err(Error::Config("kkt tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "msinr-mp")]
    MsinrMp,
    #[serde(rename = "dgp-mp")]
    DgpMp,
    #[serde(rename = "iulp")]
    Iulp,
    #[serde(rename = "msinr-mp+icupa")]
    MsinrMpIcupa,
    #[serde(rename = "iulp+icupa")]
    IulpIcupa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::MsinrMp,
        Algorithm::DgpMp,
        Algorithm::Iulp,
        Algorithm::MsinrMpIcupa,
        Algorithm::IulpIcupa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MsinrMp => "msinr-mp",
            Algorithm::DgpMp => "dgp-mp",
            Algorithm::Iulp => "iulp",
            Algorithm::MsinrMpIcupa => "msinr-mp+icupa",
            Algorithm::IulpIcupa => "iulp+icupa",
        }
    }

    /// Pipeline this one post-processes, if any.
    pub fn base(self) -> Option<Algorithm> {
        match self {
            Algorithm::MsinrMpIcupa => Some(Algorithm::MsinrMp),
            Algorithm::IulpIcupa => Some(Algorithm::Iulp),
            _ => None,
        }
    }

    pub fn parse_list(list: &str) -> Result<Vec<Algorithm>> {
        list.split(',').map(|s| s.trim().parse()).collect()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverCounters {
    pub outer_iterations: usize,
    pub dgp_calls: usize,
    pub dgp_iterations: usize,
    pub dgp_max_iter_hits: usize,
    pub ldpc_calls: usize,
    pub ldpc_dual_iterations: usize,
    pub ldpc_polish_iterations: usize,
    pub ldpc_unconverged: usize,
    pub icupa_cells: usize,
    pub icupa_iterations: usize,
    pub icupa_unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    /// Utility after the starting point and after every outer iteration.
    pub utility_trace: Vec<f64>,
    pub utility: f64,
    pub rates_bps: Vec<f64>,
    pub association: Vec<usize>,
    pub loads: Vec<f64>,
    pub bs_power_w: Vec<f64>,
    pub user_power_w: Option<Vec<f64>>,
    /// Served users per tier: macro, pico, femto.
    pub tier_users: [usize; 3],
    /// Mean BS transmit power per tier in watts (zero for tiers without BSs).
    pub tier_power_w: [f64; 3],
    pub counters: SolverCounters,
    /// Duality gap of the last association solve.
    pub dgp_gap: Option<f64>,
    /// Largest KKT residual of the load/power solves.
    pub ldpc_kkt_max: Option<f64>,
    pub upper_bound: f64,
    pub nonconvergence: bool,
    pub invariant_violations: Vec<String>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// Intermediate result of a pipeline before reporting.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub association: Association,
    pub state: NetworkState,
    pub trace: Vec<f64>,
    pub counters: SolverCounters,
    pub dgp_gap: Option<f64>,
    pub ldpc_kkt_max: Option<f64>,
    pub nonconvergence: bool,
}

fn tier_stats(scenario: &Scenario, assoc: &Association, state: &NetworkState) -> ([usize; 3], [f64; 3]) {
    let mut users = [0usize; 3];
    for &i in assoc.serving() {
        users[scenario.tiers[i].index()] += 1;
    }
    let mut power = [0.0; 3];
    let mut count = [0usize; 3];
    for (i, t) in scenario.tiers.iter().enumerate() {
        power[t.index()] += state.bs_power[i];
        count[t.index()] += 1;
    }
    for t in Tier::ALL {
        if count[t.index()] > 0 {
            power[t.index()] /= count[t.index()] as f64;
        }
    }
    (users, power)
}

fn finish(scenario: &Scenario, algorithm: Algorithm, p: PipelineState, started: Instant) -> Result<RunReport> {
    let utility = network_utility(scenario, &p.state, &p.association)?.value;
    let upper_bound = utility_upper_bound(scenario);
    let mut violations = Vec::new();
    for (t, w) in p.trace.windows(2).enumerate() {
        if w[1] < w[0] - 1e-9 {
            violations.push(format!("utility decreased at outer iteration {}: {} -> {}", t + 1, w[0], w[1]));
        }
    }
    if utility > upper_bound {
        violations.push(format!("utility {utility} exceeds the upper bound {upper_bound}"));
    }
    let (tier_users, tier_power_w) = tier_stats(scenario, &p.association, &p.state);
    Ok(RunReport {
        algorithm,
        utility_trace: p.trace,
        utility,
        rates_bps: user_rates(scenario, &p.state, &p.association),
        association: p.association.serving().to_vec(),
        loads: p.state.loads.clone(),
        bs_power_w: p.state.bs_power.clone(),
        user_power_w: p.state.user_power.clone(),
        tier_users,
        tier_power_w,
        counters: p.counters,
        dgp_gap: p.dgp_gap,
        ldpc_kkt_max: p.ldpc_kkt_max,
        upper_bound,
        nonconvergence: p.nonconvergence,
        invariant_violations: violations,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// Highest-SINR association at full load and maximum power; loads then
/// follow the association.
pub fn msinr_mp(scenario: &Scenario) -> PipelineState {
    let ones = vec![1.0; scenario.num_bs()];
    let assoc = max_sinr_associate(scenario, &ones, &scenario.max_power);
    let loads = derive_load_from_association(&assoc);
    let state = NetworkState::with_allocation(&assoc, &scenario.priorities, loads, scenario.max_power.clone());
    let v = weighted_utility(scenario, &assoc, &state.loads, &state.bs_power);
    PipelineState {
        association: assoc,
        state,
        trace: vec![v],
        counters: SolverCounters::default(),
        dgp_gap: None,
        ldpc_kkt_max: None,
        nonconvergence: false,
    }
}

/// Association step: DGP at the given loads and powers, keeping `incumbent`
/// when it is not beaten.
fn associate_step(
    scenario: &Scenario,
    loads: &[f64],
    powers: &[f64],
    incumbent: &Association,
    options: &DgpOptions,
    counters: &mut SolverCounters,
) -> Result<(Association, f64, bool)> {
    let coeffs = compute_coefficients(scenario, loads, powers);
    let r = dgp_associate(&coeffs, &scenario.priorities, options, Some(incumbent))?;
    counters.dgp_calls += 1;
    counters.dgp_iterations += r.duals.iterations;
    let hit = r.stop == DgpStop::MaxIter;
    if hit {
        counters.dgp_max_iter_hits += 1;
    }
    Ok((r.association, r.gap, hit))
}

/// Optimal association at maximum power, starting from the highest-SINR one.
pub fn dgp_mp(scenario: &Scenario, options: &IulpOptions) -> Result<PipelineState> {
    let start = msinr_mp(scenario);
    let mut counters = SolverCounters::default();
    let (assoc, gap, hit) = associate_step(
        scenario,
        &start.state.loads,
        &scenario.max_power,
        &start.association,
        &options.dgp,
        &mut counters,
    )?;
    let loads = derive_load_from_association(&assoc);
    let state = NetworkState::with_allocation(&assoc, &scenario.priorities, loads, scenario.max_power.clone());
    let v = weighted_utility(scenario, &assoc, &state.loads, &state.bs_power);
    Ok(PipelineState {
        association: assoc,
        state,
        trace: vec![start.trace[0], v],
        counters,
        dgp_gap: Some(gap),
        ldpc_kkt_max: None,
        nonconvergence: hit,
    })
}

/// Alternates association and load/power control until the relative
/// utility change drops below `xi` or `t_max` outer iterations have run.
pub fn iulp_pipeline(scenario: &Scenario, options: &IulpOptions) -> Result<PipelineState> {
    options.validate()?;
    let start = msinr_mp(scenario);
    let mut assoc = start.association;
    let mut state = start.state;
    let mut value = start.trace[0];
    let mut trace = vec![value];
    let mut counters = SolverCounters::default();
    let mut gap = None;
    let mut kkt_max: f64 = 0.0;
    let mut nonconvergence = false;
    for t in 1..=options.t_max {
        counters.outer_iterations = t;
        let (next, g, hit) = associate_step(scenario, &state.loads, &state.bs_power, &assoc, &options.dgp, &mut counters)?;
        gap = Some(g);
        nonconvergence |= hit;
        let lp = ldpc_solve(scenario, &next, Some(&state.bs_power), &options.ldpc)?;
        counters.ldpc_calls += 1;
        counters.ldpc_dual_iterations += lp.dual_iterations;
        counters.ldpc_polish_iterations += lp.polish_iterations;
        if !lp.converged {
            counters.ldpc_unconverged += 1;
            nonconvergence = true;
        }
        kkt_max = kkt_max.max(lp.kkt.max());
        let previous = value;
        assoc = next;
        state = lp.state;
        value = lp.utility;
        trace.push(value);
        if (value - previous).abs() < options.xi * previous.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(PipelineState {
        association: assoc,
        state,
        trace,
        counters,
        dgp_gap: gap,
        ldpc_kkt_max: Some(kkt_max),
        nonconvergence,
    })
}

/// Inner-cell power allocation on top of a finished pipeline.
pub fn with_icupa(scenario: &Scenario, base: &PipelineState, options: &IcupaOptions) -> Result<PipelineState> {
    let out = icupa_all(scenario, &base.association, &base.state, options)?;
    let mut next = base.clone();
    next.counters.icupa_cells = out.cells.len();
    next.counters.icupa_iterations = out.cells.iter().map(|c| c.iterations).sum();
    next.counters.icupa_unconverged = out.cells.iter().filter(|c| !c.converged).count();
    next.nonconvergence |= !out.converged;
    next.state = out.state;
    next.trace.push(out.utility_after);
    Ok(next)
}

/// Runs several pipelines on one scenario, sharing common prefixes.
pub fn run_algorithms(scenario: &Scenario, algos: &[Algorithm], options: &IulpOptions) -> Result<Vec<RunReport>> {
    let mut cache: Vec<(Algorithm, PipelineState)> = Vec::new();
    let mut out = Vec::with_capacity(algos.len());
    for &algo in algos {
        let started = Instant::now();
        let p = pipeline_cached(scenario, algo, options, &mut cache)?;
        out.push(finish(scenario, algo, p, started)?);
    }
    Ok(out)
}

fn pipeline_cached(
    scenario: &Scenario,
    algo: Algorithm,
    options: &IulpOptions,
    cache: &mut Vec<(Algorithm, PipelineState)>,
) -> Result<PipelineState> {
    if let Some((_, p)) = cache.iter().find(|(a, _)| *a == algo) {
        return Ok(p.clone());
    }
    let p = match algo {
        Algorithm::MsinrMp => msinr_mp(scenario),
        Algorithm::DgpMp => dgp_mp(scenario, options)?,
        Algorithm::Iulp => iulp_pipeline(scenario, options)?,
        Algorithm::MsinrMpIcupa | Algorithm::IulpIcupa => {
            let base = pipeline_cached(scenario, algo.base().expect("icupa variants have a base"), options, cache)?;
            with_icupa(scenario, &base, &options.icupa)?
        }
    };
    cache.push((algo, p.clone()));
    Ok(p)
}

pub fn run_algorithm(scenario: &Scenario, algo: Algorithm, options: &IulpOptions) -> Result<RunReport> {
    Ok(run_algorithms(scenario, &[algo], options)?.remove(0))
}

pub fn iulp(scenario: &Scenario, options: &IulpOptions) -> Result<RunReport> {
    run_algorithm(scenario, Algorithm::Iulp, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!(matches!("ibapc".parse::<Algorithm>(), Err(Error::UnknownAlgorithm(_))));
        assert_eq!(Algorithm::parse_list("iulp, msinr-mp").unwrap(), vec![Algorithm::Iulp, Algorithm::MsinrMp]);
    }

    #[test]
    fn single_bs_converges_at_once() {
        let cfg = ScenarioConfig {
            pico_count: 0,
            femto_count: 0,
            user_count: 8,
            high_priority_count: 3,
            rng_seed: 3,
            ..Default::default()
        };
        let (s, _) = generate_scenario(&cfg).unwrap();
        let r = iulp(&s, &IulpOptions::default()).unwrap();
        assert_eq!(r.counters.outer_iterations, 1);
        assert!((r.bs_power_w[0] - s.max_power[0]).abs() < 1e-9);
        let a = run_algorithm(&s, Algorithm::MsinrMp, &IulpOptions::default()).unwrap();
        let b = run_algorithm(&s, Algorithm::DgpMp, &IulpOptions::default()).unwrap();
        assert_eq!(a.association, b.association);
        assert_eq!(a.utility, b.utility);
    }

    #[test]
    fn pipelines_dominate_on_a_default_scenario() {
        let (s, _) = generate_scenario(&ScenarioConfig { rng_seed: 17, ..Default::default() }).unwrap();
        let r = run_algorithms(&s, &Algorithm::ALL, &IulpOptions::default()).unwrap();
        let u: Vec<f64> = r.iter().map(|x| x.utility).collect();
        assert!(u[1] >= u[0] - 1e-9);
        assert!(u[2] >= u[1] - 1e-9);
        assert!(u[3] >= u[0] - 1e-9);
        assert!(u[4] >= u[2] - 1e-9);
        for rep in &r {
            assert!(rep.invariant_violations.is_empty(), "{:?}", rep.invariant_violations);
            assert_eq!(rep.tier_users.iter().sum::<usize>(), 50);
        }
    }
}
