//! Oracle suites: each solver checked against an independent brute-force
//! or alternative implementation on random instances.

use std::cell::RefCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::association::{association_value, compute_coefficients, dgp_associate, exhaustive_associate, DgpOptions, LoadPolicy};
use crate::campaign::EmpiricalDistribution;
use crate::error::Result;
use crate::icupa::{cell_grid_oracle, icupa_solve_cell, CellProblem, IcupaOptions};
use crate::iulp::{iulp, IulpOptions};
use crate::loadpower::{binary_load_grid_oracle, ldpc_projected_gradient, ldpc_solve, power_grid_oracle, LdpcOptions};
use crate::model::{network_utility, opt_resource_allocation, Association, NetworkState, Scenario, Tier};
use crate::scenario::{generate_scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String, started: Instant) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// Random scenario with explicit gains, sized like a small HetNet
/// (powers up to 40 W, path gains 1e-12..1e-8, noise about -104 dBm).
pub fn random_scenario(rng: &mut ChaCha8Rng, nb: usize, nu: usize) -> Scenario {
    let tiers = (0..nb).map(|i| if i == 0 { Tier::Macro } else { Tier::Pico }).collect();
    Scenario {
        gains: (0..nb).map(|_| (0..nu).map(|_| 10f64.powf(rng.gen_range(-12.0..-8.0))).collect()).collect(),
        max_power: (0..nb).map(|_| rng.gen_range(1.0..40.0)).collect(),
        priorities: (0..nu).map(|_| if rng.gen_bool(0.4) { 2.0 } else { 1.0 }).collect(),
        noise: 4e-14,
        rb_count: 55,
        rb_bandwidth: 180e3,
        tiers,
    }
}

/// One-cell problem with heterogeneous gains and interference.
pub fn random_cell(rng: &mut ChaCha8Rng, n: usize) -> CellProblem {
    CellProblem {
        bs: 0,
        users: (0..n).collect(),
        priorities: (0..n).map(|_| if rng.gen_bool(0.4) { 2.0 } else { 1.0 }).collect(),
        gains: (0..n).map(|_| 10f64.powf(-rng.gen_range(9.0..12.0))).collect(),
        ipn: (0..n).map(|_| 4e-14 * 10f64.powf(rng.gen_range(0.0..3.0))).collect(),
        budget: rng.gen_range(1.0..40.0),
    }
}

/// Visits every point of `{y >= step, sum y = 1}` on a lattice of spacing
/// `step` and returns the maximizer of `f`.
fn simplex_argmax(n: usize, step: f64, f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let steps = (1.0 / step).round() as usize;
    let mut best = (vec![1.0 / n as f64; n], f64::NEG_INFINITY);
    let mut idx = vec![1usize; n - 1];
    let mut y = vec![0.0; n];
    loop {
        let used: usize = idx.iter().sum();
        if used < steps {
            for k in 0..n - 1 {
                y[k] = idx[k] as f64 / steps as f64;
            }
            y[n - 1] = (steps - used) as f64 / steps as f64;
            let v = f(&y);
            if v > best.1 {
                best = (y.clone(), v);
            }
        }
        let mut k = 0;
        while k < n - 1 {
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 1;
            k += 1;
        }
        if k == n - 1 {
            return best;
        }
    }
}

/// Lattice of spacing `fine` within `radius` of `centre`, kept on the simplex.
fn simplex_refine(centre: &[f64], radius: f64, fine: f64, f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let n = centre.len();
    let half = (radius / fine).round() as i64;
    let base: Vec<i64> = centre.iter().map(|c| (c / fine).round() as i64).collect();
    let total = (1.0 / fine).round() as i64;
    let mut best = (centre.to_vec(), f(centre));
    let mut off = vec![-half; n - 1];
    let mut y = vec![0.0; n];
    loop {
        let ticks: Vec<i64> = (0..n - 1).map(|k| base[k] + off[k]).collect();
        let last = total - ticks.iter().sum::<i64>();
        if ticks.iter().all(|&t| t >= 1) && last >= 1 {
            for k in 0..n - 1 {
                y[k] = ticks[k] as f64 / total as f64;
            }
            y[n - 1] = last as f64 / total as f64;
            let v = f(&y);
            if v > best.1 {
                best = (y.clone(), v);
            }
        }
        let mut k = 0;
        while k < n - 1 {
            off[k] += 1;
            if off[k] <= half {
                break;
            }
            off[k] = -half;
            k += 1;
        }
        if k == n - 1 {
            return best;
        }
    }
}

/// Closed-form fractions in a 1-BS, 4-user cell against a simplex grid
/// search over the rate-based utility. Max component error must be
/// within 2e-3.
pub fn allocation_oracle(draws: usize, seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let mut s = random_scenario(&mut rng, 1, 4);
        s.priorities = (0..4).map(|_| rng.gen_range(0.5..4.0)).collect();
        let assoc = Association::new(1, vec![0; 4])?;
        let loads = vec![1.0];
        let closed = opt_resource_allocation(&assoc, &loads, &s.priorities);
        let state = RefCell::new(NetworkState::with_allocation(&assoc, &s.priorities, loads, s.max_power.clone()));
        let value = |y: &[f64]| {
            let mut st = state.borrow_mut();
            st.fractions[0].copy_from_slice(y);
            network_utility(&s, &st, &assoc).map_or(f64::NEG_INFINITY, |u| u.value)
        };
        let (coarse, _) = simplex_argmax(4, 1e-2, &value);
        let (grid, _) = simplex_refine(&coarse, 1e-2, 1e-3, &value);
        for j in 0..4 {
            worst = worst.max((grid[j] - closed[0][j]).abs());
        }
    }
    Ok(Check::new(
        "allocation-vs-simplex-grid",
        worst <= 2e-3,
        format!("{draws} draws, max |y_grid - y_closed| = {worst:.3e} (limit 2e-3)"),
        started,
    ))
}

/// DGP against exhaustive enumeration on 3-BS, 6-user instances with
/// fixed loads and powers.
pub fn dgp_oracle(instances: usize, seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_diff: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut binary = true;
    let mut integrality: f64 = 0.0;
    for _ in 0..instances {
        let s = random_scenario(&mut rng, 3, 6);
        let loads: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..1.0)).collect();
        let powers: Vec<f64> = s.max_power.iter().map(|p| p * rng.gen_range(0.2..1.0)).collect();
        let coeffs = compute_coefficients(&s, &loads, &powers);
        let r = dgp_associate(&coeffs, &s.priorities, &DgpOptions::default(), None)?;
        let (_, best) = exhaustive_associate(&s, &loads, &powers, LoadPolicy::Fixed)?;
        let got = association_value(&coeffs, &s.priorities, r.association.serving());
        worst_diff = worst_diff.max(best - got);
        worst_gap = worst_gap.max(r.gap);
        integrality = integrality.max(relaxed_value(&coeffs, &s.priorities, 20_000) - best);
        let m = r.association.matrix();
        binary &= (0..6).all(|j| (0..3).filter(|&i| m[i][j]).count() == 1);
    }
    Ok(Check::new(
        "dgp-vs-exhaustive",
        worst_diff <= 1e-4 && worst_gap <= 1e-5 && binary,
        format!(
            "{instances} instances, worst shortfall {worst_diff:.3e} (limit 1e-4), worst duality gap {worst_gap:.3e} (limit 1e-5), binary {binary}; the relaxed association beats the integer optimum by up to {integrality:.3e}, which bounds every dual value from below"
        ),
        started,
    ))
}

/// Value of the association problem with each user's assignment relaxed to
/// the probability simplex, by exponentiated-gradient ascent. Any relaxed
/// value is a lower bound on every dual value.
fn relaxed_value(coeffs: &crate::association::UtilityCoefficients, w: &[f64], iterations: usize) -> f64 {
    let (nb, nu) = (coeffs.num_bs(), coeffs.num_users());
    let finite = |i: usize, j: usize| coeffs.c[i][j].is_finite();
    let mut x: Vec<Vec<f64>> = (0..nb)
        .map(|i| {
            (0..nu)
                .map(|j| if finite(i, j) { 1.0 / (0..nb).filter(|&k| finite(k, j)).count() as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let mass = |x: &Vec<Vec<f64>>| -> Vec<f64> { (0..nb).map(|i| (0..nu).map(|j| w[j] * x[i][j]).sum()).collect() };
    for _ in 0..iterations {
        let n = mass(&x);
        for j in 0..nu {
            let mut z = 0.0;
            for i in (0..nb).filter(|&i| finite(i, j)) {
                let g = coeffs.c[i][j] - w[j] * (n[i].log2() + std::f64::consts::LOG2_E);
                x[i][j] *= (0.05 * g).exp();
                z += x[i][j];
            }
            for i in 0..nb {
                x[i][j] /= z;
            }
        }
    }
    let n = mass(&x);
    let mut linear = 0.0;
    for i in 0..nb {
        for j in (0..nu).filter(|&j| finite(i, j)) {
            linear += coeffs.c[i][j] * x[i][j];
        }
    }
    linear - n.iter().filter(|&&m| m > 0.0).map(|m| m * m.log2()).sum::<f64>()
}

fn two_cell(rng: &mut ChaCha8Rng) -> Result<(Scenario, Association)> {
    let mut s = random_scenario(rng, 2, 4);
    s.max_power = vec![rng.gen_range(1.0..40.0), rng.gen_range(0.5..10.0)];
    Ok((s, Association::new(2, vec![0, 0, 1, 1])?))
}

/// Fractional loads on a 0.1 grid with a 50x50 power grid never beat the
/// full-load solution by more than 1e-2.
pub fn binary_load_oracle(instances: usize, seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..instances {
        let (s, assoc) = two_cell(&mut rng)?;
        let r = ldpc_solve(&s, &assoc, None, &LdpcOptions::default())?;
        let g = binary_load_grid_oracle(&s, &assoc, 0.1, 50)?;
        worst = worst.max(g.utility - r.utility);
    }
    Ok(Check::new(
        "binary-load-vs-load-grid",
        worst <= 1e-2,
        format!("{instances} instances, max (grid - ldpc) = {worst:.3e} (limit 1e-2)"),
        started,
    ))
}

/// Load/power solver against a 200x200 power grid and the projected
/// gradient fallback; KKT residuals at most 1e-6.
pub fn ldpc_oracle(instances: usize, seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid_excess: f64 = f64::NEG_INFINITY;
    let mut kkt: f64 = 0.0;
    let mut fallback: f64 = 0.0;
    for _ in 0..instances {
        let (s, assoc) = two_cell(&mut rng)?;
        let r = ldpc_solve(&s, &assoc, None, &LdpcOptions::default())?;
        let (_, g) = power_grid_oracle(&s, &assoc, 200)?;
        let (_, pg) = ldpc_projected_gradient(&s, &assoc, None, 5000)?;
        grid_excess = grid_excess.max(g - r.utility);
        kkt = kkt.max(r.kkt.max());
        fallback = fallback.max((r.utility - pg).abs());
    }
    Ok(Check::new(
        "ldpc-vs-power-grid",
        grid_excess <= 1e-2 && kkt <= 1e-6 && fallback <= 1e-3,
        format!(
            "{instances} instances, max (grid - ldpc) = {grid_excess:.3e} (limit 1e-2), max KKT {kkt:.3e} (limit 1e-6), max |ldpc - projected gradient| = {fallback:.3e} (limit 1e-3)"
        ),
        started,
    ))
}

/// Inner-cell allocation on random cells: constraints and KKT, gain over
/// equal power, and agreement with a grid search on 4-user cells.
pub fn icupa_oracle(cells: usize, seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options = IcupaOptions::default();
    let mut worst_kkt: f64 = 0.0;
    let mut below_equal = 0;
    let mut strict = 0;
    let mut grid_diff: f64 = 0.0;
    let mut grid_cells = 0;
    for k in 0..cells {
        let n = if k % 5 == 0 { 4 } else { rng.gen_range(2..9) };
        let c = random_cell(&mut rng, n);
        let s = icupa_solve_cell(&c, &options)?;
        let simplex = (s.fractions.iter().sum::<f64>() - 1.0).abs();
        let budget = (s.shares.iter().sum::<f64>() - c.budget).abs() / c.budget.max(1.0);
        worst_kkt = worst_kkt.max(s.kkt.max()).max(simplex).max(budget);
        if s.utility < s.equal_power_utility - 1e-12 {
            below_equal += 1;
        }
        if s.utility > s.equal_power_utility + 1e-9 {
            strict += 1;
        }
        if n == 4 {
            let (_, _, g) = cell_grid_oracle(&c, 2e-2, 1e-3)?;
            grid_diff = grid_diff.max((s.utility - g).abs());
            grid_cells += 1;
        }
    }
    let strict_share = strict as f64 / cells as f64;
    Ok(Check::new(
        "icupa-vs-cell-grid",
        worst_kkt <= 1e-6 && below_equal == 0 && strict_share >= 0.9 && grid_diff <= 1e-3,
        format!(
            "{cells} cells, max constraint/KKT residual {worst_kkt:.3e} (limit 1e-6), {below_equal} below equal power, strict gain on {:.0}% (need 90%), {grid_cells} grid cells max |diff| {grid_diff:.3e} (limit 1e-3)",
            strict_share * 100.0
        ),
        started,
    ))
}

/// Outer-loop statistics over default-geometry seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IulpSweep {
    pub seeds: usize,
    pub monotonicity_violations: usize,
    /// Runs that met the relative-change test within `t_max`.
    pub terminated: usize,
    pub within_five: usize,
    pub outer_iterations: Vec<usize>,
}

pub fn iulp_sweep(config: &ScenarioConfig, seeds: usize, base_seed: u64, options: &IulpOptions) -> Result<IulpSweep> {
    let mut out = IulpSweep {
        seeds,
        monotonicity_violations: 0,
        terminated: 0,
        within_five: 0,
        outer_iterations: Vec::with_capacity(seeds),
    };
    for k in 0..seeds as u64 {
        let (s, _) = generate_scenario(&ScenarioConfig { rng_seed: base_seed + k, ..config.clone() })?;
        let r = iulp(&s, options)?;
        out.monotonicity_violations += r.utility_trace.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
        let t = r.counters.outer_iterations;
        let n = r.utility_trace.len();
        let settled = n >= 2 && {
            let (prev, last) = (r.utility_trace[n - 2], r.utility_trace[n - 1]);
            (last - prev).abs() < options.xi * prev.abs().max(f64::MIN_POSITIVE)
        };
        if settled && t <= options.t_max {
            out.terminated += 1;
            if t <= 5 {
                out.within_five += 1;
            }
        }
        out.outer_iterations.push(t);
    }
    Ok(out)
}

pub fn iulp_convergence(seeds: usize, base_seed: u64) -> Result<Check> {
    let started = Instant::now();
    let sw = iulp_sweep(&ScenarioConfig::default(), seeds, base_seed, &IulpOptions::default())?;
    let share = sw.within_five as f64 / seeds as f64;
    Ok(Check::new(
        "iulp-convergence",
        sw.monotonicity_violations == 0 && sw.terminated == seeds && share >= 0.8,
        format!(
            "{seeds} seeds, {} monotonicity violations, {} terminated by T_max, {:.0}% within 5 outer iterations (need 80%)",
            sw.monotonicity_violations,
            sw.terminated,
            share * 100.0
        ),
        started,
    ))
}

/// Step CDF against a counting implementation on random samples.
pub fn cdf_oracle(trials: usize, seed: u64) -> Result<Check> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..200);
        // coarse values so ties are common
        let samples: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0..50.0) as f64).floor()).collect();
        let d = EmpiricalDistribution::new(&samples)?;
        for r in (-1..52).map(f64::from) {
            let count = samples.iter().filter(|&&v| v <= r).count() as f64 / n as f64;
            if d.cdf(r) != count {
                mismatches += 1;
            }
        }
    }
    Ok(Check::new(
        "cdf-vs-counting",
        mismatches == 0,
        format!("{trials} sample sets, {mismatches} mismatches"),
        started,
    ))
}

/// Every suite at full size, or a reduced size for smoke runs.
pub fn run_suites(quick: bool) -> Result<Vec<Check>> {
    let scale = |full: usize, small: usize| if quick { small } else { full };
    Ok(vec![
        allocation_oracle(scale(50, 5), 1)?,
        dgp_oracle(scale(20, 5), 2)?,
        binary_load_oracle(scale(10, 2), 3)?,
        ldpc_oracle(scale(10, 2), 4)?,
        icupa_oracle(scale(50, 10), 5)?,
        iulp_convergence(scale(100, 10), 0)?,
        cdf_oracle(scale(200, 20), 6)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_search_finds_separable_optimum() {
        let w = [1.0, 2.0, 3.0];
        let f = |y: &[f64]| y.iter().zip(&w).map(|(y, w)| w * y.ln()).sum::<f64>();
        let (coarse, _) = simplex_argmax(3, 0.05, &f);
        let (y, _) = simplex_refine(&coarse, 0.05, 1e-3, &f);
        for k in 0..3 {
            assert!((y[k] - w[k] / 6.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn quick_suites_pass() {
        for c in [cdf_oracle(20, 1).unwrap(), allocation_oracle(2, 1).unwrap()] {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
