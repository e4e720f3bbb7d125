//! User association for fixed loads and powers.
//!
//! With loads and powers frozen the weighted utility of an association is
//!
//! ```text
//!   sum_j c_{b(j) j} - sum_i N_i log2 N_i,   N_i = sum_{j in J_i} w_j
//! ```
//!
//! where `c_ij = w_j log2(K B w_j d_i log2(1 + eta_ij) / 1e6)`. The dual
//! gradient projection solver relaxes the definition of `N_i` with a
//! multiplier `mu_i` per base station.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_load_from_association, sinr_with, weighted_utility, Association, Scenario, RATE_UNIT_BPS};

/// `c[i][j]`; `-inf` marks a base station that cannot serve user `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityCoefficients {
    pub c: Vec<Vec<f64>>,
}

impl UtilityCoefficients {
    pub fn num_bs(&self) -> usize {
        self.c.len()
    }

    pub fn num_users(&self) -> usize {
        self.c.first().map_or(0, Vec::len)
    }
}

pub fn compute_coefficients(scenario: &Scenario, loads: &[f64], powers: &[f64]) -> UtilityCoefficients {
    let kb = scenario.total_bandwidth() / RATE_UNIT_BPS;
    let c = (0..scenario.num_bs())
        .map(|i| {
            (0..scenario.num_users())
                .map(|j| {
                    if loads[i] <= 0.0 || powers[i] <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let w = scenario.priorities[j];
                    let eta = sinr_with(scenario, loads, powers, i, j);
                    let arg = kb * w * loads[i] * (1.0 + eta).log2();
                    if arg > 0.0 {
                        w * arg.log2()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect();
    UtilityCoefficients { c }
}

/// Optimal `N_i` for a given multiplier.
pub fn mass_of_multiplier(mu: f64) -> f64 {
    (mu * std::f64::consts::LN_2 - 1.0).exp()
}

fn usable_bs(coeffs: &UtilityCoefficients) -> Vec<bool> {
    coeffs.c.iter().map(|row| row.iter().any(|c| c.is_finite())).collect()
}

/// `argmax_i (c_ij - w_j mu_i)`, lowest index on ties, skipping `-inf`.
fn best_response(coeffs: &UtilityCoefficients, priorities: &[f64], mu: &[f64], j: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in coeffs.c.iter().enumerate() {
        let c = row[j];
        if !c.is_finite() {
            continue;
        }
        let v = c - priorities[j] * mu[i];
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

/// Dual function `f_x(mu) + g_N(mu)` of the relaxed association problem.
/// Base stations without any finite coefficient do not take part.
pub fn dual_objective(coeffs: &UtilityCoefficients, priorities: &[f64], mu: &[f64]) -> f64 {
    let mut fx = 0.0;
    for j in 0..coeffs.num_users() {
        match best_response(coeffs, priorities, mu, j) {
            Some((_, v)) => fx += v,
            None => return f64::INFINITY,
        }
    }
    let gn: f64 = usable_bs(coeffs)
        .iter()
        .zip(mu)
        .filter(|(u, _)| **u)
        .map(|(_, &m)| {
            let n = mass_of_multiplier(m);
            n * (m - n.log2())
        })
        .sum();
    fx + gn
}

/// Weighted utility of an association under fixed coefficients.
pub fn association_value(coeffs: &UtilityCoefficients, priorities: &[f64], serving: &[usize]) -> f64 {
    let mut mass = vec![0.0; coeffs.num_bs()];
    let mut total = 0.0;
    for (j, &i) in serving.iter().enumerate() {
        total += coeffs.c[i][j];
        mass[i] += priorities[j];
    }
    total - mass.iter().filter(|&&m| m > 0.0).map(|m| m * m.log2()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpOptions {
    pub theta0: f64,
    pub eps: f64,
    pub max_iter: usize,
    /// Near-tie window for rounding the final dual point.
    pub tie_window: f64,
    /// Upper bound on tie combinations enumerated during rounding.
    pub max_tie_combos: usize,
    pub local_search: bool,
}

impl Default for DgpOptions {
    fn default() -> Self {
        Self {
            theta0: 1.0,
            eps: 1e-6,
            max_iter: 5000,
            tie_window: 1e-2,
            max_tie_combos: 4096,
            local_search: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationDuals {
    pub mu: Vec<f64>,
    pub mass: Vec<f64>,
    pub step_scale: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpStop {
    /// Feasibility residual and dual change both under `eps`, or the
    /// duality gap closed to `eps`.
    Converged,
    /// Step scale collapsed: no descent along the subgradient.
    Stalled,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpResult {
    pub association: Association,
    pub duals: AssociationDuals,
    pub primal: f64,
    pub dual: f64,
    /// `dual - primal`; nonnegative by weak duality.
    pub gap: f64,
    pub stop: DgpStop,
    pub dual_trace: Vec<f64>,
}

impl DgpResult {
    pub fn converged(&self) -> bool {
        self.stop != DgpStop::MaxIter
    }
}

/// Dual gradient projection for the association subproblem.
///
/// `incumbent`, when given, is kept if nothing better is found, so the
/// returned utility never drops below it.
pub fn dgp_associate(
    coeffs: &UtilityCoefficients,
    priorities: &[f64],
    options: &DgpOptions,
    incumbent: Option<&Association>,
) -> Result<DgpResult> {
    let nb = coeffs.num_bs();
    let nu = coeffs.num_users();
    for j in 0..nu {
        if !(0..nb).any(|i| coeffs.c[i][j].is_finite()) {
            return Err(Error::NoCandidate { user: j });
        }
    }
    let usable = usable_bs(coeffs);

    let responses = |mu: &[f64]| -> Vec<usize> {
        (0..nu)
            .map(|j| best_response(coeffs, priorities, mu, j).map(|(i, _)| i).unwrap_or(0))
            .collect()
    };
    let subgradient = |mu: &[f64], serving: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let mut assigned = vec![0.0; nb];
        for (j, &i) in serving.iter().enumerate() {
            assigned[i] += priorities[j];
        }
        let mass: Vec<f64> = (0..nb)
            .map(|i| if usable[i] { mass_of_multiplier(mu[i]) } else { 0.0 })
            .collect();
        let g = (0..nb).map(|i| mass[i] - assigned[i]).collect();
        (mass, g)
    };

    let mut mu = vec![0.0; nb];
    let mut dual = dual_objective(coeffs, priorities, &mu);
    let mut best_mu = mu.clone();
    let mut best_dual = dual;
    let mut serving = responses(&mu);
    let mut best_serving = serving.clone();
    let mut best_primal = association_value(coeffs, priorities, &serving);
    let mut scale = 1.0;
    let mut trace = vec![dual];
    let mut stop = DgpStop::MaxIter;
    let mut iterations = 0;

    for t in 1..=options.max_iter {
        iterations = t;
        let (_, g) = subgradient(&mu, &serving);
        let theta = options.theta0 / (t as f64).sqrt();
        // halve until the dual does not increase
        let mut accepted = None;
        while scale * theta > 1e-14 {
            let cand: Vec<f64> = (0..nb).map(|i| if usable[i] { mu[i] - scale * theta * g[i] } else { 0.0 }).collect();
            let d = dual_objective(coeffs, priorities, &cand);
            if d <= dual {
                accepted = Some((cand, d));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, d)) = accepted else {
            stop = DgpStop::Stalled;
            break;
        };
        let change = (dual - d).abs();
        mu = cand;
        dual = d;
        trace.push(dual);
        serving = responses(&mu);
        let primal = association_value(coeffs, priorities, &serving);
        if primal > best_primal {
            best_primal = primal;
            best_serving = serving.clone();
        }
        if dual < best_dual {
            best_dual = dual;
            best_mu = mu.clone();
        }
        let (_, g) = subgradient(&mu, &serving);
        let feas = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap_closed = best_dual - best_primal < options.eps * best_dual.abs().max(1.0);
        if (feas < options.eps && change < options.eps) || gap_closed {
            stop = DgpStop::Converged;
            break;
        }
    }

    let rounded = round_near_ties(coeffs, priorities, &best_mu, options);
    let rv = association_value(coeffs, priorities, &rounded);
    if rv > best_primal {
        best_primal = rv;
        best_serving = rounded;
    }
    if let Some(inc) = incumbent {
        let iv = association_value(coeffs, priorities, inc.serving());
        if iv.is_finite() && iv > best_primal {
            best_primal = iv;
            best_serving = inc.serving().to_vec();
        }
    }
    if options.local_search {
        best_primal = local_search(coeffs, priorities, &mut best_serving, best_primal);
    }

    // a closed duality gap certifies optimality whatever stopped the loop
    if stop == DgpStop::MaxIter && best_dual - best_primal < options.eps * best_dual.abs().max(1.0) {
        stop = DgpStop::Converged;
    }
    let (mass, _) = subgradient(&best_mu, &best_serving);
    Ok(DgpResult {
        association: Association::new(nb, best_serving)?,
        duals: AssociationDuals {
            mu: best_mu,
            mass,
            step_scale: scale,
            iterations,
        },
        primal: best_primal,
        dual: best_dual,
        gap: best_dual - best_primal,
        stop,
        dual_trace: trace,
    })
}

/// Rounds the dual point to an association: users whose best two responses
/// are within `tie_window` are enumerated over their near-tied candidates.
fn round_near_ties(coeffs: &UtilityCoefficients, priorities: &[f64], mu: &[f64], options: &DgpOptions) -> Vec<usize> {
    let nu = coeffs.num_users();
    let mut base = Vec::with_capacity(nu);
    let mut ties: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    for j in 0..nu {
        let mut vals: Vec<(usize, f64)> = (0..coeffs.num_bs())
            .filter(|&i| coeffs.c[i][j].is_finite())
            .map(|i| (i, coeffs.c[i][j] - priorities[j] * mu[i]))
            .collect();
        vals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        base.push(vals[0].0);
        let cands: Vec<usize> = vals.iter().filter(|v| vals[0].1 - v.1 <= options.tie_window).map(|v| v.0).collect();
        if cands.len() > 1 {
            let margin = vals[0].1 - vals[1].1;
            ties.push((margin, j, cands));
        }
    }
    ties.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut combos = 1usize;
    let mut chosen = Vec::new();
    for (_, j, cands) in ties {
        if combos.saturating_mul(cands.len()) > options.max_tie_combos {
            break;
        }
        combos *= cands.len();
        chosen.push((j, cands));
    }
    let mut best = base.clone();
    let mut best_val = association_value(coeffs, priorities, &base);
    let mut current = base;
    let mut counter = vec![0usize; chosen.len()];
    for _ in 0..combos {
        for (k, (j, cands)) in chosen.iter().enumerate() {
            current[*j] = cands[counter[k]];
        }
        let v = association_value(coeffs, priorities, &current);
        if v > best_val {
            best_val = v;
            best = current.clone();
        }
        for (k, (_, cands)) in chosen.iter().enumerate() {
            counter[k] += 1;
            if counter[k] < cands.len() {
                break;
            }
            counter[k] = 0;
        }
    }
    best
}

/// Single-user moves until none improves.
fn local_search(coeffs: &UtilityCoefficients, priorities: &[f64], serving: &mut [usize], mut value: f64) -> f64 {
    loop {
        let mut improved = false;
        for j in 0..serving.len() {
            let orig = serving[j];
            let mut best_i = orig;
            for i in 0..coeffs.num_bs() {
                if i == orig || !coeffs.c[i][j].is_finite() {
                    continue;
                }
                serving[j] = i;
                let v = association_value(coeffs, priorities, serving);
                if v > value + 1e-12 {
                    value = v;
                    best_i = i;
                    improved = true;
                }
            }
            serving[j] = best_i;
        }
        if !improved {
            return value;
        }
    }
}

/// Highest-SINR association with lowest-index tie-breaking.
pub fn max_sinr_associate(scenario: &Scenario, loads: &[f64], powers: &[f64]) -> Association {
    let serving = (0..scenario.num_users())
        .map(|j| {
            let mut best = 0;
            let mut best_eta = f64::NEG_INFINITY;
            for i in 0..scenario.num_bs() {
                let eta = sinr_with(scenario, loads, powers, i, j);
                if eta > best_eta {
                    best_eta = eta;
                    best = i;
                }
            }
            best
        })
        .collect();
    Association::new(scenario.num_bs(), serving).expect("indices in range")
}

/// How loads are set while enumerating associations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadPolicy {
    /// Keep the given loads.
    Fixed,
    /// Full load on serving BSs, zero elsewhere.
    FromAssociation,
}

pub const EXHAUSTIVE_LIMIT: f64 = 1e6;

/// Enumerates every association. Ties keep the first one in lexicographic order.
pub fn exhaustive_associate(
    scenario: &Scenario,
    loads: &[f64],
    powers: &[f64],
    policy: LoadPolicy,
) -> Result<(Association, f64)> {
    let nb = scenario.num_bs();
    let nu = scenario.num_users();
    let size = (nb as f64).powi(nu as i32);
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge {
            what: "exhaustive association",
            size,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut serving = vec![0usize; nu];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let assoc = Association::new(nb, serving.clone())?;
        let value = match policy {
            LoadPolicy::Fixed => weighted_utility(scenario, &assoc, loads, powers),
            LoadPolicy::FromAssociation => {
                weighted_utility(scenario, &assoc, &derive_load_from_association(&assoc), powers)
            }
        };
        if best.as_ref().map_or(true, |(_, b)| value > *b) {
            best = Some((serving.clone(), value));
        }
        let mut k = nu;
        loop {
            if k == 0 {
                let (s, v) = best.expect("at least one association");
                return Ok((Association::new(nb, s)?, v));
            }
            k -= 1;
            serving[k] += 1;
            if serving[k] < nb {
                break;
            }
            serving[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, nb: usize, nu: usize) -> Scenario {
        let gains = (0..nb).map(|_| (0..nu).map(|_| 10f64.powf(rng.gen_range(-12.0..-8.0))).collect()).collect();
        let mut s = scenario(
            gains,
            (0..nb).map(|_| rng.gen_range(1.0..40.0)).collect(),
            (0..nu).map(|_| if rng.gen_bool(0.4) { 2.0 } else { 1.0 }).collect(),
            4e-14,
        );
        s.rb_count = 55;
        s.rb_bandwidth = 180e3;
        s
    }

    #[test]
    fn coefficient_examples() {
        let mut s = scenario(vec![vec![1.0], vec![1.0]], vec![1.0, 1.0], vec![1.0], 1.0);
        s.rb_bandwidth = 1e6;
        let c = compute_coefficients(&s, &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(c.c[0][0], 0.0);
        assert_eq!(c.c[1][0], f64::NEG_INFINITY);
        let c = compute_coefficients(&s, &[1.0, 1.0], &[1.0, 0.0]);
        assert_eq!(c.c[1][0], f64::NEG_INFINITY);
    }

    #[test]
    fn argmax_at_zero_multiplier() {
        let c = UtilityCoefficients { c: vec![vec![3.0], vec![1.0]] };
        assert_eq!(best_response(&c, &[1.0], &[0.0, 0.0], 0).unwrap().0, 0);
        let c = UtilityCoefficients { c: vec![vec![2.0], vec![2.0]] };
        assert_eq!(best_response(&c, &[1.0], &[0.0, 0.0], 0).unwrap().0, 0);
    }

    #[test]
    fn mass_at_reciprocal_ln2() {
        assert!((mass_of_multiplier(1.0 / std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dual_single_cell_value() {
        let c = UtilityCoefficients { c: vec![vec![0.0]] };
        let d = dual_objective(&c, &[1.0], &[0.0]);
        let expect = (-1f64).exp() / std::f64::consts::LN_2;
        assert!((d - expect).abs() < 1e-12);
        assert!((d - 0.5307).abs() < 1e-4);
    }

    #[test]
    fn no_candidate_is_an_error() {
        let c = UtilityCoefficients { c: vec![vec![0.0, f64::NEG_INFINITY]] };
        assert!(matches!(
            dgp_associate(&c, &[1.0, 1.0], &DgpOptions::default(), None),
            Err(Error::NoCandidate { user: 1 })
        ));
    }

    #[test]
    fn weak_duality_and_exhaustive_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let s = random_instance(&mut rng, 3, 5);
            let loads = vec![1.0; 3];
            let c = compute_coefficients(&s, &loads, &s.max_power);
            let (_, opt) = exhaustive_associate(&s, &loads, &s.max_power, LoadPolicy::Fixed).unwrap();
            for _ in 0..5 {
                let mu: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
                assert!(dual_objective(&c, &s.priorities, &mu) >= opt - 1e-9);
            }
            let r = dgp_associate(&c, &s.priorities, &DgpOptions::default(), None).unwrap();
            let v = weighted_utility(&s, &r.association, &loads, &s.max_power);
            assert!((v - r.primal).abs() < 1e-9);
            assert!(r.gap >= -1e-9);
            assert!((opt - v).abs() < 1e-4, "{opt} vs {v}");
        }
    }

    #[test]
    fn incumbent_is_never_beaten_downward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_instance(&mut rng, 4, 12);
        let loads = vec![1.0; 4];
        let c = compute_coefficients(&s, &loads, &s.max_power);
        let inc = max_sinr_associate(&s, &loads, &s.max_power);
        let opts = DgpOptions { max_iter: 3, local_search: false, ..Default::default() };
        let r = dgp_associate(&c, &s.priorities, &opts, Some(&inc)).unwrap();
        assert!(r.primal >= association_value(&c, &s.priorities, inc.serving()));
    }

    #[test]
    fn accepted_dual_steps_do_not_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_instance(&mut rng, 4, 20);
        let c = compute_coefficients(&s, &[1.0; 4], &s.max_power);
        let r = dgp_associate(&c, &s.priorities, &DgpOptions::default(), None).unwrap();
        assert!(r.dual_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn max_sinr_examples() {
        let s = scenario(vec![vec![1.0], vec![2.0]], vec![1.0, 1.0], vec![1.0], 1.0);
        assert_eq!(max_sinr_associate(&s, &[1.0, 1.0], &[1.0, 1.0]).serving(), &[1]);
        let s = scenario(vec![vec![1.0, 2.0, 3.0]], vec![1.0], vec![1.0; 3], 1.0);
        assert_eq!(max_sinr_associate(&s, &[1.0], &[1.0]).serving(), &[0, 0, 0]);
    }

    #[test]
    fn exhaustive_examples() {
        let s = scenario(vec![vec![1.0, 2.0]], vec![1.0], vec![1.0; 2], 1.0);
        let (a, _) = exhaustive_associate(&s, &[1.0], &[1.0], LoadPolicy::FromAssociation).unwrap();
        assert_eq!(a.serving(), &[0, 0]);
        let s = scenario(vec![vec![1.0], vec![5.0]], vec![1.0, 1.0], vec![1.0], 1.0);
        let (a, _) = exhaustive_associate(&s, &[1.0, 1.0], &[1.0, 1.0], LoadPolicy::Fixed).unwrap();
        assert_eq!(a.serving(), &[1]);
        let s = scenario(vec![vec![1.0; 21]; 2], vec![1.0; 2], vec![1.0; 21], 1.0);
        assert!(matches!(
            exhaustive_associate(&s, &[1.0; 2], &[1.0; 2], LoadPolicy::Fixed),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn per_user_shift_keeps_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_instance(&mut rng, 3, 8);
        let c = compute_coefficients(&s, &[1.0; 3], &s.max_power);
        let mu = vec![0.3, -0.2, 0.1];
        let mut shifted = c.clone();
        for j in 0..8 {
            let shift = rng.gen_range(-10.0..10.0);
            for i in 0..3 {
                shifted.c[i][j] += shift;
            }
        }
        for j in 0..8 {
            assert_eq!(
                best_response(&c, &s.priorities, &mu, j).unwrap().0,
                best_response(&shifted, &s.priorities, &mu, j).unwrap().0
            );
        }
    }
}
