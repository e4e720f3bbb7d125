//! Physical and utility model of a load-coupled heterogeneous network.
//!
//! A base station `i` with load `d_i` (fraction of its resource blocks in
//! use) interferes with users of other cells in proportion to that load, so
//! the average SINR of user `j` served by `i` is
//!
//! ```text
//!   eta_ij = p_i g_ij / ( sum_{k != i} d_k p_k g_kj + sigma^2 )
//! ```
//!
//! and its rate is `K B y_ij log2(1 + eta_ij)`. The network utility is the
//! priority-weighted sum of `log2` of user rates measured in Mbit/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates are divided by this before taking logarithms (Mbit/s scale).
pub const RATE_UNIT_BPS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Macro,
    Pico,
    Femto,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Macro, Tier::Pico, Tier::Femto];

    pub fn index(self) -> usize {
        match self {
            Tier::Macro => 0,
            Tier::Pico => 1,
            Tier::Femto => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Macro => "macro",
            Tier::Pico => "pico",
            Tier::Femto => "femto",
        }
    }
}

/// Immutable network snapshot. All powers are in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Linear channel gains, indexed `[bs][user]`.
    pub gains: Vec<Vec<f64>>,
    pub max_power: Vec<f64>,
    pub priorities: Vec<f64>,
    pub noise: f64,
    pub rb_count: u32,
    pub rb_bandwidth: f64,
    pub tiers: Vec<Tier>,
}

impl Scenario {
    pub fn num_bs(&self) -> usize {
        self.max_power.len()
    }

    pub fn num_users(&self) -> usize {
        self.priorities.len()
    }

    /// Total bandwidth `K * B` in hertz.
    pub fn total_bandwidth(&self) -> f64 {
        self.rb_count as f64 * self.rb_bandwidth
    }

    pub fn validate(&self) -> Result<()> {
        let bs = self.num_bs();
        let users = self.num_users();
        if bs == 0 || users == 0 {
            return Err(Error::InvalidScenario("need at least one BS and one user".into()));
        }
        if self.tiers.len() != bs {
            return Err(Error::InvalidScenario(format!(
                "{} tiers for {} base stations",
                self.tiers.len(),
                bs
            )));
        }
        if self.gains.len() != bs || self.gains.iter().any(|row| row.len() != users) {
            return Err(Error::InvalidScenario(format!("gain matrix must be {bs}x{users}")));
        }
        for (i, row) in self.gains.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                if !(g.is_finite() && g > 0.0) {
                    return Err(Error::InvalidScenario(format!("gain[{i}][{j}] = {g} is not finite and positive")));
                }
            }
        }
        if let Some(p) = self.max_power.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidScenario(format!("max power {p} must be positive")));
        }
        if let Some(w) = self.priorities.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidScenario(format!("priority {w} must be positive")));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(Error::InvalidScenario("noise power must be positive".into()));
        }
        if self.rb_count == 0 || !(self.rb_bandwidth.is_finite() && self.rb_bandwidth > 0.0) {
            return Err(Error::InvalidScenario("resource block count and bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// One serving base station per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Association {
    num_bs: usize,
    serving: Vec<usize>,
}

impl Association {
    pub fn new(num_bs: usize, serving: Vec<usize>) -> Result<Self> {
        if let Some((j, &i)) = serving.iter().enumerate().find(|(_, &i)| i >= num_bs) {
            return Err(Error::InvalidAssociation(format!("user {j} assigned to BS {i} of {num_bs}")));
        }
        Ok(Self { num_bs, serving })
    }

    /// Builds an association from a boolean `x[i][j]` matrix, checking that
    /// every user has exactly one serving base station.
    pub fn from_matrix(x: &[Vec<bool>]) -> Result<Self> {
        let num_bs = x.len();
        let users = x.first().map_or(0, Vec::len);
        let mut serving = Vec::with_capacity(users);
        for j in 0..users {
            let chosen: Vec<usize> = (0..num_bs).filter(|&i| x[i].get(j).copied().unwrap_or(false)).collect();
            if chosen.len() != 1 {
                return Err(Error::InvalidAssociation(format!(
                    "user {j} is served by {} base stations",
                    chosen.len()
                )));
            }
            serving.push(chosen[0]);
        }
        Self::new(num_bs, serving)
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    pub fn serving_bs(&self, user: usize) -> usize {
        self.serving[user]
    }

    pub fn x(&self, bs: usize, user: usize) -> bool {
        self.serving[user] == bs
    }

    pub fn matrix(&self) -> Vec<Vec<bool>> {
        (0..self.num_bs)
            .map(|i| self.serving.iter().map(|&s| s == i).collect())
            .collect()
    }

    /// Users served by `bs`, in increasing index order.
    pub fn served_by(&self, bs: usize) -> Vec<usize> {
        self.serving
            .iter()
            .enumerate()
            .filter_map(|(j, &s)| (s == bs).then_some(j))
            .collect()
    }

    /// Priority mass `N_i = sum_{j in J_i} w_j` per base station.
    pub fn priority_mass(&self, priorities: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.num_bs];
        for (j, &i) in self.serving.iter().enumerate() {
            mass[i] += priorities[j];
        }
        mass
    }

    pub fn user_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_bs];
        for &i in &self.serving {
            counts[i] += 1;
        }
        counts
    }
}

/// Loads, powers and resource fractions for one association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub loads: Vec<f64>,
    pub bs_power: Vec<f64>,
    /// Resource fractions `y[i][j]`.
    pub fractions: Vec<Vec<f64>>,
    /// Per-user transmit power on the serving BS, set by inner-cell power allocation.
    pub user_power: Option<Vec<f64>>,
}

impl NetworkState {
    /// State with the given loads and powers and Theorem-1 fractions.
    pub fn with_allocation(assoc: &Association, priorities: &[f64], loads: Vec<f64>, bs_power: Vec<f64>) -> Self {
        let fractions = opt_resource_allocation(assoc, &loads, priorities);
        Self {
            loads,
            bs_power,
            fractions,
            user_power: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityValue {
    /// `sum_j w_j log2(r_j / 1 Mbit/s)`.
    pub value: f64,
}

/// Interference-plus-noise seen by `user` when served by `serving`.
pub fn interference_plus_noise(scenario: &Scenario, loads: &[f64], powers: &[f64], serving: usize, user: usize) -> f64 {
    let mut total = scenario.noise;
    for k in 0..scenario.num_bs() {
        if k != serving {
            total += loads[k] * powers[k] * scenario.gains[k][user];
        }
    }
    total
}

/// Average load-coupled SINR of `user` if served by `bs`.
pub fn sinr(scenario: &Scenario, state: &NetworkState, bs: usize, user: usize) -> f64 {
    sinr_with(scenario, &state.loads, &state.bs_power, bs, user)
}

pub fn sinr_with(scenario: &Scenario, loads: &[f64], powers: &[f64], bs: usize, user: usize) -> f64 {
    powers[bs] * scenario.gains[bs][user] / interference_plus_noise(scenario, loads, powers, bs, user)
}

/// SINR of `user` on its serving BS, honouring per-user powers when present.
pub fn serving_sinr(scenario: &Scenario, state: &NetworkState, assoc: &Association, user: usize) -> f64 {
    let i = assoc.serving_bs(user);
    match &state.user_power {
        Some(pu) => {
            pu[user] * scenario.gains[i][user] / interference_plus_noise(scenario, &state.loads, &state.bs_power, i, user)
        }
        None => sinr(scenario, state, i, user),
    }
}

/// Effective rate of `user` in bit/s.
pub fn user_rate(scenario: &Scenario, state: &NetworkState, assoc: &Association, user: usize) -> f64 {
    let i = assoc.serving_bs(user);
    let y = state.fractions[i][user];
    if y <= 0.0 {
        return 0.0;
    }
    scenario.total_bandwidth() * y * (1.0 + serving_sinr(scenario, state, assoc, user)).log2()
}

pub fn user_rates(scenario: &Scenario, state: &NetworkState, assoc: &Association) -> Vec<f64> {
    (0..scenario.num_users()).map(|j| user_rate(scenario, state, assoc, j)).collect()
}

/// Priority-weighted log2 utility with rates in Mbit/s.
pub fn network_utility(scenario: &Scenario, state: &NetworkState, assoc: &Association) -> Result<UtilityValue> {
    let mut value = 0.0;
    for j in 0..scenario.num_users() {
        let r = user_rate(scenario, state, assoc, j);
        if !(r > 0.0) {
            return Err(Error::NonPositiveRate { user: j });
        }
        value += scenario.priorities[j] * (r / RATE_UNIT_BPS).log2();
    }
    Ok(UtilityValue { value })
}

/// Objective of the relaxed problem with the optimal allocation substituted:
///
/// ```text
///   sum_i sum_{j in J_i} w_j log2( K B w_j d_i log2(1 + eta_ij) / N_i )
/// ```
///
/// Empty base stations contribute zero. Returns `-inf` when a served user
/// sits on a BS with zero load or zero rate.
pub fn weighted_utility(scenario: &Scenario, assoc: &Association, loads: &[f64], powers: &[f64]) -> f64 {
    let mass = assoc.priority_mass(&scenario.priorities);
    let kb = scenario.total_bandwidth() / RATE_UNIT_BPS;
    let mut total = 0.0;
    for (j, &i) in assoc.serving().iter().enumerate() {
        let w = scenario.priorities[j];
        let eta = sinr_with(scenario, loads, powers, i, j);
        let arg = kb * w * loads[i] * (1.0 + eta).log2() / mass[i];
        if !(arg > 0.0) {
            return f64::NEG_INFINITY;
        }
        total += w * arg.log2();
    }
    total
}

/// Optimal resource fractions for fixed association and loads:
/// `y_ij = w_j d_i / sum_{l in J_i} w_l`, zero on idle base stations.
pub fn opt_resource_allocation(assoc: &Association, loads: &[f64], priorities: &[f64]) -> Vec<Vec<f64>> {
    let mass = assoc.priority_mass(priorities);
    let mut y = vec![vec![0.0; assoc.num_users()]; assoc.num_bs()];
    for (j, &i) in assoc.serving().iter().enumerate() {
        // 0 * log(0/0) convention: an idle BS hands out nothing.
        if loads[i] == 0.0 || mass[i] == 0.0 {
            continue;
        }
        y[i][j] = priorities[j] * loads[i] / mass[i];
    }
    y
}

/// Full load on every BS that serves somebody, zero otherwise.
pub fn derive_load_from_association(assoc: &Association) -> Vec<f64> {
    assoc
        .user_counts()
        .into_iter()
        .map(|c| if c > 0 { 1.0 } else { 0.0 })
        .collect()
}

/// Scenario-level upper bound on any achievable utility.
///
/// Each user can do no better than owning all resource blocks of its best
/// base station at full power without interference, scaled by
/// `w_j / min_l w_l >= 1`.
pub fn utility_upper_bound(scenario: &Scenario) -> f64 {
    let min_w = scenario.priorities.iter().copied().fold(f64::INFINITY, f64::min);
    let kb = scenario.total_bandwidth() / RATE_UNIT_BPS;
    (0..scenario.num_users())
        .map(|j| {
            let w = scenario.priorities[j];
            let best = (0..scenario.num_bs())
                .map(|i| {
                    let snr = scenario.max_power[i] * scenario.gains[i][j] / scenario.noise;
                    (kb * w / min_w * (1.0 + snr).log2()).log2()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            w * best
        })
        .sum()
}
