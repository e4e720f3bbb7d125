//! Load distribution and power control for a fixed association.
//!
//! Loads follow the association (a BS is fully loaded iff it serves
//! somebody). Powers of the active set `A` are then chosen by solving the
//! convex program obtained with `u_j = ln eta_j`, `v_i = ln p_i`:
//!
//! ```text
//!   max  sum_j w_j ln ln(1 + e^{u_j})
//!   s.t. e^{w_j} + sum_{k in A\b(j)} e^{s_kj} <= 1
//!        w_j  = u_j - v_{b(j)} + b_j
//!        s_kj = u_j + v_k - v_{b(j)} + a_kj
//!        v_i <= ln P_i
//! ```
//!
//! The solver runs the Lagrangian dual iteration first, then polishes the
//! best point with projected Newton steps on the reduced objective `F(v)`
//! and certifies it by recovering multipliers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_load_from_association, weighted_utility, Association, NetworkState, Scenario};

/// `e^x / ((1 + e^x) ln(1 + e^x))`, decreasing from 1 to 0.
pub fn f_of(x: f64) -> f64 {
    if x < -30.0 {
        // sigma / softplus = 1 - e^x / 2 + O(e^{2x})
        return 1.0 - 0.5 * x.exp();
    }
    let softplus = if x > 30.0 { x + (-x).exp() } else { x.exp().ln_1p() };
    sigmoid(x) / softplus
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`f_of`].
pub fn f_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    let l = softplus(x);
    s * (1.0 - s) / l - s * s / (l * l)
}

pub const F_INVERSE_TOL: f64 = 1e-10;

/// Inverse of [`f_of`] by bisection. `y` is clamped into `(1e-9, 1 - 1e-9)`.
pub fn f_inverse(y: f64, tol: f64) -> Result<f64> {
    if y.is_nan() {
        return Err(Error::BracketFailure(y));
    }
    let y = y.clamp(1e-9, 1.0 - 1e-9);
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    while f_of(lo) < y {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(Error::BracketFailure(y));
        }
    }
    while f_of(hi) > y {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::BracketFailure(y));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f_of(mid);
        if (fm - y).abs() <= tol || hi - lo < 1e-15 * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        if fm > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Index structure of the full-load problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FullLoadStructure {
    /// BSs with at least one user, increasing.
    pub active: Vec<usize>,
    /// Position in `active` of each BS, `None` when idle.
    pub slot: Vec<Option<usize>>,
    /// Serving BS of each user (scenario index).
    pub serving: Vec<usize>,
    pub served: Vec<Vec<usize>>,
    /// `a[k][j] = ln(g_kj / g_{b(j)j})`, scenario BS index `k`.
    pub a: Vec<Vec<f64>>,
    /// `b[j] = ln(sigma^2 / g_{b(j)j})`.
    pub b: Vec<f64>,
    pub log_pmax: Vec<f64>,
}

impl FullLoadStructure {
    pub fn new(scenario: &Scenario, assoc: &Association) -> Result<Self> {
        let nb = scenario.num_bs();
        let counts = assoc.user_counts();
        let active: Vec<usize> = (0..nb).filter(|&i| counts[i] > 0).collect();
        if active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        let mut slot = vec![None; nb];
        for (k, &i) in active.iter().enumerate() {
            slot[i] = Some(k);
        }
        let serving = assoc.serving().to_vec();
        let served = (0..nb).map(|i| assoc.served_by(i)).collect();
        let a = (0..nb)
            .map(|k| {
                serving
                    .iter()
                    .enumerate()
                    .map(|(j, &bj)| (scenario.gains[k][j] / scenario.gains[bj][j]).ln())
                    .collect()
            })
            .collect();
        let b = serving
            .iter()
            .enumerate()
            .map(|(j, &bj)| (scenario.noise / scenario.gains[bj][j]).ln())
            .collect();
        Ok(Self {
            active,
            slot,
            serving,
            served,
            a,
            b,
            log_pmax: scenario.max_power.iter().map(|p| p.ln()).collect(),
        })
    }

    /// Active interferers of user `j`.
    fn interferers(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        let bj = self.serving[j];
        self.active.iter().copied().filter(move |&k| k != bj)
    }

    /// Exact log-SINR of every user for log-powers `v` (indexed by scenario BS).
    pub fn log_sinr(&self, v: &[f64]) -> Vec<f64> {
        (0..self.serving.len())
            .map(|j| {
                // ln(p_b g_b / (sum p_k g_k + s2)) = -ln(e^{b_j - v_b} + sum e^{v_k - v_b + a_kj})
                let vb = v[self.serving[j]];
                let mut den = (self.b[j] - vb).exp();
                for k in self.interferers(j) {
                    den += (v[k] - vb + self.a[k][j]).exp();
                }
                -den.ln()
            })
            .collect()
    }
}

/// Multipliers of the transformed problem; `lambda` is `[interferer][user]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpcDuals {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub zeta: Vec<f64>,
    pub step_scale: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpcPrimals {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpcOptions {
    /// Regularization constant of the closed-form v-update.
    pub t_reg: f64,
    pub delta0: f64,
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Dual iterations without utility improvement before moving on.
    pub stall_window: usize,
    /// Lower clamp of `v_i` relative to `ln P_i` when the v-gradient is nonpositive.
    pub v_floor_offset: f64,
    pub polish: bool,
    pub bisection_tol: f64,
}

impl Default for LdpcOptions {
    fn default() -> Self {
        Self {
            t_reg: 1e-3,
            delta0: 0.1,
            kkt_tol: 1e-6,
            max_iter: 20000,
            stall_window: 500,
            v_floor_offset: 40.0,
            polish: true,
            bisection_tol: F_INVERSE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity_u: f64,
    pub stationarity_v: f64,
    pub stationarity_ws: f64,
    pub primal_feasibility: f64,
    pub complementary_slackness: f64,
    pub dual_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity_u,
            self.stationarity_v,
            self.stationarity_ws,
            self.primal_feasibility,
            self.complementary_slackness,
            self.dual_feasibility,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpcResult {
    pub state: NetworkState,
    pub duals: LdpcDuals,
    pub primals: LdpcPrimals,
    pub kkt: KktResiduals,
    /// Weighted utility at the returned powers.
    pub utility: f64,
    pub initial_utility: f64,
    /// Best utility reached by the dual iteration alone.
    pub dual_phase_utility: f64,
    pub dual_iterations: usize,
    pub polish_iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Reduced objective `F(v) = sum_j w_j ln ln(1 + e^{u_j(v)})`.
fn reduced_objective(st: &FullLoadStructure, priorities: &[f64], v: &[f64]) -> f64 {
    st.log_sinr(v)
        .iter()
        .zip(priorities)
        .map(|(&u, &w)| w * softplus(u).ln())
        .sum()
}

/// Gradient and Hessian of `F` over the active set.
fn derivatives(st: &FullLoadStructure, priorities: &[f64], v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = st.active.len();
    let u = st.log_sinr(v);
    let mut grad = vec![0.0; n];
    let mut hess = vec![vec![0.0; n]; n];
    let mut du = vec![0.0; n];
    let mut q = vec![0.0; n];
    for j in 0..u.len() {
        let w = priorities[j];
        let fj = f_of(u[j]);
        let fpj = f_prime(u[j]);
        let bj = st.serving[j];
        // q_kj = p_k g_kj / D_j in log form
        let vb = v[bj];
        let mut den = (st.b[j] - vb).exp();
        for k in st.interferers(j) {
            den += (v[k] - vb + st.a[k][j]).exp();
        }
        for (slot, &k) in st.active.iter().enumerate() {
            if k == bj {
                q[slot] = 0.0;
                du[slot] = 1.0;
            } else {
                q[slot] = (v[k] - vb + st.a[k][j]).exp() / den;
                du[slot] = -q[slot];
            }
        }
        for l in 0..n {
            grad[l] += w * fj * du[l];
            for m in 0..n {
                let second = if l == m { -(q[l] - q[l] * q[m]) } else { q[l] * q[m] };
                hess[l][m] += w * (fpj * du[l] * du[m] + fj * second);
            }
        }
    }
    (grad, hess)
}

/// Projected Newton ascent on `F` with the box `v <= ln P`.
fn newton_polish(st: &FullLoadStructure, priorities: &[f64], v: &mut [f64], max_iter: usize) -> usize {
    let n = st.active.len();
    let mut value = reduced_objective(st, priorities, v);
    for it in 0..max_iter {
        let (grad, hess) = derivatives(st, priorities, v);
        let free: Vec<usize> = (0..n)
            .filter(|&l| {
                let i = st.active[l];
                v[i] < st.log_pmax[i] - 1e-13 || grad[l] < 0.0
            })
            .collect();
        let pg = free.iter().fold(0.0f64, |m, &l| m.max(grad[l].abs()));
        if pg < 1e-13 {
            return it;
        }
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&l| grad[l]));
        let neg_h = DMatrix::from_fn(free.len(), free.len(), |a, b| -hess[free[a]][free[b]]);
        let dir = match neg_h.cholesky() {
            Some(ch) => {
                let d = ch.solve(&gf);
                if d.dot(&gf) > 0.0 {
                    d
                } else {
                    gf.clone()
                }
            }
            None => gf.clone(),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = v.to_vec();
            for (a, &l) in free.iter().enumerate() {
                let i = st.active[l];
                cand[i] = (v[i] + t * dir[a]).min(st.log_pmax[i]);
            }
            let ascent: f64 = free.iter().map(|&l| grad[l] * (cand[st.active[l]] - v[st.active[l]])).sum();
            let cv = reduced_objective(st, priorities, &cand);
            if cv >= value + 1e-4 * ascent && cv >= value {
                accepted = cv > value || ascent <= 0.0;
                v.copy_from_slice(&cand);
                value = cv;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return it + 1;
        }
    }
    max_iter
}

/// Multipliers that make `(u(v), v)` stationary, and the resulting residuals.
fn certify(st: &FullLoadStructure, priorities: &[f64], v: &[f64], nb: usize) -> (LdpcPrimals, LdpcDuals, KktResiduals) {
    let nu = st.serving.len();
    let u = st.log_sinr(v);
    let mut alpha = vec![0.0; nu];
    let mut beta = vec![0.0; nu];
    let mut lambda = vec![vec![0.0; nu]; nb];
    let mut w = vec![0.0; nu];
    let mut s = vec![vec![f64::NEG_INFINITY; nu]; nb];
    let mut kkt = KktResiduals::default();
    for j in 0..nu {
        let bj = st.serving[j];
        alpha[j] = priorities[j] * f_of(u[j]);
        w[j] = u[j] - v[bj] + st.b[j];
        beta[j] = -alpha[j] * w[j].exp();
        let mut total = w[j].exp();
        let mut lsum = 0.0;
        for k in st.interferers(j) {
            s[k][j] = u[j] + v[k] - v[bj] + st.a[k][j];
            lambda[k][j] = -alpha[j] * s[k][j].exp();
            total += s[k][j].exp();
            lsum += lambda[k][j];
            kkt.stationarity_ws = kkt.stationarity_ws.max((alpha[j] * s[k][j].exp() + lambda[k][j]).abs());
        }
        kkt.stationarity_ws = kkt.stationarity_ws.max((alpha[j] * w[j].exp() + beta[j]).abs());
        let su = (priorities[j] * f_of(u[j]) + beta[j] + lsum).abs() / priorities[j];
        kkt.stationarity_u = kkt.stationarity_u.max(su);
        kkt.primal_feasibility = kkt.primal_feasibility.max((total - 1.0).max(0.0));
        kkt.complementary_slackness = kkt.complementary_slackness.max((alpha[j] * (total - 1.0)).abs());
        kkt.dual_feasibility = kkt.dual_feasibility.max((-alpha[j]).max(0.0)).max(beta[j].max(0.0));
    }
    let (grad, _) = derivatives(st, priorities, v);
    let mut zeta = vec![0.0; nb];
    for (l, &i) in st.active.iter().enumerate() {
        let at_bound = v[i] >= st.log_pmax[i] - 1e-13;
        // E_i assembled from the multipliers, not from the gradient
        let mut e = 0.0;
        for &j in &st.served[i] {
            e -= beta[j];
            for k in st.interferers(j) {
                e -= lambda[k][j];
            }
        }
        for j in 0..nu {
            if st.serving[j] != i {
                e += lambda[i][j];
            }
        }
        zeta[i] = if at_bound { e.max(0.0) } else { 0.0 };
        kkt.stationarity_v = kkt.stationarity_v.max((e - zeta[i]).abs());
        kkt.complementary_slackness = kkt.complementary_slackness.max((zeta[i] * (v[i] - st.log_pmax[i])).abs());
        kkt.primal_feasibility = kkt.primal_feasibility.max((v[i] - st.log_pmax[i]).max(0.0));
        debug_assert!((e - grad[l]).abs() <= 1e-6 * (1.0 + grad[l].abs()));
    }
    (
        LdpcPrimals { u, v: v.to_vec(), w, s },
        LdpcDuals {
            alpha,
            beta,
            lambda,
            zeta,
            step_scale: 1.0,
            iterations: 0,
        },
        kkt,
    )
}

fn utility_of(scenario: &Scenario, assoc: &Association, loads: &[f64], st: &FullLoadStructure, v: &[f64]) -> f64 {
    let powers = powers_of(st, scenario.num_bs(), v);
    weighted_utility(scenario, assoc, loads, &powers)
}

fn powers_of(st: &FullLoadStructure, nb: usize, v: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; nb];
    for &i in &st.active {
        p[i] = v[i].exp();
    }
    p
}

fn initial_log_powers(scenario: &Scenario, st: &FullLoadStructure, warm: Option<&[f64]>) -> Vec<f64> {
    let mut v = vec![f64::NEG_INFINITY; scenario.num_bs()];
    for &i in &st.active {
        let p = warm.map_or(0.5 * scenario.max_power[i], |w| w[i]);
        let p = if p > 0.0 { p.min(scenario.max_power[i]) } else { scenario.max_power[i] };
        v[i] = p.ln();
    }
    v
}

/// Loads from the association, powers from the transformed convex problem.
///
/// `warm` powers (per BS) seed the iteration; by default every active BS
/// starts at half its maximum. The returned utility is never below the
/// utility at the starting powers.
pub fn ldpc_solve(scenario: &Scenario, assoc: &Association, warm: Option<&[f64]>, options: &LdpcOptions) -> Result<LdpcResult> {
    let st = FullLoadStructure::new(scenario, assoc)?;
    let nb = scenario.num_bs();
    let nu = scenario.num_users();
    let w_ = &scenario.priorities;
    let loads = derive_load_from_association(assoc);

    let v0 = initial_log_powers(scenario, &st, warm);
    let initial_utility = utility_of(scenario, assoc, &loads, &st, &v0);

    // dual iteration, multipliers seeded from the warm start
    let (start, mut duals, _) = certify(&st, w_, &v0, nb);
    let mut u = start.u;
    let mut v = v0.clone();
    let mut best_v = v0.clone();
    let mut best_f = reduced_objective(&st, w_, &v0);
    let mut trace = vec![initial_utility];
    let mut scale = 1.0;
    let mut last_lagrangian = f64::INFINITY;
    let mut since_best = 0;
    let mut iterations = 0;
    for t in 1..=options.max_iter {
        iterations = t;
        let delta = scale * options.delta0 / (t as f64).sqrt();
        for j in 0..nu {
            let lsum: f64 = st.interferers(j).map(|k| duals.lambda[k][j]).sum();
            u[j] = f_inverse(-(duals.beta[j] + lsum) / w_[j], options.bisection_tol)?;
        }
        for &i in &st.active {
            let mut e = -duals.zeta[i];
            for &j in &st.served[i] {
                e -= duals.beta[j];
                for k in st.interferers(j) {
                    e -= duals.lambda[k][j];
                }
            }
            for j in 0..nu {
                if st.serving[j] != i {
                    e += duals.lambda[i][j];
                }
            }
            let lp = st.log_pmax[i];
            let floor = lp - options.v_floor_offset;
            v[i] = if e >= options.t_reg {
                lp
            } else if e > 0.0 {
                (1.0 + lp - options.t_reg / e).max(floor)
            } else {
                floor
            };
        }
        let mut wv = vec![0.0; nu];
        let mut sv = vec![vec![f64::NEG_INFINITY; nu]; nb];
        for j in 0..nu {
            wv[j] = ((-duals.beta[j]).max(1e-300) / duals.alpha[j]).ln();
            for k in st.interferers(j) {
                sv[k][j] = ((-duals.lambda[k][j]).max(1e-300) / duals.alpha[j]).ln();
            }
        }

        let fv = reduced_objective(&st, w_, &v);
        if fv > best_f {
            best_f = fv;
            best_v.copy_from_slice(&v);
            since_best = 0;
        } else {
            since_best += 1;
        }

        let mut lag: f64 = u.iter().zip(w_.iter()).map(|(&x, &w)| w * softplus(x).ln()).sum();
        for j in 0..nu {
            let bj = st.serving[j];
            let mut cons = wv[j].exp() - 1.0;
            for k in st.interferers(j) {
                cons += sv[k][j].exp();
                let eq = sv[k][j] - u[j] - v[k] + v[bj] - st.a[k][j];
                lag -= duals.lambda[k][j] * eq;
            }
            lag -= duals.alpha[j] * cons;
            lag -= duals.beta[j] * (wv[j] - u[j] + v[bj] - st.b[j]);
        }
        for &i in &st.active {
            lag -= duals.zeta[i] * (v[i] - st.log_pmax[i]);
        }
        if !lag.is_finite() || lag > last_lagrangian + 1e3 * (1.0 + last_lagrangian.abs()) {
            scale = (scale * 0.5).max(1e-6);
        }
        if lag.is_finite() {
            last_lagrangian = lag;
        }

        for j in 0..nu {
            let bj = st.serving[j];
            let mut cons = wv[j].exp() - 1.0;
            for k in st.interferers(j) {
                cons += sv[k][j].exp();
                duals.lambda[k][j] += delta * (sv[k][j] - u[j] - v[k] + v[bj] - st.a[k][j]);
                duals.lambda[k][j] = duals.lambda[k][j].min(0.0);
            }
            duals.alpha[j] = (duals.alpha[j] + delta * cons).max(1e-12);
            duals.beta[j] = (duals.beta[j] + delta * (wv[j] - u[j] + v[bj] - st.b[j])).min(0.0);
        }
        for &i in &st.active {
            duals.zeta[i] = (duals.zeta[i] + delta * (v[i] - st.log_pmax[i])).max(0.0);
        }
        if since_best >= options.stall_window {
            break;
        }
    }
    let dual_phase_utility = utility_of(scenario, assoc, &loads, &st, &best_v);
    trace.push(dual_phase_utility);

    let mut v = best_v;
    let polish_iterations = if options.polish { newton_polish(&st, w_, &mut v, 200) } else { 0 };
    let (primals, mut final_duals, kkt) = certify(&st, w_, &v, nb);
    let mut utility = utility_of(scenario, assoc, &loads, &st, &v);
    if !(utility >= initial_utility) {
        v = v0;
        utility = initial_utility;
    }
    trace.push(utility);
    final_duals.step_scale = scale;
    final_duals.iterations = iterations;
    let converged = kkt.max() <= options.kkt_tol;
    let powers = powers_of(&st, nb, &v);
    let state = NetworkState::with_allocation(assoc, w_, loads, powers);
    Ok(LdpcResult {
        state,
        duals: final_duals,
        primals,
        kkt,
        utility,
        initial_utility,
        dual_phase_utility,
        dual_iterations: iterations,
        polish_iterations,
        converged,
        trace,
    })
}

/// Cross-check solver: projected gradient ascent on log-powers using a
/// central-difference gradient of the weighted utility.
pub fn ldpc_projected_gradient(scenario: &Scenario, assoc: &Association, warm: Option<&[f64]>, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    let st = FullLoadStructure::new(scenario, assoc)?;
    let loads = derive_load_from_association(assoc);
    let mut v = initial_log_powers(scenario, &st, warm);
    let eval = |v: &[f64]| utility_of(scenario, assoc, &loads, &st, v);
    let mut value = eval(&v);
    let mut step = 1.0;
    let h = 1e-6;
    for _ in 0..max_iter {
        let mut grad = vec![0.0; scenario.num_bs()];
        for &i in &st.active {
            let mut up = v.clone();
            let mut dn = v.clone();
            up[i] += h;
            dn[i] -= h;
            grad[i] = (eval(&up) - eval(&dn)) / (2.0 * h);
        }
        let project = |v: &[f64], t: f64| -> Vec<f64> {
            let mut out = v.to_vec();
            for &i in &st.active {
                out[i] = (v[i] + t * grad[i]).min(st.log_pmax[i]);
            }
            out
        };
        let moved: f64 = st
            .active
            .iter()
            .map(|&i| (project(&v, 1.0)[i] - v[i]).abs())
            .fold(0.0, f64::max);
        if moved < 1e-10 {
            break;
        }
        let mut t = step * 2.0;
        let mut next = None;
        while t > 1e-16 {
            let cand = project(&v, t);
            let gain: f64 = st.active.iter().map(|&i| grad[i] * (cand[i] - v[i])).sum();
            let cv = eval(&cand);
            if cv >= value + 1e-4 * gain {
                next = Some((cand, cv, t));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cv, t)) = next else { break };
        let improvement = cv - value;
        v = cand;
        value = cv;
        step = t;
        if improvement < 1e-14 {
            break;
        }
    }
    Ok((powers_of(&st, scenario.num_bs(), &v), value))
}

pub const GRID_LIMIT: f64 = 1e8;

/// Maximum of the weighted utility over a uniform power grid
/// `{P_i m / n : m = 1..n}` on the active BSs, loads from the association.
pub fn power_grid_oracle(scenario: &Scenario, assoc: &Association, points: usize) -> Result<(Vec<f64>, f64)> {
    let st = FullLoadStructure::new(scenario, assoc)?;
    let loads = derive_load_from_association(assoc);
    let levels: Vec<Vec<f64>> = scenario
        .max_power
        .iter()
        .map(|&p| (1..=points).map(|m| p * m as f64 / points as f64).collect())
        .collect();
    let (p, u) = grid_search(scenario, assoc, &st.active, &levels, &loads)?;
    Ok((p, u))
}

fn grid_search(
    scenario: &Scenario,
    assoc: &Association,
    dims: &[usize],
    levels: &[Vec<f64>],
    loads: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let size: f64 = dims.iter().map(|&i| levels[i].len() as f64).product();
    if size > GRID_LIMIT {
        return Err(Error::TooLarge {
            what: "power grid",
            size,
            limit: GRID_LIMIT,
        });
    }
    let mut idx = vec![0usize; dims.len()];
    let mut powers = vec![0.0; scenario.num_bs()];
    let mut best = (powers.clone(), f64::NEG_INFINITY);
    loop {
        for (k, &i) in dims.iter().enumerate() {
            powers[i] = levels[i][idx[k]];
        }
        let u = weighted_utility(scenario, assoc, loads, &powers);
        if u > best.1 {
            best = (powers.clone(), u);
        }
        let mut k = 0;
        loop {
            if k == dims.len() {
                return Ok(best);
            }
            idx[k] += 1;
            if idx[k] < levels[dims[k]].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub loads: Vec<f64>,
    pub powers: Vec<f64>,
    pub utility: f64,
}

/// Exhaustive search over loads `{0, step, ..., 1}^I` and, for each load
/// point, a power grid with `power_points` levels per BS.
pub fn binary_load_grid_oracle(scenario: &Scenario, assoc: &Association, grid_step: f64, power_points: usize) -> Result<GridOptimum> {
    let nb = scenario.num_bs();
    let nu = scenario.num_users();
    if nb > 3 || nu > 6 {
        return Err(Error::TooLarge {
            what: "load grid instance",
            size: (nb * nu) as f64,
            limit: 18.0,
        });
    }
    let steps = (1.0 / grid_step).round() as usize;
    let load_levels: Vec<f64> = (0..=steps).map(|m| m as f64 / steps as f64).collect();
    let levels: Vec<Vec<f64>> = scenario
        .max_power
        .iter()
        .map(|&p| (1..=power_points).map(|m| p * m as f64 / power_points as f64).collect())
        .collect();
    let dims: Vec<usize> = (0..nb).collect();
    let total = (load_levels.len() as f64).powi(nb as i32) * (power_points as f64).powi(nb as i32);
    if total > GRID_LIMIT {
        return Err(Error::TooLarge {
            what: "load grid",
            size: total,
            limit: GRID_LIMIT,
        });
    }
    let mut best = GridOptimum {
        loads: vec![0.0; nb],
        powers: vec![0.0; nb],
        utility: f64::NEG_INFINITY,
    };
    let mut idx = vec![0usize; nb];
    loop {
        let loads: Vec<f64> = idx.iter().map(|&m| load_levels[m]).collect();
        let (p, u) = grid_search(scenario, assoc, &dims, &levels, &loads)?;
        if u > best.utility {
            best = GridOptimum { loads, powers: p, utility: u };
        }
        let mut k = 0;
        loop {
            if k == nb {
                return Ok(best);
            }
            idx[k] += 1;
            if idx[k] < load_levels.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
