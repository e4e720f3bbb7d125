//! Inner-cell unequal power allocation.
//!
//! Each fully loaded BS keeps its average power `P*` (so interference seen by
//! other cells is unchanged) and redistributes resource fractions `y_j` and
//! power shares `q_j = y_j p_j` among its own users:
//!
//! ```text
//!   max  sum_j w_j ln( y_j ln(1 + q_j g_j / (I_j y_j)) )
//!   s.t. sum_j y_j = 1,  sum_j q_j = P*
//! ```
//!
//! For multipliers `(psi, phi)` the stationary `y_j` is the root of
//! `h(y) = 1 - psi y / w - fbar(g (w - psi y) / (I y phi))` and
//! `q_j = (w - psi y_j) / phi`. The multipliers minimize the dual function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interference_plus_noise, network_utility, Association, NetworkState, Scenario};

/// `x / ((1 + x) ln(1 + x))` for `x > 0`.
pub fn fbar_of(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(x));
    }
    Ok(fbar(x))
}

fn fbar(x: f64) -> f64 {
    if x < 1e-6 {
        1.0 - 0.5 * x + 5.0 / 12.0 * x * x
    } else {
        x / ((1.0 + x) * x.ln_1p())
    }
}

fn fbar_prime(x: f64) -> f64 {
    if x < 1e-6 {
        -0.5 + 5.0 / 6.0 * x
    } else {
        let l = x.ln_1p();
        (l - x) / ((1.0 + x) * (1.0 + x) * l * l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProblem {
    pub bs: usize,
    pub users: Vec<usize>,
    pub priorities: Vec<f64>,
    pub gains: Vec<f64>,
    /// Interference plus noise of each user, watts.
    pub ipn: Vec<f64>,
    pub budget: f64,
}

impl CellProblem {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    fn x_of(&self, j: usize, y: f64, psi: f64, phi: f64) -> f64 {
        self.gains[j] * (self.priorities[j] - psi * y) / (self.ipn[j] * y * phi)
    }

    fn h(&self, j: usize, y: f64, psi: f64, phi: f64) -> f64 {
        1.0 - psi * y / self.priorities[j] - fbar(self.x_of(j, y, psi, phi))
    }

    /// `sum_j w_j ln(y_j ln(1 + q_j g_j / (I_j y_j)))`.
    pub fn utility(&self, y: &[f64], q: &[f64]) -> f64 {
        (0..self.len())
            .map(|j| {
                let snr = q[j] * self.gains[j] / (self.ipn[j] * y[j]);
                self.priorities[j] * (y[j] * snr.ln_1p()).ln()
            })
            .sum()
    }
}

/// Stationary `y_j` for given multipliers by bisection on `h`.
pub fn solve_y_bisection(cell: &CellProblem, j: usize, psi: f64, phi: f64, tol: f64) -> Result<f64> {
    let w = cell.priorities[j];
    let top = w / psi;
    let eps = 1e-12 * top;
    let (mut lo, mut hi) = (eps, top - eps);
    let (h_lo, h_hi) = (cell.h(j, lo, psi, phi), cell.h(j, hi, psi, phi));
    if !(h_lo > 0.0 && h_hi < 0.0) {
        return Err(Error::NoRoot { user: cell.users[j] });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let hm = cell.h(j, mid, psi, phi);
        if hm.abs() <= tol || hi - lo <= 4.0 * f64::EPSILON * mid {
            return Ok(mid);
        }
        if hm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcupaOptions {
    pub kappa0: f64,
    pub bisection_tol: f64,
    /// Tolerance on `|sum y - 1|` and on `|sum q - P*| / max(P*, 1)`.
    pub constraint_tol: f64,
    pub max_iter: usize,
}

impl Default for IcupaOptions {
    fn default() -> Self {
        Self {
            kappa0: 0.1,
            bisection_tol: 1e-12,
            constraint_tol: 1e-10,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellKkt {
    pub simplex: f64,
    pub budget: f64,
    /// `max_j |h_j|`.
    pub stationarity_y: f64,
    /// `max_j |phi q_j / w_j - fbar(x_j)|`.
    pub stationarity_q: f64,
}

impl CellKkt {
    pub fn max(&self) -> f64 {
        self.simplex.max(self.budget).max(self.stationarity_y).max(self.stationarity_q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub fractions: Vec<f64>,
    pub shares: Vec<f64>,
    pub powers: Vec<f64>,
    pub psi: f64,
    pub phi: f64,
    pub iterations: usize,
    pub kkt: CellKkt,
    pub utility: f64,
    /// Cell utility with `y = 1/n` and `p = P*` for every user.
    pub equal_power_utility: f64,
    pub converged: bool,
}

struct Response {
    y: Vec<f64>,
    q: Vec<f64>,
    dual: f64,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
}

fn respond(cell: &CellProblem, psi: f64, phi: f64, tol: f64) -> Result<Response> {
    let n = cell.len();
    let mut y = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut dual = psi + phi * cell.budget;
    let mut jac = [[0.0; 2]; 2];
    for j in 0..n {
        let w = cell.priorities[j];
        let yj = solve_y_bisection(cell, j, psi, phi, tol)?;
        let qj = (w - psi * yj) / phi;
        let x = cell.x_of(j, yj, psi, phi);
        let fp = fbar_prime(x);
        let a = cell.gains[j] / (cell.ipn[j] * phi);
        let h_y = -psi / w + fp * a * w / (yj * yj);
        let h_psi = -yj / w + fp * a;
        let h_phi = fp * x / phi;
        let y_psi = -h_psi / h_y;
        let y_phi = -h_phi / h_y;
        let q_psi = (-yj - psi * y_psi) / phi;
        let q_phi = -psi * y_phi / phi - qj / phi;
        jac[0][0] += y_psi;
        jac[0][1] += y_phi;
        jac[1][0] += q_psi;
        jac[1][1] += q_phi;
        dual += w * (yj * x.ln_1p()).ln() - psi * yj - phi * qj;
        y[j] = yj;
        q[j] = qj;
    }
    let grad = [1.0 - y.iter().sum::<f64>(), cell.budget - q.iter().sum::<f64>()];
    let hess = [[-jac[0][0], -jac[0][1]], [-jac[1][0], -jac[1][1]]];
    Ok(Response { y, q, dual, grad, hess })
}

fn kkt_of(cell: &CellProblem, r: &Response, psi: f64, phi: f64) -> CellKkt {
    let mut kkt = CellKkt {
        simplex: r.grad[0].abs(),
        budget: r.grad[1].abs() / cell.budget.max(1.0),
        ..Default::default()
    };
    for j in 0..cell.len() {
        let x = cell.x_of(j, r.y[j], psi, phi);
        kkt.stationarity_y = kkt.stationarity_y.max(cell.h(j, r.y[j], psi, phi).abs());
        kkt.stationarity_q = kkt.stationarity_q.max((phi * r.q[j] / cell.priorities[j] - fbar(x)).abs());
    }
    kkt
}

/// Dual method for one cell: Newton steps on the two multipliers with a
/// backtracking line search, falling back to `kappa0 / sqrt(t)` gradient steps.
pub fn icupa_solve_cell(cell: &CellProblem, options: &IcupaOptions) -> Result<CellSolution> {
    let n = cell.len();
    if n == 0 || !(cell.budget > 0.0) {
        return Err(Error::InvalidScenario(format!("cell of BS {} has no users or no power", cell.bs)));
    }
    let eq_y = vec![1.0 / n as f64; n];
    let eq_q = vec![cell.budget / n as f64; n];
    let equal_power_utility = cell.utility(&eq_y, &eq_q);
    if n == 1 {
        return Ok(CellSolution {
            fractions: vec![1.0],
            shares: vec![cell.budget],
            powers: vec![cell.budget],
            psi: cell.priorities[0],
            phi: cell.priorities[0] / cell.budget,
            iterations: 0,
            kkt: CellKkt::default(),
            utility: equal_power_utility,
            equal_power_utility,
            converged: true,
        });
    }

    let wsum: f64 = cell.priorities.iter().sum();
    let (mut psi, mut phi) = (wsum, wsum / cell.budget);
    let mut r = respond(cell, psi, phi, options.bisection_tol)?;
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=options.max_iter {
        iterations = t;
        if r.grad[0].abs() <= options.constraint_tol && r.grad[1].abs() <= options.constraint_tol * cell.budget.max(1.0) {
            converged = true;
            break;
        }
        let [[a, b], [c, d]] = r.hess;
        let det = a * d - b * c;
        let newton = (a > 0.0 && det > 0.0).then(|| {
            let dp = -(d * r.grad[0] - b * r.grad[1]) / det;
            let df = -(-c * r.grad[0] + a * r.grad[1]) / det;
            [dp, df]
        });
        let kappa = options.kappa0 / (t as f64).sqrt();
        let gradient = [-kappa * r.grad[0], -kappa * r.grad[1]];
        let mut moved = false;
        for dir in newton.into_iter().chain(std::iter::once(gradient)) {
            let slope = r.grad[0] * dir[0] + r.grad[1] * dir[1];
            let mut step = 1.0;
            for _ in 0..60 {
                let (np, nf) = (psi + step * dir[0], phi + step * dir[1]);
                if np > 0.0 && nf > 0.0 {
                    // NoRoot: treat as a rejected step and damp
                    if let Ok(cand) = respond(cell, np, nf, options.bisection_tol) {
                        // near the optimum the dual decrease drops below rounding,
                        // so a smaller constraint residual also counts
                        let sufficient = cand.dual <= r.dual + 1e-4 * step * slope.min(0.0);
                        let tiny = cand.dual <= r.dual + 1e-12 * r.dual.abs().max(1.0)
                            && cand.grad[0].hypot(cand.grad[1] / cell.budget) < r.grad[0].hypot(r.grad[1] / cell.budget);
                        if sufficient || tiny {
                            psi = np;
                            phi = nf;
                            r = cand;
                            moved = true;
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    if !converged {
        converged = r.grad[0].abs() <= options.constraint_tol && r.grad[1].abs() <= options.constraint_tol * cell.budget.max(1.0);
    }
    // remove the last rounding-level drift from the constraints
    let ys: f64 = r.y.iter().sum();
    let qs: f64 = r.q.iter().sum();
    if converged {
        r.y.iter_mut().for_each(|y| *y /= ys);
        r.q.iter_mut().for_each(|q| *q *= cell.budget / qs);
        r.grad = [1.0 - r.y.iter().sum::<f64>(), cell.budget - r.q.iter().sum::<f64>()];
    }
    let kkt = kkt_of(cell, &r, psi, phi);
    let utility = cell.utility(&r.y, &r.q);
    let powers = r.q.iter().zip(&r.y).map(|(q, y)| q / y).collect();
    Ok(CellSolution {
        fractions: r.y,
        shares: r.q,
        powers,
        psi,
        phi,
        iterations,
        kkt,
        utility,
        equal_power_utility,
        converged,
    })
}

/// Cell problem of `bs` under the given state (interference frozen).
pub fn cell_problem(scenario: &Scenario, assoc: &Association, state: &NetworkState, bs: usize) -> CellProblem {
    let users = assoc.served_by(bs);
    CellProblem {
        bs,
        priorities: users.iter().map(|&j| scenario.priorities[j]).collect(),
        gains: users.iter().map(|&j| scenario.gains[bs][j]).collect(),
        ipn: users
            .iter()
            .map(|&j| interference_plus_noise(scenario, &state.loads, &state.bs_power, bs, j))
            .collect(),
        budget: state.bs_power[bs],
        users,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcupaOutcome {
    pub state: NetworkState,
    pub cells: Vec<CellSolution>,
    pub utility_before: f64,
    pub utility_after: f64,
    pub converged: bool,
}

/// Runs the cell solver on every loaded BS and assembles per-user powers.
/// A cell whose solution does not beat its current allocation keeps it.
pub fn icupa_all(scenario: &Scenario, assoc: &Association, state: &NetworkState, options: &IcupaOptions) -> Result<IcupaOutcome> {
    let utility_before = network_utility(scenario, state, assoc)?.value;
    let mut next = state.clone();
    let mut user_power = vec![0.0; scenario.num_users()];
    for (j, &i) in assoc.serving().iter().enumerate() {
        user_power[j] = state.user_power.as_ref().map_or(state.bs_power[i], |p| p[j]);
    }
    let mut cells = Vec::new();
    let mut converged = true;
    for bs in 0..scenario.num_bs() {
        if state.loads[bs] <= 0.0 || assoc.served_by(bs).is_empty() {
            continue;
        }
        let cell = cell_problem(scenario, assoc, state, bs);
        let sol = icupa_solve_cell(&cell, options).map_err(|e| Error::Cell { bs, source: Box::new(e) })?;
        let current_y: Vec<f64> = cell.users.iter().map(|&j| state.fractions[bs][j]).collect();
        let current_q: Vec<f64> = cell.users.iter().zip(&current_y).map(|(&j, y)| y * user_power[j]).collect();
        let current = cell.utility(&current_y, &current_q);
        converged &= sol.converged;
        if sol.utility > current {
            for (k, &j) in cell.users.iter().enumerate() {
                next.fractions[bs][j] = sol.fractions[k];
                user_power[j] = sol.powers[k];
            }
        }
        cells.push(sol);
    }
    next.user_power = Some(user_power);
    let utility_after = network_utility(scenario, &next, assoc)?.value;
    Ok(IcupaOutcome {
        state: next,
        cells,
        utility_before,
        utility_after,
        converged,
    })
}

/// Optimal shares for fixed fractions: bisection on the budget multiplier,
/// with each share from `(1 + t) ln(1 + t) = w c / phi`, `t = c q`.
fn shares_for_fractions(cell: &CellProblem, y: &[f64]) -> Vec<f64> {
    let n = cell.len();
    let c: Vec<f64> = (0..n).map(|j| cell.gains[j] / (cell.ipn[j] * y[j])).collect();
    let share = |j: usize, phi: f64| -> f64 {
        let k = cell.priorities[j] * c[j] / phi;
        // z e^z = k with z = ln(1 + t); Newton from above
        if !(k > 0.0) {
            return 0.0;
        }
        let mut z = k.ln_1p();
        for _ in 0..100 {
            let ez = z.exp();
            let step = (z * ez - k) / (ez * (1.0 + z));
            z -= step;
            if step.abs() < 1e-15 * z.max(1.0) {
                break;
            }
        }
        z.exp_m1() / c[j]
    };
    let total = |phi: f64| (0..n).map(|j| share(j, phi)).sum::<f64>();
    let (mut lo, mut hi) = (1e-300f64, 1.0f64);
    while total(hi) > cell.budget {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = (lo * hi).sqrt();
        if total(mid) > cell.budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-15 {
            break;
        }
    }
    let q: Vec<f64> = (0..n).map(|j| share(j, hi)).collect();
    let s: f64 = q.iter().sum();
    q.iter().map(|v| v * cell.budget / s).collect()
}

/// Grid search over the fraction simplex (coarse step, then local refines
/// down to `fine` spacing), with optimal shares for each grid point.
pub fn cell_grid_oracle(cell: &CellProblem, coarse: f64, fine: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = cell.len();
    if n == 0 || n > 5 {
        return Err(Error::TooLarge {
            what: "cell grid",
            size: n as f64,
            limit: 5.0,
        });
    }
    let eval = |y: &[f64]| -> Option<(Vec<f64>, f64)> {
        if y.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let q = shares_for_fractions(cell, y);
        Some((q.clone(), cell.utility(y, &q)))
    };
    let steps = (1.0 / coarse).round() as usize;
    let mut best: (Vec<f64>, Vec<f64>, f64) = (vec![], vec![], f64::NEG_INFINITY);
    let consider = |y: Vec<f64>, best: &mut (Vec<f64>, Vec<f64>, f64)| {
        if let Some((q, u)) = eval(&y) {
            if u > best.2 {
                *best = (y, q, u);
            }
        }
    };
    let mut idx = vec![1usize; n - 1];
    loop {
        let used: usize = idx.iter().sum();
        if used < steps {
            let mut y: Vec<f64> = idx.iter().map(|&m| m as f64 / steps as f64).collect();
            y.push((steps - used) as f64 / steps as f64);
            consider(y, &mut best);
        }
        let mut k = 0;
        loop {
            if k == n - 1 {
                break;
            }
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 1;
            k += 1;
        }
        if k == n - 1 {
            break;
        }
    }
    if n == 1 {
        consider(vec![1.0], &mut best);
    }
    // shrink the lattice by 4x per pass around the incumbent, ending at `fine`
    let mut spacing = coarse;
    while spacing > fine * (1.0 + 1e-9) {
        let next = (spacing / 4.0).max(fine);
        let centre = best.0.clone();
        let half = (spacing / next).ceil() as i64;
        let mut off = vec![-half; n - 1];
        loop {
            let mut y: Vec<f64> = (0..n - 1).map(|k| centre[k] + off[k] as f64 * next).collect();
            let rest = 1.0 - y.iter().sum::<f64>();
            y.push(rest);
            consider(y, &mut best);
            let mut k = 0;
            loop {
                if k == n - 1 {
                    break;
                }
                off[k] += 1;
                if off[k] <= half {
                    break;
                }
                off[k] = -half;
                k += 1;
            }
            if k == n - 1 {
                break;
            }
        }
        spacing = next;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cell(priorities: Vec<f64>, gains: Vec<f64>, ipn: Vec<f64>, budget: f64) -> CellProblem {
        CellProblem {
            bs: 0,
            users: (0..priorities.len()).collect(),
            priorities,
            gains,
            ipn,
            budget,
        }
    }

    fn random_cell(rng: &mut ChaCha8Rng, n: usize) -> CellProblem {
        cell(
            (0..n).map(|_| if rng.gen_bool(0.4) { 2.0 } else { 1.0 }).collect(),
            (0..n).map(|_| 10f64.powf(-rng.gen_range(9.0..12.0))).collect(),
            (0..n).map(|_| 4e-14 * 10f64.powf(rng.gen_range(0.0..3.0))).collect(),
            rng.gen_range(1.0..40.0),
        )
    }

    #[test]
    fn fbar_examples() {
        let e = std::f64::consts::E;
        assert!((fbar_of(e - 1.0).unwrap() - (e - 1.0) / e).abs() < 1e-15);
        assert!((fbar_of(1e-9).unwrap() - (1.0 - 5e-10)).abs() < 1e-15);
        assert!(matches!(fbar_of(0.0), Err(Error::DomainError(_))));
        // series and closed form agree at the switch
        let x: f64 = 1e-6;
        assert!((fbar(x) - x / ((1.0 + x) * x.ln_1p())).abs() < 1e-12);
        assert!((fbar_prime(x) - (fbar(x + 1e-9) - fbar(x - 1e-9)) / 2e-9).abs() < 1e-6);
        let x: f64 = 0.3;
        assert!((fbar_prime(x) - (fbar(x + 1e-6) - fbar(x - 1e-6)) / 2e-6).abs() < 1e-8);
    }

    #[test]
    fn root_contract_and_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cell(&mut rng, 3);
        let (psi, phi) = (3.0, 3.0 / c.budget);
        for j in 0..3 {
            let y = solve_y_bisection(&c, j, psi, phi, 1e-12).unwrap();
            assert!(c.h(j, y, psi, phi).abs() < 1e-8);
            let top = c.priorities[j] / psi;
            let n = (top / 1e-6) as usize;
            let crossing = (1..n).find(|&m| c.h(j, m as f64 * 1e-6, psi, phi) <= 0.0).unwrap();
            assert!((crossing as f64 * 1e-6 - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn single_user_cell() {
        let c = cell(vec![2.0], vec![1e-10], vec![1e-13], 5.0);
        let s = icupa_solve_cell(&c, &IcupaOptions::default()).unwrap();
        assert_eq!(s.fractions, vec![1.0]);
        assert_eq!(s.powers, vec![5.0]);
    }

    #[test]
    fn symmetric_cell_splits_evenly() {
        let c = cell(vec![1.0, 1.0], vec![1e-10, 1e-10], vec![1e-13, 1e-13], 4.0);
        let s = icupa_solve_cell(&c, &IcupaOptions::default()).unwrap();
        assert!(s.converged);
        for k in 0..2 {
            assert!((s.fractions[k] - 0.5).abs() < 1e-9);
            assert!((s.powers[k] - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn random_cells_meet_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let n = rng.gen_range(2..8);
            let c = random_cell(&mut rng, n);
            let s = icupa_solve_cell(&c, &IcupaOptions::default()).unwrap();
            assert!(s.converged, "{:?}", s.kkt);
            assert!(s.kkt.max() <= 1e-6);
            assert!((s.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((s.shares.iter().sum::<f64>() - c.budget).abs() < 1e-9 * c.budget.max(1.0));
            assert!(s.utility >= s.equal_power_utility - 1e-12);
            assert!(s.psi > 0.0 && s.phi > 0.0);
            for (k, &y) in s.fractions.iter().enumerate() {
                assert!(y < c.priorities[k] / s.psi);
            }
        }
    }

    #[test]
    fn perspective_is_midpoint_concave() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = |y: f64, q: f64| y * (1.0 + 3.0 * q / y).ln();
        for _ in 0..100 {
            let (y1, q1, y2, q2) = (rng.gen_range(0.01..1.0), rng.gen_range(0.0..10.0), rng.gen_range(0.01..1.0), rng.gen_range(0.0..10.0));
            let mid = f(0.5 * (y1 + y2), 0.5 * (q1 + q2));
            assert!(mid >= 0.5 * (f(y1, q1) + f(y2, q2)) - 1e-9);
        }
    }

    #[test]
    fn three_user_cell_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_cell(&mut rng, 3);
        let s = icupa_solve_cell(&c, &IcupaOptions::default()).unwrap();
        let (_, _, g) = cell_grid_oracle(&c, 1e-2, 1e-3).unwrap();
        assert!((s.utility - g).abs() < 1e-3, "{} vs {g}", s.utility);
        assert!(s.utility >= g - 1e-9);
    }
}
