//! Acceptance criteria 1-10, one PASS/FAIL line each. Exits non-zero when
//! any criterion fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hetnet_core::campaign::{campaign_reports, summarize, CampaignSummary};
use hetnet_core::iulp::{Algorithm, IulpOptions, RunReport};
use hetnet_core::scenario::ScenarioConfig;
use hetnet_core::verify::{allocation_oracle, binary_load_oracle, dgp_oracle, icupa_oracle, iulp_convergence, ldpc_oracle, Check};

const REALIZATIONS: usize = 200;

struct Outcome {
    passed: bool,
    detail: String,
}

struct Campaign {
    reports: Vec<Vec<RunReport>>,
    summary: CampaignSummary,
    elapsed: Duration,
}

fn campaign() -> &'static Campaign {
    static CELL: OnceLock<Campaign> = OnceLock::new();
    CELL.get_or_init(|| {
        let started = Instant::now();
        let cfg = ScenarioConfig::default();
        let reports = campaign_reports(&cfg, &Algorithm::ALL, REALIZATIONS, 0, &IulpOptions::default()).expect("campaign runs");
        let summary = summarize(&cfg, &Algorithm::ALL, 0, &reports).expect("campaign summarizes");
        Campaign { reports, summary, elapsed: started.elapsed() }
    })
}

fn mean(algo: Algorithm) -> f64 {
    campaign().summary.get(algo).expect("algorithm in campaign").mean_utility
}

fn utility(row: &[RunReport], algo: Algorithm) -> f64 {
    row.iter().find(|r| r.algorithm == algo).expect("algorithm in row").utility
}

fn timed(check: Check, limit_s: f64) -> Outcome {
    Outcome {
        passed: check.passed && check.seconds < limit_s,
        detail: format!("{}; {:.1}s (limit {limit_s}s)", check.detail, check.seconds),
    }
}

fn band(name: &str, value: f64, target: f64) -> String {
    let (lo, hi) = (0.75 * target, 1.25 * target);
    let tag = if (lo..=hi).contains(&value) { "in" } else { "OUT of" };
    format!("soft: {name} mean {value:.2} {tag} [{lo:.2}, {hi:.2}]")
}

fn criterion_7() -> Outcome {
    let (m, d) = (mean(Algorithm::MsinrMp), mean(Algorithm::DgpMp));
    let secs = campaign().elapsed.as_secs_f64();
    Outcome {
        passed: d > m && secs < 15.0 * 60.0,
        detail: format!(
            "hard: mean dgp-mp {d:.3} > msinr-mp {m:.3}; {}; {}; campaign {secs:.1}s (limit 900s)",
            band("msinr-mp", m, 26.02),
            band("dgp-mp", d, 40.43)
        ),
    }
}

fn criterion_8() -> Outcome {
    let c = campaign();
    let pairs = [
        (Algorithm::Iulp, Algorithm::DgpMp),
        (Algorithm::IulpIcupa, Algorithm::Iulp),
        (Algorithm::MsinrMpIcupa, Algorithm::MsinrMp),
    ];
    let mut broken = Vec::new();
    for (a, b) in pairs {
        let n = c.reports.iter().filter(|row| utility(row, a) < utility(row, b) - 1e-9).count();
        if n > 0 {
            broken.push(format!("{a} < {b} on {n} seeds"));
        }
    }
    let secs = c.elapsed.as_secs_f64();
    Outcome {
        passed: broken.is_empty() && secs < 30.0 * 60.0,
        detail: format!(
            "hard: per-seed orderings iulp>=dgp-mp, iulp+icupa>=iulp, msinr-mp+icupa>=msinr-mp on {REALIZATIONS} seeds{}; {}; {}; {}",
            if broken.is_empty() { " hold".to_string() } else { format!(" broken: {}", broken.join(", ")) },
            band("iulp", mean(Algorithm::Iulp), 105.05),
            band("iulp+icupa", mean(Algorithm::IulpIcupa), 109.67),
            band("msinr-mp+icupa", mean(Algorithm::MsinrMpIcupa), 30.63)
        ),
    }
}

fn criterion_9() -> Outcome {
    let s = campaign().summary.get(Algorithm::Iulp).expect("iulp in campaign");
    let g = s.gains.iter().find(|g| (g.p - 0.1).abs() < 1e-12).expect("gain at p = 0.1").gain;
    Outcome {
        passed: (1.5..=3.5).contains(&g),
        detail: format!("iulp vs msinr-mp rate gain at p=0.1 is {g:.3} (band [1.5, 3.5])"),
    }
}

fn criterion_10() -> Outcome {
    let macro_users = |a: Algorithm| campaign().summary.get(a).expect("algorithm in campaign").tiers.mean_users[0];
    let (m, d, i) = (macro_users(Algorithm::MsinrMp), macro_users(Algorithm::DgpMp), macro_users(Algorithm::Iulp));
    Outcome {
        passed: m > d && m > i,
        detail: format!("mean macro users msinr-mp {m:.3}, dgp-mp {d:.3}, iulp {i:.3} (need msinr-mp above both)"),
    }
}

fn main() -> ExitCode {
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome>)> = vec![
        (1, Box::new(|| timed(allocation_oracle(50, 1).expect("allocation oracle runs"), 5.0))),
        (2, Box::new(|| timed(dgp_oracle(20, 2).expect("dgp oracle runs"), 10.0))),
        (3, Box::new(|| timed(binary_load_oracle(10, 3).expect("binary load oracle runs"), 60.0))),
        (4, Box::new(|| timed(ldpc_oracle(10, 4).expect("ldpc oracle runs"), 120.0))),
        (5, Box::new(|| timed(icupa_oracle(50, 5).expect("icupa oracle runs"), 60.0))),
        (6, Box::new(|| timed(iulp_convergence(100, 0).expect("iulp sweep runs"), 600.0))),
        (7, Box::new(criterion_7)),
        (8, Box::new(criterion_8)),
        (9, Box::new(criterion_9)),
        (10, Box::new(criterion_10)),
    ];
    let mut failed = Vec::new();
    for (n, run) in criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        println!("criterion {n:>2} {}: {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail);
        if !outcome.passed {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
