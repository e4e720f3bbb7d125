//! Machine-readable reports and CSV plot data.
//!
//! CSV files and their columns:
//!
//! | file | columns |
//! |------|---------|
//! | `utility.csv` | algorithm, realizations, mean_utility, std_utility, nonconverged |
//! | `utility_per_seed.csv` | seed, then one column per algorithm |
//! | `cdf_<algo>.csv` | rate_bps, fraction |
//! | `gains_<algo>.csv` | p, gain (against msinr-mp) |
//! | `tiers.csv` | algorithm, macro_users, pico_users, femto_users, macro_power_w, pico_power_w, femto_power_w |
//! | `convergence.csv` | algorithm, seed, iteration, utility, vs_msinr |
//! | `rates.csv` (single run) | user, bs, rate_bps |
//! | `convergence.csv` (single run) | algorithm, iteration, utility, vs_msinr |
//!
//! Every trace starts from the max-SINR association at full power, so
//! `vs_msinr` is the utility gained over that starting point.
//!
//! Floats are written in shortest round-trip form, so identical inputs give
//! identical bytes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::campaign::CampaignSummary;
use crate::error::{Error, Result};
use crate::iulp::RunReport;

pub const RUN_JSON: &str = "run.json";
pub const CAMPAIGN_JSON: &str = "campaign.json";

/// Named file contents, written relative to an output directory.
pub type Files = Vec<(String, String)>;

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn run_csvs(report: &RunReport) -> Result<Files> {
    let rates = table(
        &["user", "bs", "rate_bps"],
        report
            .rates_bps
            .iter()
            .enumerate()
            .map(|(j, r)| vec![j.to_string(), report.association[j].to_string(), num(*r)]),
    )?;
    let start = report.utility_trace[0];
    let convergence = table(
        &["algorithm", "iteration", "utility", "vs_msinr"],
        report
            .utility_trace
            .iter()
            .enumerate()
            .map(|(t, v)| vec![report.algorithm.name().to_string(), t.to_string(), num(*v), num(v - start)]),
    )?;
    Ok(vec![("rates.csv".into(), rates), ("convergence.csv".into(), convergence)])
}

pub fn campaign_csvs(summary: &CampaignSummary) -> Result<Files> {
    let mut files = Vec::new();
    files.push((
        "utility.csv".to_string(),
        table(
            &["algorithm", "realizations", "mean_utility", "std_utility", "nonconverged"],
            summary.algorithms.iter().map(|a| {
                vec![
                    a.algorithm.name().to_string(),
                    summary.realizations.to_string(),
                    num(a.mean_utility),
                    num(a.std_utility),
                    a.nonconverged.to_string(),
                ]
            }),
        )?,
    ));
    let mut header = vec!["seed"];
    header.extend(summary.algorithms.iter().map(|a| a.algorithm.name()));
    files.push((
        "utility_per_seed.csv".to_string(),
        table(
            &header,
            (0..summary.realizations).map(|k| {
                let mut row = vec![(summary.base_seed + k as u64).to_string()];
                row.extend(summary.algorithms.iter().map(|a| num(a.utilities[k])));
                row
            }),
        )?,
    ));
    for a in &summary.algorithms {
        files.push((
            format!("cdf_{}.csv", a.algorithm.name()),
            table(&["rate_bps", "fraction"], a.cdf.iter().map(|p| vec![num(p.rate_bps), num(p.fraction)]))?,
        ));
        if !a.gains.is_empty() {
            files.push((
                format!("gains_{}.csv", a.algorithm.name()),
                table(&["p", "gain"], a.gains.iter().map(|g| vec![num(g.p), num(g.gain)]))?,
            ));
        }
    }
    files.push((
        "tiers.csv".to_string(),
        table(
            &["algorithm", "macro_users", "pico_users", "femto_users", "macro_power_w", "pico_power_w", "femto_power_w"],
            summary.algorithms.iter().map(|a| {
                let mut row = vec![a.algorithm.name().to_string()];
                row.extend(a.tiers.mean_users.iter().map(|v| num(*v)));
                row.extend(a.tiers.mean_power_w.iter().map(|v| num(*v)));
                row
            }),
        )?,
    ));
    let mut rows = Vec::new();
    for a in &summary.algorithms {
        for (k, trace) in a.traces.iter().enumerate() {
            for (t, v) in trace.iter().enumerate() {
                rows.push(vec![
                    a.algorithm.name().to_string(),
                    (summary.base_seed + k as u64).to_string(),
                    t.to_string(),
                    num(*v),
                    num(v - trace[0]),
                ]);
            }
        }
    }
    files.push(("convergence.csv".to_string(), table(&["algorithm", "seed", "iteration", "utility", "vs_msinr"], rows)?));
    Ok(files)
}

pub fn write_files(dir: &Path, files: &Files) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    let mut files = vec![(RUN_JSON.to_string(), to_json(report)?)];
    files.extend(run_csvs(report)?);
    write_files(dir, &files)
}

pub fn write_campaign(dir: &Path, summary: &CampaignSummary) -> Result<()> {
    let mut files = vec![(CAMPAIGN_JSON.to_string(), to_json(summary)?)];
    files.extend(campaign_csvs(summary)?);
    write_files(dir, &files)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Rewrites the CSV files of `dir` from its stored JSON report. Returns the
/// names written.
pub fn emit(dir: &Path) -> Result<Vec<String>> {
    let files = if dir.join(CAMPAIGN_JSON).exists() {
        campaign_csvs(&read_json::<CampaignSummary>(&dir.join(CAMPAIGN_JSON))?)?
    } else if dir.join(RUN_JSON).exists() {
        run_csvs(&read_json::<RunReport>(&dir.join(RUN_JSON))?)?
    } else {
        return Err(Error::Config(format!(
            "no {CAMPAIGN_JSON} or {RUN_JSON} in {}",
            dir.display()
        )));
    };
    write_files(dir, &files)?;
    Ok(files.into_iter().map(|(n, _)| n).collect())
}
