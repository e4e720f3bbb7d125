//! Network snapshot generation and the JSON scenario file format.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scenario, Tier};

/// Links shorter than this are clamped before taking `log10`.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierPowers {
    pub macro_dbm: f64,
    pub pico_dbm: f64,
    pub femto_dbm: f64,
}

impl TierPowers {
    pub fn get(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Macro => self.macro_dbm,
            Tier::Pico => self.pico_dbm,
            Tier::Femto => self.femto_dbm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityValues {
    pub high: f64,
    pub low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub macro_count: usize,
    pub pico_count: usize,
    pub femto_count: usize,
    pub tier_power_dbm: TierPowers,
    /// Explicit BS coordinates in metres, macros first, then picos, then femtos.
    pub bs_positions: Option<Vec<[f64; 2]>>,
    pub cell_radius: f64,
    pub user_count: usize,
    pub high_priority_count: usize,
    pub priority_values: PriorityValues,
    pub shadow_std_db: f64,
    pub noise_dbm: f64,
    pub rb_count: u32,
    pub rb_bandwidth_hz: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            macro_count: 1,
            pico_count: 2,
            femto_count: 2,
            tier_power_dbm: TierPowers {
                macro_dbm: 46.0,
                pico_dbm: 38.0,
                femto_dbm: 30.0,
            },
            bs_positions: None,
            cell_radius: 500.0,
            user_count: 50,
            high_priority_count: 20,
            priority_values: PriorityValues { high: 2.0, low: 1.0 },
            shadow_std_db: 8.0,
            noise_dbm: -104.0,
            rb_count: 55,
            rb_bandwidth_hz: 180e3,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn num_bs(&self) -> usize {
        self.macro_count + self.pico_count + self.femto_count
    }

    pub fn tiers(&self) -> Vec<Tier> {
        std::iter::repeat(Tier::Macro)
            .take(self.macro_count)
            .chain(std::iter::repeat(Tier::Pico).take(self.pico_count))
            .chain(std::iter::repeat(Tier::Femto).take(self.femto_count))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bs() == 0 {
            return Err(Error::Config("at least one base station is required".into()));
        }
        if self.user_count == 0 {
            return Err(Error::Config("user_count must be positive".into()));
        }
        if self.high_priority_count > self.user_count {
            return Err(Error::Config(format!(
                "high_priority_count {} exceeds user_count {}",
                self.high_priority_count, self.user_count
            )));
        }
        if !(self.cell_radius.is_finite() && self.cell_radius > 0.0) {
            return Err(Error::Config("cell_radius must be positive".into()));
        }
        if !(self.shadow_std_db.is_finite() && self.shadow_std_db >= 0.0) {
            return Err(Error::Config("shadow_std_db must be non-negative".into()));
        }
        let pv = self.priority_values;
        if !(pv.high > 0.0 && pv.low > 0.0) {
            return Err(Error::Config("priority values must be positive".into()));
        }
        if self.rb_count == 0 || !(self.rb_bandwidth_hz > 0.0) {
            return Err(Error::Config("rb_count and rb_bandwidth_hz must be positive".into()));
        }
        if let Some(pos) = &self.bs_positions {
            if pos.len() != self.num_bs() {
                return Err(Error::Config(format!(
                    "{} bs_positions given for {} base stations",
                    pos.len(),
                    self.num_bs()
                )));
            }
        }
        Ok(())
    }

    /// Reads a JSON config; absent keys take their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| json_parse_error(&e, "config"))
    }

    /// Default layout: macros at the origin, picos evenly on a circle of radius
    /// r/2 starting at angle 0, femtos on the same circle starting at pi/2.
    /// With the default counts this is macro (0,0), picos (+-r/2, 0), femtos (0, +-r/2).
    pub fn default_bs_positions(&self) -> Vec<[f64; 2]> {
        let r = self.cell_radius;
        let ring = |count: usize, radius: f64, phase: f64| -> Vec<[f64; 2]> {
            (0..count)
                .map(|k| {
                    let a = phase + 2.0 * PI * k as f64 / count as f64;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect()
        };
        let mut pos = vec![[0.0, 0.0]];
        pos.extend(ring(self.macro_count.saturating_sub(1), r, 0.0));
        pos.truncate(self.macro_count);
        pos.extend(ring(self.pico_count, r / 2.0, 0.0));
        pos.extend(ring(self.femto_count, r / 2.0, PI / 2.0));
        pos
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub bs_xy: Vec<[f64; 2]>,
    pub user_xy: Vec<[f64; 2]>,
}

/// Large-scale path loss in dB; `distance_m` is clamped to 1 m.
pub fn pathloss_db(tier: Tier, distance_m: f64) -> f64 {
    let d = distance_m.max(MIN_LINK_DISTANCE_M);
    match tier {
        Tier::Macro | Tier::Pico => 34.0 + 40.0 * d.log10(),
        Tier::Femto => 37.0 + 30.0 * d.log10(),
    }
}

pub fn dbm_to_watt(x_dbm: f64) -> f64 {
    10f64.powf((x_dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws one network snapshot. Deterministic in `config` (including its seed).
///
/// Draw order: user positions (uniform in the macro disc), then one shadowing
/// sample per link in `[bs][user]` order, then the high-priority subset.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<(Scenario, Placement)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let tiers = config.tiers();
    let bs_xy = config.bs_positions.clone().unwrap_or_else(|| config.default_bs_positions());

    let r = config.cell_radius;
    let user_xy: Vec<[f64; 2]> = (0..config.user_count)
        .map(|_| {
            let rad = r * rng.gen::<f64>().sqrt();
            let ang = 2.0 * PI * rng.gen::<f64>();
            [rad * ang.cos(), rad * ang.sin()]
        })
        .collect();

    let shadow = Normal::new(0.0, config.shadow_std_db).map_err(|e| Error::Config(e.to_string()))?;
    let mut gains = Vec::with_capacity(tiers.len());
    for (i, &tier) in tiers.iter().enumerate() {
        let row = user_xy
            .iter()
            .map(|&u| {
                let loss = pathloss_db(tier, distance(bs_xy[i], u)) + shadow.sample(&mut rng);
                10f64.powf(-loss / 10.0)
            })
            .collect();
        gains.push(row);
    }

    let mut priorities = vec![config.priority_values.low; config.user_count];
    for j in sample(&mut rng, config.user_count, config.high_priority_count).iter() {
        priorities[j] = config.priority_values.high;
    }

    let scenario = Scenario {
        gains,
        max_power: tiers.iter().map(|&t| dbm_to_watt(config.tier_power_dbm.get(t))).collect(),
        priorities,
        noise: dbm_to_watt(config.noise_dbm),
        rb_count: config.rb_count,
        rb_bandwidth: config.rb_bandwidth_hz,
        tiers,
    };
    scenario.validate()?;
    Ok((scenario, Placement { bs_xy, user_xy }))
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsEntry {
    pub tier: Tier,
    pub power_dbm: f64,
    pub xy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub xy: [f64; 2],
    pub priority: f64,
}

/// On-disk scenario document. When `gains` is absent the gains follow from
/// geometry and path loss alone (no shadowing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub bs: Vec<BsEntry>,
    pub users: Vec<UserEntry>,
    pub noise_dbm: f64,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "B_hz")]
    pub b_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<Vec<f64>>>,
}

// dBm values are written at a fixed precision so that repeated
// save/load cycles produce identical bytes.
fn canonical_dbm(watts: f64) -> f64 {
    (watt_to_dbm(watts) * 1e9).round() / 1e9
}

impl ScenarioFile {
    pub fn from_scenario(scenario: &Scenario, placement: &Placement) -> Self {
        Self {
            bs: scenario
                .tiers
                .iter()
                .zip(&scenario.max_power)
                .zip(&placement.bs_xy)
                .map(|((&tier, &p), &xy)| BsEntry {
                    tier,
                    power_dbm: canonical_dbm(p),
                    xy,
                })
                .collect(),
            users: scenario
                .priorities
                .iter()
                .zip(&placement.user_xy)
                .map(|(&priority, &xy)| UserEntry { xy, priority })
                .collect(),
            noise_dbm: canonical_dbm(scenario.noise),
            k: scenario.rb_count,
            b_hz: scenario.rb_bandwidth,
            gains: Some(scenario.gains.clone()),
        }
    }

    pub fn into_scenario(self) -> Result<(Scenario, Placement)> {
        let gains = match self.gains {
            Some(g) => g,
            None => self
                .bs
                .iter()
                .map(|b| {
                    self.users
                        .iter()
                        .map(|u| 10f64.powf(-pathloss_db(b.tier, distance(b.xy, u.xy)) / 10.0))
                        .collect()
                })
                .collect(),
        };
        let scenario = Scenario {
            gains,
            max_power: self.bs.iter().map(|b| dbm_to_watt(b.power_dbm)).collect(),
            priorities: self.users.iter().map(|u| u.priority).collect(),
            noise: dbm_to_watt(self.noise_dbm),
            rb_count: self.k,
            rb_bandwidth: self.b_hz,
            tiers: self.bs.iter().map(|b| b.tier).collect(),
        };
        scenario.validate()?;
        let placement = Placement {
            bs_xy: self.bs.iter().map(|b| b.xy).collect(),
            user_xy: self.users.iter().map(|u| u.xy).collect(),
        };
        Ok((scenario, placement))
    }
}

fn field_hint(message: &str, context: &str) -> String {
    // serde reports e.g. "missing field `priority`"
    let named = message.split('`').nth(1).unwrap_or(context);
    match named {
        "priority" => "priorities".to_string(),
        other => other.to_string(),
    }
}

fn json_parse_error(e: &serde_json::Error, context: &str) -> Error {
    let message = e.to_string();
    Error::Parse {
        field: field_hint(&message, context),
        line: e.line(),
        column: e.column(),
        message,
    }
}

pub fn parse_scenario(text: &str) -> Result<(Scenario, Placement)> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| json_parse_error(&e, "scenario"))?;
    file.into_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<(Scenario, Placement)> {
    parse_scenario(&fs::read_to_string(path)?)
}

pub fn scenario_to_json(scenario: &Scenario, placement: &Placement) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&ScenarioFile::from_scenario(scenario, placement))?;
    text.push('\n');
    Ok(text)
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario, placement: &Placement) -> Result<()> {
    fs::write(path, scenario_to_json(scenario, placement)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pathloss_examples() {
        assert!((pathloss_db(Tier::Macro, 100.0) - 114.0).abs() < 1e-12);
        assert!((pathloss_db(Tier::Pico, 100.0) - 114.0).abs() < 1e-12);
        assert!((pathloss_db(Tier::Femto, 100.0) - 97.0).abs() < 1e-12);
        assert_eq!(pathloss_db(Tier::Macro, 1.0), 34.0);
        assert_eq!(pathloss_db(Tier::Macro, 0.0), 34.0);
    }

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watt(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watt(46.0) - 39.81).abs() < 0.01);
        assert!((dbm_to_watt(-104.0) - 3.981e-14).abs() < 1e-17);
        assert!((watt_to_dbm(dbm_to_watt(38.0)) - 38.0).abs() < 1e-12);
    }

    #[test]
    fn default_layout() {
        let cfg = ScenarioConfig::default();
        let pos = cfg.default_bs_positions();
        let expect = [[0.0, 0.0], [250.0, 0.0], [-250.0, 0.0], [0.0, 250.0], [0.0, -250.0]];
        for (p, e) in pos.iter().zip(expect) {
            assert!((p[0] - e[0]).abs() < 1e-9 && (p[1] - e[1]).abs() < 1e-9, "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig { rng_seed: 42, ..Default::default() };
        let (a, pa) = generate_scenario(&cfg).unwrap();
        let (b, pb) = generate_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        let (c, _) = generate_scenario(&ScenarioConfig { rng_seed: 43, ..cfg }).unwrap();
        assert_ne!(a.gains, c.gains);
    }

    #[test]
    fn unshadowed_gain_at_100m() {
        let cfg = ScenarioConfig {
            macro_count: 1,
            pico_count: 0,
            femto_count: 0,
            bs_positions: Some(vec![[100.0, 0.0]]),
            cell_radius: 1e-9,
            user_count: 1,
            high_priority_count: 0,
            shadow_std_db: 0.0,
            ..Default::default()
        };
        let (s, p) = generate_scenario(&cfg).unwrap();
        let d = distance(p.bs_xy[0], p.user_xy[0]);
        assert!((d - 100.0).abs() < 1e-6);
        assert!((s.gains[0][0] / 10f64.powf(-11.4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn priority_counts_and_positivity() {
        for seed in 0..20 {
            let cfg = ScenarioConfig { rng_seed: seed, ..Default::default() };
            let (s, p) = generate_scenario(&cfg).unwrap();
            assert_eq!(s.priorities.iter().filter(|&&w| w == 2.0).count(), 20);
            assert_eq!(s.priorities.iter().filter(|&&w| w == 1.0).count(), 30);
            assert!(s.gains.iter().flatten().all(|&g| g > 0.0 && g.is_finite()));
            assert!(p.user_xy.iter().all(|u| u[0].hypot(u[1]) <= cfg.cell_radius));
        }
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let cfg = ScenarioConfig { user_count: 5, high_priority_count: 6, ..Default::default() };
        assert!(matches!(generate_scenario(&cfg), Err(Error::Config(_))));
        let cfg = ScenarioConfig { bs_positions: Some(vec![[0.0, 0.0]]), ..Default::default() };
        assert!(matches!(generate_scenario(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn lognormal_shadowing_mean() {
        // E[10^(S/10)] for S ~ N(0, s^2) is exp((s ln10 / 10)^2 / 2)
        let s_db = 8.0;
        let normal = Normal::new(0.0, s_db).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| 10f64.powf(normal.sample(&mut rng) / 10.0)).sum::<f64>() / n as f64;
        let closed = ((s_db * 10f64.ln() / 10.0).powi(2) / 2.0).exp();
        assert!((mean / closed - 1.0).abs() < 0.02, "{mean} vs {closed}");
    }

    #[test]
    fn save_load_round_trip() {
        let (s, p) = generate_scenario(&ScenarioConfig { rng_seed: 9, ..Default::default() }).unwrap();
        let first = scenario_to_json(&s, &p).unwrap();
        let (s2, p2) = parse_scenario(&first).unwrap();
        assert_eq!(s2.gains, s.gains);
        assert_eq!(s2.priorities, s.priorities);
        assert_eq!(p2, p);
        for (a, b) in s2.max_power.iter().zip(&s.max_power) {
            assert!((a / b - 1.0).abs() < 1e-9);
        }
        let second = scenario_to_json(&s2, &p2).unwrap();
        assert_eq!(first, second);
        let (s3, _) = parse_scenario(&second).unwrap();
        assert_eq!(s3, s2);
    }

    #[test]
    fn missing_priority_names_the_field() {
        let text = r#"{
  "bs": [{"tier": "macro", "power_dbm": 46.0, "xy": [0.0, 0.0]}],
  "users": [{"xy": [10.0, 0.0]}],
  "noise_dbm": -104.0, "K": 55, "B_hz": 180000.0
}"#;
        match parse_scenario(text) {
            Err(Error::Parse { field, line, .. }) => {
                assert_eq!(field, "priorities");
                assert_eq!(line, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn hand_written_file() {
        let text = r#"{
  "bs": [
    {"tier": "macro", "power_dbm": 46.0, "xy": [0.0, 0.0]},
    {"tier": "femto", "power_dbm": 30.0, "xy": [100.0, 0.0]}
  ],
  "users": [
    {"xy": [10.0, 0.0], "priority": 2.0},
    {"xy": [90.0, 0.0], "priority": 1.0}
  ],
  "noise_dbm": -104.0, "K": 55, "B_hz": 180000.0,
  "gains": [[1e-9, 2e-12], [3e-12, 4e-9]]
}"#;
        let (s, _) = parse_scenario(text).unwrap();
        assert_eq!(s.num_bs(), 2);
        assert_eq!(s.num_users(), 2);
        assert_eq!(s.gains, vec![vec![1e-9, 2e-12], vec![3e-12, 4e-9]]);
        assert_eq!(s.tiers, vec![Tier::Macro, Tier::Femto]);
        assert_eq!(s.priorities, vec![2.0, 1.0]);
    }
}
