//! Run configuration: a sectioned TOML document whose key names carry their
//! units. Every key is optional; missing keys take the reference simulation
//! values (60 GHz carrier, 2 GHz over 1200 subcarriers, 32 elements, three
//! users, 160 ms frames of 100 steps, 97 % coverage).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::ArrayConfig;
use crate::designs::BeamKind;
use crate::error::{Error, Result};
use crate::jpta::SolverOptions;
use crate::link::LinkBudget;
use crate::mobility::{FrameTiming, ScenarioConfig};

const DEG: f64 = PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub carrier_ghz: f64,
    pub bandwidth_ghz: f64,
    pub num_subcarriers: usize,
    pub num_antennas: usize,
    pub spacing_wavelengths: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection {
            carrier_ghz: 60.0,
            bandwidth_ghz: 2.0,
            num_subcarriers: 1200,
            num_antennas: 32,
            spacing_wavelengths: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    /// Per-subcarrier SNR without array gain under uniform power.
    pub snr_db: f64,
    /// `|h_u|²` in dB per user; absent users get 0 dB.
    pub path_gain_db: Vec<f64>,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            snr_db: -10.0,
            path_gain_db: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilitySection {
    pub num_users: usize,
    pub aod_range_deg: [f64; 2],
    pub min_spacing_deg: f64,
    pub velocity_range_deg_s: [f64; 2],
    pub aod_error_var_deg2: f64,
    pub velocity_var_deg2_s2: f64,
    pub accel_mean_deg_s2: f64,
    pub accel_var_deg2_s4: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        MobilitySection {
            num_users: 3,
            aod_range_deg: [-45.0, 45.0],
            min_spacing_deg: 10.0,
            velocity_range_deg_s: [0.0, 80.0],
            aod_error_var_deg2: 2.0,
            velocity_var_deg2_s2: 10.0,
            accel_mean_deg_s2: 0.0,
            accel_var_deg2_s4: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub duration_ms: f64,
    /// Also accepted as `R`.
    pub steps: usize,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection {
            duration_ms: 160.0,
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub coverage_prob: f64,
    /// Fixed slanted-beam AoD range; by default offset runs use twice the
    /// maximum offset and mobility runs use the coverage anchor.
    pub range_override_deg: Option<f64>,
    /// Defaults to `N_t / W`.
    pub tau_max_ns: Option<f64>,
    pub max_iters: usize,
    /// Defaults to `1e-6 · K`.
    pub objective_tolerance: Option<f64>,
    pub delay_search_resolution: usize,
    pub solver_restarts: usize,
    pub qpd_peak_phase_rad: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            coverage_prob: 0.97,
            range_override_deg: None,
            tau_max_ns: None,
            max_iters: 100,
            objective_tolerance: None,
            delay_search_resolution: 256,
            solver_restarts: 4,
            qpd_peak_phase_rad: PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    OffsetRange,
    NumAntennas,
    NumUsers,
    MeanVelocity,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::OffsetRange => "offset_range",
            Axis::NumAntennas => "num_antennas",
            Axis::NumUsers => "num_users",
            Axis::MeanVelocity => "mean_velocity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Axis::OffsetRange, Axis::NumAntennas, Axis::NumUsers, Axis::MeanVelocity]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("sweep.axis", format!("unknown axis `{s}`")))
    }
}

/// How capacities are sampled within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Offset grid for the offset, array-size and user-count axes;
    /// trajectories for the velocity axis.
    Auto,
    Offsets,
    Mobility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub beams: Vec<BeamKind>,
    pub evaluation: Evaluation,
    pub offset_count: usize,
    /// Offset half-range for offset runs whose axis is not the offset range.
    pub max_offset_deg: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: Axis::OffsetRange,
            values: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 100,
            beams: BeamKind::ALL.to_vec(),
            evaluation: Evaluation::Auto,
            offset_count: 100,
            max_offset_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub array: ArraySection,
    pub link: LinkSection,
    pub mobility: MobilitySection,
    pub frame: FrameSection,
    pub design: DesignSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Reduced scale for quick runs: 240 subcarriers, 25 steps, 20 trials.
    pub fn desk() -> Self {
        let mut c = RunConfig::default();
        c.array.num_subcarriers = 240;
        c.frame.steps = 25;
        c.sweep.trials = 20;
        c
    }

    /// Parse a document layered over `base`, then apply `section.key=value`
    /// overrides in order.
    pub fn parse_with(base: &RunConfig, text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc = toml::Table::try_from(base)
            .map_err(|e| Error::config("<base>", e.to_string()))?;
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
        merge(&mut doc, canonical(file));
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.clone(), "override must look like section.key=value"))?;
            let (section, key) = path
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::config(path, "override key must be section.key"))?;
            let value = parse_value(raw.trim());
            let table = doc
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match table {
                toml::Value::Table(t) => {
                    t.insert(canonical_key(section, key).to_string(), value);
                }
                _ => return Err(Error::config(section, "not a section")),
            }
        }
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(first_key_hint(&e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        RunConfig::parse_with(&RunConfig::default(), text, &[])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let array = self.array_config()?;
        self.link_budget().validate()?;
        self.scenario_config().validate()?;
        self.timing()?;
        self.solver_options(&array).validate()?;
        let p = self.design.coverage_prob;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config("design.coverage_prob", "must lie in (0, 1)"));
        }
        if let Some(r) = self.design.range_override_deg {
            if !(r >= 0.0) {
                return Err(Error::config("design.range_override_deg", "must be non-negative"));
            }
        }
        if !(self.design.qpd_peak_phase_rad >= 0.0) {
            return Err(Error::config("design.qpd_peak_phase_rad", "must be non-negative"));
        }
        if self.sweep.trials < 1 {
            return Err(Error::config("sweep.trials", "must be at least 1"));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::config("sweep.values", "must not be empty"));
        }
        if self.sweep.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::config("sweep.values", "must be sorted ascending"));
        }
        if self.sweep.beams.is_empty() {
            return Err(Error::config("sweep.beams", "must not be empty"));
        }
        if self.sweep.offset_count < 1 {
            return Err(Error::config("sweep.offset_count", "must be at least 1"));
        }
        if !(self.sweep.max_offset_deg >= 0.0) {
            return Err(Error::config("sweep.max_offset_deg", "must be non-negative"));
        }
        if array.num_subcarriers % self.mobility.num_users != 0 {
            return Err(Error::config(
                "array.num_subcarriers",
                format!(
                    "{} subcarriers cannot be split evenly among {} users",
                    array.num_subcarriers, self.mobility.num_users
                ),
            ));
        }
        Ok(())
    }

    pub fn array_config(&self) -> Result<ArrayConfig> {
        let a = &self.array;
        ArrayConfig::new(
            a.num_antennas,
            a.spacing_wavelengths,
            a.carrier_ghz * 1e9,
            a.bandwidth_ghz * 1e9,
            a.num_subcarriers,
        )
    }

    pub fn link_budget(&self) -> LinkBudget {
        let mut b = LinkBudget::from_db(self.link.snr_db);
        b.path_gains = self
            .link
            .path_gain_db
            .iter()
            .map(|db| 10f64.powf(db / 10.0))
            .collect();
        b
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let m = &self.mobility;
        ScenarioConfig {
            num_users: m.num_users,
            aod_range: (m.aod_range_deg[0] * DEG, m.aod_range_deg[1] * DEG),
            min_spacing: m.min_spacing_deg * DEG,
            velocity_range: (m.velocity_range_deg_s[0] * DEG, m.velocity_range_deg_s[1] * DEG),
            accel_mean: m.accel_mean_deg_s2 * DEG,
            var_aod: m.aod_error_var_deg2 * DEG * DEG,
            var_velocity: m.velocity_var_deg2_s2 * DEG * DEG,
            var_accel: m.accel_var_deg2_s4 * DEG * DEG,
        }
    }

    pub fn timing(&self) -> Result<FrameTiming> {
        if self.frame.steps < 1 {
            return Err(Error::config("frame.steps", "R must be at least 1"));
        }
        FrameTiming::new(self.frame.duration_ms * 1e-3, self.frame.steps)
    }

    pub fn solver_options(&self, array: &ArrayConfig) -> SolverOptions {
        let mut o = SolverOptions::for_config(array);
        o.max_iters = self.design.max_iters;
        if let Some(t) = self.design.objective_tolerance {
            o.objective_tolerance = t;
        }
        if let Some(t) = self.design.tau_max_ns {
            o.tau_max = t * 1e-9;
        }
        o.delay_search_resolution = self.design.delay_search_resolution;
        o.restarts = self.design.solver_restarts;
        o
    }
}

fn canonical_key<'a>(section: &str, key: &'a str) -> &'a str {
    match (section, key) {
        ("frame", "R") => "steps",
        _ => key,
    }
}

fn canonical(mut doc: toml::Table) -> toml::Table {
    for (section, v) in doc.iter_mut() {
        if let toml::Value::Table(t) = v {
            *t = std::mem::take(t)
                .into_iter()
                .map(|(k, v)| (canonical_key(section, &k).to_string(), v))
                .collect();
        }
    }
    doc
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => {
            if raw.contains(',') {
                toml::Value::Array(raw.split(',').map(|s| parse_value(s.trim())).collect())
            } else {
                toml::Value::String(raw.to_string())
            }
        }
    }
}

fn first_key_hint(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "<document>".to_string()
}
