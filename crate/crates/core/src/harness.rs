//! Seeded Monte Carlo trials and parameter sweeps.
//!
//! Each trial draws from its own ChaCha stream selected by the trial id, so
//! results do not depend on how trials are scheduled across threads.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::ArrayConfig;
use crate::config::{Axis, Evaluation, RunConfig};
use crate::designs::{
    design_qpd, design_rainbow, design_slanted, design_slanted_with_range, design_stepped, BeamDesign,
    BeamKind, DigitalGeniePolicy, SteppedGeniePolicy,
};
use crate::error::{Error, Result};
use crate::jpta::SolverOptions;
use crate::link::{min_capacity, offset_grid, CapacityRecord, EvalPoint, LinkBudget, LinkContext, PowerAllocation};
use crate::mobility::{
    anchor_selection, sample_scenario, true_aod, FrameTiming, ScenarioConfig, SubbandAssignment, UserState,
};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Where capacities are sampled within a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    /// `count` joint offsets of the estimated AoDs over `±max_offset`.
    Offsets { max_offset: f64, count: usize },
    /// True trajectories at steps `1..=R`.
    Trajectory,
}

/// Everything a single trial needs, fully resolved to SI units.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub array: ArrayConfig,
    pub budget: LinkBudget,
    pub scenario: ScenarioConfig,
    pub timing: FrameTiming,
    pub solver: SolverOptions,
    pub coverage_prob: f64,
    pub range_override: Option<f64>,
    pub qpd_peak_phase: f64,
    pub mode: EvalMode,
    pub beams: Vec<BeamKind>,
}

impl TrialSetup {
    /// Resolve `cfg` at one point of its sweep axis (`None` keeps the
    /// configured values).
    pub fn from_config(cfg: &RunConfig, axis_value: Option<f64>) -> Result<Self> {
        let mut c = cfg.clone();
        let axis = c.sweep.axis;
        let mut max_offset_deg = c.sweep.max_offset_deg;
        if let Some(v) = axis_value {
            match axis {
                Axis::OffsetRange => max_offset_deg = v,
                Axis::NumAntennas => c.array.num_antennas = as_count(v, "sweep.values")?,
                Axis::NumUsers => c.mobility.num_users = as_count(v, "sweep.values")?,
                Axis::MeanVelocity => c.mobility.velocity_range_deg_s = [v, v],
            }
        }
        c.sweep.max_offset_deg = max_offset_deg;
        c.validate()?;
        let trajectory = match c.sweep.evaluation {
            Evaluation::Auto => axis == Axis::MeanVelocity,
            Evaluation::Offsets => false,
            Evaluation::Mobility => true,
        };
        let mode = if trajectory {
            EvalMode::Trajectory
        } else {
            EvalMode::Offsets {
                max_offset: max_offset_deg * DEG,
                count: c.sweep.offset_count,
            }
        };
        let array = c.array_config()?;
        let solver = c.solver_options(&array);
        Ok(TrialSetup {
            budget: c.link_budget(),
            scenario: c.scenario_config(),
            timing: c.timing()?,
            solver,
            coverage_prob: c.design.coverage_prob,
            range_override: c.design.range_override_deg.map(|r| r * DEG),
            qpd_peak_phase: c.design.qpd_peak_phase_rad,
            mode,
            beams: c.sweep.beams.clone(),
            array,
        })
    }

    /// Slanted range for offset evaluation: the override, else the full
    /// offset span.
    fn offset_range(&self, max_offset: f64) -> f64 {
        self.range_override.unwrap_or(2.0 * max_offset)
    }
}

fn as_count(v: f64, key: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::config(key, format!("{v} is not a positive integer")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamRecord {
    pub beam: BeamKind,
    pub record: CapacityRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub users: Vec<UserState>,
    pub assignment: Vec<usize>,
    pub beams: Vec<BeamRecord>,
}

impl TrialResult {
    pub fn min_capacity(&self, beam: BeamKind) -> Option<f64> {
        self.beams
            .iter()
            .find(|b| b.beam == beam)
            .map(|b| b.record.min_capacity)
    }
}

/// Stream for one trial: the master seed picks the key, the trial id the
/// stream.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

fn evaluation_points(setup: &TrialSetup, users: &[UserState]) -> Result<Vec<EvalPoint>> {
    match setup.mode {
        EvalMode::Offsets { max_offset, count } => {
            let centers: Vec<f64> = users.iter().map(|u| u.estimate.aod).collect();
            offset_grid(&centers, max_offset, count)
        }
        EvalMode::Trajectory => Ok((1..=setup.timing.steps)
            .map(|i| EvalPoint {
                step: i - 1,
                aods: users.iter().map(|u| true_aod(&u.truth, i, &setup.timing)).collect(),
            })
            .collect()),
    }
}

/// Fixed design for a non-genie beam kind.
pub fn build_design(
    kind: BeamKind,
    setup: &TrialSetup,
    users: &[UserState],
    assignment: &SubbandAssignment,
) -> Result<BeamDesign> {
    let cfg = &setup.array;
    let aods: Vec<f64> = users.iter().map(|u| u.estimate.aod).collect();
    match kind {
        BeamKind::Slanted => match setup.mode {
            EvalMode::Offsets { max_offset, .. } => design_slanted_with_range(
                &aods,
                setup.offset_range(max_offset),
                assignment.clone(),
                cfg,
                &setup.solver,
            ),
            EvalMode::Trajectory => {
                let estimates: Vec<_> = users.iter().map(|u| u.estimate).collect();
                match setup.range_override {
                    Some(r) => {
                        let anchor =
                            anchor_selection(&estimates, setup.coverage_prob, &setup.timing, assignment.clone())?;
                        design_slanted_with_range(&anchor.centers, r, assignment.clone(), cfg, &setup.solver)
                    }
                    None => design_slanted(
                        &estimates,
                        setup.coverage_prob,
                        &setup.timing,
                        assignment.clone(),
                        cfg,
                        &setup.solver,
                    ),
                }
            }
        },
        BeamKind::Stepped => design_stepped(&aods, assignment.clone(), cfg, &setup.solver),
        BeamKind::Rainbow => design_rainbow(cfg, setup.solver.tau_max),
        BeamKind::Qpd => design_qpd(aods[0], setup.qpd_peak_phase, cfg),
        BeamKind::SteppedGenie | BeamKind::DigitalGenie => {
            Err(Error::input(format!("{kind} has no fixed design")))
        }
    }
}

/// One Monte Carlo trial: sample a scenario, build every requested beam, and
/// evaluate all of them on the same points.
pub fn run_trial(setup: &TrialSetup, master_seed: u64, trial: u64) -> Result<TrialResult> {
    let wrap = |e: Error| Error::Trial {
        trial,
        source: Box::new(e),
    };
    let mut rng = trial_rng(master_seed, trial);
    let users = sample_scenario(&mut rng, &setup.scenario).map_err(wrap)?;
    let assignment = SubbandAssignment::random(users.len(), &mut rng);

    let points = evaluation_points(setup, &users).map_err(wrap)?;
    let alloc = PowerAllocation::uniform(setup.timing.steps.max(1), setup.array.num_subcarriers, 1.0);
    let ctx = LinkContext {
        cfg: &setup.array,
        budget: &setup.budget,
        alloc: &alloc,
        assignment: &assignment,
    };

    let mut beams = Vec::with_capacity(setup.beams.len());
    for &kind in &setup.beams {
        let record = match kind {
            BeamKind::SteppedGenie => {
                let mut p = SteppedGeniePolicy::new(&setup.array, &setup.solver, assignment.clone());
                min_capacity(&mut p, &points, &ctx)
            }
            BeamKind::DigitalGenie => {
                let mut p = DigitalGeniePolicy::new(&setup.array, assignment.clone());
                min_capacity(&mut p, &points, &ctx)
            }
            _ => build_design(kind, setup, &users, &assignment)
                .and_then(|d| min_capacity(&mut d.weights(&setup.array), &points, &ctx)),
        }
        .map_err(wrap)?;
        beams.push(BeamRecord { beam: kind, record });
    }
    Ok(TrialResult {
        trial,
        users,
        assignment: assignment.as_slice().to_vec(),
        beams,
    })
}

/// Run trials `0..trials` on `workers` threads (all cores when `None`).
/// Results come back ordered by trial id.
pub fn run_trials(setup: &TrialSetup, master_seed: u64, trials: usize, workers: Option<usize>) -> Result<Vec<TrialResult>> {
    let job = || {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| run_trial(setup, master_seed, t))
            .collect::<Result<Vec<_>>>()
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::input(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub beams: Vec<BeamKind>,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// Worst case over trials.
    Min,
    MeanOfMinima,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Min => "min",
            Statistic::MeanOfMinima => "mean_of_minima",
        }
    }
}

impl SweepPoint {
    pub fn minima(&self, beam: BeamKind) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.min_capacity(beam)).collect()
    }

    pub fn statistic(&self, beam: BeamKind, stat: Statistic) -> f64 {
        let m = self.minima(beam);
        match stat {
            Statistic::Min => m.iter().copied().fold(f64::INFINITY, f64::min),
            Statistic::MeanOfMinima => m.iter().sum::<f64>() / m.len() as f64,
        }
    }
}

/// Every configured axis value, each over the same trial ids.
pub fn run_sweep(cfg: &RunConfig, master_seed: u64, workers: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.sweep.values.len());
    for &v in &cfg.sweep.values {
        let setup = TrialSetup::from_config(cfg, Some(v))?;
        let trials = run_trials(&setup, master_seed, cfg.sweep.trials, workers)?;
        points.push(SweepPoint { axis_value: v, trials });
    }
    Ok(SweepResult {
        axis: cfg.sweep.axis,
        beams: cfg.sweep.beams.clone(),
        points,
    })
}

impl SweepResult {
    /// Rows `axis,axis_value,beam,statistic,value_bps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,axis_value,beam,statistic,value_bps\n");
        for p in &self.points {
            for &b in &self.beams {
                for stat in [Statistic::Min, Statistic::MeanOfMinima] {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        self.axis.name(),
                        p.axis_value,
                        b.name(),
                        stat.name(),
                        p.statistic(b, stat)
                    );
                }
            }
        }
        out
    }
}

/// Empirical CDF of per-trial minimum capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSeries {
    pub beam: BeamKind,
    pub axis_value: f64,
    pub capacities: Vec<f64>,
    pub cum_prob: Vec<f64>,
}

impl CdfSeries {
    pub fn from_samples(beam: BeamKind, axis_value: f64, mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("CDF needs at least one sample"));
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let cum_prob = (1..=samples.len()).map(|i| i as f64 / n).collect();
        Ok(CdfSeries {
            beam,
            axis_value,
            capacities: samples,
            cum_prob,
        })
    }

    /// Smallest sample, where the CDF leaves zero.
    pub fn intercept(&self) -> f64 {
        self.capacities[0]
    }

    /// Fraction of samples strictly below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        self.capacities.iter().filter(|c| **c < x).count() as f64 / self.capacities.len() as f64
    }
}

pub fn capacity_cdf(result: &SweepResult, beams: &[BeamKind]) -> Result<Vec<CdfSeries>> {
    let mut out = Vec::new();
    for &b in beams {
        for p in &result.points {
            out.push(CdfSeries::from_samples(b, p.axis_value, p.minima(b))?);
        }
    }
    Ok(out)
}

/// Rows `beam,axis_value,capacity_bps,cum_prob`.
pub fn cdf_csv(series: &[CdfSeries]) -> String {
    let mut out = String::from("beam,axis_value,capacity_bps,cum_prob\n");
    for s in series {
        for (c, p) in s.capacities.iter().zip(&s.cum_prob) {
            let _ = writeln!(out, "{},{},{},{}", s.beam.name(), s.axis_value, c, p);
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Provenance for a set of emitted files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub config: String,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: cfg.hash(),
            config: cfg.to_toml(),
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, file: &str, contents: &[u8]) {
        self.artifacts.push(Artifact {
            file: file.to_string(),
            sha256: sha256_hex(contents),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::desk();
        c.array.num_subcarriers = 60;
        c.array.num_antennas = 8;
        c.frame.steps = 5;
        c.sweep.trials = 3;
        c.sweep.offset_count = 7;
        c.design.solver_restarts = 1;
        c
    }

    #[test]
    fn trial_is_deterministic() {
        let s = TrialSetup::from_config(&small(), Some(10.0)).unwrap();
        let a = run_trial(&s, 42, 3).unwrap();
        let b = run_trial(&s, 42, 3).unwrap();
        assert_eq!(a, b);
        let c = run_trial(&s, 42, 4).unwrap();
        assert_ne!(a.users, c.users);
    }

    #[test]
    fn digital_genie_dominates() {
        let s = TrialSetup::from_config(&small(), Some(10.0)).unwrap();
        for t in 0..3 {
            let r = run_trial(&s, 7, t).unwrap();
            let g = r.min_capacity(BeamKind::DigitalGenie).unwrap();
            for b in &r.beams {
                assert!(g >= b.record.min_capacity * (1.0 - 1e-12), "{:?}", b.beam);
            }
        }
    }

    #[test]
    fn single_value_sweep_matches_trials() {
        let mut c = small();
        c.sweep.values = vec![5.0];
        c.sweep.trials = 1;
        let r = run_sweep(&c, 9, Some(1)).unwrap();
        let t = run_trial(&TrialSetup::from_config(&c, Some(5.0)).unwrap(), 9, 0).unwrap();
        assert_eq!(r.points[0].trials, vec![t]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = small();
        c.sweep.values = vec![0.0, 10.0];
        c.sweep.beams = vec![BeamKind::Stepped, BeamKind::Rainbow];
        let a = run_sweep(&c, 1, Some(1)).unwrap().to_csv();
        let b = run_sweep(&c, 1, Some(3)).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_csv_shape() {
        let mut c = small();
        c.sweep.values = vec![0.0, 5.0, 10.0, 15.0, 20.0];
        c.sweep.trials = 1;
        c.sweep.beams = vec![BeamKind::Rainbow, BeamKind::Qpd];
        let csv = run_sweep(&c, 1, Some(1)).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "axis,axis_value,beam,statistic,value_bps");
        assert_eq!(lines.iter().filter(|l| l.contains(",min,")).count(), 5 * 2);
        assert_eq!(lines.iter().filter(|l| l.contains(",mean_of_minima,")).count(), 5 * 2);
    }

    #[test]
    fn cdf_single_sample_and_monotone() {
        let s = CdfSeries::from_samples(BeamKind::Slanted, 0.0, vec![3.0]).unwrap();
        assert_eq!(s.capacities, vec![3.0]);
        assert_eq!(s.cum_prob, vec![1.0]);
        let s = CdfSeries::from_samples(BeamKind::Slanted, 0.0, vec![3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.intercept(), 1.0);
        assert!(s.cum_prob.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*s.cum_prob.last().unwrap(), 1.0);
        assert_eq!(s.fraction_below(2.0), 0.25);
        assert!(CdfSeries::from_samples(BeamKind::Slanted, 0.0, vec![]).is_err());
    }

    #[test]
    fn cdf_intercept_is_sweep_min() {
        let mut c = small();
        c.sweep.values = vec![10.0];
        c.sweep.beams = vec![BeamKind::Stepped, BeamKind::Qpd];
        let r = run_sweep(&c, 5, Some(1)).unwrap();
        for s in capacity_cdf(&r, &c.sweep.beams).unwrap() {
            assert_eq!(s.intercept(), r.points[0].statistic(s.beam, Statistic::Min));
        }
    }

    #[test]
    fn manifest_hashes_artifacts() {
        let mut m = RunManifest::new("sweep", &RunConfig::default(), Some(3));
        m.add("a.csv", b"abc");
        assert_eq!(
            m.artifacts[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["seed"], 3);
    }
}
