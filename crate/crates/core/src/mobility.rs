//! One-dimensional angular kinematics over a beam-alignment frame, and the
//! coverage-probability anchor that sizes a slanted beam.
//!
//! Everything here is in radians, seconds, and their powers; variances are in
//! squared units (rad², rad²/s², rad²/s⁴).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::inverse_normal_cdf;

/// True initial conditions of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserKinematics {
    pub aod: f64,
    pub angular_velocity: f64,
    pub angular_accel: f64,
}

/// Unbiased estimate of a user's initial conditions and its error variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicsEstimate {
    pub aod: f64,
    pub angular_velocity: f64,
    pub angular_accel: f64,
    pub var_aod: f64,
    pub var_velocity: f64,
    pub var_accel: f64,
}

impl KinematicsEstimate {
    /// A perfectly known, motionless user at `aod`.
    pub fn static_at(aod: f64) -> Self {
        KinematicsEstimate {
            aod,
            angular_velocity: 0.0,
            angular_accel: 0.0,
            var_aod: 0.0,
            var_velocity: 0.0,
            var_accel: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vars = [self.var_aod, self.var_velocity, self.var_accel];
        if vars.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::input("estimate variances must be finite and non-negative"));
        }
        if ![self.aod, self.angular_velocity, self.angular_accel]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::input("estimate means must be finite"));
        }
        Ok(())
    }
}

/// A frame of `duration` seconds split into `steps` equal time steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub duration: f64,
    pub steps: usize,
}

impl FrameTiming {
    pub fn new(duration: f64, steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(Error::config("frame.steps", "must be at least 1"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::config("frame.duration_ms", "must be positive"));
        }
        Ok(FrameTiming { duration, steps })
    }

    pub fn step(&self) -> f64 {
        self.duration / self.steps as f64
    }

    /// Elapsed time at step `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }
}

fn kinematic(aod: f64, vel: f64, accel: f64, t: f64) -> f64 {
    aod + t * vel + t * t * accel / 2.0
}

pub fn true_aod(k: &UserKinematics, i: usize, timing: &FrameTiming) -> f64 {
    kinematic(k.aod, k.angular_velocity, k.angular_accel, timing.time(i))
}

pub fn predicted_mean(e: &KinematicsEstimate, i: usize, timing: &FrameTiming) -> f64 {
    kinematic(e.aod, e.angular_velocity, e.angular_accel, timing.time(i))
}

pub fn predicted_variance(e: &KinematicsEstimate, i: usize, timing: &FrameTiming) -> f64 {
    let t = timing.time(i);
    e.var_aod + t.powi(2) * e.var_velocity + t.powi(4) * e.var_accel / 4.0
}

/// Two-sided Gaussian quantile `ℓ` with `P(|Z| ≤ ℓ) = p`.
pub fn coverage_halfwidth(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::input(format!("coverage probability {p} outside (0, 1)")));
    }
    Ok(inverse_normal_cdf((1.0 + p) / 2.0))
}

/// `assignment[u]` is the 0-based sub-band served to user `u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandAssignment(Vec<usize>);

impl SubbandAssignment {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &s in &map {
            if s >= map.len() || seen[s] {
                return Err(Error::input(format!("sub-band assignment {map:?} is not a permutation")));
            }
            seen[s] = true;
        }
        Ok(SubbandAssignment(map))
    }

    pub fn sequential(users: usize) -> Self {
        SubbandAssignment((0..users).collect())
    }

    pub fn random<R: Rng + ?Sized>(users: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..users).collect();
        map.shuffle(rng);
        SubbandAssignment(map)
    }

    pub fn num_users(&self) -> usize {
        self.0.len()
    }

    pub fn subband_of(&self, user: usize) -> usize {
        self.0[user]
    }

    /// Inverse map: which user owns sub-band `s`.
    pub fn user_of(&self, subband: usize) -> usize {
        self.0.iter().position(|&s| s == subband).expect("bijection")
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Per-user AoD centers, one shared AoD range, and the sub-band map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub centers: Vec<f64>,
    pub range: f64,
    pub assignment: SubbandAssignment,
}

impl AnchorSpec {
    pub fn new(centers: Vec<f64>, range: f64, assignment: SubbandAssignment) -> Result<Self> {
        if centers.len() != assignment.num_users() || centers.is_empty() {
            return Err(Error::input("anchor centers and assignment disagree on user count"));
        }
        if !(range >= 0.0 && range.is_finite()) {
            return Err(Error::input(format!("anchor range {range} must be non-negative")));
        }
        Ok(AnchorSpec {
            centers,
            range,
            assignment,
        })
    }
}

/// Predicted interval `[mean − ℓ√σ_i, mean + ℓ√σ_i]` at step `i`.
pub fn coverage_interval(
    e: &KinematicsEstimate,
    i: usize,
    timing: &FrameTiming,
    halfwidth: f64,
) -> (f64, f64) {
    let mean = predicted_mean(e, i, timing);
    let half = halfwidth * predicted_variance(e, i, timing).sqrt();
    (mean - half, mean + half)
}

/// Per-user hull of the coverage intervals over steps `0..=R`, returned as
/// `(min, max)`.
pub fn user_coverage_hull(
    e: &KinematicsEstimate,
    timing: &FrameTiming,
    halfwidth: f64,
) -> (f64, f64) {
    (0..=timing.steps)
        .map(|i| coverage_interval(e, i, timing, halfwidth))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        })
}

pub fn anchor_selection(
    estimates: &[KinematicsEstimate],
    p: f64,
    timing: &FrameTiming,
    assignment: SubbandAssignment,
) -> Result<AnchorSpec> {
    if estimates.is_empty() {
        return Err(Error::input("at least one user is required"));
    }
    for e in estimates {
        e.validate()?;
    }
    let ell = coverage_halfwidth(p)?;
    let hulls: Vec<(f64, f64)> = estimates
        .iter()
        .map(|e| user_coverage_hull(e, timing, ell))
        .collect();
    let range = hulls.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let centers = hulls.iter().map(|(lo, hi)| lo + (hi - lo) / 2.0).collect();
    AnchorSpec::new(centers, range, assignment)
}

/// Scenario statistics, in radians and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub aod_range: (f64, f64),
    pub min_spacing: f64,
    /// Magnitude range of the mean initial angular velocity.
    pub velocity_range: (f64, f64),
    pub accel_mean: f64,
    pub var_aod: f64,
    pub var_velocity: f64,
    pub var_accel: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users < 1 {
            return Err(Error::config("mobility.num_users", "must be at least 1"));
        }
        let (lo, hi) = self.aod_range;
        if !(lo <= hi) {
            return Err(Error::config("mobility.aod_range_deg", "lower bound exceeds upper"));
        }
        if !(self.min_spacing >= 0.0) {
            return Err(Error::config("mobility.min_spacing_deg", "must be non-negative"));
        }
        if (self.num_users - 1) as f64 * self.min_spacing > hi - lo {
            return Err(Error::config(
                "mobility.min_spacing_deg",
                format!(
                    "{} users cannot be spaced {} rad apart inside [{lo}, {hi}]",
                    self.num_users, self.min_spacing
                ),
            ));
        }
        let (vlo, vhi) = self.velocity_range;
        if !(0.0 <= vlo && vlo <= vhi) {
            return Err(Error::config(
                "mobility.velocity_range_deg_s",
                "must satisfy 0 <= low <= high",
            ));
        }
        for (key, v) in [
            ("mobility.aod_error_var_deg2", self.var_aod),
            ("mobility.velocity_var_deg2_s2", self.var_velocity),
            ("mobility.accel_var_deg2_s4", self.var_accel),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "variance must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Ground truth and estimate for one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub truth: UserKinematics,
    pub estimate: KinematicsEstimate,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> f64 {
    if var == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, var.sqrt())
        .expect("finite positive deviation")
        .sample(rng)
}

/// Draws estimated AoDs uniformly over the configured range subject to the
/// minimum pairwise spacing, mean velocities with a random sign, and true
/// initial conditions perturbed by Gaussian estimation errors.
pub fn sample_scenario<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> Result<Vec<UserState>> {
    cfg.validate()?;
    let u = cfg.num_users;
    let (lo, hi) = cfg.aod_range;

    // Uniform over the spaced set: draw in the shrunken interval, sort, and
    // re-insert the gaps.
    let slack = hi - lo - (u - 1) as f64 * cfg.min_spacing;
    let mut offsets: Vec<f64> = (0..u).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut aods: Vec<f64> = offsets
        .iter()
        .enumerate()
        .map(|(i, x)| lo + x + i as f64 * cfg.min_spacing)
        .collect();
    aods.shuffle(rng);

    let (vlo, vhi) = cfg.velocity_range;
    let mut users = Vec::with_capacity(u);
    for aod in aods {
        let speed = vlo + rng.random::<f64>() * (vhi - vlo);
        let velocity = if rng.random::<bool>() { speed } else { -speed };
        let estimate = KinematicsEstimate {
            aod,
            angular_velocity: velocity,
            angular_accel: cfg.accel_mean,
            var_aod: cfg.var_aod,
            var_velocity: cfg.var_velocity,
            var_accel: cfg.var_accel,
        };
        let truth = UserKinematics {
            aod: aod + gaussian(rng, cfg.var_aod),
            angular_velocity: velocity + gaussian(rng, cfg.var_velocity),
            angular_accel: cfg.accel_mean + gaussian(rng, cfg.var_accel),
        };
        users.push(UserState { truth, estimate });
    }
    Ok(users)
}
