//! Beam designs under comparison: slanted beams and the five baselines.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{array_response, steering_unchecked, wrap_phase, AnalogWeights, ArrayConfig, SubcarrierWeights};
use crate::error::{Error, Result};
use crate::jpta::{jpta_solve, SolverOptions, SolverReport, TargetProfile};
use crate::link::{subband_indices, BeamPolicy, BeamWeights, EvalPoint};
use crate::mobility::{anchor_selection, AnchorSpec, FrameTiming, KinematicsEstimate, SubbandAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamKind {
    Slanted,
    Stepped,
    Rainbow,
    Qpd,
    SteppedGenie,
    DigitalGenie,
}

impl BeamKind {
    pub const ALL: [BeamKind; 6] = [
        BeamKind::Slanted,
        BeamKind::Stepped,
        BeamKind::Rainbow,
        BeamKind::Qpd,
        BeamKind::SteppedGenie,
        BeamKind::DigitalGenie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BeamKind::Slanted => "slanted",
            BeamKind::Stepped => "stepped",
            BeamKind::Rainbow => "rainbow",
            BeamKind::Qpd => "qpd",
            BeamKind::SteppedGenie => "stepped_genie",
            BeamKind::DigitalGenie => "digital_genie",
        }
    }

    pub fn is_genie(self) -> bool {
        matches!(self, BeamKind::SteppedGenie | BeamKind::DigitalGenie)
    }
}

impl fmt::Display for BeamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BeamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input(format!("unknown beam kind `{s}`")))
    }
}

/// Per-subcarrier matched beamformer toward each user's AoD on that user's
/// sub-band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalMatched {
    pub aods: Vec<f64>,
    pub assignment: SubbandAssignment,
}

impl SubcarrierWeights for DigitalMatched {
    fn weights_at(&self, k: usize, cfg: &ArrayConfig) -> Vec<Complex64> {
        let users = self.assignment.num_users();
        let subband = k * users / cfg.num_subcarriers;
        let user = self.assignment.user_of(subband);
        steering_unchecked(self.aods[user], cfg.subcarrier_freq(k), cfg).normalized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Beam {
    Analog(AnalogWeights),
    Digital(DigitalMatched),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamDesign {
    pub kind: BeamKind,
    pub beam: Beam,
    pub anchor: Option<AnchorSpec>,
    pub solver: Option<SolverReport>,
}

impl BeamDesign {
    pub fn analog(&self) -> Option<&AnalogWeights> {
        match &self.beam {
            Beam::Analog(w) => Some(w),
            Beam::Digital(_) => None,
        }
    }

    pub fn weights(&self, cfg: &ArrayConfig) -> BeamWeights {
        BeamWeights::from_design(self, cfg)
    }

    /// JSON document: kind, phases (rad), delays (s), anchor, and solver objective.
    pub fn to_json(&self, extra: serde_json::Value) -> Result<String> {
        let (phases, delays, aods) = match &self.beam {
            Beam::Analog(w) => (Some(w.phases()), Some(w.delays()), None),
            Beam::Digital(d) => (None, None, Some(&d.aods)),
        };
        let doc = serde_json::json!({
            "kind": self.kind,
            "phases_rad": phases,
            "delays_s": delays,
            "digital_aods_rad": aods,
            "anchor": self.anchor.as_ref().map(|a| serde_json::json!({
                "centers_rad": a.centers,
                "range_rad": a.range,
                "subband_of_user": a.assignment.as_slice(),
            })),
            "solver_objective": self.solver.as_ref().map(|s| s.objective()),
            "solver_iterations": self.solver.as_ref().map(|s| s.iterations_used),
            "run": extra,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

impl SubcarrierWeights for BeamDesign {
    fn weights_at(&self, k: usize, cfg: &ArrayConfig) -> Vec<Complex64> {
        match &self.beam {
            Beam::Analog(w) => w.weights_at(k, cfg),
            Beam::Digital(d) => d.weights_at(k, cfg),
        }
    }
}

/// Linear AoD-per-subcarrier targets: user `u` on sub-band `s` (1-based
/// `s+1`) gets `θ̄_u + r/2 − r(s+1) + (rU/K)·k` for its global 1-based
/// subcarrier indices `k`. Targets are clamped to `[-π/2, π/2]`.
pub fn target_directions(anchor: &AnchorSpec, cfg: &ArrayConfig) -> Result<TargetProfile> {
    let users = anchor.assignment.num_users();
    let k_total = cfg.num_subcarriers;
    let r = anchor.range;
    let slope = r * users as f64 / k_total as f64;
    let mut g = vec![0.0; k_total];
    for (u, center) in anchor.centers.iter().enumerate() {
        let s = anchor.assignment.subband_of(u);
        for k in subband_indices(s, k_total, users)? {
            let target = center + r / 2.0 - r * (s + 1) as f64 + slope * (k + 1) as f64;
            g[k] = target.clamp(-PI / 2.0, PI / 2.0);
        }
    }
    TargetProfile::new(g, cfg)
}

/// JPTA solve toward the anchor's target profile.
pub fn design_from_anchor(
    kind: BeamKind,
    anchor: AnchorSpec,
    cfg: &ArrayConfig,
    opts: &SolverOptions,
) -> Result<BeamDesign> {
    let targets = target_directions(&anchor, cfg)?;
    let report = jpta_solve(&targets, opts, None)?;
    Ok(BeamDesign {
        kind,
        beam: Beam::Analog(report.weights.clone()),
        anchor: Some(anchor),
        solver: Some(report),
    })
}

/// Slanted beams from kinematics estimates: coverage anchor, linear
/// targets, JPTA.
pub fn design_slanted(
    estimates: &[KinematicsEstimate],
    p: f64,
    timing: &FrameTiming,
    assignment: SubbandAssignment,
    cfg: &ArrayConfig,
    opts: &SolverOptions,
) -> Result<BeamDesign> {
    let anchor = anchor_selection(estimates, p, timing, assignment)?;
    design_from_anchor(BeamKind::Slanted, anchor, cfg, opts)
}

/// Slanted beams around fixed centers with a prescribed range.
pub fn design_slanted_with_range(
    centers: &[f64],
    range: f64,
    assignment: SubbandAssignment,
    cfg: &ArrayConfig,
    opts: &SolverOptions,
) -> Result<BeamDesign> {
    let anchor = AnchorSpec::new(centers.to_vec(), range, assignment)?;
    design_from_anchor(BeamKind::Slanted, anchor, cfg, opts)
}

/// Each sub-band pointed at its user's estimated initial AoD.
pub fn design_stepped(
    aods: &[f64],
    assignment: SubbandAssignment,
    cfg: &ArrayConfig,
    opts: &SolverOptions,
) -> Result<BeamDesign> {
    let anchor = AnchorSpec::new(aods.to_vec(), 0.0, assignment)?;
    design_from_anchor(BeamKind::Stepped, anchor, cfg, opts)
}

/// Fully dispersive beam: delay step `1/(2W)` (shifted to be non-negative)
/// and phases `2π n f_c / W`.
pub fn design_rainbow(cfg: &ArrayConfig, tau_max: f64) -> Result<BeamDesign> {
    let n = cfg.num_antennas;
    let step = 1.0 / (2.0 * cfg.bandwidth_hz);
    let delays: Vec<f64> = (1..=n).map(|i| (n - i) as f64 * step).collect();
    let phases: Vec<f64> = (1..=n)
        .map(|i| wrap_phase(2.0 * PI * i as f64 * cfg.carrier_hz / cfg.bandwidth_hz))
        .collect();
    let weights = AnalogWeights::new(phases, delays, tau_max)?;
    Ok(BeamDesign {
        kind: BeamKind::Rainbow,
        beam: Beam::Analog(weights),
        anchor: None,
        solver: None,
    })
}

/// Phased-array beam toward `theta` widened by a quadratic phase taper with
/// peak `peak_phase`.
pub fn design_qpd(theta: f64, peak_phase: f64, cfg: &ArrayConfig) -> Result<BeamDesign> {
    if !(peak_phase >= 0.0 && peak_phase.is_finite()) {
        return Err(Error::input("quadratic phase peak must be non-negative"));
    }
    let n = cfg.num_antennas as f64;
    let steer = 2.0 * PI * cfg.spacing * theta.sin();
    let phases: Vec<f64> = (1..=cfg.num_antennas)
        .map(|i| {
            let i = i as f64;
            let taper = 4.0 * peak_phase * ((2.0 * i - n - 1.0) / (2.0 * (n + 1.0))).powi(2);
            wrap_phase(steer * (i - 1.0) + taper)
        })
        .collect();
    let weights = AnalogWeights::new(phases, vec![0.0; cfg.num_antennas], f64::INFINITY)?;
    Ok(BeamDesign {
        kind: BeamKind::Qpd,
        beam: Beam::Analog(weights),
        anchor: None,
        solver: None,
    })
}

/// Stepped beam at the users' true AoDs.
pub fn genie_stepped(
    aods: &[f64],
    assignment: SubbandAssignment,
    cfg: &ArrayConfig,
    opts: &SolverOptions,
) -> Result<BeamDesign> {
    let mut d = design_stepped(aods, assignment, cfg, opts)?;
    d.kind = BeamKind::SteppedGenie;
    Ok(d)
}

/// Matched digital weights for AoD `theta` on subcarrier `k`.
pub fn genie_digital(theta: f64, k: usize, cfg: &ArrayConfig) -> Result<Vec<Complex64>> {
    if k >= cfg.num_subcarriers {
        return Err(Error::input(format!("subcarrier {k} out of range")));
    }
    Ok(array_response(theta, cfg.subcarrier_freq(k), cfg)?.normalized())
}

pub fn digital_genie_design(aods: &[f64], assignment: SubbandAssignment) -> BeamDesign {
    BeamDesign {
        kind: BeamKind::DigitalGenie,
        beam: Beam::Digital(DigitalMatched {
            aods: aods.to_vec(),
            assignment,
        }),
        anchor: None,
        solver: None,
    }
}

/// Re-solves a stepped beam at every evaluation point. Consecutive points
/// with identical AoDs reuse the previous solve.
pub struct SteppedGeniePolicy<'a> {
    cfg: &'a ArrayConfig,
    opts: &'a SolverOptions,
    assignment: SubbandAssignment,
    last: Option<(Vec<f64>, BeamWeights)>,
    pub solves: usize,
}

impl<'a> SteppedGeniePolicy<'a> {
    pub fn new(cfg: &'a ArrayConfig, opts: &'a SolverOptions, assignment: SubbandAssignment) -> Self {
        SteppedGeniePolicy {
            cfg,
            opts,
            assignment,
            last: None,
            solves: 0,
        }
    }
}

impl BeamPolicy for SteppedGeniePolicy<'_> {
    fn weights_for(&mut self, _index: usize, point: &EvalPoint) -> Result<&BeamWeights> {
        let stale = match &self.last {
            Some((aods, _)) => aods != &point.aods,
            None => true,
        };
        if stale {
            let d = genie_stepped(&point.aods, self.assignment.clone(), self.cfg, self.opts)?;
            self.solves += 1;
            self.last = Some((point.aods.clone(), d.weights(self.cfg)));
        }
        Ok(&self.last.as_ref().unwrap().1)
    }
}

/// Matched digital beams at every evaluation point.
pub struct DigitalGeniePolicy<'a> {
    cfg: &'a ArrayConfig,
    assignment: SubbandAssignment,
    current: BeamWeights,
}

impl<'a> DigitalGeniePolicy<'a> {
    pub fn new(cfg: &'a ArrayConfig, assignment: SubbandAssignment) -> Self {
        DigitalGeniePolicy {
            cfg,
            assignment,
            current: BeamWeights(Vec::new()),
        }
    }
}

impl BeamPolicy for DigitalGeniePolicy<'_> {
    fn weights_for(&mut self, _index: usize, point: &EvalPoint) -> Result<&BeamWeights> {
        let d = digital_genie_design(&point.aods, self.assignment.clone());
        self.current = d.weights(self.cfg);
        Ok(&self.current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{gain, linspace, pattern_heatmap};

    const DEG: f64 = PI / 180.0;

    fn desk_cfg() -> ArrayConfig {
        ArrayConfig::new(32, 0.5, 60e9, 2e9, 240).unwrap()
    }

    #[test]
    fn beam_kind_names_round_trip() {
        for k in BeamKind::ALL {
            assert_eq!(k.name().parse::<BeamKind>().unwrap(), k);
        }
        assert!("fancy".parse::<BeamKind>().is_err());
    }

    #[test]
    fn zero_range_targets_are_stepped() {
        let cfg = desk_cfg();
        let a = AnchorSpec::new(vec![0.1, -0.3, 0.5], 0.0, SubbandAssignment::new(vec![2, 0, 1]).unwrap()).unwrap();
        let g = target_directions(&a, &cfg).unwrap();
        assert!(g.angles()[..80].iter().all(|x| *x == -0.3));
        assert!(g.angles()[80..160].iter().all(|x| *x == 0.5));
        assert!(g.angles()[160..].iter().all(|x| *x == 0.1));
    }

    #[test]
    fn target_examples() {
        let cfg = ArrayConfig::reference();
        let a = AnchorSpec::new(vec![0.0, 0.0, 0.0], 20.0 * DEG, SubbandAssignment::sequential(3)).unwrap();
        let g = target_directions(&a, &cfg).unwrap();
        assert!((g.angles()[0] / DEG + 9.95).abs() < 1e-9);
        assert!((g.angles()[399] / DEG - 10.0).abs() < 1e-9);

        let cfg4 = ArrayConfig::new(8, 0.5, 60e9, 2e9, 4).unwrap();
        let a = AnchorSpec::new(vec![0.0], 4.0 * DEG, SubbandAssignment::sequential(1)).unwrap();
        let g = target_directions(&a, &cfg4).unwrap();
        for (got, want) in g.angles().iter().zip([-1.0, 0.0, 1.0, 2.0]) {
            assert!((got / DEG - want).abs() < 1e-12);
        }
    }

    #[test]
    fn target_endpoints_and_width() {
        let cfg = desk_cfg();
        let r = 17.0 * DEG;
        let centers = [0.2, -0.4, 0.05];
        let a = AnchorSpec::new(centers.to_vec(), r, SubbandAssignment::new(vec![1, 2, 0]).unwrap()).unwrap();
        let g = target_directions(&a, &cfg).unwrap();
        for (u, c) in centers.iter().enumerate() {
            let band = subband_indices(a.assignment.subband_of(u), 240, 3).unwrap();
            let last = g.angles()[band.end - 1];
            let first = g.angles()[band.start];
            assert!((last - (c + r / 2.0)).abs() < 1e-12);
            assert!(((last - first) - (r - r * 3.0 / 240.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn uneven_split_rejected() {
        let cfg = ArrayConfig::new(32, 0.5, 60e9, 2e9, 256).unwrap();
        let a = AnchorSpec::new(vec![0.0; 3], 0.0, SubbandAssignment::sequential(3)).unwrap();
        assert!(target_directions(&a, &cfg).is_err());
    }

    #[test]
    fn stepped_equals_zero_range_slanted() {
        let cfg = desk_cfg();
        let opts = SolverOptions::for_config(&cfg);
        let aods = [-0.5, 0.1, 0.6];
        let assignment = SubbandAssignment::new(vec![1, 0, 2]).unwrap();
        let stepped = design_stepped(&aods, assignment.clone(), &cfg, &opts).unwrap();
        let slanted = design_slanted(
            &aods.map(KinematicsEstimate::static_at),
            0.97,
            &FrameTiming::new(0.16, 25).unwrap(),
            assignment,
            &cfg,
            &opts,
        )
        .unwrap();
        assert_eq!(slanted.anchor.as_ref().unwrap().range, 0.0);
        assert_eq!(stepped.analog(), slanted.analog());
    }

    #[test]
    fn boresight_stepped_beam() {
        let cfg = desk_cfg();
        let opts = SolverOptions::for_config(&cfg);
        let d = design_stepped(&[0.0], SubbandAssignment::sequential(1), &cfg, &opts).unwrap();
        let w = d.analog().unwrap();
        assert!(gain(0.0, cfg.carrier_hz, &w.awv(cfg.carrier_hz), &cfg).unwrap() >= 0.9 * 32.0);
        let h = pattern_heatmap(w, &[0.0], &(0..240).collect::<Vec<_>>(), &cfg).unwrap();
        for k in 0..240 {
            assert!((h.at(0, k) - 32.0).abs() / 32.0 < 1e-6, "k={k}: {}", h.at(0, k));
        }
    }

    #[test]
    fn three_user_stepped_separates_users() {
        let cfg = desk_cfg();
        let opts = SolverOptions::for_config(&cfg);
        let aods = [-30.0 * DEG, 0.0, 30.0 * DEG];
        let d = design_stepped(&aods, SubbandAssignment::sequential(3), &cfg, &opts).unwrap();
        let w = d.analog().unwrap();
        for s in 0..3 {
            let k = s * 80 + 40;
            let f = cfg.subcarrier_freq(k);
            let v = w.awv(f);
            let own = gain(aods[s], f, &v, &cfg).unwrap();
            for (o, other) in aods.iter().enumerate() {
                if o != s {
                    let g = gain(*other, f, &v, &cfg).unwrap();
                    assert!(10.0 * (own / g).log10() >= 10.0, "sub-band {s}: own {own}, other {g}");
                }
            }
        }
    }

    #[test]
    fn rainbow_layout() {
        let cfg = ArrayConfig::reference();
        let d = design_rainbow(&cfg, cfg.default_tau_max()).unwrap();
        let w = d.analog().unwrap();
        assert!((w.delays()[0] - 7.75e-9).abs() < 1e-18);
        assert!((w.delays()[30] - 0.25e-9).abs() < 1e-18);
        assert_eq!(w.delays()[31], 0.0);
        assert_eq!(d, design_rainbow(&cfg, cfg.default_tau_max()).unwrap());
    }

    #[test]
    fn rainbow_sweeps_across_the_band() {
        let cfg = ArrayConfig::reference();
        let d = design_rainbow(&cfg, cfg.default_tau_max()).unwrap();
        let thetas = linspace(-80.0 * DEG, 80.0 * DEG, 1601);
        let ks: Vec<usize> = (0..1200).step_by(10).chain([1199]).collect();
        let h = pattern_heatmap(d.analog().unwrap(), &thetas, &ks, &cfg).unwrap();
        let peaks: Vec<f64> = h.argmax_per_subcarrier().iter().map(|&i| thetas[i]).collect();
        assert!(peaks.windows(2).all(|p| p[1] >= p[0]));
        // Per-element phase slope π(f − f_c)/W steers to sin θ = (f − f_c)·f_c/(W·f).
        let edge = |f: f64| ((f - cfg.carrier_hz) * cfg.carrier_hz / (cfg.bandwidth_hz * f)).asin();
        let lo = edge(cfg.subcarrier_freq(0));
        let hi = edge(cfg.subcarrier_freq(1199));
        assert!((peaks[0] - lo).abs() < 0.2 * DEG);
        assert!((peaks[peaks.len() - 1] - hi).abs() < 0.2 * DEG);
        assert!((peaks[peaks.len() - 1] - peaks[0]) / DEG > 59.0);
    }

    #[test]
    fn qpd_examples() {
        let cfg = ArrayConfig::reference();
        let d = design_qpd(0.0, PI, &cfg).unwrap();
        assert!((d.analog().unwrap().phases()[0] - 2.772).abs() < 1e-3);

        let theta = 12.0 * DEG;
        let plain = design_qpd(theta, 0.0, &cfg).unwrap();
        let f = cfg.carrier_hz;
        let v = plain.analog().unwrap().awv(f);
        assert!((gain(theta, f, &v, &cfg).unwrap() - 32.0).abs() < 1e-9);

        let wide = design_qpd(theta, PI, &cfg).unwrap();
        let width = |d: &BeamDesign| {
            let thetas = linspace(theta - 20.0 * DEG, theta + 20.0 * DEG, 4001);
            let h = pattern_heatmap(d.analog().unwrap(), &thetas, &[600], &cfg).unwrap();
            let peak = (0..thetas.len()).map(|i| h.at(i, 0)).fold(0.0, f64::max);
            (0..thetas.len()).filter(|&i| h.at(i, 0) >= peak / 2.0).count()
        };
        assert!(width(&wide) > width(&plain));
    }

    #[test]
    fn digital_genie_is_matched() {
        let cfg = ArrayConfig::reference();
        let v = genie_digital(0.3, 17, &cfg).unwrap();
        assert!(v.iter().all(|x| (x.norm() - 1.0 / 32f64.sqrt()).abs() < 1e-15));
        assert!((gain(0.3, cfg.subcarrier_freq(17), &v, &cfg).unwrap() - 32.0).abs() < 1e-9);
        assert!(genie_digital(0.3, 1200, &cfg).is_err());
    }

    #[test]
    fn genie_policies_track_points() {
        let cfg = desk_cfg();
        let opts = SolverOptions::for_config(&cfg);
        let assignment = SubbandAssignment::sequential(2);
        let mut policy = SteppedGeniePolicy::new(&cfg, &opts, assignment.clone());
        let p = EvalPoint { step: 0, aods: vec![-0.2, 0.4] };
        let first = policy.weights_for(0, &p).unwrap().clone();
        policy.weights_for(1, &p).unwrap();
        assert_eq!(policy.solves, 1);
        let direct = design_stepped(&p.aods, assignment.clone(), &cfg, &opts).unwrap();
        assert_eq!(first, direct.weights(&cfg));

        let mut digital = DigitalGeniePolicy::new(&cfg, assignment);
        let w = digital.weights_for(0, &p).unwrap();
        let f = cfg.subcarrier_freq(200);
        assert!((gain(0.4, f, &w.0[200], &cfg).unwrap() - 32.0).abs() < 1e-9);
    }

    #[test]
    fn design_json_fields() {
        let cfg = desk_cfg();
        let d = design_rainbow(&cfg, cfg.default_tau_max()).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&d.to_json(serde_json::json!({"seed": 1})).unwrap()).unwrap();
        assert_eq!(doc["kind"], "rainbow");
        assert_eq!(doc["phases_rad"].as_array().unwrap().len(), 32);
        assert_eq!(doc["delays_s"].as_array().unwrap().len(), 32);
        assert_eq!(doc["run"]["seed"], 1);
    }
}
