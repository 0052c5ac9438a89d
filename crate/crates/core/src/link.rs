//! OFDMA sub-band mapping, per-subcarrier SNR, Shannon capacity, and the
//! minimum-capacity metric.

use std::fmt::Write as _;
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{gain_fast, ArrayConfig, SubcarrierWeights};
use crate::error::{Error, Result};
use crate::mobility::SubbandAssignment;

/// 0-based subcarrier range of sub-band `s` when `k` subcarriers are split
/// evenly among `users` sub-bands.
pub fn subband_indices(s: usize, k: usize, users: usize) -> Result<Range<usize>> {
    if users == 0 || !k.is_multiple_of(users) {
        return Err(Error::input(format!(
            "{k} subcarriers cannot be split evenly among {users} users"
        )));
    }
    if s >= users {
        return Err(Error::input(format!("sub-band {s} out of range for {users} users")));
    }
    let width = k / users;
    Ok(s * width..(s + 1) * width)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// `P_tot / σ_N²`, linear.
    pub nominal_snr: f64,
    /// `|h_u|²` per user; users beyond the list default to 1.
    pub path_gains: Vec<f64>,
}

impl LinkBudget {
    pub fn from_db(snr_db: f64) -> Self {
        LinkBudget {
            nominal_snr: 10f64.powf(snr_db / 10.0),
            path_gains: Vec::new(),
        }
    }

    pub fn path_gain(&self, user: usize) -> f64 {
        self.path_gains.get(user).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_snr > 0.0 && self.nominal_snr.is_finite()) {
            return Err(Error::config("link.snr_db", "must be finite"));
        }
        if self.path_gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::config("link.path_gain_db", "entries must be finite"));
        }
        Ok(())
    }
}

/// Per-step, per-subcarrier transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    steps: usize,
    subcarriers: usize,
    total: f64,
    powers: Vec<f64>,
}

impl PowerAllocation {
    pub fn uniform(steps: usize, subcarriers: usize, total: f64) -> Self {
        PowerAllocation {
            steps,
            subcarriers,
            total,
            powers: vec![total / subcarriers as f64; steps * subcarriers],
        }
    }

    pub fn power(&self, step: usize, k: usize) -> f64 {
        self.powers[step * self.subcarriers + k]
    }

    /// `P_{i,k}·K / P_tot`; one under uniform allocation.
    pub fn relative(&self, step: usize, k: usize) -> f64 {
        self.power(step, k) * self.subcarriers as f64 / self.total
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_total(&self, step: usize) -> f64 {
        self.powers[step * self.subcarriers..(step + 1) * self.subcarriers]
            .iter()
            .sum()
    }
}

/// `ζ = |h|² · a · (P_{i,k}·K/P_tot) · ψ`.
pub fn subcarrier_snr(gain: f64, relative_power: f64, nominal_snr: f64, path_gain: f64) -> f64 {
    path_gain * gain * relative_power * nominal_snr
}

/// Weight vectors for every subcarrier of a fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights(pub Vec<Vec<Complex64>>);

impl BeamWeights {
    pub fn from_design<W: SubcarrierWeights + ?Sized>(design: &W, cfg: &ArrayConfig) -> Self {
        BeamWeights(
            (0..cfg.num_subcarriers)
                .map(|k| design.weights_at(k, cfg))
                .collect(),
        )
    }
}

/// Capacity (bits/s) of one user over its own sub-band.
pub fn user_capacity(
    beam: &BeamWeights,
    theta: f64,
    subband: Range<usize>,
    step: usize,
    alloc: &PowerAllocation,
    budget: &LinkBudget,
    user: usize,
    cfg: &ArrayConfig,
) -> f64 {
    let w_sc = cfg.subcarrier_spacing();
    let h2 = budget.path_gain(user);
    subband
        .map(|k| {
            let g = gain_fast(theta, cfg.subcarrier_freq(k), &beam.0[k], cfg);
            let zeta = subcarrier_snr(g, alloc.relative(step, k), budget.nominal_snr, h2);
            w_sc * (1.0 + zeta).log2()
        })
        .sum()
}

/// One evaluation point: every user's true AoD and the time step whose power
/// row applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub aods: Vec<f64>,
}

/// Per-user offsets `o_j` spanning `[-max_offset, max_offset]`, applied to all
/// users at once.
pub fn offset_grid(centers: &[f64], max_offset: f64, count: usize) -> Result<Vec<EvalPoint>> {
    if count < 1 {
        return Err(Error::input("offset grid needs at least one point"));
    }
    // Index-times-pitch keeps grids with equal pitch exactly nested.
    let offsets: Vec<f64> = if count == 1 {
        vec![0.0]
    } else {
        let pitch = 2.0 * max_offset / (count - 1) as f64;
        let mid = (count - 1) as f64 / 2.0;
        (0..count).map(|j| (j as f64 - mid) * pitch).collect()
    };
    Ok(offsets
        .into_iter()
        .map(|o| EvalPoint {
            step: 0,
            aods: centers.iter().map(|c| c + o).collect(),
        })
        .collect())
}

/// Supplies the weights to use at each evaluation point. Fixed designs return
/// the same table every time; genie policies re-point per point.
pub trait BeamPolicy {
    fn weights_for(&mut self, index: usize, point: &EvalPoint) -> Result<&BeamWeights>;
}

impl BeamPolicy for BeamWeights {
    fn weights_for(&mut self, _index: usize, _point: &EvalPoint) -> Result<&BeamWeights> {
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRecord {
    /// `capacities[u][j]`: user `u` at evaluation point `j`, bits/s.
    pub capacities: Vec<Vec<f64>>,
    pub min_capacity: f64,
}

impl CapacityRecord {
    fn from_capacities(capacities: Vec<Vec<f64>>) -> Self {
        let min_capacity = capacities
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        CapacityRecord {
            capacities,
            min_capacity,
        }
    }
}

pub struct LinkContext<'a> {
    pub cfg: &'a ArrayConfig,
    pub budget: &'a LinkBudget,
    pub alloc: &'a PowerAllocation,
    pub assignment: &'a SubbandAssignment,
}

/// Minimum over users and evaluation points of the user capacity.
pub fn min_capacity<P: BeamPolicy + ?Sized>(
    policy: &mut P,
    points: &[EvalPoint],
    ctx: &LinkContext<'_>,
) -> Result<CapacityRecord> {
    if points.is_empty() {
        return Err(Error::input("evaluation set is empty"));
    }
    let users = ctx.assignment.num_users();
    let k = ctx.cfg.num_subcarriers;
    let bands: Vec<Range<usize>> = (0..users)
        .map(|u| subband_indices(ctx.assignment.subband_of(u), k, users))
        .collect::<Result<_>>()?;
    let mut capacities = vec![Vec::with_capacity(points.len()); users];
    for (j, point) in points.iter().enumerate() {
        if point.aods.len() != users {
            return Err(Error::input("evaluation point user count mismatch"));
        }
        let beam = policy.weights_for(j, point)?;
        for u in 0..users {
            capacities[u].push(user_capacity(
                beam,
                point.aods[u],
                bands[u].clone(),
                point.step,
                ctx.alloc,
                ctx.budget,
                u,
                ctx.cfg,
            ));
        }
    }
    Ok(CapacityRecord::from_capacities(capacities))
}

/// Rows `trial,beam,user,eval_index,capacity_bps`.
pub fn capacity_rows_csv(rows: &[(u64, &str, &CapacityRecord)]) -> String {
    let mut out = String::from("trial,beam,user,eval_index,capacity_bps\n");
    for (trial, beam, rec) in rows {
        for (u, caps) in rec.capacities.iter().enumerate() {
            for (j, c) in caps.iter().enumerate() {
                let _ = writeln!(out, "{trial},{beam},{u},{j},{c}");
            }
        }
    }
    out
}

/// Rows `trial,beam,min_capacity_bps`.
pub fn capacity_summary_csv(rows: &[(u64, &str, &CapacityRecord)]) -> String {
    let mut out = String::from("trial,beam,min_capacity_bps\n");
    for (trial, beam, rec) in rows {
        let _ = writeln!(out, "{trial},{beam},{}", rec.min_capacity);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{array_response, AnalogWeights};

    fn cfg() -> ArrayConfig {
        ArrayConfig::reference()
    }

    /// Matched beam toward `thetas[s]` on every subcarrier of sub-band `s`.
    fn matched(thetas: &[f64], cfg: &ArrayConfig) -> BeamWeights {
        let u = thetas.len();
        let width = cfg.num_subcarriers / u;
        BeamWeights(
            (0..cfg.num_subcarriers)
                .map(|k| {
                    array_response(thetas[k / width], cfg.subcarrier_freq(k), cfg)
                        .unwrap()
                        .normalized()
                })
                .collect(),
        )
    }

    #[test]
    fn subbands_partition_the_band() {
        assert_eq!(subband_indices(0, 1200, 3).unwrap(), 0..400);
        assert_eq!(subband_indices(1, 1200, 3).unwrap(), 400..800);
        let mut all: Vec<usize> = (0..3)
            .flat_map(|s| subband_indices(s, 1200, 3).unwrap())
            .collect();
        all.sort();
        assert_eq!(all, (0..1200).collect::<Vec<_>>());
        assert!(subband_indices(0, 256, 3).is_err());
        assert!(subband_indices(3, 1200, 3).is_err());
    }

    #[test]
    fn snr_calibration() {
        let b = LinkBudget::from_db(-10.0);
        assert!((subcarrier_snr(1.0, 1.0, b.nominal_snr, 1.0) - 0.1).abs() < 1e-15);
        assert!((subcarrier_snr(32.0, 1.0, b.nominal_snr, 1.0) - 3.2).abs() < 1e-14);
        assert_eq!(subcarrier_snr(32.0, 0.0, b.nominal_snr, 1.0), 0.0);
    }

    #[test]
    fn uniform_allocation_paths_agree() {
        let a = PowerAllocation::uniform(4, 1200, 2.5);
        for i in 0..4 {
            assert!((a.step_total(i) - 2.5).abs() < 1e-12);
            for k in [0, 599, 1199] {
                let direct = 7.0 * (a.power(i, k) * 1200.0 / 2.5) * 0.1;
                assert!((subcarrier_snr(7.0, a.relative(i, k), 0.1, 1.0) - direct).abs() < 1e-15);
                assert!((subcarrier_snr(7.0, a.relative(i, k), 0.1, 1.0) - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn genie_capacity_closed_form() {
        let c = cfg();
        let beam = matched(&[0.1, -0.4, 0.6], &c);
        let alloc = PowerAllocation::uniform(1, 1200, 1.0);
        let budget = LinkBudget::from_db(-10.0);
        let cap = user_capacity(&beam, -0.4, 400..800, 0, &alloc, &budget, 1, &c);
        let per_sc = c.subcarrier_spacing() * 4.2f64.log2();
        assert!((per_sc / 1e6 - 3.45).abs() < 0.01);
        assert!((cap - 400.0 * per_sc).abs() / cap < 1e-9);
        assert!((cap / 1e9 - 1.38).abs() < 0.005);
    }

    #[test]
    fn zero_gain_gives_zero_capacity() {
        let c = cfg();
        let beam = BeamWeights(vec![vec![Complex64::new(0.0, 0.0); 32]; 1200]);
        let alloc = PowerAllocation::uniform(1, 1200, 1.0);
        let cap = user_capacity(&beam, 0.0, 0..400, 0, &alloc, &LinkBudget::from_db(-10.0), 0, &c);
        assert_eq!(cap, 0.0);
    }

    #[test]
    fn capacity_monotone_in_snr() {
        let c = cfg();
        let w = AnalogWeights::projected(vec![0.2; 32], (0..32).map(|n| n as f64 * 2e-11).collect(), 1e-8);
        let beam = BeamWeights::from_design(&w, &c);
        let alloc = PowerAllocation::uniform(1, 1200, 1.0);
        let mut prev = 0.0;
        for db in [-30.0, -10.0, 0.0, 10.0] {
            let cap = user_capacity(&beam, 0.3, 0..400, 0, &alloc, &LinkBudget::from_db(db), 0, &c);
            assert!(cap >= prev);
            prev = cap;
        }
    }

    #[test]
    fn capacity_ignores_other_subbands() {
        let c = cfg();
        let mut beam = matched(&[0.1, -0.4, 0.6], &c);
        let alloc = PowerAllocation::uniform(1, 1200, 1.0);
        let budget = LinkBudget::from_db(-10.0);
        let before = user_capacity(&beam, 0.1, 0..400, 0, &alloc, &budget, 0, &c);
        for row in beam.0.iter_mut().skip(400) {
            row.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        }
        let after = user_capacity(&beam, 0.1, 0..400, 0, &alloc, &budget, 0, &c);
        assert_eq!(before, after);
    }

    #[test]
    fn offset_grid_layout() {
        let g = offset_grid(&[0.1, -0.2], 0.0, 5).unwrap();
        assert!(g.iter().all(|p| p.aods == vec![0.1, -0.2]));
        let deg = std::f64::consts::PI / 180.0;
        let g = offset_grid(&[0.0], 20.0 * deg, 100).unwrap();
        let spacing = (g[1].aods[0] - g[0].aods[0]) / deg;
        assert!((spacing - 40.0 / 99.0).abs() < 1e-9);
        for j in 0..100 {
            assert!((g[j].aods[0] + g[99 - j].aods[0]).abs() < 1e-12);
        }
        assert!(offset_grid(&[0.0], 1.0, 0).is_err());
    }

    #[test]
    fn genie_min_capacity_is_user_count_closed_form() {
        let c = ArrayConfig::new(32, 0.5, 60e9, 2e9, 240).unwrap();
        for users in [1usize, 2, 3, 4] {
            let thetas: Vec<f64> = (0..users).map(|u| -0.5 + 0.3 * u as f64).collect();
            let mut beam = matched(&thetas, &c);
            let alloc = PowerAllocation::uniform(1, 240, 1.0);
            let budget = LinkBudget::from_db(-10.0);
            let assignment = SubbandAssignment::sequential(users);
            let ctx = LinkContext { cfg: &c, budget: &budget, alloc: &alloc, assignment: &assignment };
            let rec = min_capacity(&mut beam, &offset_grid(&thetas, 0.0, 1).unwrap(), &ctx).unwrap();
            let expect = c.subcarrier_spacing() * (240 / users) as f64 * (1.0 + 3.2f64).log2();
            assert!((rec.min_capacity - expect).abs() / expect < 1e-9);
        }
    }

    #[test]
    fn min_over_superset_never_increases() {
        let c = ArrayConfig::new(16, 0.5, 60e9, 2e9, 64).unwrap();
        let w = AnalogWeights::projected(vec![0.0; 16], vec![0.0; 16], 1e-8);
        let mut beam = BeamWeights::from_design(&w, &c);
        let alloc = PowerAllocation::uniform(1, 64, 1.0);
        let budget = LinkBudget::from_db(-10.0);
        let assignment = SubbandAssignment::sequential(2);
        let ctx = LinkContext { cfg: &c, budget: &budget, alloc: &alloc, assignment: &assignment };
        let mut points = offset_grid(&[0.0, 0.3], 0.05, 3).unwrap();
        let small = min_capacity(&mut beam, &points, &ctx).unwrap();
        points.push(EvalPoint { step: 0, aods: vec![0.7, -0.9] });
        let big = min_capacity(&mut beam, &points, &ctx).unwrap();
        assert!(big.min_capacity <= small.min_capacity);
        assert!(min_capacity(&mut beam, &[], &ctx).is_err());
    }

    #[test]
    fn flat_profile_capacity_scales_with_subcarrier_count() {
        // Same band, half as many subcarriers, twice as wide: identical
        // capacity when every subcarrier sees the same gain.
        for k in [120usize, 240] {
            let c = ArrayConfig::new(8, 0.5, 60e9, 2e9, k).unwrap();
            let beam = BeamWeights(
                (0..k)
                    .map(|j| array_response(0.0, c.subcarrier_freq(j), &c).unwrap().normalized())
                    .collect(),
            );
            let alloc = PowerAllocation::uniform(1, k, 1.0);
            let cap = user_capacity(&beam, 0.0, 0..k, 0, &alloc, &LinkBudget::from_db(-10.0), 0, &c);
            assert!((cap - 2e9 * 1.8f64.log2()).abs() / cap < 1e-12);
        }
    }

    #[test]
    fn csv_layouts() {
        let rec = CapacityRecord::from_capacities(vec![vec![1.0, 2.0], vec![3.0, 0.5]]);
        assert_eq!(rec.min_capacity, 0.5);
        let rows = [(7u64, "stepped", &rec)];
        let full = capacity_rows_csv(&rows);
        assert!(full.starts_with("trial,beam,user,eval_index,capacity_bps\n"));
        assert_eq!(full.lines().count(), 5);
        assert_eq!(
            capacity_summary_csv(&rows),
            "trial,beam,min_capacity_bps\n7,stepped,0.5\n"
        );
    }
}
