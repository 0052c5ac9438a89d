//! Joint phase-time array synthesis.
//!
//! Fits element phases and true-time delays so that, at every subcarrier
//! `f_k`, the beam points toward a target AoD `g_k`. The fit maximizes
//! `Σ_k |v_kᴴ u_k|` where `u_k` is the unit-norm steering vector of the
//! target at `f_k`.
//!
//! The solver alternates between three blocks, each maximized exactly:
//!
//! 1. auxiliary per-subcarrier phases `ψ_k` that align every term;
//! 2. per-element delay `τ_n`, by a coarse FFT scan of
//!    `G_n(τ) = |Σ_k e^{jψ_k} e^{j2πτ f_k} u_{k,n}|` over `[0, τ_max]`
//!    followed by two golden-section refinements;
//! 3. per-element phase `φ_n = arg(Σ_k e^{jψ_k} e^{j2πτ_n f_k} u_{k,n})`.
//!
//! A delay update is only accepted when it does not lower `G_n`, which makes
//! the objective non-decreasing from one iteration to the next.
//!
//! Multi-lobe profiles have many local optima, so a cold solve runs from the
//! least-squares line fit plus a few fixed pseudo-random starts and keeps the
//! best result. Solves are deterministic.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array::{gain_fast, steering_unchecked, wrap_phase, AnalogWeights, ArrayConfig};
use crate::error::{Error, Result};
use crate::search::golden_section_max;

/// Target AoD (radians) for every subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProfile {
    angles: Vec<f64>,
    cfg: ArrayConfig,
}

impl TargetProfile {
    pub fn new(angles: Vec<f64>, cfg: &ArrayConfig) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::input("target profile is empty"));
        }
        if angles.len() != cfg.num_subcarriers {
            return Err(Error::input(format!(
                "target profile has {} entries, array has {} subcarriers",
                angles.len(),
                cfg.num_subcarriers
            )));
        }
        if let Some(g) = angles.iter().find(|g| !(g.abs() <= PI / 2.0)) {
            return Err(Error::input(format!("target AoD {g} rad outside [-π/2, π/2]")));
        }
        Ok(TargetProfile {
            angles,
            cfg: cfg.clone(),
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Absolute improvement below which iteration stops.
    pub objective_tolerance: f64,
    /// Upper bound on every element delay (seconds).
    pub tau_max: f64,
    /// Approximate number of coarse delay candidates scanned over `[0, τ_max]`.
    pub delay_search_resolution: usize,
    /// Extra pseudo-random starting points tried after the line-fit start
    /// when no initial weights are given. The best local optimum is kept.
    pub restarts: usize,
}

impl SolverOptions {
    pub fn for_config(cfg: &ArrayConfig) -> Self {
        SolverOptions {
            max_iters: 100,
            objective_tolerance: 1e-6 * cfg.num_subcarriers as f64,
            tau_max: cfg.default_tau_max(),
            delay_search_resolution: 256,
            restarts: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::config("design.max_iters", "must be at least 1"));
        }
        if !(self.objective_tolerance > 0.0) {
            return Err(Error::config("design.objective_tolerance", "must be positive"));
        }
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::config("design.tau_max_ns", "must be positive"));
        }
        if self.delay_search_resolution < 2 {
            return Err(Error::config(
                "design.delay_search_resolution",
                "must be at least 2",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub weights: AnalogWeights,
    /// Objective at the initial point followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
}

impl SolverReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,objective\n");
        for (i, v) in self.objective_trace.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }
}

pub fn jpta_objective(weights: &AnalogWeights, targets: &TargetProfile) -> f64 {
    let cfg = &targets.cfg;
    let norm = (cfg.num_antennas as f64).sqrt();
    targets
        .angles
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let f = cfg.subcarrier_freq(k);
            gain_fast(g, f, &weights.awv(f), cfg).sqrt() / norm
        })
        .sum()
}

/// Least-squares linear fit of the per-element phase progression, mapped to
/// a progressive phase and delay and shifted into `[0, τ_max]`.
pub fn line_fit_initialization(targets: &TargetProfile, tau_max: f64) -> AnalogWeights {
    let cfg = &targets.cfg;
    let n = cfg.num_antennas;
    let freqs = cfg.subcarrier_freqs();
    let steps: Vec<f64> = targets
        .angles
        .iter()
        .zip(&freqs)
        .map(|(&g, &f)| cfg.phase_step(g, f))
        .collect();
    let k = freqs.len() as f64;
    // Centered regression keeps the normal equations well conditioned.
    let f_mean = freqs.iter().sum::<f64>() / k;
    let y_mean = steps.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (f, y) in freqs.iter().zip(&steps) {
        sxy += (f - f_mean) * (y - y_mean);
        sxx += (f - f_mean) * (f - f_mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = y_mean - slope * f_mean;

    let raw_delays: Vec<f64> = (0..n).map(|i| -(i as f64) * slope / (2.0 * PI)).collect();
    let min_delay = raw_delays.iter().cloned().fold(f64::INFINITY, f64::min);
    let delays: Vec<f64> = raw_delays.iter().map(|t| t - min_delay).collect();
    // A common delay shift only rotates the whole vector.
    let phases: Vec<f64> = (0..n).map(|i| i as f64 * intercept).collect();
    AnalogWeights::projected(phases, delays, tau_max)
}

struct Workspace {
    freqs: Vec<f64>,
    f0: f64,
    df: f64,
    /// `u[k][n]`: unit-norm steering vector toward `g_k` at `f_k`.
    u: Vec<Vec<Complex64>>,
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    grid_last: usize,
    grid_step: f64,
    tau_max: f64,
}

impl Workspace {
    fn new(targets: &TargetProfile, opts: &SolverOptions) -> Self {
        let cfg = targets.cfg.clone();
        let freqs = cfg.subcarrier_freqs();
        let u = targets
            .angles
            .iter()
            .zip(&freqs)
            .map(|(&g, &f)| steering_unchecked(g, f, &cfg).normalized())
            .collect();
        let df = cfg.subcarrier_spacing();
        let k = cfg.num_subcarriers;
        // Grid τ_m = m / (L·Δf); choose L so the step is no coarser than
        // τ_max / (resolution - 1).
        let wanted = (opts.delay_search_resolution - 1) as f64 / (opts.tau_max * df);
        let fft_len = (wanted.ceil() as usize).max(k).next_power_of_two();
        let grid_step = 1.0 / (fft_len as f64 * df);
        let grid_last = (opts.tau_max / grid_step).floor() as usize;
        let fft = FftPlanner::new().plan_fft_inverse(fft_len);
        Workspace {
            f0: freqs[0],
            freqs,
            df,
            u,
            fft,
            fft_len,
            grid_last,
            grid_step,
            tau_max: opts.tau_max,
        }
    }

    /// `Σ_k b_k e^{j2πτ(f_k - f_0)}` by Horner's rule.
    fn poly(&self, b: &[Complex64], tau: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * tau * self.df);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in b.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// Best delay for one element given its rotated target column `b`.
    fn best_delay(&self, b: &[Complex64], current: f64, buf: &mut Vec<Complex64>) -> f64 {
        buf.clear();
        buf.extend_from_slice(b);
        buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
        self.fft.process(buf);

        let mut best_m = 0;
        let mut best_val = buf[0].norm();
        for m in 1..=self.grid_last {
            let val = buf[m % self.fft_len].norm();
            if val > best_val {
                best_val = val;
                best_m = m;
            }
        }
        let tau_grid = best_m as f64 * self.grid_step;
        let h = self.grid_step;
        let objective = |t: f64| self.poly(b, t).norm();

        let lo = (tau_grid - h).max(0.0);
        let hi = (tau_grid + h).min(self.tau_max);
        let (t1, v1) = golden_section_max(objective, lo, hi, h * 1e-2);
        let lo = (t1 - h * 1e-2).max(0.0);
        let hi = (t1 + h * 1e-2).min(self.tau_max);
        let (t2, v2) = golden_section_max(objective, lo, hi, h * 1e-6);

        let mut cand = (tau_grid, best_val);
        for (t, v) in [(t1, v1), (t2, v2)] {
            if v > cand.1 {
                cand = (t, v);
            }
        }
        if cand.1 > objective(current) {
            cand.0
        } else {
            current
        }
    }
}

/// Seed of the fixed stream that generates restart points.
const RESTART_SEED: u64 = 0x7a11_5eed;

pub fn jpta_solve(
    targets: &TargetProfile,
    opts: &SolverOptions,
    initial: Option<&AnalogWeights>,
) -> Result<SolverReport> {
    opts.validate()?;
    let cfg = &targets.cfg;
    let ws = Workspace::new(targets, opts);
    if let Some(w) = initial {
        if w.len() != cfg.num_antennas {
            return Err(Error::input("initial weights do not match the array size"));
        }
        let start = AnalogWeights::projected(w.phases().to_vec(), w.delays().to_vec(), opts.tau_max);
        return Ok(run_from(&ws, targets, opts, start));
    }

    let mut best = run_from(&ws, targets, opts, line_fit_initialization(targets, opts.tau_max));
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    for _ in 0..opts.restarts {
        let n = cfg.num_antennas;
        let phases = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let delays = (0..n).map(|_| rng.random_range(0.0..opts.tau_max)).collect();
        let report = run_from(&ws, targets, opts, AnalogWeights::projected(phases, delays, opts.tau_max));
        if report.objective() > best.objective() {
            best = report;
        }
    }
    Ok(best)
}

fn run_from(
    ws: &Workspace,
    targets: &TargetProfile,
    opts: &SolverOptions,
    mut weights: AnalogWeights,
) -> SolverReport {
    let n_ant = targets.cfg.num_antennas;
    let k_sub = targets.cfg.num_subcarriers;
    let inv_sqrt_n = 1.0 / (n_ant as f64).sqrt();

    let mut trace = vec![jpta_objective(&weights, targets)];
    let mut iterations = 0;
    let mut rot = vec![Complex64::new(0.0, 0.0); k_sub];
    let mut column = vec![Complex64::new(0.0, 0.0); k_sub];
    let mut buf = Vec::with_capacity(ws.fft_len);

    while iterations < opts.max_iters {
        // (1) per-subcarrier alignment phases e^{jψ_k} = conj(c_k)/|c_k|.
        for (k, r) in rot.iter_mut().enumerate() {
            let f = ws.freqs[k];
            let c: Complex64 = weights
                .phases()
                .iter()
                .zip(weights.delays())
                .zip(&ws.u[k])
                .map(|((phi, tau), u)| Complex64::from_polar(inv_sqrt_n, -(phi - 2.0 * PI * tau * f)) * u)
                .sum();
            let mag = c.norm();
            *r = if mag > 0.0 {
                c.conj() / mag
            } else {
                Complex64::new(1.0, 0.0)
            };
        }

        // (2)+(3) element-wise delay and phase.
        let mut phases = weights.phases().to_vec();
        let mut delays = weights.delays().to_vec();
        for n in 0..n_ant {
            for k in 0..k_sub {
                column[k] = rot[k] * ws.u[k][n];
            }
            let tau = ws.best_delay(&column, delays[n], &mut buf);
            let s = Complex64::from_polar(1.0, 2.0 * PI * tau * ws.f0) * ws.poly(&column, tau);
            delays[n] = tau;
            if s.norm() > 0.0 {
                phases[n] = wrap_phase(s.arg());
            }
        }
        weights = AnalogWeights::projected(phases, delays, opts.tau_max);
        iterations += 1;

        let obj = jpta_objective(&weights, targets);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if obj - prev < opts.objective_tolerance {
            break;
        }
    }

    SolverReport {
        weights,
        objective_trace: trace,
        iterations_used: iterations,
    }
}
