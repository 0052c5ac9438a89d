//! Uniform linear array model for a wideband true-time-delay transmitter.
//!
//! Angles are radians measured from broadside. Element indices run from 0,
//! so element `n` carries the progressive phase `2π·n·d·sin(θ)·f/f_c`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Relative slack allowed on the band edges when validating a frequency.
const BAND_EDGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
}

impl ArrayConfig {
    pub fn new(
        num_antennas: usize,
        spacing: f64,
        carrier_hz: f64,
        bandwidth_hz: f64,
        num_subcarriers: usize,
    ) -> Result<Self> {
        let cfg = ArrayConfig {
            num_antennas,
            spacing,
            carrier_hz,
            bandwidth_hz,
            num_subcarriers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 32 elements at half-wavelength spacing, 60 GHz carrier, 2 GHz over 1200 subcarriers.
    pub fn reference() -> Self {
        ArrayConfig {
            num_antennas: 32,
            spacing: 0.5,
            carrier_hz: 60e9,
            bandwidth_hz: 2e9,
            num_subcarriers: 1200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas < 1 {
            return Err(Error::config("array.num_antennas", "must be at least 1"));
        }
        if self.num_subcarriers < 1 {
            return Err(Error::config("array.num_subcarriers", "must be at least 1"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config("array.bandwidth", "must be positive"));
        }
        if !(self.carrier_hz > self.bandwidth_hz / 2.0 && self.carrier_hz.is_finite()) {
            return Err(Error::config(
                "array.carrier",
                "must exceed half the bandwidth",
            ));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::config("array.spacing", "must be positive"));
        }
        Ok(())
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.num_subcarriers as f64
    }

    /// Center frequency of subcarrier `k` (0-based).
    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        self.carrier_hz - self.bandwidth_hz / 2.0 + (k as f64 + 0.5) * self.subcarrier_spacing()
    }

    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        (0..self.num_subcarriers)
            .map(|k| self.subcarrier_freq(k))
            .collect()
    }

    pub fn band(&self) -> (f64, f64) {
        (
            self.carrier_hz - self.bandwidth_hz / 2.0,
            self.carrier_hz + self.bandwidth_hz / 2.0,
        )
    }

    /// Largest delay a TTD element may apply unless configured otherwise: `N_t / W`.
    pub fn default_tau_max(&self) -> f64 {
        self.num_antennas as f64 / self.bandwidth_hz
    }

    fn check_freq(&self, f: f64) -> Result<()> {
        let (lo, hi) = self.band();
        let slack = BAND_EDGE_SLACK * self.carrier_hz;
        if !(f >= lo - slack && f <= hi + slack) {
            return Err(Error::input(format!(
                "frequency {f} Hz outside band [{lo}, {hi}] Hz"
            )));
        }
        Ok(())
    }

    /// Per-element phase increment of the steering vector at `(theta, f)`.
    #[inline]
    pub(crate) fn phase_step(&self, theta: f64, f: f64) -> f64 {
        2.0 * PI * self.spacing * theta.sin() * f / self.carrier_hz
    }
}

/// Wrap an angle into `[-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x - 2.0 * PI * (x / (2.0 * PI)).round();
    w.clamp(-PI, PI)
}

/// Raw (unit-modulus) array response.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    /// Unit-norm copy.
    pub fn normalized(&self) -> Vec<Complex64> {
        let scale = 1.0 / (self.0.len() as f64).sqrt();
        self.0.iter().map(|a| a * scale).collect()
    }
}

pub fn array_response(theta: f64, f: f64, cfg: &ArrayConfig) -> Result<SteeringVector> {
    if !theta.is_finite() {
        return Err(Error::input("non-finite angle"));
    }
    cfg.check_freq(f)?;
    Ok(steering_unchecked(theta, f, cfg))
}

pub(crate) fn steering_unchecked(theta: f64, f: f64, cfg: &ArrayConfig) -> SteeringVector {
    let step = cfg.phase_step(theta, f);
    SteeringVector(
        (0..cfg.num_antennas)
            .map(|n| Complex64::from_polar(1.0, step * n as f64))
            .collect(),
    )
}

/// Phase shifter and true-time-delay settings for every element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogWeights {
    phases: Vec<f64>,
    delays: Vec<f64>,
}

impl AnalogWeights {
    pub fn new(phases: Vec<f64>, delays: Vec<f64>, tau_max: f64) -> Result<Self> {
        if phases.len() != delays.len() || phases.is_empty() {
            return Err(Error::input(format!(
                "phase/delay length mismatch ({} vs {})",
                phases.len(),
                delays.len()
            )));
        }
        if let Some(p) = phases.iter().find(|p| !(p.abs() <= PI)) {
            return Err(Error::input(format!("phase {p} outside [-π, π]")));
        }
        if let Some(t) = delays.iter().find(|t| !(**t >= 0.0 && **t <= tau_max)) {
            return Err(Error::input(format!("delay {t} outside [0, {tau_max}]")));
        }
        Ok(AnalogWeights { phases, delays })
    }

    /// Wraps phases and clamps delays into their feasible ranges.
    pub fn projected(phases: Vec<f64>, delays: Vec<f64>, tau_max: f64) -> Self {
        AnalogWeights {
            phases: phases.into_iter().map(wrap_phase).collect(),
            delays: delays.into_iter().map(|t| t.clamp(0.0, tau_max)).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        AnalogWeights {
            phases: vec![0.0; n],
            delays: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Unit-norm antenna weight vector at frequency `f`.
    pub fn awv(&self, f: f64) -> Vec<Complex64> {
        let scale = 1.0 / (self.len() as f64).sqrt();
        self.phases
            .iter()
            .zip(&self.delays)
            .map(|(phi, tau)| Complex64::from_polar(scale, phi - 2.0 * PI * tau * f))
            .collect()
    }
}

/// Anything that can produce a weight vector for each subcarrier.
pub trait SubcarrierWeights {
    fn weights_at(&self, k: usize, cfg: &ArrayConfig) -> Vec<Complex64>;
}

impl SubcarrierWeights for AnalogWeights {
    fn weights_at(&self, k: usize, cfg: &ArrayConfig) -> Vec<Complex64> {
        self.awv(cfg.subcarrier_freq(k))
    }
}

/// `|a(θ,f)ᴴ v|²`.
pub fn gain(theta: f64, f: f64, v: &[Complex64], cfg: &ArrayConfig) -> Result<f64> {
    if v.len() != cfg.num_antennas {
        return Err(Error::input(format!(
            "weight vector has {} entries, array has {}",
            v.len(),
            cfg.num_antennas
        )));
    }
    let a = array_response(theta, f, cfg)?;
    let dot: Complex64 = a.0.iter().zip(v).map(|(a, v)| a.conj() * v).sum();
    Ok(dot.norm_sqr())
}

/// Same quantity as [`gain`], evaluated with a Horner recurrence on the
/// steering phasor. Used in the capacity inner loops.
#[inline]
pub(crate) fn gain_fast(theta: f64, f: f64, v: &[Complex64], cfg: &ArrayConfig) -> f64 {
    let z = Complex64::from_polar(1.0, -cfg.phase_step(theta, f));
    let mut acc = Complex64::new(0.0, 0.0);
    for w in v.iter().rev() {
        acc = acc * z + w;
    }
    acc.norm_sqr()
}

/// Gains over an (AoD × subcarrier) grid, stored θ-major.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub thetas: Vec<f64>,
    pub freqs: Vec<f64>,
    pub gains: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.gains[i * self.freqs.len() + k]
    }

    /// Row `theta_deg,f_hz,gain` for every grid point, θ-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,f_hz,gain\n");
        for (i, theta) in self.thetas.iter().enumerate() {
            for (k, f) in self.freqs.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", theta.to_degrees(), f, self.at(i, k));
            }
        }
        out
    }

    /// Index of the strongest AoD for each subcarrier (first on ties).
    pub fn argmax_per_subcarrier(&self) -> Vec<usize> {
        (0..self.freqs.len())
            .map(|k| {
                let mut best = 0;
                for i in 1..self.thetas.len() {
                    if self.at(i, k) > self.at(best, k) {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// Evaluate a design over `thetas` and the subcarriers listed in `subcarriers`.
pub fn pattern_heatmap<W: SubcarrierWeights + ?Sized>(
    weights: &W,
    thetas: &[f64],
    subcarriers: &[usize],
    cfg: &ArrayConfig,
) -> Result<Heatmap> {
    if thetas.is_empty() || subcarriers.is_empty() {
        return Err(Error::input("heatmap grids must be non-empty"));
    }
    if let Some(k) = subcarriers.iter().find(|k| **k >= cfg.num_subcarriers) {
        return Err(Error::input(format!("subcarrier {k} out of range")));
    }
    let freqs: Vec<f64> = subcarriers.iter().map(|&k| cfg.subcarrier_freq(k)).collect();
    let columns: Vec<Vec<Complex64>> = subcarriers
        .iter()
        .map(|&k| weights.weights_at(k, cfg))
        .collect();
    let mut gains = Vec::with_capacity(thetas.len() * freqs.len());
    for &theta in thetas {
        for (f, v) in freqs.iter().zip(&columns) {
            gains.push(gain(theta, *f, v, cfg)?);
        }
    }
    Ok(Heatmap {
        thetas: thetas.to_vec(),
        freqs,
        gains,
    })
}

/// `count` angles evenly spaced over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
