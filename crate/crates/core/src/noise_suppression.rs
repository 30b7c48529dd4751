//! Wiener-filter speech enhancement.
//!
//! The noise power is initialised from the leading frames and then tracked
//! with a minima-controlled recursive average. The gain is a two-step
//! estimate: a decision-directed a priori SNR gives a first Wiener gain,
//! which is used to re-estimate the a priori SNR of the current frame.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::stft::{istft_samples, stft_unchecked};
use crate::signal::{Spectrogram, StftConfig, Waveform, WindowKind, SAMPLE_RATE};

/// Smallest noise power estimate.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerConfig {
    pub frame_len: usize,
    pub hop: usize,
    /// Decision-directed smoothing.
    pub beta: f64,
    pub gain_floor_db: f64,
    pub noise_init_ms: f64,
    /// Noise update rate in noise-only frames.
    pub noise_smoothing: f64,
    /// Smoothing of the power used for minimum tracking.
    pub power_smoothing: f64,
    /// Smoothing of the speech presence probability.
    pub presence_smoothing: f64,
    /// Power-to-minimum ratio above which speech is declared present.
    pub presence_threshold: f64,
    /// Length of the minimum search window, seconds.
    pub minimum_window_secs: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 256,
            beta: 0.98,
            gain_floor_db: -18.0,
            noise_init_ms: 120.0,
            noise_smoothing: 0.95,
            power_smoothing: 0.8,
            presence_smoothing: 0.2,
            presence_threshold: 5.0,
            minimum_window_secs: 0.75,
        }
    }
}

impl WienerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.beta) {
            return Err(Error::Config(format!("wiener beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.gain_floor_db < 0.0) {
            return Err(Error::Config(format!(
                "wiener gain floor must be below 0 dB, got {}",
                self.gain_floor_db
            )));
        }
        if !(unit(self.noise_smoothing) && unit(self.power_smoothing) && unit(self.presence_smoothing)) {
            return Err(Error::Config("wiener smoothing constants must lie in (0, 1)".into()));
        }
        if !(self.noise_init_ms > 0.0 && self.minimum_window_secs > 0.0 && self.presence_threshold > 1.0) {
            return Err(Error::Config("wiener noise tracking constants out of range".into()));
        }
        self.stft()?;
        Ok(())
    }

    pub fn stft(&self) -> Result<StftConfig> {
        StftConfig::new(self.frame_len, self.hop, WindowKind::Hann)
    }

    fn init_samples(&self) -> usize {
        (self.noise_init_ms * 1e-3 * SAMPLE_RATE as f64).round() as usize
    }

    /// Frames lying entirely inside the initial noise segment.
    fn init_frames(&self) -> std::ops::Range<usize> {
        let lead = self.frame_len - self.hop;
        let first = lead.div_ceil(self.hop);
        let end = (self.init_samples() + lead).saturating_sub(self.frame_len) / self.hop + 1;
        first..end.max(first)
    }
}

/// Per-frame noise power, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    bins: usize,
    power: Vec<f64>,
}

impl NoiseEstimate {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.power.len() / self.bins
    }

    pub fn frame(&self, m: usize) -> &[f64] {
        &self.power[m * self.bins..(m + 1) * self.bins]
    }
}

pub fn estimate_noise_psd(s: &Spectrogram, cfg: &WienerConfig) -> Result<NoiseEstimate> {
    cfg.validate()?;
    let init = cfg.init_frames();
    if s.frames() < init.end || init.is_empty() {
        return Err(Error::TooShort {
            id: "noise estimate".into(),
            len: s.signal_len(),
            min: cfg.init_samples().max(cfg.frame_len),
        });
    }
    let bins = s.bins();
    let mut noise = vec![0.0; bins];
    for m in init.clone() {
        for (n, c) in noise.iter_mut().zip(s.frame(m)) {
            *n += c.norm_sqr();
        }
    }
    for n in noise.iter_mut() {
        *n = (*n / init.len() as f64).max(NOISE_FLOOR);
    }

    let window = ((cfg.minimum_window_secs * SAMPLE_RATE as f64 / cfg.hop as f64).round() as usize).max(1);
    let mut smoothed = noise.clone();
    let mut minimum = noise.clone();
    let mut running = noise.clone();
    let mut presence = vec![0.0; bins];
    let mut power = Vec::with_capacity(s.frames() * bins);
    let mut raw = vec![0.0; bins];
    for m in 0..s.frames() {
        if m < init.end {
            power.extend_from_slice(&noise);
            continue;
        }
        for (r, c) in raw.iter_mut().zip(s.frame(m)) {
            *r = c.norm_sqr();
        }
        for k in 0..bins {
            // three-point smoothing across frequency
            let lo = raw[k.saturating_sub(1)];
            let hi = raw[(k + 1).min(bins - 1)];
            let local = 0.25 * lo + 0.5 * raw[k] + 0.25 * hi;
            smoothed[k] = cfg.power_smoothing * smoothed[k] + (1.0 - cfg.power_smoothing) * local;
            minimum[k] = minimum[k].min(smoothed[k]);
            running[k] = running[k].min(smoothed[k]);
            let speech = smoothed[k] > cfg.presence_threshold * minimum[k].max(NOISE_FLOOR);
            let indicator = if speech { 1.0 } else { 0.0 };
            presence[k] = cfg.presence_smoothing * presence[k] + (1.0 - cfg.presence_smoothing) * indicator;
            let a = cfg.noise_smoothing + (1.0 - cfg.noise_smoothing) * presence[k].max(indicator);
            noise[k] = (a * noise[k] + (1.0 - a) * raw[k]).max(NOISE_FLOOR);
        }
        if (m - init.end + 1).is_multiple_of(window) {
            minimum.copy_from_slice(&running);
            running.copy_from_slice(&smoothed);
        }
        power.extend_from_slice(&noise);
    }
    Ok(NoiseEstimate { bins, power })
}

/// Per-cell enhancement gains, in `[floor, 1]`.
pub fn wiener_gains(s: &Spectrogram, noise: &NoiseEstimate, cfg: &WienerConfig) -> Vec<f64> {
    let floor = 10f64.powf(cfg.gain_floor_db / 20.0);
    let bins = s.bins();
    let mut gains = vec![0.0; s.cells().len()];
    let mut previous = vec![0.0; bins];
    for m in 0..s.frames() {
        let lambda = noise.frame(m);
        for k in 0..bins {
            let y = s.frame(m)[k].norm_sqr();
            let gamma = y / lambda[k];
            let xi_dd = cfg.beta * previous[k] / lambda[k] + (1.0 - cfg.beta) * (gamma - 1.0).max(0.0);
            let g_dd = xi_dd / (1.0 + xi_dd);
            let xi = g_dd * g_dd * gamma;
            let g = (xi / (1.0 + xi)).max(floor);
            gains[m * bins + k] = g;
            previous[k] = g * g * y;
        }
    }
    gains
}

pub fn wiener_enhance(noisy: &Waveform, cfg: &WienerConfig) -> Result<Waveform> {
    let stft = cfg.stft()?;
    let s = stft_unchecked(noisy.samples(), &stft);
    let noise = estimate_noise_psd(&s, cfg)?;
    let gains = wiener_gains(&s, &noise, cfg);
    let cells: Vec<Complex64> = s.cells().iter().zip(&gains).map(|(c, g)| c * g).collect();
    let out = s.with_cells(cells)?;
    Waveform::with_rate(istft_samples(&out), noisy.sample_rate())
}

/// Optional enhancement stage ahead of the hearing aid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEnd {
    #[default]
    None,
    Wiener,
}

impl FrontEnd {
    pub fn apply(self, w: &Waveform, cfg: &WienerConfig) -> Result<Waveform> {
        match self {
            FrontEnd::None => Ok(w.clone()),
            FrontEnd::Wiener => wiener_enhance(w, cfg),
        }
    }
}

impl fmt::Display for FrontEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrontEnd::None => "none",
            FrontEnd::Wiener => "wiener",
        })
    }
}

impl FromStr for FrontEnd {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FrontEnd::None),
            "wiener" => Ok(FrontEnd::Wiener),
            _ => Err(Error::Config(format!("unknown front end `{s}` (expected none or wiener)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn white(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn db(x: f64) -> f64 {
        10.0 * x.log10()
    }

    #[test]
    fn init_frames_cover_120_ms() {
        let r = WienerConfig::default().init_frames();
        assert_eq!(r.start, 3);
        let last_end = (r.end - 1) * 256 + 256;
        assert!(last_end <= 5292 && last_end + 256 > 5292);
    }

    #[test]
    fn white_noise_estimate_is_flat() {
        let cfg = WienerConfig::default();
        let x = white(44100, 0.01, 1);
        let s = stft_unchecked(&x, &cfg.stft().unwrap());
        let est = estimate_noise_psd(&s, &cfg).unwrap();
        // periodogram average over the whole signal
        let frames = 4..s.frames() - 4;
        let periodogram: Vec<f64> = (0..s.bins())
            .map(|k| frames.clone().map(|m| s.frame(m)[k].norm_sqr()).sum::<f64>() / frames.len() as f64)
            .collect();
        let last = est.frame(est.frames() - 5);
        for k in 5..s.bins() - 5 {
            assert!(db(last[k] / periodogram[k]).abs() < 3.0, "bin {k}");
        }
        let mean_level = periodogram.iter().sum::<f64>() / periodogram.len() as f64;
        for k in 5..s.bins() - 5 {
            assert!(db(last[k] / mean_level).abs() < 3.0, "bin {k}");
        }
    }

    #[test]
    fn tone_does_not_leak_into_noise() {
        let cfg = WienerConfig::default();
        let n = 44100;
        let mut x = white(n, 1e-4, 2);
        let f = 1000.0;
        for (i, v) in x.iter_mut().enumerate().skip(6000) {
            *v += 0.1 * (2.0 * std::f64::consts::PI * f * i as f64 / 44100.0).sin();
        }
        let stft = cfg.stft().unwrap();
        let s = stft_unchecked(&x, &stft);
        let est = estimate_noise_psd(&s, &cfg).unwrap();
        let k = (f / stft.bin_freq(1)).round() as usize;
        let init = est.frame(cfg.init_frames().start)[k];
        for m in 0..est.frames() {
            assert!(db(est.frame(m)[k] / init) < 6.0, "frame {m}");
        }
    }

    #[test]
    fn zero_signal_has_positive_estimate() {
        let cfg = WienerConfig::default();
        let s = stft_unchecked(&vec![0.0; 20000], &cfg.stft().unwrap());
        let est = estimate_noise_psd(&s, &cfg).unwrap();
        assert!((0..est.frames()).all(|m| est.frame(m).iter().all(|v| *v > 0.0)));
    }

    #[test]
    fn too_short_is_rejected() {
        let cfg = WienerConfig::default();
        let w = Waveform::new(white(3000, 0.01, 3)).unwrap();
        assert!(matches!(wiener_enhance(&w, &cfg), Err(Error::TooShort { .. })));
    }

    #[test]
    fn stationary_noise_is_attenuated() {
        let cfg = WienerConfig::default();
        let w = Waveform::new(white(44100, 0.01, 4)).unwrap();
        let out = wiener_enhance(&w, &cfg).unwrap();
        assert_eq!(out.len(), w.len());
        assert!(20.0 * (out.rms() / w.rms()).log10() < -10.0);
    }

    #[test]
    fn gains_never_exceed_one() {
        let cfg = WienerConfig::default();
        let x = white(30000, 0.02, 5);
        let s = stft_unchecked(&x, &cfg.stft().unwrap());
        let est = estimate_noise_psd(&s, &cfg).unwrap();
        let g = wiener_gains(&s, &est, &cfg);
        let floor = 10f64.powf(-18.0 / 20.0);
        assert!(g.iter().all(|v| *v <= 1.0 && *v >= floor - 1e-15));
    }

    #[test]
    fn config_checks() {
        let bad = WienerConfig { beta: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = WienerConfig { gain_floor_db: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(WienerConfig::default().validate().is_ok());
    }
}
