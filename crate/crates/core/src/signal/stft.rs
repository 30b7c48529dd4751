//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frames start at `m * hop - (window_len - hop)`, so every input sample is
//! covered by exactly `window_len / hop` frames and reconstruction is exact
//! up to rounding over the whole signal, not only the interior.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{fft, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
}

impl WindowKind {
    /// Periodic window, the form that satisfies constant overlap-add.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let (a0, a1) = match self {
            WindowKind::Hamming => (0.54, 0.46),
            WindowKind::Hann => (0.5, 0.5),
        };
        (0..len)
            .map(|n| a0 - a1 * (2.0 * PI * n as f64 / len as f64).cos())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let cfg = Self {
            window_len,
            hop,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hamming 1024/256, used by spectral smearing.
    pub fn smearing_default() -> Self {
        Self {
            window_len: 1024,
            hop: 256,
            window: WindowKind::Hamming,
        }
    }

    /// Hann 1024/256, used by the objective and the Wiener filter.
    pub fn objective_default() -> Self {
        Self {
            window_len: 1024,
            hop: 256,
            window: WindowKind::Hann,
        }
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * super::SAMPLE_RATE as f64 / self.window_len as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !self.window_len.is_power_of_two() || self.window_len < 4 {
            return Err(Error::InvalidStft(format!(
                "window length {} is not a power of two",
                self.window_len
            )));
        }
        if self.hop == 0 || !self.window_len.is_multiple_of(self.hop) {
            return Err(Error::InvalidStft(format!(
                "hop {} does not divide window length {}",
                self.hop, self.window_len
            )));
        }
        let gain = self.cola_gain();
        let w = self.window.coefficients(self.window_len);
        for r in 0..self.hop {
            let s: f64 = (r..self.window_len).step_by(self.hop).map(|n| w[n]).sum();
            if (s - gain).abs() > 1e-9 * gain {
                return Err(Error::InvalidStft(format!(
                    "{:?} window with hop {} is not constant overlap-add",
                    self.window, self.hop
                )));
            }
        }
        Ok(())
    }

    fn cola_gain(&self) -> f64 {
        let w = self.window.coefficients(self.window_len);
        (0..self.window_len).step_by(self.hop).map(|n| w[n]).sum()
    }

    pub(crate) fn lead_pad(&self) -> usize {
        self.window_len - self.hop
    }

    pub fn frame_count(&self, signal_len: usize) -> usize {
        if signal_len == 0 {
            return 0;
        }
        (signal_len - 1 + self.lead_pad()) / self.hop + 1
    }
}

/// Complex STFT frames stored frame-major, `bins` values per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    frames: usize,
    config: StftConfig,
    signal_len: usize,
}

impl Spectrogram {
    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn frame(&self, m: usize) -> &[Complex64] {
        let b = self.bins();
        &self.data[m * b..(m + 1) * b]
    }

    pub fn frame_mut(&mut self, m: usize) -> &mut [Complex64] {
        let b = self.bins();
        &mut self.data[m * b..(m + 1) * b]
    }

    pub fn cells(&self) -> &[Complex64] {
        &self.data
    }

    pub fn cells_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Same geometry, new contents.
    pub fn with_cells(&self, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} cells for a {}x{} spectrogram",
                data.len(),
                self.frames,
                self.bins()
            )));
        }
        Ok(Self {
            data,
            frames: self.frames,
            config: self.config,
            signal_len: self.signal_len,
        })
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    Ok(stft_unchecked(w.samples(), cfg))
}

pub(crate) fn stft_unchecked(x: &[f64], cfg: &StftConfig) -> Spectrogram {
    let n = cfg.window_len;
    let bins = cfg.bins();
    let frames = cfg.frame_count(x.len());
    let window = cfg.window.coefficients(n);
    let pad = cfg.lead_pad() as isize;
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..frames {
        let start = (m * cfg.hop) as isize - pad;
        for (i, b) in buf.iter_mut().enumerate() {
            let j = start + i as isize;
            let v = if j >= 0 && (j as usize) < x.len() {
                x[j as usize] * window[i]
            } else {
                0.0
            };
            *b = Complex64::new(v, 0.0);
        }
        fft::forward(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Spectrogram {
        data,
        frames,
        config: *cfg,
        signal_len: x.len(),
    }
}

pub fn istft(s: &Spectrogram) -> Waveform {
    Waveform::from_vec(istft_samples(s))
}

pub(crate) fn istft_samples(s: &Spectrogram) -> Vec<f64> {
    let cfg = s.config;
    let n = cfg.window_len;
    let bins = cfg.bins();
    let pad = cfg.lead_pad() as isize;
    let gain = cfg.cola_gain();
    let mut out = vec![0.0; s.signal_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..s.frames {
        let frame = s.frame(m);
        buf[..bins].copy_from_slice(frame);
        for k in bins..n {
            buf[k] = frame[n - k].conj();
        }
        fft::inverse(&mut buf);
        let start = (m * cfg.hop) as isize - pad;
        for (i, b) in buf.iter().enumerate() {
            let j = start + i as isize;
            if j >= 0 && (j as usize) < out.len() {
                out[j as usize] += b.re / gain;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SAMPLE_RATE;
    use rand::{Rng, SeedableRng};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn bins_and_frames() {
        let cfg = StftConfig::objective_default();
        let s = stft(&Waveform::new(noise(5000, 1)).unwrap(), &cfg).unwrap();
        assert_eq!(s.bins(), 513);
        assert_eq!(s.frames(), cfg.frame_count(5000));
    }

    #[test]
    fn non_cola_rejected() {
        assert!(StftConfig::new(1024, 300, WindowKind::Hann).is_err());
        assert!(StftConfig::new(1000, 250, WindowKind::Hann).is_err());
        assert!(StftConfig::new(1024, 1024, WindowKind::Hamming).is_err());
        assert!(StftConfig::new(1024, 512, WindowKind::Hann).is_ok());
        assert!(StftConfig::new(1024, 256, WindowKind::Hamming).is_ok());
    }

    #[test]
    fn tone_energy_concentrated() {
        let cfg = StftConfig::smearing_default();
        let n = 8192;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let s = stft(&Waveform::new(x).unwrap(), &cfg).unwrap();
        let k0 = (1000.0 / cfg.bin_freq(1)).round() as usize;
        // interior frames only
        for m in 4..s.frames() - 4 {
            let f = s.frame(m);
            let total: f64 = f.iter().map(|c| c.norm_sqr()).sum();
            let near: f64 = f[k0 - 2..=k0 + 2].iter().map(|c| c.norm_sqr()).sum();
            assert!(near >= 0.9 * total);
        }
    }

    #[test]
    fn perfect_reconstruction() {
        for cfg in [StftConfig::smearing_default(), StftConfig::objective_default()] {
            let x = noise(7777, 2);
            let y = istft(&stft(&Waveform::new(x.clone()).unwrap(), &cfg).unwrap());
            let err: f64 = x.iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let pow: f64 = x.iter().map(|a| a * a).sum();
            assert!((err / pow).sqrt() < 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let s = stft(&Waveform::zeros(3000), &StftConfig::objective_default()).unwrap();
        assert!(s.cells().iter().all(|c| c.norm() == 0.0));
    }

    proptest::proptest! {
        #[test]
        fn stft_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..200) {
            let cfg = StftConfig::objective_default();
            let x = noise(3000, seed);
            let y = noise(3000, seed + 1000);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let sm = stft(&Waveform::new(mix).unwrap(), &cfg).unwrap();
            let sx = stft(&Waveform::new(x).unwrap(), &cfg).unwrap();
            let sy = stft(&Waveform::new(y).unwrap(), &cfg).unwrap();
            for ((m, p), q) in sm.cells().iter().zip(sx.cells()).zip(sy.cells()) {
                let r = p * a + q * b;
                proptest::prop_assert!((m - r).norm() <= 1e-9 * (1.0 + r.norm()));
            }
        }
    }
}
