//! Audio containers, level calibration and the DSP primitives shared by the
//! rest of the pipeline.

pub mod fft;
pub mod fir;
pub mod hilbert;
pub mod stft;
pub mod wav;

pub use fir::{fir_apply, highpass_80, FirFilter};
pub use hilbert::hilbert_envelope;
pub use stft::{istft, stft, Spectrogram, StftConfig, WindowKind};
pub use wav::{read_wav, write_wav, WavEncoding};

use crate::error::{Error, Result};

/// The only sample rate the pipeline operates at.
pub const SAMPLE_RATE: u32 = 44_100;

/// Presentation level of every signal entering the pipeline, in dB SPL.
pub const PRESENTATION_LEVEL_DB: f64 = 65.0;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
}

impl Waveform {
    /// Wraps samples taken at 44.1 kHz. Non-finite samples are rejected.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { samples })
    }

    /// Like [`Waveform::new`] but checks the declared sample rate first.
    pub fn with_rate(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRateMismatch {
                expected: SAMPLE_RATE,
                found: sample_rate,
            });
        }
        Self::new(samples)
    }

    /// Internal constructor for outputs of finite arithmetic on finite inputs.
    pub(crate) fn from_vec(samples: Vec<f64>) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self { samples }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_vec(self.samples.iter().map(|s| s * factor).collect())
    }

    /// Crops or zero-pads to exactly `len` samples.
    pub fn fit_length(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self::from_vec(samples)
    }

    /// Sample-wise sum. Lengths must match.
    pub fn add(&self, other: &Waveform) -> Result<Self> {
        check_same_len(self.len(), other.len())?;
        Ok(Self::from_vec(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }
}

pub(crate) fn check_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Maps digital RMS amplitude to dB SPL.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Calibration {
    /// Digital RMS that corresponds to 0 dB SPL.
    pub ref_rms: f64,
}

impl Calibration {
    pub fn new(ref_rms: f64) -> Result<Self> {
        if !(ref_rms > 0.0 && ref_rms.is_finite()) {
            return Err(Error::Config(format!("ref_rms must be positive, got {ref_rms}")));
        }
        Ok(Self { ref_rms })
    }

    /// Calibration under which a full-scale sinusoid (peak 1.0) reads
    /// `level_db` dB SPL.
    pub fn full_scale_sine_at(level_db: f64) -> Self {
        Self {
            ref_rms: std::f64::consts::FRAC_1_SQRT_2 / 10f64.powf(level_db / 20.0),
        }
    }

    /// Digital RMS of a signal at `level_db` dB SPL.
    pub fn rms_at(&self, level_db: f64) -> f64 {
        self.ref_rms * 10f64.powf(level_db / 20.0)
    }
}

impl Default for Calibration {
    /// Full-scale sine at 100 dB SPL.
    fn default() -> Self {
        Self::full_scale_sine_at(100.0)
    }
}

pub fn measure_spl(w: &Waveform, cal: &Calibration) -> Result<f64> {
    let r = w.rms();
    if r <= 0.0 {
        return Err(Error::SilentSignal);
    }
    Ok(20.0 * (r / cal.ref_rms).log10())
}

/// Scales `w` so that it reads `target_db` dB SPL.
pub fn normalize_spl(w: &Waveform, target_db: f64, cal: &Calibration) -> Result<Waveform> {
    let r = w.rms();
    if r <= 0.0 {
        return Err(Error::SilentSignal);
    }
    Ok(w.scaled(cal.rms_at(target_db) / r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(amp: f64, freq: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        Waveform::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn spl_definition() {
        let cal = Calibration::new(0.01).unwrap();
        let w = Waveform::new(vec![0.01, -0.01, 0.01, -0.01]).unwrap();
        assert!(measure_spl(&w, &cal).unwrap().abs() < 1e-12);
        let w65 = w.scaled(10f64.powf(65.0 / 20.0));
        assert!((measure_spl(&w65, &cal).unwrap() - 65.0).abs() < 1e-9);
    }

    #[test]
    fn spl_of_sine_matches_analytic_rms() {
        let cal = Calibration::default();
        // 100 whole periods so the sampled RMS equals A/sqrt(2).
        let w = sine(0.3, 441.0, 1.0);
        let direct = (w.samples().iter().map(|s| s * s).sum::<f64>() / w.len() as f64).sqrt();
        let expected = 20.0 * ((0.3 / 2f64.sqrt()) / cal.ref_rms).log10();
        let got = measure_spl(&w, &cal).unwrap();
        assert!((got - expected).abs() < 1e-9);
        assert!((got - 20.0 * (direct / cal.ref_rms).log10()).abs() < 1e-12);
    }

    #[test]
    fn full_scale_sine_reads_100_db() {
        let w = sine(1.0, 441.0, 0.5);
        let spl = measure_spl(&w, &Calibration::default()).unwrap();
        assert!((spl - 100.0).abs() < 1e-9);
    }

    #[test]
    fn silent_signal_has_no_level() {
        let w = Waveform::zeros(100);
        assert!(matches!(
            measure_spl(&w, &Calibration::default()),
            Err(Error::SilentSignal)
        ));
        assert!(normalize_spl(&w, 65.0, &Calibration::default()).is_err());
    }

    #[test]
    fn normalize_hits_target_and_composes() {
        let cal = Calibration::default();
        let w = sine(0.2, 300.0, 0.2);
        let a = normalize_spl(&w, 65.0, &cal).unwrap();
        assert!((measure_spl(&a, &cal).unwrap() - 65.0).abs() < 0.01);
        let again = normalize_spl(&a, 65.0, &cal).unwrap();
        for (x, y) in a.samples().iter().zip(again.samples()) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-12));
        }
        let via59 = normalize_spl(&normalize_spl(&w, 59.0, &cal).unwrap(), 65.0, &cal).unwrap();
        for (x, y) in a.samples().iter().zip(via59.samples()) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-12));
        }
    }

    #[test]
    fn rejects_other_rates_and_nan() {
        assert!(matches!(
            Waveform::with_rate(vec![0.0], 48_000),
            Err(Error::SampleRateMismatch { found: 48_000, .. })
        ));
        assert!(matches!(Waveform::new(vec![f64::NAN]), Err(Error::NonFinite)));
    }

    proptest::proptest! {
        #[test]
        fn level_shift_under_scaling(alpha in 1e-3f64..1e3, seed in 0u64..1000) {
            let cal = Calibration::default();
            let w = Waveform::new((0..256).map(|i| ((i as u64 * 7919 + seed) % 97) as f64 / 97.0 - 0.4).collect()).unwrap();
            let base = measure_spl(&w, &cal).unwrap();
            let scaled = measure_spl(&w.scaled(alpha), &cal).unwrap();
            proptest::prop_assert!((scaled - base - 20.0 * alpha.log10()).abs() < 1e-6);
        }
    }
}
