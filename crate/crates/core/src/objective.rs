//! Loss between the hearing-impaired output and the normal-hearing reference.
//!
//! `L_spec` is the mean absolute difference of complex STFT cells in dB;
//! `L_spl` penalises an output louder than the reference and is only added
//! when it is non-negative.

use std::f64::consts::LN_10;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::stft::stft_unchecked;
use crate::signal::{check_same_len, rms, Spectrogram, StftConfig, Waveform};
use crate::tangent::Jet;

/// Value of `L_spec` for identical signals.
pub const SPEC_FLOOR_DB: f64 = -200.0;
pub const DEFAULT_ALPHA: f64 = 5.0;

const DB: f64 = 20.0 / LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub stft: StftConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            stft: StftConfig::objective_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_spec: f64,
    pub l_spl: Option<f64>,
    pub total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    /// `l_spec + alpha * l_spl` when `l_spl` is present and non-negative,
    /// `l_spec` otherwise.
    pub fn combine(l_spec: f64, l_spl: Option<f64>, alpha: f64) -> Self {
        let total = match l_spl {
            Some(p) if p >= 0.0 => l_spec + alpha * p,
            _ => l_spec,
        };
        Self {
            l_spec,
            l_spl,
            total,
            alpha,
        }
    }

    pub fn spl_applied(&self) -> bool {
        matches!(self.l_spl, Some(p) if p >= 0.0)
    }
}

fn spec_loss_raw(p: &Spectrogram, r: &Spectrogram) -> f64 {
    let mean = p
        .cells()
        .iter()
        .zip(r.cells())
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / p.cells().len().max(1) as f64;
    if mean > 0.0 {
        (20.0 * mean.log10()).max(SPEC_FLOOR_DB)
    } else {
        SPEC_FLOOR_DB
    }
}

pub fn spec_loss(y_p: &Waveform, y_r: &Waveform, cfg: &StftConfig) -> Result<f64> {
    check_same_len(y_p.len(), y_r.len())?;
    cfg.validate()?;
    Ok(spec_loss_raw(
        &stft_unchecked(y_p.samples(), cfg),
        &stft_unchecked(y_r.samples(), cfg),
    ))
}

/// `20 log10(rms(y_p) - rms(y_r))`, or `None` when the difference is not
/// positive.
pub fn spl_loss(y_p: &Waveform, y_r: &Waveform) -> Option<f64> {
    spl_raw(rms(y_p.samples()), rms(y_r.samples()))
}

fn spl_raw(rms_p: f64, rms_r: f64) -> Option<f64> {
    let delta = rms_p - rms_r;
    (delta > 0.0).then(|| 20.0 * delta.log10())
}

pub fn total_loss(y_p: &Waveform, y_r: &Waveform, cfg: &ObjectiveConfig) -> Result<LossBreakdown> {
    Ok(LossBreakdown::combine(
        spec_loss(y_p, y_r, &cfg.stft)?,
        spl_loss(y_p, y_r),
        cfg.alpha,
    ))
}

/// Normal-hearing reference with its spectrogram and level precomputed.
#[derive(Debug, Clone)]
pub struct Reference {
    samples: Vec<f64>,
    spectrogram: Spectrogram,
    rms: f64,
}

impl Reference {
    pub fn new(y_r: &[f64], cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            samples: y_r.to_vec(),
            spectrogram: stft_unchecked(y_r, cfg),
            rms: rms(y_r),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn loss(&self, y_p: &[f64], alpha: f64) -> Result<LossBreakdown> {
        check_same_len(y_p.len(), self.len())?;
        let p = stft_unchecked(y_p, self.spectrogram.config());
        Ok(LossBreakdown::combine(
            spec_loss_raw(&p, &self.spectrogram),
            spl_raw(rms(y_p), self.rms),
            alpha,
        ))
    }

    /// Loss and its derivative along each tangent of `y_p`.
    pub fn loss_with_gradient(&self, y_p: &Jet, alpha: f64) -> Result<(LossBreakdown, Vec<f64>)> {
        check_same_len(y_p.len(), self.len())?;
        let cfg = self.spectrogram.config();
        let p = stft_unchecked(&y_p.value, cfg);
        let cells = p.cells().len().max(1) as f64;
        let diff: Vec<Complex64> = p
            .cells()
            .iter()
            .zip(self.spectrogram.cells())
            .map(|(a, b)| a - b)
            .collect();
        let mean = diff.iter().map(|d| d.norm()).sum::<f64>() / cells;
        let l_spec = if mean > 0.0 {
            (20.0 * mean.log10()).max(SPEC_FLOOR_DB)
        } else {
            SPEC_FLOOR_DB
        };
        let spec_active = mean > 0.0 && 20.0 * mean.log10() > SPEC_FLOOR_DB;
        // unit phase of each difference cell
        let unit: Vec<Complex64> = diff
            .iter()
            .map(|d| {
                let n = d.norm();
                if n > 0.0 {
                    d.conj() / n
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();

        let rms_p = rms(&y_p.value);
        let l_spl = spl_raw(rms_p, self.rms);
        let breakdown = LossBreakdown::combine(l_spec, l_spl, alpha);
        let delta = rms_p - self.rms;
        let n = y_p.len() as f64;

        let grad = y_p
            .tangents
            .iter()
            .map(|t| {
                let mut g = 0.0;
                if spec_active {
                    let dp = stft_unchecked(t, cfg);
                    let dmean = unit
                        .iter()
                        .zip(dp.cells())
                        .map(|(u, d)| (u * d).re)
                        .sum::<f64>()
                        / cells;
                    g += DB * dmean / mean;
                }
                if breakdown.spl_applied() && rms_p > 0.0 {
                    let drms = y_p.value.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / (n * rms_p);
                    g += alpha * DB * drms / delta;
                }
                g
            })
            .collect();
        Ok((breakdown, grad))
    }
}

/// Rejects non-finite losses, naming the utterance.
pub(crate) fn check_finite(loss: &LossBreakdown, utterance: &str) -> Result<()> {
    if loss.total.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            utterance: utterance.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noise(n: usize, seed: u64) -> Waveform {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-0.1..0.1)).collect()).unwrap()
    }

    #[test]
    fn identical_signals_hit_the_floor() {
        let x = noise(5000, 1);
        let cfg = ObjectiveConfig::default();
        assert_eq!(spec_loss(&x, &x, &cfg.stft).unwrap(), SPEC_FLOOR_DB);
        let l = total_loss(&x, &x, &cfg).unwrap();
        assert_eq!(l.l_spl, None);
        assert_eq!(l.total, SPEC_FLOOR_DB);
    }

    #[test]
    fn doubled_signal_against_itself() {
        let x = noise(5000, 2);
        let cfg = StftConfig::objective_default();
        let s = stft_unchecked(x.samples(), &cfg);
        let mean = s.cells().iter().map(|c| c.norm()).sum::<f64>() / s.cells().len() as f64;
        let got = spec_loss(&x.scaled(2.0), &x, &cfg).unwrap();
        assert!((got - 20.0 * mean.log10()).abs() < 1e-9);
    }

    #[test]
    fn homogeneity() {
        let x = noise(4000, 3);
        let y = noise(4000, 4);
        let cfg = StftConfig::objective_default();
        let base = spec_loss(&x, &y, &cfg).unwrap();
        for a in [0.1, 3.0, 17.0] {
            let got = spec_loss(&x.scaled(a), &y.scaled(a), &cfg).unwrap();
            assert!((got - base - 20.0 * f64::log10(a)).abs() < 1e-9);
        }
    }

    #[test]
    fn spl_branches() {
        let one = Waveform::new(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(spl_loss(&one, &one), None);
        assert_eq!(spl_loss(&one.scaled(2.0), &one), Some(0.0));
        assert_eq!(spl_loss(&one.scaled(0.5), &one), None);
    }

    #[test]
    fn combination_branches() {
        assert_eq!(LossBreakdown::combine(-40.0, Some(2.0), 5.0).total, -30.0);
        assert_eq!(LossBreakdown::combine(-40.0, None, 5.0).total, -40.0);
        assert_eq!(LossBreakdown::combine(-40.0, Some(-3.0), 5.0).total, -40.0);
        assert_eq!(LossBreakdown::combine(-40.0, Some(0.0), 5.0).total, -40.0);
    }

    #[test]
    fn length_mismatch() {
        let cfg = ObjectiveConfig::default();
        assert!(matches!(
            total_loss(&noise(100, 1), &noise(101, 1), &cfg),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn reference_matches_free_functions() {
        let x = noise(6000, 5);
        let y = noise(6000, 6).scaled(30.0);
        let cfg = ObjectiveConfig::default();
        let r = Reference::new(x.samples(), &cfg.stft).unwrap();
        let a = r.loss(y.samples(), cfg.alpha).unwrap();
        let b = total_loss(&y, &x, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.spl_applied());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = noise(6000, 7);
        // loud enough for the level penalty to be active
        let y = noise(6000, 8).scaled(40.0);
        let d = noise(6000, 9);
        let r = Reference::new(x.samples(), &StftConfig::objective_default()).unwrap();
        let (l, g) = r
            .loss_with_gradient(&Jet::new(y.samples().to_vec(), vec![d.samples().to_vec()]), 5.0)
            .unwrap();
        assert!(l.spl_applied());
        let h = 1e-6;
        let yp: Vec<f64> = y.samples().iter().zip(d.samples()).map(|(a, b)| a + h * b).collect();
        let ym: Vec<f64> = y.samples().iter().zip(d.samples()).map(|(a, b)| a - h * b).collect();
        let fd = (r.loss(&yp, 5.0).unwrap().total - r.loss(&ym, 5.0).unwrap().total) / (2.0 * h);
        assert!((g[0] - fd).abs() < 1e-6 * fd.abs().max(1.0), "{} vs {fd}", g[0]);
    }

    proptest::proptest! {
        #[test]
        fn combine_never_below_spec_when_applied(spec in -100.0f64..0.0, spl in -20.0f64..20.0, alpha in 0.0f64..10.0) {
            let l = LossBreakdown::combine(spec, Some(spl), alpha);
            proptest::prop_assert!(l.total >= spec);
            proptest::prop_assert!(l.total.is_finite());
        }
    }
}
