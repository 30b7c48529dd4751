//! Spectral smearing of the power spectrogram.
//!
//! Each output bin of a filterbank matrix holds a rounded-exponential
//! auditory filter centred on that bin, scaled by `erb * (r_l + r_u) / 2` so
//! that wider filters do not tilt the excitation pattern. The smearing
//! operator is `A_N^-1 A_W`: excitation through widened filters, deconvolved
//! by the normal ones.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::auditory::{erb_unchecked, roex_p};
use crate::error::{Error, Result};
use crate::signal::stft::{istft_samples, stft_unchecked};
use crate::signal::{Spectrogram, StftConfig};
use crate::tangent::Jet;

#[derive(Debug, Clone)]
pub struct SmearingMatrix {
    matrix: DMatrix<f64>,
    r_lower: f64,
    r_upper: f64,
    config: StftConfig,
}

/// Auditory filterbank over the bins of `cfg`, one filter per row.
pub fn auditory_filterbank(r_lower: f64, r_upper: f64, cfg: &StftConfig) -> DMatrix<f64> {
    let k = cfg.bins();
    let mut a = DMatrix::zeros(k, k);
    let mean_r = 0.5 * (r_lower + r_upper);
    a[(0, 0)] = 1.0 / (erb_unchecked(0.0) * mean_r);
    for i in 1..k {
        let fc = cfg.bin_freq(i);
        let pl = roex_p(fc, r_lower);
        let pu = roex_p(fc, r_upper);
        let norm = erb_unchecked(fc) * mean_r;
        for j in 0..k {
            let g = (j as f64 - i as f64).abs() / i as f64;
            let p = if j < i { pl } else { pu };
            a[(i, j)] = (1.0 + p * g) * (-p * g).exp() / norm;
        }
    }
    a
}

pub fn build_smearing_matrix(r_lower: f64, r_upper: f64, cfg: &StftConfig) -> Result<SmearingMatrix> {
    cfg.validate()?;
    if !(r_lower >= 1.0 && r_upper >= 1.0) {
        return Err(Error::Smearing(format!(
            "widening factors must be >= 1, got [{r_lower}, {r_upper}]"
        )));
    }
    let normal = auditory_filterbank(1.0, 1.0, cfg);
    let widened = auditory_filterbank(r_lower, r_upper, cfg);
    let lu = normal.lu();
    let matrix = lu
        .solve(&widened)
        .ok_or_else(|| Error::Smearing("normal filterbank matrix is singular".into()))?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Smearing("non-finite smearing matrix".into()));
    }
    Ok(SmearingMatrix {
        matrix,
        r_lower,
        r_upper,
        config: *cfg,
    })
}

impl SmearingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn widening(&self) -> (f64, f64) {
        (self.r_lower, self.r_upper)
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// `max |M - I|`.
    pub fn deviation_from_identity(&self) -> f64 {
        let k = self.matrix.nrows();
        (&self.matrix - DMatrix::<f64>::identity(k, k)).amax()
    }

    /// Applies the matrix to a power spectrum and clamps at zero.
    pub fn apply_power(&self, power: &[f64]) -> Vec<f64> {
        let p = nalgebra::DVector::from_column_slice(power);
        (&self.matrix * p).iter().map(|v| v.max(0.0)).collect()
    }

    /// Smears the STFT of `x` and resynthesises.
    pub fn smear_samples(&self, x: &[f64]) -> Vec<f64> {
        let s = stft_unchecked(x, &self.config);
        istft_samples(&smear_unchecked(&s, self))
    }

    pub fn smear_jet(&self, x: &Jet) -> Jet {
        let s = stft_unchecked(&x.value, &self.config);
        let ds: Vec<Spectrogram> = x.tangents.iter().map(|t| stft_unchecked(t, &self.config)).collect();
        let (y, dy) = smear_with_tangents(&s, &ds, self);
        Jet::new(istft_samples(&y), dy.iter().map(istft_samples).collect())
    }
}

/// Per frame: power is multiplied by the smearing matrix, clamped at zero and
/// converted back to magnitude; the input phase is kept.
pub fn smear(s: &Spectrogram, m: &SmearingMatrix) -> Result<Spectrogram> {
    if s.bins() != m.matrix.nrows() || s.config() != &m.config {
        return Err(Error::DimensionMismatch(format!(
            "spectrogram {:?} vs smearing matrix {:?}",
            s.config(),
            m.config
        )));
    }
    Ok(smear_unchecked(s, m))
}

fn power_matrix(s: &Spectrogram) -> DMatrix<f64> {
    DMatrix::from_fn(s.bins(), s.frames(), |k, m| s.frame(m)[k].norm_sqr())
}

fn smear_unchecked(s: &Spectrogram, m: &SmearingMatrix) -> Spectrogram {
    let power = power_matrix(s);
    let smeared = &m.matrix * &power;
    let bins = s.bins();
    let mut out = s.clone();
    for f in 0..s.frames() {
        let frame = out.frame_mut(f);
        for k in 0..bins {
            let p = power[(k, f)];
            let q = smeared[(k, f)].max(0.0);
            frame[k] = if p > f64::MIN_POSITIVE {
                frame[k] * (q / p).sqrt()
            } else {
                Complex64::new(q.sqrt(), 0.0)
            };
        }
    }
    out
}

fn smear_with_tangents(
    s: &Spectrogram,
    ds: &[Spectrogram],
    m: &SmearingMatrix,
) -> (Spectrogram, Vec<Spectrogram>) {
    let bins = s.bins();
    let frames = s.frames();
    let dims = ds.len();
    let power = power_matrix(s);
    // dP = 2 Re(conj(X) dX), all tangents side by side
    let dpower = DMatrix::from_fn(bins, frames * dims, |k, c| {
        let (j, f) = (c / frames, c % frames);
        2.0 * (s.frame(f)[k].conj() * ds[j].frame(f)[k]).re
    });
    let q = &m.matrix * &power;
    let dq = &m.matrix * &dpower;

    let mut out = s.clone();
    let mut dout: Vec<Spectrogram> = ds.to_vec();
    for f in 0..frames {
        for k in 0..bins {
            let x = s.frame(f)[k];
            let p = power[(k, f)];
            let qv = q[(k, f)];
            if qv <= 0.0 {
                out.frame_mut(f)[k] = Complex64::new(0.0, 0.0);
                for d in dout.iter_mut() {
                    d.frame_mut(f)[k] = Complex64::new(0.0, 0.0);
                }
                continue;
            }
            if p > f64::MIN_POSITIVE {
                let scale = (qv / p).sqrt();
                out.frame_mut(f)[k] = x * scale;
                for (j, d) in dout.iter_mut().enumerate() {
                    let dp = dpower[(k, j * frames + f)];
                    let dqv = dq[(k, j * frames + f)];
                    let dscale = (dqv - scale * scale * dp) / (2.0 * qv.sqrt() * p.sqrt());
                    let dx = ds[j].frame(f)[k];
                    d.frame_mut(f)[k] = dx * scale + x * dscale;
                }
            } else {
                let a = qv.sqrt();
                out.frame_mut(f)[k] = Complex64::new(a, 0.0);
                for (j, d) in dout.iter_mut().enumerate() {
                    let dqv = dq[(k, j * frames + f)];
                    d.frame_mut(f)[k] = Complex64::new(dqv / (2.0 * a), 0.0);
                }
            }
        }
    }
    (out, dout)
}
