//! Analytic signal and Hilbert envelope via the one-sided spectrum.

use num_complex::Complex64;

use super::{fft, Waveform};

/// Multiplier that turns a two-sided spectrum of length `nfft` into the
/// spectrum of the analytic signal: 1 at DC and Nyquist, 2 on positive
/// frequencies, 0 on negative ones.
pub fn analytic_mask(nfft: usize) -> Vec<f64> {
    let mut mask = vec![0.0; nfft];
    mask[0] = 1.0;
    if nfft.is_multiple_of(2) {
        mask[nfft / 2] = 1.0;
        for m in &mut mask[1..nfft / 2] {
            *m = 2.0;
        }
    } else {
        for m in &mut mask[1..=nfft / 2] {
            *m = 2.0;
        }
    }
    mask
}

/// Analytic signal `x + j H{x}`, computed on a zero-padded grid so that the
/// circular wrap of the transform does not fold the two ends together.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    if x.is_empty() {
        return Vec::new();
    }
    let nfft = fft::next_pow2(2 * x.len());
    let mut spec = fft::forward_real(x, nfft);
    for (s, m) in spec.iter_mut().zip(analytic_mask(nfft)) {
        *s *= m;
    }
    fft::inverse(&mut spec);
    spec.truncate(x.len());
    spec
}

/// Magnitude of the analytic signal.
pub fn hilbert_envelope(w: &Waveform) -> Vec<f64> {
    analytic_signal(w.samples()).iter().map(|z| z.norm()).collect()
}
