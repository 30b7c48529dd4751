//! Linear-phase FIR filters: design helpers and delay-compensated application.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{fft, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Tap count used by [`highpass_80`].
pub const HIGHPASS_TAPS: usize = 1025;
/// Cut-off (−6 dB point) of the corpus preprocessing high-pass, Hz.
pub const HIGHPASS_CUTOFF_HZ: f64 = 80.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    group_delay: usize,
}

impl FirFilter {
    /// Linear-phase filter with an odd number of taps; the group delay is the
    /// centre index.
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::InvalidFilter(format!(
                "tap count must be odd, got {}",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidFilter("non-finite tap".into()));
        }
        let group_delay = (taps.len() - 1) / 2;
        Ok(Self { taps, group_delay })
    }

    /// Arbitrary taps with an explicit alignment delay.
    pub fn with_delay(taps: Vec<f64>, group_delay: usize) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidFilter("empty or non-finite taps".into()));
        }
        Ok(Self { taps, group_delay })
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            group_delay: 0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn group_delay(&self) -> usize {
        self.group_delay
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.taps.len();
        (0..n / 2).all(|i| (self.taps[i] - self.taps[n - 1 - i]).abs() <= 1e-12 * (1.0 + self.taps[i].abs()))
    }

    /// Frequency response at `freq_hz` with the alignment delay removed.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / SAMPLE_RATE as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(n, &h)| Complex64::from_polar(h, -w * (n as f64 - self.group_delay as f64)))
            .sum()
    }

    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.response_at(freq_hz).norm().log10()
    }
}

/// Linear convolution trimmed so the output is time-aligned with the input
/// and has the same length.
pub fn fir_apply(w: &Waveform, f: &FirFilter) -> Waveform {
    Waveform::from_vec(convolve_aligned(w.samples(), f.taps(), f.group_delay()))
}

/// `y[n] = sum_k taps[k] * x[n + delay - k]` for `n` in `0..x.len()`.
pub fn convolve_aligned(x: &[f64], taps: &[f64], delay: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    if taps.len() <= 64 || n <= 64 {
        return (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let j = i as isize + delay as isize - k as isize;
                    if j >= 0 && (j as usize) < n {
                        acc += t * x[j as usize];
                    }
                }
                acc
            })
            .collect();
    }
    let nfft = fft::next_pow2(n + taps.len());
    let mut xs = fft::forward_real(x, nfft);
    let hs = fft::forward_real(taps, nfft);
    for (a, b) in xs.iter_mut().zip(&hs) {
        *a *= b;
    }
    fft::inverse(&mut xs);
    xs[delay..delay + n].iter().map(|c| c.re).collect()
}

/// Applies one filter to many equal-length signals, sharing the filter
/// spectrum.
pub struct Convolver {
    spectrum: Vec<Complex64>,
    delay: usize,
    len: usize,
}

impl Convolver {
    pub fn new(f: &FirFilter, signal_len: usize) -> Self {
        let nfft = fft::next_pow2(signal_len + f.len());
        Self {
            spectrum: fft::forward_real(f.taps(), nfft),
            delay: f.group_delay(),
            len: signal_len,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len, "convolver built for another length");
        let mut xs = fft::forward_real(x, self.spectrum.len());
        for (a, b) in xs.iter_mut().zip(&self.spectrum) {
            *a *= b;
        }
        fft::inverse(&mut xs);
        xs[self.delay..self.delay + self.len].iter().map(|c| c.re).collect()
    }
}

/// Symmetric Hann window of length `n` with zero end points.
pub fn hann_symmetric(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Windowed-sinc low-pass with unit DC gain.
pub fn lowpass_taps(cutoff_hz: f64, taps: usize, window: &[f64]) -> Vec<f64> {
    assert_eq!(window.len(), taps);
    let fc = cutoff_hz / SAMPLE_RATE as f64;
    let c = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - c;
            let s = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            s * window[i]
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Zero-phase frequency-sampling design: `magnitude` (linear) is sampled on
/// the `taps`-point DFT grid, inverse transformed, centred and tapered with a
/// symmetric Hann window.
pub fn design_frequency_sampling(taps: usize, magnitude: impl Fn(f64) -> f64) -> Result<FirFilter> {
    if taps.is_multiple_of(2) || taps == 0 {
        return Err(Error::InvalidFilter(format!("tap count must be odd, got {taps}")));
    }
    let grid: Vec<f64> = (0..=taps / 2)
        .map(|k| magnitude(k as f64 * SAMPLE_RATE as f64 / taps as f64))
        .collect();
    FirFilter::new(frequency_sampling_taps(&grid, taps))
}

/// Core of [`design_frequency_sampling`] on an explicit one-sided grid of
/// `taps / 2 + 1` magnitudes. Linear in `grid`.
pub(crate) fn frequency_sampling_taps(grid: &[f64], taps: usize) -> Vec<f64> {
    debug_assert_eq!(grid.len(), taps / 2 + 1);
    let cos_table: Vec<f64> = (0..taps)
        .map(|m| (2.0 * PI * m as f64 / taps as f64).cos())
        .collect();
    let window = hann_symmetric(taps);
    let half = (taps - 1) / 2;
    (0..taps)
        .map(|i| {
            let n = i as isize - half as isize;
            let nn = n.rem_euclid(taps as isize) as usize;
            let mut acc = grid[0];
            for (k, &g) in grid.iter().enumerate().skip(1) {
                acc += 2.0 * g * cos_table[(k * nn) % taps];
            }
            acc / taps as f64 * window[i]
        })
        .collect()
}

/// Linear-phase high-pass at 80 Hz (−6 dB), delay compensated.
pub fn highpass_80(w: &Waveform) -> Waveform {
    thread_local! {
        static FILTER: FirFilter = highpass_filter();
    }
    FILTER.with(|f| fir_apply(w, f))
}

pub fn highpass_filter() -> FirFilter {
    // Kaiser beta 3.5 trades side-lobe level for a transition narrow enough
    // to pass 160 Hz flat while rejecting 20 Hz by more than 40 dB.
    let window = kaiser(HIGHPASS_TAPS, 3.5);
    let mut h = lowpass_taps(HIGHPASS_CUTOFF_HZ, HIGHPASS_TAPS, &window);
    for v in &mut h {
        *v = -*v;
    }
    h[(HIGHPASS_TAPS - 1) / 2] += 1.0;
    FirFilter::new(h).expect("odd tap count")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect()
    }

    fn interior_rms(x: &[f64], margin: usize) -> f64 {
        super::super::rms(&x[margin..x.len() - margin])
    }

    fn brute_force(x: &[f64], taps: &[f64], delay: usize) -> Vec<f64> {
        let n = x.len() as isize;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let j = i + delay as isize - k as isize;
                    if (0..n).contains(&j) {
                        acc += t * x[j as usize];
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn identity_and_scaling_kernels() {
        let x = Waveform::new(tone(440.0, 500)).unwrap();
        assert_eq!(fir_apply(&x, &FirFilter::identity()), x);
        let half = FirFilter::new(vec![0.5]).unwrap();
        let y = fir_apply(&x, &half);
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn fft_path_matches_brute_force_on_chirp() {
        let n = 4000;
        let chirp: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                (2.0 * PI * (100.0 * t + 40_000.0 * t * t)).sin()
            })
            .collect();
        let lp = lowpass_taps(2000.0, 101, &hann_symmetric(101));
        let fast = convolve_aligned(&chirp, &lp, 50);
        let slow = brute_force(&chirp, &lp, 50);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn even_taps_rejected() {
        assert!(FirFilter::new(vec![1.0, 1.0]).is_err());
        assert!(design_frequency_sampling(512, |_| 1.0).is_err());
    }

    #[test]
    fn frequency_sampling_flat_is_delta() {
        let f = design_frequency_sampling(101, |_| 1.0).unwrap();
        for (i, t) in f.taps().iter().enumerate() {
            let expect = if i == 50 { 1.0 } else { 0.0 };
            assert!((t - expect).abs() < 1e-12);
        }
        assert!(f.is_symmetric());
    }

    #[test]
    fn highpass_passes_1k_and_rejects_20hz() {
        let n = SAMPLE_RATE as usize;
        for (freq, check) in [(1000.0, 0usize), (20.0, 1)] {
            let x = Waveform::new(tone(freq, n)).unwrap();
            let y = highpass_80(&x);
            let ratio = 20.0 * (interior_rms(y.samples(), 2048) / interior_rms(x.samples(), 2048)).log10();
            if check == 0 {
                assert!(ratio.abs() < 0.5, "1 kHz change {ratio} dB");
            } else {
                assert!(ratio <= -40.0, "20 Hz attenuation {ratio} dB");
            }
        }
    }

    #[test]
    fn highpass_response_shape() {
        let f = highpass_filter();
        assert!(f.is_symmetric());
        // -6 dB point within 80 +/- 5 Hz
        assert!(f.gain_db_at(75.0) < -6.0);
        assert!(f.gain_db_at(85.0) > -6.0);
        for k in 0..=20 {
            assert!(f.gain_db_at(k as f64) <= -40.0, "leak at {k} Hz");
        }
        for k in 0..200 {
            let freq = 160.0 * (20_000.0f64 / 160.0).powf(k as f64 / 199.0);
            assert!(f.gain_db_at(freq).abs() < 0.5, "ripple at {freq}");
        }
    }

    #[test]
    fn highpass_removes_dc() {
        let n = SAMPLE_RATE as usize;
        let x = Waveform::new(vec![0.3; n]).unwrap();
        let y = highpass_80(&x);
        let interior = &y.samples()[HIGHPASS_TAPS..n - HIGHPASS_TAPS];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!(mean.abs() < 1e-3, "mean {mean}");
    }

    #[test]
    fn highpass_is_delay_compensated() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..8192).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = highpass_80(&Waveform::new(x.clone()).unwrap());
        let best = (-5isize..=5)
            .max_by(|&a, &b| {
                let xc = |lag: isize| -> f64 {
                    (0..x.len() as isize)
                        .filter(|i| (0..x.len() as isize).contains(&(i + lag)))
                        .map(|i| x[i as usize] * y.samples()[(i + lag) as usize])
                        .sum()
                };
                xc(a).partial_cmp(&xc(b)).unwrap()
            })
            .unwrap();
        assert!(best.abs() <= 1);
    }

    proptest::proptest! {
        #[test]
        fn fir_apply_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
            let taps: Vec<f64> = (0..129).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = FirFilter::new(taps).unwrap();
            let mix = Waveform::new(x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect()).unwrap();
            let lhs = fir_apply(&mix, &f);
            let fx = fir_apply(&Waveform::new(x).unwrap(), &f);
            let fy = fir_apply(&Waveform::new(y).unwrap(), &f);
            let scale = lhs.rms().max(1e-12);
            for i in 0..600 {
                let rhs = a * fx.samples()[i] + b * fy.samples()[i];
                proptest::prop_assert!((lhs.samples()[i] - rhs).abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }
}
