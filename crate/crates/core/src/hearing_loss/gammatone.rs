//! Gammatone filterbank and loudness recruitment.
//!
//! Channels are fourth-order gammatones with ERB-rate-uniform centre
//! frequencies over [100 Hz, 16 kHz], truncated at -60 dB of the envelope
//! peak and shifted so that every envelope peaks at the same sample with zero
//! carrier phase there. The channel sum of a pulse is then close to a pulse,
//! which makes the bank nearly transparent when no recruitment is applied.
//!
//! Filtering runs in the frequency domain: one transform of the input, then
//! per channel a product with the analytic-masked channel spectrum and one
//! inverse transform give both the fine structure (real part) and the Hilbert
//! envelope (modulus).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::auditory::{erb_rate, erb_rate_inverse, erb_unchecked};
use super::{Audiogram, SeverityParams};
use crate::error::{Error, Result};
use crate::par;
use crate::signal::fir::{hann_symmetric, lowpass_taps};
use crate::signal::{fft, hilbert, Calibration, Waveform, SAMPLE_RATE};
use crate::tangent::Jet;

pub const GAMMATONE_ORDER: i32 = 4;
pub const LOWEST_CENTRE_HZ: f64 = 100.0;
pub const HIGHEST_CENTRE_HZ: f64 = 16_000.0;
/// Impulse responses stop where the envelope falls below this, dB re peak.
pub const TRUNCATION_DB: f64 = -60.0;
/// Envelope smoothing cutoff ceiling.
pub const MAX_SMOOTHING_HZ: f64 = 500.0;
/// Envelope floor re `E_theta`, dB.
pub const ENVELOPE_FLOOR_DB: f64 = -120.0;
pub const DEFAULT_THETA_DB: f64 = 105.0;

const CHANNEL_CHUNK: usize = 4;
const ALIGNMENT_MARGIN: usize = 8;
/// Summed-response magnitude, relative to its in-band mean, below which the
/// equaliser stops inverting.
const EQUALIZER_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecruitmentParams {
    pub theta_db: f64,
    /// Envelope magnitude at `theta_db`.
    pub e_theta: f64,
}

impl RecruitmentParams {
    pub fn new(theta_db: f64, cal: &Calibration) -> Self {
        Self {
            theta_db,
            e_theta: cal.rms_at(theta_db),
        }
    }

    /// Recruitment exponent `theta / (theta - hl) - 1`.
    pub fn exponent(&self, hl_db: f64) -> f64 {
        self.theta_db / (self.theta_db - hl_db) - 1.0
    }

    pub fn floor(&self) -> f64 {
        self.e_theta * 10f64.powf(ENVELOPE_FLOOR_DB / 20.0)
    }
}

impl Default for RecruitmentParams {
    fn default() -> Self {
        Self::new(DEFAULT_THETA_DB, &Calibration::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneChannel {
    pub centre_hz: f64,
    pub bandwidth_hz: f64,
    pub hl_db: f64,
    /// Peak-gain normalisation.
    pub amplitude: f64,
    /// Samples by which the response was delayed so its envelope peaks at the
    /// common alignment index.
    pub alignment_delay: usize,
    /// Real impulse response; index [`GammatoneFilterbank::peak_index`] is
    /// time zero.
    pub taps: Vec<f64>,
    pub smoothing_hz: f64,
    /// Zero-phase envelope low-pass, centre tap at `smoothing_taps.len() / 2`.
    pub smoothing_taps: Vec<f64>,
}

struct ChannelPlan {
    lo: usize,
    spectrum: Vec<Complex64>,
    /// Real, even smoothing response at bins `0..lowpass.len()` (mirrored for
    /// negative frequencies, zero elsewhere).
    lowpass: Vec<f64>,
}

struct Plan {
    nfft: usize,
    channels: Vec<ChannelPlan>,
    /// Hermitian inverse of the summed channel response, alignment delay
    /// included.
    equalizer: Vec<Complex64>,
}

pub struct GammatoneFilterbank {
    channels: Vec<GammatoneChannel>,
    peak_index: usize,
    mean_gain: f64,
    plans: Mutex<HashMap<usize, Arc<Plan>>>,
}

impl std::fmt::Debug for GammatoneFilterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GammatoneFilterbank")
            .field("channels", &self.channels.len())
            .field("peak_index", &self.peak_index)
            .field("mean_gain", &self.mean_gain)
            .finish()
    }
}

impl Clone for GammatoneFilterbank {
    fn clone(&self) -> Self {
        Self {
            channels: self.channels.clone(),
            peak_index: self.peak_index,
            mean_gain: self.mean_gain,
            plans: Mutex::new(HashMap::new()),
        }
    }
}

/// `n` centre frequencies, uniform on the ERB-rate scale.
pub fn centre_frequencies(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![erb_rate_inverse(0.5 * (erb_rate(LOWEST_CENTRE_HZ) + erb_rate(HIGHEST_CENTRE_HZ)))];
    }
    let lo = erb_rate(LOWEST_CENTRE_HZ);
    let hi = erb_rate(HIGHEST_CENTRE_HZ);
    (0..n)
        .map(|i| erb_rate_inverse(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

fn envelope(t: f64, b: f64) -> f64 {
    t.powi(GAMMATONE_ORDER - 1) * (-2.0 * PI * b * t).exp()
}

fn envelope_peak_time(b: f64) -> f64 {
    (GAMMATONE_ORDER - 1) as f64 / (2.0 * PI * b)
}

/// Time after which the envelope stays below [`TRUNCATION_DB`] of its peak.
fn truncation_time(b: f64) -> f64 {
    let tp = envelope_peak_time(b);
    let target = envelope(tp, b) * 10f64.powf(TRUNCATION_DB / 20.0);
    let (mut lo, mut hi) = (tp, tp * 2.0);
    while envelope(hi, b) > target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if envelope(mid, b) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn peak_gain(taps: &[f64], centre_hz: f64, bandwidth_hz: f64) -> f64 {
    let fs = SAMPLE_RATE as f64;
    let mut best = 0.0f64;
    let steps = 400;
    for s in 0..=steps {
        let f = centre_hz + bandwidth_hz * (s as f64 / steps as f64 - 0.5);
        let w = 2.0 * PI * f / fs;
        let h: Complex64 = taps
            .iter()
            .enumerate()
            .map(|(n, &v)| Complex64::from_polar(v, -w * n as f64))
            .sum();
        best = best.max(h.norm());
    }
    best
}

fn envelope_argmax(taps: &[f64]) -> usize {
    hilbert::analytic_signal(taps)
        .iter()
        .take(taps.len())
        .map(|v| v.norm())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(i, _)| i)
}

fn smoothing_filter(cutoff_hz: f64) -> Vec<f64> {
    let mut taps = (4.0 * SAMPLE_RATE as f64 / cutoff_hz).round() as usize;
    if taps.is_multiple_of(2) {
        taps += 1;
    }
    lowpass_taps(cutoff_hz, taps, &hann_symmetric(taps))
}

pub fn build_gammatone_filterbank(sev: &SeverityParams, a: &Audiogram) -> GammatoneFilterbank {
    let fs = SAMPLE_RATE as f64;
    let centres = centre_frequencies(sev.n_channels);
    let bands: Vec<f64> = centres
        .iter()
        .map(|&f| sev.bandwidth_factor * 1.019 * erb_unchecked(f))
        .collect();
    let peak_index = bands
        .iter()
        .map(|&b| (envelope_peak_time(b) * fs).ceil() as usize)
        .max()
        .unwrap_or(0)
        + ALIGNMENT_MARGIN;

    let mut channels: Vec<GammatoneChannel> = centres
        .iter()
        .zip(&bands)
        .map(|(&fc, &b)| {
            let tp = envelope_peak_time(b);
            let t_end = truncation_time(b);
            let len = peak_index + ((t_end - tp) * fs).ceil() as usize + ALIGNMENT_MARGIN + 1;
            let sample = |shift: isize| -> Vec<f64> {
                (0..len)
                    .map(|n| {
                        let t = (n as isize - peak_index as isize + shift) as f64 / fs + tp;
                        if t <= 0.0 || t > t_end {
                            0.0
                        } else {
                            envelope(t, b) * (2.0 * PI * fc * (t - tp)).cos()
                        }
                    })
                    .collect()
            };
            // Low channels are wide relative to their centre, so the Hilbert
            // envelope of the real response peaks a little away from the
            // gammatone envelope; shift it back onto the common index.
            let nominal = sample(0);
            let shift = envelope_argmax(&nominal) as isize - peak_index as isize;
            let mut taps = if shift == 0 { nominal } else { sample(shift) };
            let alignment_delay = (peak_index as f64 - shift as f64 - tp * fs).round().max(0.0) as usize;
            let amplitude = 1.0 / peak_gain(&taps, fc, b);
            for v in &mut taps {
                *v *= amplitude;
            }
            let smoothing_hz = b.min(MAX_SMOOTHING_HZ);
            GammatoneChannel {
                centre_hz: fc,
                bandwidth_hz: b,
                hl_db: a.hl_at(fc),
                amplitude,
                alignment_delay,
                taps,
                smoothing_hz,
                smoothing_taps: smoothing_filter(smoothing_hz),
            }
        })
        .collect();
    channels.shrink_to_fit();

    let mut fb = GammatoneFilterbank {
        channels,
        peak_index,
        mean_gain: 1.0,
        plans: Mutex::new(HashMap::new()),
    };
    fb.mean_gain = fb.mean_summed_gain();
    fb
}

impl GammatoneFilterbank {
    pub fn channels(&self) -> &[GammatoneChannel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Common sample index of the aligned envelope peaks.
    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    /// Mean magnitude of [`Self::summed_response`] over the covered band.
    pub fn mean_gain(&self) -> f64 {
        self.mean_gain
    }

    /// Response of the channel sum after equalisation on an `nfft` grid, at
    /// bin `k`, alignment delay removed.
    pub fn equalized_response(&self, nfft: usize, k: usize) -> Complex64 {
        let plan = self.plan(nfft);
        let f = k as f64 * SAMPLE_RATE as f64 / nfft as f64;
        plan.equalizer[k] * self.summed_response(f) * Complex64::from_polar(1.0, -2.0 * PI * f * self.peak_index as f64 / SAMPLE_RATE as f64)
    }

    pub fn hl_db(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.hl_db).collect()
    }

    /// Complex response of the (unscaled) channel sum at `freq_hz`, alignment
    /// delay removed.
    pub fn summed_response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / SAMPLE_RATE as f64;
        let p = self.peak_index as f64;
        self.channels
            .iter()
            .flat_map(|c| c.taps.iter().enumerate())
            .map(|(n, &v)| Complex64::from_polar(v, -w * (n as f64 - p)))
            .sum()
    }

    fn mean_summed_gain(&self) -> f64 {
        let lo = erb_rate(LOWEST_CENTRE_HZ);
        let hi = erb_rate(HIGHEST_CENTRE_HZ);
        let n = 200;
        (0..n)
            .map(|i| {
                let f = erb_rate_inverse(lo + (hi - lo) * (i as f64 + 0.5) / n as f64);
                self.summed_response(f).norm()
            })
            .sum::<f64>()
            / n as f64
    }

    fn nfft_for(&self, len: usize) -> usize {
        let ir = self.channels.iter().map(|c| c.taps.len()).max().unwrap_or(1);
        let lp = self.channels.iter().map(|c| c.smoothing_taps.len()).max().unwrap_or(1);
        fft::next_pow2(len + ir + lp)
    }

    fn plan(&self, nfft: usize) -> Arc<Plan> {
        let mut cache = self.plans.lock().expect("plan cache poisoned");
        if let Some(p) = cache.get(&nfft) {
            return Arc::clone(p);
        }
        let mask = hilbert::analytic_mask(nfft);
        let mut summed = vec![Complex64::new(0.0, 0.0); nfft];
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let full = fft::forward_real(&c.taps, nfft);
                for (a, b) in summed.iter_mut().zip(&full) {
                    *a += b;
                }
                let masked: Vec<Complex64> = full.iter().zip(&mask).map(|(h, m)| h * m).collect();
                let peak = masked.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let keep = |v: &Complex64| v.norm() > peak * 1e-9;
                let lo = masked.iter().position(keep).unwrap_or(0);
                let hi = masked.iter().rposition(keep).map_or(lo, |i| i + 1);

                let half = c.smoothing_taps.len() / 2;
                let mut circ = vec![0.0; nfft];
                for (i, &v) in c.smoothing_taps.iter().enumerate() {
                    circ[(i + nfft - half) % nfft] = v;
                }
                let lp = fft::forward_real(&circ, nfft);
                let lp_peak = lp[0].re.abs();
                let cut = lp[..=nfft / 2]
                    .iter()
                    .rposition(|v| v.re.abs() > lp_peak * 1e-12)
                    .map_or(1, |i| i + 1);
                ChannelPlan {
                    lo,
                    spectrum: masked[lo..hi].to_vec(),
                    lowpass: lp[..cut].iter().map(|v| v.re).collect(),
                }
            })
            .collect();
        let floor = (EQUALIZER_FLOOR * self.mean_gain).powi(2);
        let equalizer = summed.iter().map(|v| v.conj() / v.norm_sqr().max(floor)).collect();
        let plan = Arc::new(Plan {
            nfft,
            channels,
            equalizer,
        });
        cache.insert(nfft, Arc::clone(&plan));
        plan
    }

    fn check(&self, rp: &RecruitmentParams) -> Result<Vec<f64>> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if c.hl_db >= rp.theta_db {
                    Err(Error::UnsupportedSeverity {
                        channel: i,
                        hl_db: c.hl_db,
                        theta_db: rp.theta_db,
                    })
                } else {
                    Ok(rp.exponent(c.hl_db))
                }
            })
            .collect()
    }

    /// Channel sum with all exponents zero.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.run(x, &vec![0.0; self.len()], &RecruitmentParams::default())
    }

    pub(crate) fn recruit_samples(&self, x: &[f64], rp: &RecruitmentParams) -> Result<Vec<f64>> {
        let alphas = self.check(rp)?;
        Ok(self.run(x, &alphas, rp))
    }

    fn run(&self, x: &[f64], alphas: &[f64], rp: &RecruitmentParams) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let plan = self.plan(self.nfft_for(n));
        let spectrum = fft::forward_real(x, plan.nfft);
        let floor = rp.floor();
        let nfft = plan.nfft;
        let partials = par::map_chunks(self.len(), CHANNEL_CHUNK, |range| {
            let mut acc = vec![0.0; nfft];
            for i in range {
                let ch = &plan.channels[i];
                let z = channel_output(ch, &spectrum, nfft);
                if alphas[i] == 0.0 {
                    for (a, v) in acc.iter_mut().zip(&z) {
                        *a += v.re;
                    }
                    continue;
                }
                let env: Vec<f64> = z.iter().map(|v| v.norm()).collect();
                let smooth = smooth_real(ch, &env, nfft);
                for ((a, v), &e) in acc.iter_mut().zip(&z).zip(&smooth) {
                    *a += (e.max(floor) / rp.e_theta).powf(alphas[i]) * v.re;
                }
            }
            vec![acc]
        });
        let total = sum_partials(partials, 1).remove(0);
        equalize(&plan, &[total], n).remove(0)
    }

    pub(crate) fn recruit_jet(&self, x: &Jet, rp: &RecruitmentParams) -> Result<Jet> {
        let alphas = self.check(rp)?;
        let n = x.len();
        let dims = x.dims();
        if n == 0 {
            return Ok(x.clone());
        }
        let plan = self.plan(self.nfft_for(n));
        let nfft = plan.nfft;
        let spectrum = fft::forward_real(&x.value, nfft);
        let d_spectra: Vec<Vec<Complex64>> = x.tangents.iter().map(|t| fft::forward_real(t, nfft)).collect();
        let floor = rp.floor();
        let partials = par::map_chunks(self.len(), CHANNEL_CHUNK, |range| {
            let mut acc = vec![vec![0.0; nfft]; dims + 1];
            for i in range {
                let ch = &plan.channels[i];
                let alpha = alphas[i];
                let z = channel_output(ch, &spectrum, nfft);
                let dz: Vec<Vec<Complex64>> = d_spectra.iter().map(|s| channel_output(ch, s, nfft)).collect();
                if alpha == 0.0 {
                    for t in 0..nfft {
                        acc[0][t] += z[t].re;
                        for j in 0..dims {
                            acc[j + 1][t] += dz[j][t].re;
                        }
                    }
                    continue;
                }
                let env: Vec<f64> = z.iter().map(|v| v.norm()).collect();
                // d|z| = Re(conj(z) dz) / |z|
                let mut signals = vec![env.clone()];
                for d in &dz {
                    signals.push(
                        z.iter()
                            .zip(d)
                            .zip(&env)
                            .map(|((zv, dv), &m)| if m > 0.0 { (zv.conj() * dv).re / m } else { 0.0 })
                            .collect(),
                    );
                }
                let smoothed = smooth_many(ch, &signals, nfft);
                for t in 0..nfft {
                    let raw = smoothed[0][t];
                    let e = raw.max(floor);
                    let s = (e / rp.e_theta).powf(alpha);
                    let fine = z[t].re;
                    acc[0][t] += s * fine;
                    let ds_de = if raw > floor { alpha * s / e } else { 0.0 };
                    for j in 0..dims {
                        acc[j + 1][t] += s * dz[j][t].re + fine * ds_de * smoothed[j + 1][t];
                    }
                }
            }
            acc
        });
        let totals = sum_partials(partials, dims + 1);
        let mut out = equalize(&plan, &totals, n);
        let value = out.remove(0);
        Ok(Jet::new(value, out))
    }
}

/// Adds per-chunk accumulators in chunk order.
fn sum_partials(partials: Vec<Vec<Vec<f64>>>, count: usize) -> Vec<Vec<f64>> {
    let mut it = partials.into_iter();
    let mut total = it.next().unwrap_or_else(|| vec![Vec::new(); count]);
    for part in it {
        for (t, p) in total.iter_mut().zip(part) {
            for (a, b) in t.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    total
}

/// Equalises full-length channel sums and crops them to the aligned output,
/// two signals per transform.
fn equalize(plan: &Plan, sums: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(sums.len());
    for pair in sums.chunks(2) {
        let mut buf: Vec<Complex64> = match pair {
            [a, b] => a.iter().zip(b).map(|(&p, &q)| Complex64::new(p, q)).collect(),
            [a] => a.iter().map(|&p| Complex64::new(p, 0.0)).collect(),
            _ => unreachable!(),
        };
        fft::forward(&mut buf);
        for (v, e) in buf.iter_mut().zip(&plan.equalizer) {
            *v *= e;
        }
        fft::inverse(&mut buf);
        out.push(buf[..n].iter().map(|v| v.re).collect());
        if pair.len() == 2 {
            out.push(buf[..n].iter().map(|v| v.im).collect());
        }
    }
    out
}
/// Analytic channel output over the whole transform length.
fn channel_output(ch: &ChannelPlan, spectrum: &[Complex64], nfft: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (k, h) in ch.spectrum.iter().enumerate() {
        buf[ch.lo + k] = h * spectrum[ch.lo + k];
    }
    fft::inverse(&mut buf);
    buf
}

fn apply_lowpass(ch: &ChannelPlan, buf: &mut [Complex64]) {
    let nfft = buf.len();
    let cut = ch.lowpass.len();
    for (k, v) in buf.iter_mut().enumerate() {
        let m = k.min(nfft - k);
        *v *= if m < cut { ch.lowpass[m] } else { 0.0 };
    }
}

fn smooth_real(ch: &ChannelPlan, x: &[f64], nfft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::forward(&mut buf);
    apply_lowpass(ch, &mut buf);
    fft::inverse(&mut buf);
    debug_assert_eq!(buf.len(), nfft);
    buf.into_iter().map(|v| v.re).collect()
}

/// Smooths real signals two at a time through one complex transform; the
/// response is real and even, so real and imaginary parts stay separate.
fn smooth_many(ch: &ChannelPlan, xs: &[Vec<f64>], nfft: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    for pair in xs.chunks(2) {
        let mut buf: Vec<Complex64> = match pair {
            [a, b] => a.iter().zip(b).map(|(&p, &q)| Complex64::new(p, q)).collect(),
            [a] => a.iter().map(|&p| Complex64::new(p, 0.0)).collect(),
            _ => unreachable!(),
        };
        debug_assert_eq!(buf.len(), nfft);
        fft::forward(&mut buf);
        apply_lowpass(ch, &mut buf);
        fft::inverse(&mut buf);
        out.push(buf.iter().map(|v| v.re).collect());
        if pair.len() == 2 {
            out.push(buf.iter().map(|v| v.im).collect());
        }
    }
    out
}

/// Loudness recruitment: each channel's fine structure is scaled by
/// `(E / E_theta)^(theta / (theta - HL) - 1)` and the channels are summed.
pub fn recruit(w: &Waveform, fb: &GammatoneFilterbank, rp: &RecruitmentParams) -> Result<Waveform> {
    Ok(Waveform::from_vec(fb.recruit_samples(w.samples(), rp)?))
}
