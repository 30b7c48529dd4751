//! Synthetic speech-like signals and noises for tests and demos.
//!
//! Speech is a train of voiced syllables (a harmonic source shaped by three
//! moving formants) with occasional fricatives and pauses. It always starts
//! with 150 ms of silence so the Wiener noise estimate sees noise first.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Waveform, SAMPLE_RATE};

const FS: f64 = SAMPLE_RATE as f64;
const LEAD_SILENCE_SECS: f64 = 0.15;

fn secs_to_samples(secs: f64) -> usize {
    (secs * FS).round() as usize
}

/// Vowel formant frequencies (F1, F2, F3).
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];
const FORMANT_GAINS: [f64; 3] = [1.0, 0.45, 0.2];

fn formant_envelope(f: f64, formants: &[f64; 3]) -> f64 {
    let peaks: f64 = (0..3)
        .map(|i| FORMANT_GAINS[i] / (1.0 + ((f - formants[i]) / FORMANT_BANDWIDTHS[i]).powi(2)))
        .sum();
    (peaks + 0.01) / (1.0 + f / 3000.0)
}

/// One second-order resonator section run over `x`.
fn resonate(x: &mut [f64], centre: f64, bandwidth: f64) {
    let r = (-PI * bandwidth / FS).exp();
    let a1 = 2.0 * r * (2.0 * PI * centre / FS).cos();
    let a2 = -r * r;
    let g = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = g * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn raised_cosine_edges(x: &mut [f64], ramp: usize) {
    let n = x.len();
    let ramp = ramp.min(n / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

/// Speech-like signal of `secs` seconds with RMS around 0.05.
pub fn speech(secs: f64, seed: u64) -> Waveform {
    let n = secs_to_samples(secs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let base_f0 = rng.random_range(95.0..230.0);
    let mut out = vec![0.0; n];
    let mut pos = secs_to_samples(LEAD_SILENCE_SECS);
    let mut phase = 0.0;
    let mut vowel = rng.random_range(0..VOWELS.len());

    while pos < n {
        if rng.random_bool(0.3) {
            let len = secs_to_samples(rng.random_range(0.05..0.12)).min(n - pos);
            let mut burst: Vec<f64> = (0..len).map(|_| gauss.sample(&mut rng)).collect();
            resonate(&mut burst, rng.random_range(3500.0..7000.0), 2500.0);
            raised_cosine_edges(&mut burst, secs_to_samples(0.01));
            let gain = rng.random_range(0.02..0.06);
            for (o, b) in out[pos..pos + len].iter_mut().zip(&burst) {
                *o += gain * b;
            }
            pos += len;
        }
        if pos >= n {
            break;
        }
        let len = secs_to_samples(rng.random_range(0.12..0.3)).min(n - pos);
        let next = rng.random_range(0..VOWELS.len());
        let f0_start = base_f0 * rng.random_range(0.85..1.15);
        let f0_end = base_f0 * rng.random_range(0.8..1.1);
        let level = rng.random_range(0.5..1.0);
        let mut syllable = vec![0.0; len];
        for (i, s) in syllable.iter_mut().enumerate() {
            let t = i as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * t;
            let formants = [0, 1, 2].map(|j| VOWELS[vowel][j] + (VOWELS[next][j] - VOWELS[vowel][j]) * t);
            phase += 2.0 * PI * f0 / FS;
            let harmonics = (8000.0 / f0) as usize;
            let mut v = 0.0;
            for h in 1..=harmonics {
                let hf = h as f64;
                v += formant_envelope(hf * f0, &formants) * (hf * phase).sin();
            }
            *s = level * v;
        }
        raised_cosine_edges(&mut syllable, secs_to_samples(0.03));
        for (o, s) in out[pos..pos + len].iter_mut().zip(&syllable) {
            *o += 0.06 * s;
        }
        vowel = next;
        pos += len + secs_to_samples(rng.random_range(0.02..0.15));
    }
    Waveform::new(out).expect("finite synthesis")
}

pub fn white_noise(len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    Waveform::new((0..len).map(|_| gauss.sample(&mut rng)).collect()).expect("finite noise")
}

/// Stationary noise with most of its power below 300 Hz, like road traffic.
pub fn low_frequency_noise(len: usize, seed: u64) -> Waveform {
    let mut x = white_noise(len, seed).into_samples();
    for _ in 0..2 {
        let a = (-2.0 * PI * 150.0 / FS).exp();
        let mut y = 0.0;
        for v in x.iter_mut() {
            y = a * y + (1.0 - a) * *v;
            *v = y;
        }
    }
    // remove drift below 20 Hz
    let a = (-2.0 * PI * 20.0 / FS).exp();
    let (mut prev_x, mut prev_y) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = a * (prev_y + *v - prev_x);
        prev_x = *v;
        prev_y = y;
        *v = y;
    }
    Waveform::new(x).expect("finite noise")
}

/// Sum of four unrelated talkers.
pub fn babble(len: usize, seed: u64) -> Waveform {
    let secs = len as f64 / FS + 0.2;
    let mut acc = vec![0.0; len];
    for talker in 0..4u64 {
        let s = speech(secs, seed.wrapping_mul(31).wrapping_add(talker + 1));
        let offset = secs_to_samples(LEAD_SILENCE_SECS);
        for (a, v) in acc.iter_mut().zip(&s.samples()[offset..]) {
            *a += v;
        }
    }
    Waveform::new(acc).expect("finite noise")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    LowFrequency,
    Babble,
}

impl NoiseKind {
    pub fn generate(self, len: usize, seed: u64) -> Waveform {
        match self {
            NoiseKind::White => white_noise(len, seed),
            NoiseKind::LowFrequency => low_frequency_noise(len, seed),
            NoiseKind::Babble => babble(len, seed),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::LowFrequency => "low-frequency",
            NoiseKind::Babble => "babble",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "low-frequency" | "lf" | "traffic" => Ok(NoiseKind::LowFrequency),
            "babble" => Ok(NoiseKind::Babble),
            _ => Err(Error::Config(format!("unknown noise kind `{s}`"))),
        }
    }
}

/// `clean + k * noise` with `k` chosen so the mixture has the given SNR.
pub fn mix(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    let noise = noise.fit_length(clean.len());
    let (pc, pn) = (clean.rms(), noise.rms());
    if pc <= 0.0 || pn <= 0.0 {
        return Err(Error::SilentSignal);
    }
    let k = pc / pn * 10f64.powf(-snr_db / 20.0);
    clean.add(&noise.scaled(k))
}
