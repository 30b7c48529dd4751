//! Six-band linear hearing-aid processor.
//!
//! The insertion gains at the audiometric anchor frequencies are linearly
//! interpolated (dB over linear frequency, held constant outside the anchor
//! range), sampled on the DFT grid of the filter, inverse transformed and
//! Hann-windowed into a zero-phase FIR. No compression is applied.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::fir::{frequency_sampling_taps, Convolver};
use crate::signal::{fir_apply, FirFilter, Waveform, SAMPLE_RATE};

/// Anchor frequencies shared by audiograms and fittings.
pub const ANCHOR_FREQS_HZ: [f64; 6] = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 6000.0];
pub const NUM_BANDS: usize = ANCHOR_FREQS_HZ.len();

/// Default processor length, 4096 + 1 taps.
pub const DEFAULT_TAPS: usize = 4097;

/// Where a fitting came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FittingLabel {
    /// NAL-R prescription.
    N,
    /// Optimised on clean speech.
    G,
    /// Optimised on noisy speech.
    Cn,
    /// Optimised on Wiener-enhanced noisy speech.
    Cw,
    /// Entered by hand.
    Manual,
}

impl fmt::Display for FittingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FittingLabel::N => "N",
            FittingLabel::G => "G",
            FittingLabel::Cn => "Cn",
            FittingLabel::Cw => "Cw",
            FittingLabel::Manual => "Manual",
        };
        f.write_str(s)
    }
}

impl FromStr for FittingLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(FittingLabel::N),
            "G" => Ok(FittingLabel::G),
            "Cn" => Ok(FittingLabel::Cn),
            "Cw" => Ok(FittingLabel::Cw),
            "Manual" => Ok(FittingLabel::Manual),
            other => Err(Error::Config(format!("unknown fitting label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainBounds {
    pub min_db: f64,
    pub max_db: f64,
}

impl Default for GainBounds {
    fn default() -> Self {
        Self {
            min_db: -10.0,
            max_db: 60.0,
        }
    }
}

impl GainBounds {
    pub fn new(min_db: f64, max_db: f64) -> Result<Self> {
        if !(min_db < max_db) || !min_db.is_finite() || !max_db.is_finite() {
            return Err(Error::Config(format!("invalid gain bounds [{min_db}, {max_db}]")));
        }
        Ok(Self { min_db, max_db })
    }

    pub fn contains(&self, g: f64) -> bool {
        (self.min_db..=self.max_db).contains(&g)
    }

    pub fn clamp(&self, g: f64) -> f64 {
        g.clamp(self.min_db, self.max_db)
    }
}

/// Insertion gains (dB) at [`ANCHOR_FREQS_HZ`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitting {
    pub gains_db: [f64; NUM_BANDS],
    pub label: FittingLabel,
}

impl Fitting {
    pub fn new(gains_db: [f64; NUM_BANDS], label: FittingLabel) -> Result<Self> {
        if gains_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("fitting gains must be finite".into()));
        }
        Ok(Self { gains_db, label })
    }

    pub fn flat(gain_db: f64) -> Self {
        Self {
            gains_db: [gain_db; NUM_BANDS],
            label: FittingLabel::Manual,
        }
    }

    pub fn with_label(mut self, label: FittingLabel) -> Self {
        self.label = label;
        self
    }

    /// Interpolated insertion gain at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        interpolation_weights(freq_hz)
            .iter()
            .zip(&self.gains_db)
            .map(|(w, g)| w * g)
            .sum()
    }

    pub fn check_bounds(&self, bounds: &GainBounds) -> Result<()> {
        for (f, &g) in ANCHOR_FREQS_HZ.iter().zip(&self.gains_db) {
            if !bounds.contains(g) {
                return Err(Error::GainOutOfBounds {
                    freq_hz: *f,
                    gain_db: g,
                    min: bounds.min_db,
                    max: bounds.max_db,
                });
            }
        }
        Ok(())
    }

    pub fn projected(mut self, bounds: &GainBounds) -> Self {
        for g in &mut self.gains_db {
            *g = bounds.clamp(*g);
        }
        self
    }
}

/// Weights `w` such that the interpolated gain at `freq_hz` is
/// `sum_j w[j] * gains[j]`. Linear in frequency between anchors, constant
/// outside.
pub fn interpolation_weights(freq_hz: f64) -> [f64; NUM_BANDS] {
    let mut w = [0.0; NUM_BANDS];
    if freq_hz <= ANCHOR_FREQS_HZ[0] {
        w[0] = 1.0;
        return w;
    }
    if freq_hz >= ANCHOR_FREQS_HZ[NUM_BANDS - 1] {
        w[NUM_BANDS - 1] = 1.0;
        return w;
    }
    let j = ANCHOR_FREQS_HZ
        .windows(2)
        .position(|p| freq_hz >= p[0] && freq_hz <= p[1])
        .expect("inside anchor range");
    let t = (freq_hz - ANCHOR_FREQS_HZ[j]) / (ANCHOR_FREQS_HZ[j + 1] - ANCHOR_FREQS_HZ[j]);
    w[j] = 1.0 - t;
    w[j + 1] = t;
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaConfig {
    pub taps: usize,
    pub bounds: GainBounds,
}

impl Default for HaConfig {
    fn default() -> Self {
        Self {
            taps: DEFAULT_TAPS,
            bounds: GainBounds::default(),
        }
    }
}

fn grid_freqs(taps: usize) -> impl Iterator<Item = f64> {
    (0..=taps / 2).map(move |k| k as f64 * SAMPLE_RATE as f64 / taps as f64)
}

/// FIR realising the fitting's interpolated response.
pub fn design_fir(f: &Fitting, cfg: &HaConfig) -> Result<FirFilter> {
    if cfg.taps.is_multiple_of(2) {
        return Err(Error::InvalidFilter(format!("tap count must be odd, got {}", cfg.taps)));
    }
    f.check_bounds(&cfg.bounds)?;
    let grid: Vec<f64> = grid_freqs(cfg.taps)
        .map(|fr| 10f64.powf(f.gain_at(fr) / 20.0))
        .collect();
    FirFilter::new(frequency_sampling_taps(&grid, cfg.taps))
}

/// Derivatives of the designed taps with respect to each anchor gain (per dB).
pub fn design_fir_tangents(f: &Fitting, cfg: &HaConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.taps.is_multiple_of(2) {
        return Err(Error::InvalidFilter(format!("tap count must be odd, got {}", cfg.taps)));
    }
    let db_to_np = std::f64::consts::LN_10 / 20.0;
    let freqs: Vec<f64> = grid_freqs(cfg.taps).collect();
    let mags: Vec<f64> = freqs.iter().map(|&fr| 10f64.powf(f.gain_at(fr) / 20.0)).collect();
    Ok((0..NUM_BANDS)
        .map(|j| {
            let grid: Vec<f64> = freqs
                .iter()
                .zip(&mags)
                .map(|(&fr, &m)| m * db_to_np * interpolation_weights(fr)[j])
                .collect();
            frequency_sampling_taps(&grid, cfg.taps)
        })
        .collect())
}

/// Amplifies `w` with the fitting's filter.
pub fn process(w: &Waveform, f: &Fitting, cfg: &HaConfig) -> Result<Waveform> {
    Ok(fir_apply(w, &design_fir(f, cfg)?))
}

/// Output of [`process`] together with its derivative with respect to each
/// anchor gain.
pub fn process_with_tangents(
    w: &Waveform,
    f: &Fitting,
    cfg: &HaConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let filter = design_fir(f, cfg)?;
    let tangent_taps = design_fir_tangents(f, cfg)?;
    let value = Convolver::new(&filter, w.len()).apply(w.samples());
    let tangents = tangent_taps
        .into_iter()
        .map(|taps| {
            let tf = FirFilter::new(taps).expect("odd taps");
            Convolver::new(&tf, w.len()).apply(w.samples())
        })
        .collect();
    Ok((value, tangents))
}

/// Twelve points per octave between 100 Hz and 10 kHz, plus the anchors.
pub fn response_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (-40..=40)
        .map(|k| 1000.0 * 2f64.powf(k as f64 / 12.0))
        .filter(|f| (100.0..=10_000.0).contains(f))
        .chain(ANCHOR_FREQS_HZ)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    grid
}

/// Gain of the designed processor at each frequency, dB.
pub fn frequency_response(f: &Fitting, cfg: &HaConfig, freqs: &[f64]) -> Result<Vec<f64>> {
    let fir = design_fir(f, cfg)?;
    Ok(freqs.iter().map(|&hz| fir.gain_db_at(hz)).collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FittingFile {
    label: FittingLabel,
    frequencies_hz: Vec<f64>,
    gains_db: Vec<f64>,
}

/// Parses a TOML fitting file with keys `label`, `frequencies_hz` and
/// `gains_db`.
pub fn parse_fitting(text: &str) -> Result<Fitting> {
    let file: FittingFile = toml::from_str(text).map_err(|e| Error::MalformedFitting(e.message().to_string()))?;
    if file.frequencies_hz != ANCHOR_FREQS_HZ {
        return Err(Error::MalformedFitting(format!(
            "frequencies must be {ANCHOR_FREQS_HZ:?}, got {:?}",
            file.frequencies_hz
        )));
    }
    if file.gains_db.len() != NUM_BANDS {
        return Err(Error::MalformedFitting(format!(
            "expected {NUM_BANDS} gains, got {}",
            file.gains_db.len()
        )));
    }
    let mut gains = [0.0; NUM_BANDS];
    gains.copy_from_slice(&file.gains_db);
    Fitting::new(gains, file.label)
}

pub fn format_fitting(f: &Fitting) -> String {
    toml::to_string(&FittingFile {
        label: f.label,
        frequencies_hz: ANCHOR_FREQS_HZ.to_vec(),
        gains_db: f.gains_db.to_vec(),
    })
    .expect("fitting serialises")
}

pub fn load_fitting(path: impl AsRef<std::path::Path>) -> Result<Fitting> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fitting(&text)
}

pub fn write_fitting(f: &Fitting, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_fitting(f)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn probe_gain_db(filter: &FirFilter, freq: f64) -> f64 {
        let n = 44_100;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let y = fir_apply(&Waveform::new(x.clone()).unwrap(), filter);
        let m = 2000;
        let r = crate::signal::rms(&y.samples()[m..n - m]) / crate::signal::rms(&x[m..n - m]);
        20.0 * r.log10()
    }

    #[test]
    fn interpolation_by_hand() {
        let f = Fitting::new([0.0, 0.0, 12.0, 0.0, 0.0, 0.0], FittingLabel::Manual).unwrap();
        assert!((f.gain_at(625.0) - 3.0).abs() < 1e-12);
        assert!((f.gain_at(1000.0) - 12.0).abs() < 1e-12);
        assert!((f.gain_at(1500.0) - 6.0).abs() < 1e-12);
        let g = Fitting::new([5.0, 1.0, 2.0, 3.0, 4.0, 9.0], FittingLabel::Manual).unwrap();
        assert_eq!(g.gain_at(100.0), 5.0);
        assert_eq!(g.gain_at(10_000.0), 9.0);
    }

    #[test]
    fn flat_zero_is_near_identity() {
        let filter = design_fir(&Fitting::flat(0.0), &HaConfig::default()).unwrap();
        for k in 0..50 {
            let fr = 250.0 * (24.0f64).powf(k as f64 / 49.0);
            assert!(filter.gain_db_at(fr).abs() < 0.1);
        }
    }

    #[test]
    fn anchor_gains_measured_with_probe_tones() {
        let f = Fitting::new([0.0, 0.0, 12.0, 0.0, 0.0, 0.0], FittingLabel::Manual).unwrap();
        let filter = design_fir(&f, &HaConfig::default()).unwrap();
        assert!(filter.is_symmetric());
        let g1k = probe_gain_db(&filter, 1000.0);
        assert!((g1k - 12.0).abs() <= 0.25, "1 kHz gain {g1k}");
        let g250 = probe_gain_db(&filter, 250.0);
        assert!(g250.abs() <= 0.25, "250 Hz gain {g250}");
    }

    #[test]
    fn six_db_flat_doubles_output() {
        let x: Vec<f64> = (0..20_000).map(|i| ((i * 31 % 101) as f64 / 50.0 - 1.0) * 0.1).collect();
        let w = Waveform::new(x).unwrap();
        let cfg = HaConfig::default();
        let y0 = process(&w, &Fitting::flat(0.0), &cfg).unwrap();
        let y6 = process(&w, &Fitting::flat(6.0), &cfg).unwrap();
        let ratio = 10f64.powf(6.0 / 20.0);
        for (a, b) in y0.samples().iter().zip(y6.samples()) {
            assert!((b - ratio * a).abs() <= 1e-9);
        }
    }

    #[test]
    fn response_grid_holds_the_anchors() {
        let g = response_grid();
        assert_eq!(g.first(), Some(&(1000.0 * 2f64.powf(-39.0 / 12.0))));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        for a in ANCHOR_FREQS_HZ {
            assert!(g.contains(&a));
        }
        let r = frequency_response(&Fitting::flat(0.0), &HaConfig::default(), &g).unwrap();
        assert!(r.iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn fitting_file_round_trip() {
        let f = Fitting::new([0.0, 2.2, 12.75, 13.85, 15.95, 17.5], FittingLabel::Cn).unwrap();
        let text = format_fitting(&f);
        assert!(text.contains("label = \"Cn\""));
        assert_eq!(parse_fitting(&text).unwrap(), f);
        assert!(parse_fitting("label = \"G\"\nfrequencies_hz = [1.0]\ngains_db = [0.0]\n").is_err());
        assert!(parse_fitting("label = \"Q\"\nfrequencies_hz = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 6000.0]\ngains_db = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]\n").is_err());
    }

    #[test]
    fn errors() {
        let cfg = HaConfig {
            taps: 512,
            ..HaConfig::default()
        };
        assert!(design_fir(&Fitting::flat(0.0), &cfg).is_err());
        assert!(matches!(
            design_fir(&Fitting::flat(70.0), &HaConfig::default()),
            Err(Error::GainOutOfBounds { .. })
        ));
    }

    #[test]
    fn tangent_taps_match_finite_differences() {
        let cfg = HaConfig::default();
        let f = Fitting::new([3.0, 7.0, 12.0, 20.0, 18.0, 25.0], FittingLabel::Manual).unwrap();
        let tangents = design_fir_tangents(&f, &cfg).unwrap();
        let h = 1e-4;
        for j in 0..NUM_BANDS {
            let mut up = f;
            up.gains_db[j] += h;
            let mut dn = f;
            dn.gains_db[j] -= h;
            let tu = design_fir(&up, &cfg).unwrap();
            let td = design_fir(&dn, &cfg).unwrap();
            for (i, t) in tangents[j].iter().enumerate() {
                let fd = (tu.taps()[i] - td.taps()[i]) / (2.0 * h);
                assert!((fd - t).abs() < 1e-7 * (1.0 + t.abs()));
            }
        }
    }

    #[test]
    fn raising_a_band_raises_its_octave_energy() {
        let cfg = HaConfig::default();
        let base = Fitting::new([10.0, 12.0, 15.0, 20.0, 25.0, 30.0], FittingLabel::Manual).unwrap();
        for j in 0..NUM_BANDS {
            let mut up = base;
            up.gains_db[j] += 3.0;
            let f0 = design_fir(&base, &cfg).unwrap();
            let f1 = design_fir(&up, &cfg).unwrap();
            let centre = ANCHOR_FREQS_HZ[j];
            let energy = |f: &FirFilter| -> f64 {
                (0..40)
                    .map(|k| centre * 2f64.powf(-0.5 + k as f64 / 39.0))
                    .map(|fr| f.response_at(fr).norm_sqr())
                    .sum()
            };
            assert!(energy(&f1) >= energy(&f0));
        }
    }

    proptest::proptest! {
        #[test]
        fn process_is_linear_in_signal(a in 0.01f64..3.0) {
            let x: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.013).sin() * 0.2).collect();
            let w = Waveform::new(x).unwrap();
            let f = Fitting::new([0.0, 5.0, 10.0, 15.0, 20.0, 20.0], FittingLabel::Manual).unwrap();
            let cfg = HaConfig::default();
            let y = process(&w.scaled(a), &f, &cfg).unwrap();
            let z = process(&w, &f, &cfg).unwrap();
            for (p, q) in y.samples().iter().zip(z.samples()) {
                proptest::prop_assert!((p - a * q).abs() <= 1e-9);
            }
        }
    }
}
