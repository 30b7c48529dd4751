//! Source-to-cochlea and cochlea-to-source transfer filters.
//!
//! The forward filter realises the sum of a free-field-to-eardrum curve and a
//! middle-ear curve; the inverse realises the negated sum in dB.

use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::signal::fir::{design_frequency_sampling, Convolver};
use crate::signal::{fir_apply, FirFilter, Waveform};

const FREE_FIELD: &str = include_str!("../../data/free_field_to_eardrum.txt");
const MIDDLE_EAR: &str = include_str!("../../data/middle_ear.txt");

/// Default length of the ear transfer filters.
pub const DEFAULT_EAR_TAPS: usize = 4097;

/// Frequency-gain table, sorted by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferTable {
    points: Vec<(f64, f64)>,
}

impl TransferTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::MalformedTable("empty table".into()));
        }
        if points.iter().any(|(f, g)| !(*f > 0.0) || !g.is_finite()) {
            return Err(Error::MalformedTable("frequencies must be positive and gains finite".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::MalformedTable("duplicate frequency".into()));
        }
        Ok(Self { points })
    }

    /// Parses whitespace-separated `frequency_hz gain_db` rows; `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::MalformedTable(format!(
                    "line {}: expected 2 columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::MalformedTable(format!("line {}: {e}", lineno + 1)))
            };
            points.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::new(points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn free_field() -> Self {
        Self::parse(FREE_FIELD).expect("bundled table parses")
    }

    pub fn middle_ear() -> Self {
        Self::parse(MIDDLE_EAR).expect("bundled table parses")
    }

    /// Free field plus middle ear.
    pub fn bundled() -> Self {
        Self::sum(&Self::free_field(), &Self::middle_ear())
    }

    /// Pointwise sum in dB, sampled on the union of both grids.
    pub fn sum(a: &Self, b: &Self) -> Self {
        let mut freqs: Vec<f64> = a.points.iter().chain(&b.points).map(|p| p.0).collect();
        freqs.sort_by(f64::total_cmp);
        freqs.dedup();
        Self {
            points: freqs.into_iter().map(|f| (f, a.gain_db_at(f) + b.gain_db_at(f))).collect(),
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Gain at `freq_hz`, linear in dB over log frequency, constant beyond
    /// the table ends.
    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        let p = &self.points;
        if freq_hz <= p[0].0 {
            return p[0].1;
        }
        if freq_hz >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let j = p.partition_point(|q| q.0 <= freq_hz) - 1;
        let (f0, g0) = p[j];
        let (f1, g1) = p[j + 1];
        let t = (freq_hz / f0).ln() / (f1 / f0).ln();
        g0 + t * (g1 - g0)
    }
}

/// The pair of ear transfer filters.
#[derive(Debug, Clone)]
pub struct EarTransfer {
    pub forward: FirFilter,
    pub inverse: FirFilter,
}

impl EarTransfer {
    pub fn design(table: &TransferTable, taps: usize) -> Result<Self> {
        let forward = design_frequency_sampling(taps, |f| 10f64.powf(table.gain_db_at(f) / 20.0))?;
        let inverse = design_frequency_sampling(taps, |f| 10f64.powf(-table.gain_db_at(f) / 20.0))?;
        Ok(Self { forward, inverse })
    }

    pub fn bundled() -> &'static EarTransfer {
        static DEFAULT: OnceLock<EarTransfer> = OnceLock::new();
        DEFAULT.get_or_init(|| {
            EarTransfer::design(&TransferTable::bundled(), DEFAULT_EAR_TAPS).expect("odd taps")
        })
    }

    pub(crate) fn forward_convolver(&self, len: usize) -> Convolver {
        Convolver::new(&self.forward, len)
    }

    pub(crate) fn inverse_convolver(&self, len: usize) -> Convolver {
        Convolver::new(&self.inverse, len)
    }
}

/// Sound at the source to sound at the cochlea, bundled tables.
pub fn source_to_cochlea(w: &Waveform) -> Waveform {
    fir_apply(w, &EarTransfer::bundled().forward)
}

/// Inverse of [`source_to_cochlea`] in dB.
pub fn cochlea_to_source(w: &Waveform) -> Waveform {
    fir_apply(w, &EarTransfer::bundled().inverse)
}
