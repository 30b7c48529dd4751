//! Differentiable hearing loss simulator.
//!
//! Four stages run in order: source-to-cochlea transfer, spectral smearing,
//! loudness recruitment, cochlea-to-source transfer. Every stage is either
//! linear or smooth almost everywhere, so the whole chain can be
//! differentiated with forward-mode tangents (see [`model::HearingLossModel::simulate_jet`]).

pub mod auditory;
pub mod gammatone;
pub mod model;
pub mod smearing;
pub mod transfer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use auditory::{auditory_filter_weight, erb};
pub use gammatone::{build_gammatone_filterbank, recruit, GammatoneFilterbank, RecruitmentParams};
pub use model::{simulate, HearingLossConfig, HearingLossModel};
pub use smearing::{build_smearing_matrix, smear, SmearingMatrix};
pub use transfer::{cochlea_to_source, source_to_cochlea, TransferTable};

use crate::error::{Error, Result};
use crate::ha_processor::{ANCHOR_FREQS_HZ, NUM_BANDS};

/// Largest hearing loss accepted in an audiogram, dB HL.
pub const MAX_HL_DB: f64 = 120.0;

/// Hearing thresholds (dB HL) at [`ANCHOR_FREQS_HZ`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audiogram {
    pub name: String,
    pub hl_db: [f64; NUM_BANDS],
}

impl Audiogram {
    pub fn new(name: impl Into<String>, hl_db: [f64; NUM_BANDS]) -> Result<Self> {
        for (f, &hl) in ANCHOR_FREQS_HZ.iter().zip(&hl_db) {
            if !(0.0..=MAX_HL_DB).contains(&hl) {
                return Err(Error::MalformedAudiogram(format!(
                    "{hl} dB HL at {f} Hz outside [0, {MAX_HL_DB}]"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            hl_db,
        })
    }

    /// Normal hearing.
    pub fn zero() -> Self {
        Self {
            name: "NH".into(),
            hl_db: [0.0; NUM_BANDS],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.hl_db.iter().all(|&h| h == 0.0)
    }

    /// Loss at `freq_hz`, linear in dB over log frequency between anchors and
    /// held constant outside them.
    pub fn hl_at(&self, freq_hz: f64) -> f64 {
        let f = ANCHOR_FREQS_HZ;
        if freq_hz <= f[0] {
            return self.hl_db[0];
        }
        if freq_hz >= f[NUM_BANDS - 1] {
            return self.hl_db[NUM_BANDS - 1];
        }
        let j = f
            .windows(2)
            .position(|p| freq_hz >= p[0] && freq_hz <= p[1])
            .expect("inside anchor range");
        let t = (freq_hz / f[j]).ln() / (f[j + 1] / f[j]).ln();
        self.hl_db[j] + t * (self.hl_db[j + 1] - self.hl_db[j])
    }

    /// Pure-tone average over 0.5, 1, 2 and 4 kHz.
    pub fn four_frequency_average(&self) -> f64 {
        (self.hl_db[1] + self.hl_db[2] + self.hl_db[3] + self.hl_db[4]) / 4.0
    }

    pub fn severity(&self) -> Severity {
        Severity::classify(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Normal,
    Mild,
    Moderate,
    ModerateSevere,
}

impl Severity {
    /// Class from the four-frequency average: below 15 dB normal, up to 30
    /// mild, up to 55 moderate, above that moderate-to-severe. Places the
    /// standard N1, N2 and N4 audiograms in mild, moderate and
    /// moderate-to-severe.
    pub fn classify(a: &Audiogram) -> Self {
        let pta = a.four_frequency_average();
        if pta < 15.0 {
            Severity::Normal
        } else if pta <= 30.0 {
            Severity::Mild
        } else if pta <= 55.0 {
            Severity::Moderate
        } else {
            Severity::ModerateSevere
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Severity::Normal => "normal",
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::ModerateSevere => "moderate_severe",
        };
        f.write_str(s)
    }
}

/// Per-class model settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityParams {
    /// Smearing widening factor below the centre frequency.
    pub r_lower: f64,
    /// Smearing widening factor above the centre frequency.
    pub r_upper: f64,
    pub n_channels: usize,
    /// Gammatone bandwidth multiplier.
    pub bandwidth_factor: f64,
}

impl SeverityParams {
    pub fn for_class(s: Severity) -> Self {
        // Widening factors as published; note the mild class gets the widest
        // filters.
        match s {
            Severity::Normal => Self {
                r_lower: 1.0,
                r_upper: 1.0,
                n_channels: 36,
                bandwidth_factor: 1.0,
            },
            Severity::Mild => Self {
                r_lower: 4.0,
                r_upper: 2.0,
                n_channels: 36,
                bandwidth_factor: 1.0,
            },
            Severity::Moderate => Self {
                r_lower: 2.4,
                r_upper: 1.6,
                n_channels: 28,
                bandwidth_factor: 2.0,
            },
            Severity::ModerateSevere => Self {
                r_lower: 1.6,
                r_upper: 1.1,
                n_channels: 19,
                bandwidth_factor: 3.0,
            },
        }
    }

    pub fn is_unsmeared(&self) -> bool {
        self.r_lower == 1.0 && self.r_upper == 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audiogram_validation() {
        assert!(Audiogram::new("x", [0.0, 10.0, 20.0, 30.0, 40.0, 121.0]).is_err());
        assert!(Audiogram::new("x", [-1.0, 10.0, 20.0, 30.0, 40.0, 50.0]).is_err());
        assert!(Audiogram::new("x", [0.0, 10.0, 20.0, 30.0, 40.0, 120.0]).is_ok());
    }

    #[test]
    fn log_frequency_interpolation() {
        let a = Audiogram::new("N2", [20.0, 20.0, 25.0, 35.0, 45.0, 50.0]).unwrap();
        assert!((a.hl_at(1000.0) - 25.0).abs() < 1e-12);
        assert!((a.hl_at(1000.0 * 2f64.sqrt()) - 30.0).abs() < 1e-12);
        assert_eq!(a.hl_at(100.0), 20.0);
        assert_eq!(a.hl_at(12_000.0), 50.0);
    }

    #[test]
    fn standard_audiograms_classify() {
        let n1 = Audiogram::new("N1", [10.0, 10.0, 10.0, 15.0, 30.0, 40.0]).unwrap();
        let n2 = Audiogram::new("N2", [20.0, 20.0, 25.0, 35.0, 45.0, 50.0]).unwrap();
        let n4 = Audiogram::new("N4", [55.0, 55.0, 55.0, 65.0, 75.0, 80.0]).unwrap();
        assert_eq!(n1.severity(), Severity::Mild);
        assert_eq!(n2.severity(), Severity::Moderate);
        assert_eq!(n4.severity(), Severity::ModerateSevere);
        assert_eq!(Audiogram::zero().severity(), Severity::Normal);
    }

    #[test]
    fn published_class_parameters() {
        let m = SeverityParams::for_class(Severity::Mild);
        assert_eq!((m.r_lower, m.r_upper, m.n_channels), (4.0, 2.0, 36));
        let m = SeverityParams::for_class(Severity::Moderate);
        assert_eq!((m.r_lower, m.r_upper, m.n_channels, m.bandwidth_factor), (2.4, 1.6, 28, 2.0));
        let m = SeverityParams::for_class(Severity::ModerateSevere);
        assert_eq!((m.r_lower, m.r_upper, m.n_channels, m.bandwidth_factor), (1.6, 1.1, 19, 3.0));
        assert!(SeverityParams::for_class(Severity::Normal).is_unsmeared());
    }
}
