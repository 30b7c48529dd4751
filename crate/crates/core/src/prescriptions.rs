//! NAL-R prescription and the standard audiograms.
//!
//! Audiogram files are TOML:
//!
//! ```toml
//! name = "N2"
//! frequencies_hz = [250, 500, 1000, 2000, 4000, 6000]
//! hl_db = [20, 20, 25, 35, 45, 50]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ha_processor::{Fitting, FittingLabel, ANCHOR_FREQS_HZ, NUM_BANDS};
use crate::hearing_loss::Audiogram;

/// NAL-R frequency corrections at the anchor frequencies, dB.
pub const NAL_R_CORRECTIONS_DB: [f64; NUM_BANDS] = [-17.0, -8.0, 1.0, -1.0, -2.0, -2.0];

/// NAL-R insertion gains, negative values clamped to 0 dB.
pub fn nal_r(a: &Audiogram) -> Fitting {
    let h = &a.hl_db;
    let x = 0.05 * (h[1] + h[2] + h[3]);
    let mut gains = [0.0; NUM_BANDS];
    for i in 0..NUM_BANDS {
        gains[i] = (x + 0.31 * h[i] + NAL_R_CORRECTIONS_DB[i]).max(0.0);
    }
    Fitting {
        gains_db: gains,
        label: FittingLabel::N,
    }
}

pub const STANDARD_NAMES: [&str; 3] = ["N1", "N2", "N4"];

pub fn standard_audiogram(name: &str) -> Result<Audiogram> {
    let hl = match name.to_ascii_uppercase().as_str() {
        "N1" => [10.0, 10.0, 10.0, 15.0, 30.0, 40.0],
        "N2" => [20.0, 20.0, 25.0, 35.0, 45.0, 50.0],
        "N4" => [55.0, 55.0, 55.0, 65.0, 75.0, 80.0],
        _ => return Err(Error::UnknownAudiogram(name.to_string())),
    };
    Audiogram::new(name.to_ascii_uppercase(), hl)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AudiogramFile {
    name: String,
    frequencies_hz: Vec<f64>,
    hl_db: Vec<f64>,
}

pub fn parse_audiogram(text: &str) -> Result<Audiogram> {
    let file: AudiogramFile = toml::from_str(text).map_err(|e| Error::MalformedAudiogram(e.message().to_string()))?;
    if file.frequencies_hz.len() != NUM_BANDS || file.hl_db.len() != NUM_BANDS {
        return Err(Error::MalformedAudiogram(format!(
            "expected {NUM_BANDS} frequencies and levels, got {} and {}",
            file.frequencies_hz.len(),
            file.hl_db.len()
        )));
    }
    if file.frequencies_hz != ANCHOR_FREQS_HZ {
        return Err(Error::MalformedAudiogram(format!(
            "frequencies must be {ANCHOR_FREQS_HZ:?}, got {:?}",
            file.frequencies_hz
        )));
    }
    let mut hl = [0.0; NUM_BANDS];
    hl.copy_from_slice(&file.hl_db);
    Audiogram::new(file.name, hl)
}

pub fn format_audiogram(a: &Audiogram) -> String {
    let file = AudiogramFile {
        name: a.name.clone(),
        frequencies_hz: ANCHOR_FREQS_HZ.to_vec(),
        hl_db: a.hl_db.to_vec(),
    };
    toml::to_string(&file).expect("audiogram serialises")
}

pub fn load_audiogram(path: impl AsRef<Path>) -> Result<Audiogram> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_audiogram(&text)
}

pub fn write_audiogram(a: &Audiogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_audiogram(a)).map_err(|e| Error::io(path, e))
}

/// A standard name (`N1`, `N2`, `N4`) or a path to an audiogram file.
pub fn resolve_audiogram(spec: &str) -> Result<Audiogram> {
    match standard_audiogram(spec) {
        Ok(a) => Ok(a),
        Err(_) if Path::new(spec).exists() => load_audiogram(spec),
        Err(e) => Err(e),
    }
}
