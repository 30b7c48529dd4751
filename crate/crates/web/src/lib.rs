//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Audiograms and fittings cross the boundary as six numbers at
//! 250, 500, 1k, 2k, 4k and 6 kHz. Audio comes back as 44.1 kHz `f32`
//! samples calibrated so that 65 dB SPL speech has an RMS of about 0.0126.

use hafit::evaluation::snr;
use hafit::ha_processor::{frequency_response, response_grid, Fitting, FittingLabel, HaConfig, NUM_BANDS};
use hafit::hearing_loss::Audiogram;
use hafit::noise_suppression::{wiener_enhance, WienerConfig};
use hafit::pipeline::{Pipeline, PipelineConfig};
use hafit::prescriptions::{nal_r, standard_audiogram};
use hafit::signal::{normalize_spl, Waveform};
use hafit::synth::{self, NoiseKind};
use wasm_bindgen::prelude::*;

const LEVEL_DB: f64 = 65.0;
const MAX_SECS: f64 = 4.0;

fn bands(values: &[f64], what: &str) -> hafit::Result<[f64; NUM_BANDS]> {
    values
        .try_into()
        .map_err(|_| hafit::Error::Config(format!("{what} needs {NUM_BANDS} values, got {}", values.len())))
}

fn to_f32(w: &Waveform) -> Vec<f32> {
    w.samples().iter().map(|&x| x as f32).collect()
}

fn speech(secs: f64, seed: u64) -> hafit::Result<Waveform> {
    if !(0.5..=MAX_SECS).contains(&secs) {
        return Err(hafit::Error::Config(format!("duration must be within 0.5..={MAX_SECS} s")));
    }
    let cal = PipelineConfig::default().hearing_loss.calibration;
    normalize_spl(&synth::speech(secs, seed), LEVEL_DB, &cal)
}

pub fn standard(name: &str) -> hafit::Result<Vec<f64>> {
    Ok(standard_audiogram(name)?.hl_db.to_vec())
}

pub fn prescribe(hl: &[f64]) -> hafit::Result<Vec<f64>> {
    let a = Audiogram::new("custom", bands(hl, "audiogram")?)?;
    Ok(nal_r(&a).gains_db.to_vec())
}

pub fn response(gains: &[f64]) -> hafit::Result<Vec<f64>> {
    let f = Fitting::new(bands(gains, "fitting")?, FittingLabel::Manual)?;
    frequency_response(&f, &HaConfig::default(), &response_grid())
}

/// Clean speech, the same speech through the impaired ear unaided, and
/// through the impaired ear behind the given fitting.
pub struct Listening {
    pub clean: Waveform,
    pub unaided: Waveform,
    pub aided: Waveform,
}

pub fn listen(hl: &[f64], gains: &[f64], secs: f64, seed: u64) -> hafit::Result<Listening> {
    let a = Audiogram::new("custom", bands(hl, "audiogram")?)?;
    let f = Fitting::new(bands(gains, "fitting")?, FittingLabel::Manual)?;
    let p = Pipeline::new(&a, &PipelineConfig::default())?;
    let clean = speech(secs, seed)?;
    Ok(Listening {
        unaided: p.impaired().simulate(&clean)?,
        aided: p.aided(&f, &clean)?,
        clean,
    })
}

pub struct Enhancement {
    pub noisy: Waveform,
    pub enhanced: Waveform,
    pub snr_before: f64,
    pub snr_after: f64,
}

pub fn enhance(noise: NoiseKind, snr_db: f64, secs: f64, seed: u64) -> hafit::Result<Enhancement> {
    let clean = speech(secs, seed)?;
    let n = noise.generate(clean.len(), seed.wrapping_add(1));
    let noisy = synth::mix(&clean, &n, snr_db)?;
    let enhanced = wiener_enhance(&noisy, &WienerConfig::default())?;
    Ok(Enhancement {
        snr_before: snr(&clean, &noisy)?,
        snr_after: snr(&clean, &enhanced)?,
        noisy,
        enhanced,
    })
}

fn js(e: hafit::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = standardAudiogram)]
pub fn standard_js(name: &str) -> Result<Vec<f64>, JsError> {
    standard(name).map_err(js)
}

#[wasm_bindgen(js_name = nalR)]
pub fn prescribe_js(hl: &[f64]) -> Result<Vec<f64>, JsError> {
    prescribe(hl).map_err(js)
}

#[wasm_bindgen(js_name = responseFrequencies)]
pub fn response_frequencies_js() -> Vec<f64> {
    response_grid()
}

#[wasm_bindgen(js_name = frequencyResponse)]
pub fn response_js(gains: &[f64]) -> Result<Vec<f64>, JsError> {
    response(gains).map_err(js)
}

#[wasm_bindgen]
pub struct Signals {
    names: Vec<String>,
    audio: Vec<Vec<f32>>,
    scores: Vec<f64>,
}

#[wasm_bindgen]
impl Signals {
    pub fn count(&self) -> usize {
        self.audio.len()
    }

    pub fn name(&self, i: usize) -> String {
        self.names[i].clone()
    }

    pub fn samples(&self, i: usize) -> Vec<f32> {
        self.audio[i].clone()
    }

    /// SNR in dB for the enhancement demo, empty otherwise.
    pub fn scores(&self) -> Vec<f64> {
        self.scores.clone()
    }
}

#[wasm_bindgen(js_name = listen)]
pub fn listen_js(hl: &[f64], gains: &[f64], secs: f64, seed: u32) -> Result<Signals, JsError> {
    let l = listen(hl, gains, secs, seed.into()).map_err(js)?;
    Ok(Signals {
        names: vec!["clean".into(), "unaided".into(), "aided".into()],
        audio: vec![to_f32(&l.clean), to_f32(&l.unaided), to_f32(&l.aided)],
        scores: Vec::new(),
    })
}

#[wasm_bindgen(js_name = enhance)]
pub fn enhance_js(noise: &str, snr_db: f64, secs: f64, seed: u32) -> Result<Signals, JsError> {
    let kind: NoiseKind = noise.parse().map_err(js)?;
    let e = enhance(kind, snr_db, secs, seed.into()).map_err(js)?;
    Ok(Signals {
        names: vec!["noisy".into(), "enhanced".into()],
        audio: vec![to_f32(&e.noisy), to_f32(&e.enhanced)],
        scores: vec![e.snr_before, e.snr_after],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prescription_for_n2() {
        let g = prescribe(&standard("N2").unwrap()).unwrap();
        let want = [0.0, 2.2, 12.75, 13.85, 15.95, 17.5];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{g:?}");
        }
    }

    #[test]
    fn response_matches_grid() {
        let r = response(&[10.0; 6]).unwrap();
        assert_eq!(r.len(), response_grid().len());
        assert!(r.iter().all(|g| (g - 10.0).abs() < 0.1));
    }

    #[test]
    fn rejects_wrong_lengths() {
        assert!(prescribe(&[0.0; 5]).is_err());
        assert!(response(&[0.0; 7]).is_err());
        assert!(listen(&[0.0; 6], &[0.0; 6], 10.0, 0).is_err());
    }

    #[test]
    fn aid_restores_level() {
        let hl = standard("N4").unwrap();
        let l = listen(&hl, &prescribe(&hl).unwrap(), 0.5, 3).unwrap();
        assert!(l.aided.rms() > l.unaided.rms());
    }

    #[test]
    fn wiener_improves_snr() {
        let e = enhance(NoiseKind::White, 5.0, 1.0, 2).unwrap();
        assert!(e.snr_after > e.snr_before, "{} {}", e.snr_before, e.snr_after);
    }
}
