use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hafit::dataset::{ingest as scan, Dataset, DatasetManifest, Split};
use hafit::evaluation::{EvalReport, Evaluator};
use hafit::ha_processor::{
    frequency_response, load_fitting, response_grid, write_fitting, format_fitting, Fitting,
};
use hafit::hearing_loss::{Audiogram, HearingLossModel};
use hafit::noise_suppression::{wiener_enhance, FrontEnd};
use hafit::optimizer::{train, TrainSummary};
use hafit::pipeline::Pipeline;
use hafit::prescriptions::{nal_r, resolve_audiogram};
use hafit::signal::{normalize_spl, read_wav, write_wav, WavEncoding};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, RunFlags};

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Config file values with command-line flags on top.
fn resolve(flags: &RunFlags) -> Result<RunConfig, CliError> {
    let mut cfg = load_config(flags.config.as_deref())?;
    if let Some(m) = &flags.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(a) = &flags.audiogram {
        cfg.audiogram = a.clone();
    }
    if let Some(n) = &flags.noise {
        cfg.noise = Some(n.clone());
    }
    if let Some(f) = flags.front_end {
        cfg.front_end = f;
    }
    if let Some(s) = flags.source {
        cfg.source = s;
    }
    if let Some(s) = flags.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn audiogram(spec: &str) -> Result<Audiogram, CliError> {
    Ok(resolve_audiogram(spec)?)
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Usage("no manifest given (use --manifest or set `manifest` in the config)".into()))?;
    Ok(DatasetManifest::load(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| hafit::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn ingest(root: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let m = scan(root)?;
    let out = out.unwrap_or_else(|| root.join("manifest.toml"));
    m.write(&out)?;
    let count = |s: Split| m.entries.iter().filter(|e| e.split == s).count();
    println!(
        "{} entries (train {}, val {}, test {}), hash {}",
        m.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        m.hash
    );
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    manifest_hash: &'a str,
    config: &'a RunConfig,
    run: TrainSummary,
}

pub fn optimize(flags: &RunFlags, epochs: Option<usize>) -> Result<(), CliError> {
    let mut cfg = resolve(flags)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let m = manifest(&cfg)?;
    let a = audiogram(&cfg.audiogram)?;
    let cal = cfg.pipeline.hearing_loss.calibration;
    let data = m.load_dataset(&cal, |e| {
        e.split != Split::Test && cfg.noise.as_ref().is_none_or(|n| &e.noise == n)
    })?;
    let pipeline = Pipeline::new(&a, &cfg.pipeline)?;
    let run = train(&data, &pipeline, &cfg.train, cfg.front_end, cfg.source)?;

    std::fs::create_dir_all(&cfg.out).map_err(|e| hafit::Error::Io {
        path: cfg.out.clone(),
        source: e,
    })?;
    let fitting_path = cfg.out.join("fitting.toml");
    write_fitting(&run.final_fitting, &fitting_path)?;
    write_text(&cfg.out.join("loss.csv"), &run.loss_csv())?;
    write_text(&cfg.out.join("config.toml"), &cfg.to_toml())?;
    let report = RunReport {
        manifest_hash: &m.hash,
        config: &cfg,
        run: run.summary(),
    };
    write_text(
        &cfg.out.join("report.toml"),
        &toml::to_string(&report).expect("report serialises"),
    )?;
    println!(
        "{} fitting for {}: {:?} dB",
        run.label,
        a.name,
        run.final_fitting.gains_db.map(|g| (g * 100.0).round() / 100.0)
    );
    println!("wrote {}", fitting_path.display());
    Ok(())
}

/// `nal-r`, or a fitting file, optionally suffixed with `+W`.
fn fitting_spec(spec: &str, a: &Audiogram) -> Result<(Fitting, FrontEnd), CliError> {
    let (body, front_end) = match spec.strip_suffix("+W") {
        Some(b) => (b, FrontEnd::Wiener),
        None => (spec, FrontEnd::None),
    };
    let f = if body.eq_ignore_ascii_case("nal-r") {
        nal_r(a)
    } else {
        if !Path::new(body).exists() {
            return Err(CliError::Usage(format!("fitting file `{body}` does not exist")));
        }
        load_fitting(body)?
    };
    Ok((f, front_end))
}

pub fn evaluate(flags: &RunFlags, specs: &[String]) -> Result<(), CliError> {
    let cfg = resolve(flags)?;
    let a = audiogram(&cfg.audiogram)?;
    let fittings = specs
        .iter()
        .map(|s| fitting_spec(s, &a))
        .collect::<Result<Vec<_>, _>>()?;
    let m = manifest(&cfg)?;
    let cal = cfg.pipeline.hearing_loss.calibration;
    let data = m.load_dataset(&cal, |e| {
        e.split == Split::Test && cfg.noise.as_ref().is_none_or(|n| &e.noise == n)
    })?;
    if data.is_empty() {
        return Err(hafit::Error::EmptyDataset.into());
    }
    let pipeline = Pipeline::new(&a, &cfg.pipeline)?;
    let mut report = EvalReport::default();
    for noise in data.noise_types() {
        let subset: Dataset = data.with_noise(&noise);
        let ev = Evaluator::new(&pipeline, &subset, cfg.fwsnr)?;
        for (f, front_end) in &fittings {
            report.rows.push(ev.evaluate(f, *front_end, cfg.source)?);
        }
    }
    let csv = report.to_csv();
    let out = flags.out.as_deref();
    emit(out, &csv)
}

pub fn simulate(
    input: &Path,
    audiogram_spec: Option<&str>,
    config: Option<&Path>,
    out: &Path,
    level: Option<f64>,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let a = audiogram(audiogram_spec.unwrap_or(&cfg.audiogram))?;
    let mut w = read_wav(input)?;
    if let Some(db) = level {
        w = normalize_spl(&w, db, &cfg.pipeline.hearing_loss.calibration)?;
    }
    let model = HearingLossModel::new(&a, &cfg.pipeline.hearing_loss)?;
    let y = model.simulate(&w)?;
    let report = write_wav(&y, out, WavEncoding::Float32)?;
    if report.clipped > 0 {
        log::warn!("{} samples clipped", report.clipped);
    }
    Ok(())
}

pub fn enhance(input: &Path, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let w = read_wav(input)?;
    let y = wiener_enhance(&w, &cfg.pipeline.wiener)?;
    write_wav(&y, out, WavEncoding::Float32)?;
    Ok(())
}

pub fn prescribe(spec: &str, out: Option<&Path>) -> Result<(), CliError> {
    let f = nal_r(&audiogram(spec)?);
    match out {
        Some(p) => Ok(write_fitting(&f, p)?),
        None => emit(None, &format_fitting(&f)),
    }
}

pub fn freq_response(fitting: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    if !fitting.exists() {
        return Err(CliError::Usage(format!("fitting file `{}` does not exist", fitting.display())));
    }
    let f = load_fitting(fitting)?;
    let grid = response_grid();
    let gains = frequency_response(&f, &cfg.pipeline.hearing_aid, &grid)?;
    let mut csv = String::from("frequency_hz,gain_db\n");
    for (hz, g) in grid.iter().zip(gains) {
        writeln!(csv, "{hz:.3},{g:.4}").expect("write to string");
    }
    emit(out, &csv)
}
