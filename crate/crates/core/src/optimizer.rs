//! Gradient-based fitting: batch gradients of the pipeline loss with respect
//! to the six gains and a projected Adam loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Source, Split};
use crate::error::{Error, Result};
use crate::ha_processor::{Fitting, FittingLabel, GainBounds, NUM_BANDS};
use crate::hearing_loss::Audiogram;
use crate::noise_suppression::FrontEnd;
use crate::objective::{check_finite, LossBreakdown, Reference};
use crate::par;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::prescriptions::nal_r;
use crate::signal::{Waveform, SAMPLE_RATE};

/// Central-difference step, dB.
pub const FD_STEP_DB: f64 = 1e-3;

pub type Gradient = [f64; NUM_BANDS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Forward-mode derivatives through every stage.
    #[default]
    Exact,
    /// Central differences, 13 pipeline evaluations per utterance.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub gain_bounds: GainBounds,
    /// Training utterances are cropped or zero-padded to this length.
    pub crop_secs: f64,
    /// Validation loss is computed every this many epochs; 0 disables it.
    pub val_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 500,
            learning_rate: 1e-2,
            alpha: crate::objective::DEFAULT_ALPHA,
            seed: 0,
            gradient_mode: GradientMode::Exact,
            gain_bounds: GainBounds::default(),
            crop_secs: 3.0,
            val_every: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.alpha >= 0.0 && self.crop_secs > 0.0) {
            return Err(Error::Config("alpha must be non-negative and crop_secs positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::Config("Adam constants out of range".into()));
        }
        if self.gain_bounds.min_db >= self.gain_bounds.max_db {
            return Err(Error::Config("gain bounds are empty".into()));
        }
        Ok(())
    }

    pub fn crop_len(&self) -> usize {
        (self.crop_secs * SAMPLE_RATE as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Gradient,
    pub v: Gradient,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: [0.0; NUM_BANDS],
            v: [0.0; NUM_BANDS],
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update, projected onto `bounds`.
pub fn adam_step(s: &AdamState, g: &Gradient, f: &Fitting, lr: f64, bounds: &GainBounds) -> (AdamState, Fitting) {
    let mut next = *s;
    next.step += 1;
    let t = next.step as i32;
    let mut out = *f;
    for i in 0..NUM_BANDS {
        next.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
        next.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g[i] * g[i];
        let m_hat = next.m[i] / (1.0 - s.beta1.powi(t));
        let v_hat = next.v[i] / (1.0 - s.beta2.powi(t));
        out.gains_db[i] -= lr * m_hat / (v_hat.sqrt() + s.epsilon);
    }
    (next, out.projected(bounds))
}

/// A training pair after the front end and cropping, with its reference.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub id: String,
    pub input: Waveform,
    pub reference: Reference,
}

/// Applies the front end, crops to `crop_len` samples and computes the
/// normal-hearing reference of each utterance.
pub fn prepare_samples(
    data: &Dataset,
    pipeline: &Pipeline,
    front_end: FrontEnd,
    source: Source,
    crop_len: usize,
) -> Result<Vec<TrainingSample>> {
    par::map(data.utterances(), |u| {
        let input = pipeline.front_end(front_end, u.input(source))?.fit_length(crop_len);
        let clean = u.clean.fit_length(crop_len);
        Ok(TrainingSample {
            id: u.id.clone(),
            input,
            reference: pipeline.reference(&clean)?,
        })
    })
    .into_iter()
    .collect()
}

/// `total_loss(simulate(process(degraded, f), a), simulate(clean, normal))`
/// with the default configuration.
pub fn pipeline_loss(
    f: &Fitting,
    degraded: &Waveform,
    clean: &Waveform,
    a: &Audiogram,
    alpha: f64,
) -> Result<LossBreakdown> {
    let p = Pipeline::new(a, &PipelineConfig::default())?;
    p.loss(f, degraded, &p.reference(clean)?, alpha)
}

fn sample_loss(pipeline: &Pipeline, f: &Fitting, s: &TrainingSample, alpha: f64) -> Result<f64> {
    let l = pipeline.loss(f, &s.input, &s.reference, alpha)?;
    check_finite(&l, &s.id)?;
    Ok(l.total)
}

fn sample_gradient(
    pipeline: &Pipeline,
    f: &Fitting,
    s: &TrainingSample,
    alpha: f64,
    mode: GradientMode,
) -> Result<(f64, Gradient)> {
    let mut g = [0.0; NUM_BANDS];
    let loss = match mode {
        GradientMode::Exact => {
            let (l, grad) = pipeline.loss_with_gradient(f, &s.input, &s.reference, alpha)?;
            check_finite(&l, &s.id)?;
            g.copy_from_slice(&grad);
            l.total
        }
        GradientMode::FiniteDifference => {
            let base = sample_loss(pipeline, f, s, alpha)?;
            for (i, gi) in g.iter_mut().enumerate() {
                let mut up = *f;
                up.gains_db[i] += FD_STEP_DB;
                let mut down = *f;
                down.gains_db[i] -= FD_STEP_DB;
                let lp = sample_loss(pipeline, &up, s, alpha)?;
                let lm = sample_loss(pipeline, &down, s, alpha)?;
                *gi = (lp - lm) / (2.0 * FD_STEP_DB);
            }
            base
        }
    };
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { utterance: s.id.clone() });
    }
    Ok((loss, g))
}

/// Mean loss over `batch` and its gradient with respect to the gains.
pub fn gradient(
    pipeline: &Pipeline,
    f: &Fitting,
    batch: &[&TrainingSample],
    alpha: f64,
    mode: GradientMode,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts = par::map(batch, |s| sample_gradient(pipeline, f, s, alpha, mode));
    let mut loss = 0.0;
    let mut g = [0.0; NUM_BANDS];
    for p in parts {
        let (l, gi) = p?;
        loss += l;
        for (a, b) in g.iter_mut().zip(gi) {
            *a += b;
        }
    }
    let n = batch.len() as f64;
    Ok((loss / n, g.map(|v| v / n)))
}

/// Mean loss over `samples` without gradients.
pub fn mean_loss(pipeline: &Pipeline, f: &Fitting, samples: &[TrainingSample], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses = par::map(samples, |s| sample_loss(pipeline, f, s, alpha));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Provenance label of a fitting trained on `source` behind `front_end`.
pub fn provenance(source: Source, front_end: FrontEnd) -> FittingLabel {
    match (source, front_end) {
        (Source::Clean, FrontEnd::None) => FittingLabel::G,
        (Source::Noisy, FrontEnd::None) => FittingLabel::Cn,
        (Source::Noisy, FrontEnd::Wiener) => FittingLabel::Cw,
        (Source::Clean, FrontEnd::Wiener) => FittingLabel::Manual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub initial: Fitting,
    pub final_fitting: Fitting,
    /// Fitting with the lowest validation loss, when validation ran.
    pub best_val: Option<Fitting>,
    /// Mean training loss of each epoch, at the fittings used for its
    /// gradients.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub label: FittingLabel,
    pub audiogram: String,
    pub source: Source,
    pub front_end: FrontEnd,
    pub config: TrainConfig,
    /// Hash of the training utterance ids.
    pub data_hash: String,
}

impl TrainRun {
    /// `epoch,train_loss,val_loss`, empty where validation did not run.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            let v = v.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(out, "{},{t:.6},{v}", i + 1).expect("write to string");
        }
        out
    }

    /// Everything but the per-epoch trajectory.
    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            label: self.label,
            audiogram: self.audiogram.clone(),
            source: self.source,
            front_end: self.front_end,
            data_hash: self.data_hash.clone(),
            initial_gains_db: self.initial.gains_db,
            final_gains_db: self.final_fitting.gains_db,
            best_val_gains_db: self.best_val.map(|f| f.gains_db),
            initial_train_loss: self.train_loss.first().copied(),
            final_train_loss: self.train_loss.last().copied(),
            config: self.config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub label: FittingLabel,
    pub audiogram: String,
    pub source: Source,
    pub front_end: FrontEnd,
    pub data_hash: String,
    pub initial_gains_db: [f64; NUM_BANDS],
    pub final_gains_db: [f64; NUM_BANDS],
    pub best_val_gains_db: Option<[f64; NUM_BANDS]>,
    pub initial_train_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub config: TrainConfig,
}

/// Trains a fitting on the training split of `data`, starting from NAL-R.
/// Validation uses the validation split when it is non-empty.
pub fn train(
    data: &Dataset,
    pipeline: &Pipeline,
    cfg: &TrainConfig,
    front_end: FrontEnd,
    source: Source,
) -> Result<TrainRun> {
    cfg.validate()?;
    let train_set = data.split(Split::Train);
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let label = provenance(source, front_end);
    if label == FittingLabel::Manual {
        log::warn!("training on clean speech behind a front end has no standard label");
    }
    let crop = cfg.crop_len();
    let samples = prepare_samples(&train_set, pipeline, front_end, source, crop)?;
    let val_set = data.split(Split::Val);
    let val_samples = if cfg.val_every > 0 && !val_set.is_empty() {
        prepare_samples(&val_set, pipeline, front_end, source, crop)?
    } else {
        Vec::new()
    };

    let initial = nal_r(pipeline.audiogram()).projected(&cfg.gain_bounds);
    let mut fitting = initial;
    let mut adam = AdamState::new(cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_loss = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Fitting)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, g) = gradient(pipeline, &fitting, &batch, cfg.alpha, cfg.gradient_mode)?;
            sum += loss * batch.len() as f64;
            (adam, fitting) = adam_step(&adam, &g, &fitting, cfg.learning_rate, &cfg.gain_bounds);
        }
        let epoch_loss = sum / samples.len() as f64;
        train_loss.push(epoch_loss);
        let val = if !val_samples.is_empty() && (epoch + 1) % cfg.val_every == 0 {
            let v = mean_loss(pipeline, &fitting, &val_samples, cfg.alpha)?;
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, fitting));
            }
            Some(v)
        } else {
            None
        };
        val_loss.push(val);
        log::info!(
            "epoch {}/{}: train {epoch_loss:.4} dB{} gains {:?}",
            epoch + 1,
            cfg.epochs,
            val.map(|v| format!(", val {v:.4} dB")).unwrap_or_default(),
            fitting.gains_db.map(|g| (g * 100.0).round() / 100.0)
        );
    }

    Ok(TrainRun {
        initial,
        final_fitting: fitting.with_label(label),
        best_val: best.map(|(_, f)| f.with_label(label)),
        train_loss,
        val_loss,
        label,
        audiogram: pipeline.audiogram().name.clone(),
        source,
        front_end,
        config: *cfg,
        data_hash: train_set.id_hash(),
    })
}
