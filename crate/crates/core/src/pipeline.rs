//! The aided and reference signal paths for one audiogram.
//!
//! Aided: input, optional front end, hearing aid, impaired model.
//! Reference: clean input through the normal-hearing model.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ha_processor::{process, process_with_tangents, Fitting, HaConfig};
use crate::hearing_loss::{Audiogram, HearingLossConfig, HearingLossModel};
use crate::noise_suppression::{FrontEnd, WienerConfig};
use crate::objective::{LossBreakdown, ObjectiveConfig, Reference};
use crate::signal::Waveform;
use crate::tangent::Jet;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub hearing_loss: HearingLossConfig,
    pub hearing_aid: HaConfig,
    pub objective: ObjectiveConfig,
    pub wiener: WienerConfig,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    impaired: HearingLossModel,
    normal: HearingLossModel,
}

impl Pipeline {
    pub fn new(audiogram: &Audiogram, config: &PipelineConfig) -> Result<Self> {
        config.objective.stft.validate()?;
        config.wiener.validate()?;
        Ok(Self {
            config: config.clone(),
            impaired: HearingLossModel::new(audiogram, &config.hearing_loss)?,
            normal: HearingLossModel::normal(&config.hearing_loss)?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn audiogram(&self) -> &Audiogram {
        self.impaired.audiogram()
    }

    pub fn impaired(&self) -> &HearingLossModel {
        &self.impaired
    }

    pub fn normal(&self) -> &HearingLossModel {
        &self.normal
    }

    /// The clean signal as heard with normal hearing.
    pub fn reference(&self, clean: &Waveform) -> Result<Reference> {
        let heard = self.normal.simulate(clean)?;
        Reference::new(heard.samples(), &self.config.objective.stft)
    }

    pub fn front_end(&self, front_end: FrontEnd, input: &Waveform) -> Result<Waveform> {
        front_end.apply(input, &self.config.wiener)
    }

    /// Hearing aid followed by the impaired model.
    pub fn aided(&self, f: &Fitting, input: &Waveform) -> Result<Waveform> {
        self.impaired.simulate(&process(input, f, &self.config.hearing_aid)?)
    }

    pub fn loss(&self, f: &Fitting, input: &Waveform, reference: &Reference, alpha: f64) -> Result<LossBreakdown> {
        let out = self.aided(f, input)?;
        reference.loss(out.samples(), alpha)
    }

    /// Loss and its gradient with respect to the six gains, differentiated
    /// exactly through every stage.
    pub fn loss_with_gradient(
        &self,
        f: &Fitting,
        input: &Waveform,
        reference: &Reference,
        alpha: f64,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        let (value, tangents) = process_with_tangents(input, f, &self.config.hearing_aid)?;
        let heard = self.impaired.simulate_jet(&Jet::new(value, tangents))?;
        reference.loss_with_gradient(&heard, alpha)
    }
}
