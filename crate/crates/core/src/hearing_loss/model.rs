//! The assembled hearing loss simulator.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::gammatone::{build_gammatone_filterbank, GammatoneFilterbank, RecruitmentParams, DEFAULT_THETA_DB};
use super::smearing::{build_smearing_matrix, SmearingMatrix};
use super::transfer::{EarTransfer, TransferTable, DEFAULT_EAR_TAPS};
use super::{Audiogram, Severity, SeverityParams};
use crate::error::Result;
use crate::signal::{Calibration, StftConfig, Waveform};
use crate::tangent::Jet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HearingLossConfig {
    pub theta_db: f64,
    pub calibration: Calibration,
    pub smearing_stft: StftConfig,
    pub ear_taps: usize,
    /// Replaces the bundled free-field plus middle-ear table.
    pub transfer_table: Option<PathBuf>,
    /// Replaces the class parameters derived from the audiogram.
    pub severity: Option<SeverityParams>,
}

impl Default for HearingLossConfig {
    fn default() -> Self {
        Self {
            theta_db: DEFAULT_THETA_DB,
            calibration: Calibration::default(),
            smearing_stft: StftConfig::smearing_default(),
            ear_taps: DEFAULT_EAR_TAPS,
            transfer_table: None,
            severity: None,
        }
    }
}

/// Audiogram-specific processing chain. Immutable once built.
#[derive(Debug, Clone)]
pub struct HearingLossModel {
    audiogram: Audiogram,
    severity: Severity,
    params: SeverityParams,
    ear: Arc<EarTransfer>,
    smearing: Option<SmearingMatrix>,
    filterbank: Arc<GammatoneFilterbank>,
    recruitment: RecruitmentParams,
}

impl HearingLossModel {
    pub fn new(audiogram: &Audiogram, cfg: &HearingLossConfig) -> Result<Self> {
        let severity = audiogram.severity();
        let params = cfg.severity.unwrap_or_else(|| SeverityParams::for_class(severity));
        let ear = match (&cfg.transfer_table, cfg.ear_taps) {
            (None, DEFAULT_EAR_TAPS) => Arc::new(EarTransfer::bundled().clone()),
            (None, taps) => Arc::new(EarTransfer::design(&TransferTable::bundled(), taps)?),
            (Some(path), taps) => Arc::new(EarTransfer::design(&TransferTable::load(path)?, taps)?),
        };
        let smearing = if params.is_unsmeared() {
            cfg.smearing_stft.validate()?;
            None
        } else {
            Some(build_smearing_matrix(params.r_lower, params.r_upper, &cfg.smearing_stft)?)
        };
        let filterbank = Arc::new(build_gammatone_filterbank(&params, audiogram));
        let recruitment = RecruitmentParams::new(cfg.theta_db, &cfg.calibration);
        // fail at construction rather than on first use
        if let Some((i, c)) = filterbank
            .channels()
            .iter()
            .enumerate()
            .find(|(_, c)| c.hl_db >= recruitment.theta_db)
        {
            return Err(crate::Error::UnsupportedSeverity {
                channel: i,
                hl_db: c.hl_db,
                theta_db: recruitment.theta_db,
            });
        }
        log::debug!(
            "hearing loss model `{}`: {severity}, {} channels, r = [{}, {}]",
            audiogram.name,
            filterbank.len(),
            params.r_lower,
            params.r_upper
        );
        Ok(Self {
            audiogram: audiogram.clone(),
            severity,
            params,
            ear,
            smearing,
            filterbank,
            recruitment,
        })
    }

    /// Normal-hearing reference model.
    pub fn normal(cfg: &HearingLossConfig) -> Result<Self> {
        Self::new(&Audiogram::zero(), cfg)
    }

    pub fn audiogram(&self) -> &Audiogram {
        &self.audiogram
    }

    pub fn severity(&self) -> Severity {
        self.severity
    }

    pub fn params(&self) -> &SeverityParams {
        &self.params
    }

    pub fn smearing(&self) -> Option<&SmearingMatrix> {
        self.smearing.as_ref()
    }

    pub fn filterbank(&self) -> &GammatoneFilterbank {
        &self.filterbank
    }

    pub fn recruitment(&self) -> &RecruitmentParams {
        &self.recruitment
    }

    pub fn ear(&self) -> &EarTransfer {
        &self.ear
    }

    pub fn simulate(&self, w: &Waveform) -> Result<Waveform> {
        Ok(Waveform::from_vec(self.simulate_samples(w.samples())?))
    }

    pub(crate) fn simulate_samples(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let mut y = self.ear.forward_convolver(n).apply(x);
        if let Some(m) = &self.smearing {
            y = m.smear_samples(&y);
        }
        let y = self.filterbank.recruit_samples(&y, &self.recruitment)?;
        Ok(self.ear.inverse_convolver(n).apply(&y))
    }

    /// Output and its derivatives along the input's tangent directions.
    pub fn simulate_jet(&self, x: &Jet) -> Result<Jet> {
        let n = x.len();
        let forward = self.ear.forward_convolver(n);
        let mut y = x.map_linear(|s| forward.apply(s));
        if let Some(m) = &self.smearing {
            y = m.smear_jet(&y);
        }
        let y = self.filterbank.recruit_jet(&y, &self.recruitment)?;
        let inverse = self.ear.inverse_convolver(n);
        Ok(y.map_linear(|s| inverse.apply(s)))
    }
}

/// Simulates hearing through `a` with the default configuration.
pub fn simulate(w: &Waveform, a: &Audiogram) -> Result<Waveform> {
    HearingLossModel::new(a, &HearingLossConfig::default())?.simulate(w)
}
