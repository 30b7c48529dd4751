use std::path::{Path, PathBuf};

use hafit::dataset::Source;
use hafit::evaluation::FwsnrConfig;
use hafit::noise_suppression::FrontEnd;
use hafit::optimizer::TrainConfig;
use hafit::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run depends on. Command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub manifest: Option<PathBuf>,
    /// `N1`, `N2`, `N4` or a path to an audiogram file.
    pub audiogram: String,
    /// Only utterances with this noise tag are used.
    pub noise: Option<String>,
    pub front_end: FrontEnd,
    pub source: Source,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub fwsnr: FwsnrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            manifest: None,
            audiogram: "N4".into(),
            noise: None,
            front_end: FrontEnd::None,
            source: Source::Noisy,
            out: PathBuf::from("hafit-out"),
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            fwsnr: FwsnrConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        match table.get("schema_version").and_then(|v| v.as_integer()) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(CliError::Config(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(CliError::Config("missing schema_version".into())),
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
