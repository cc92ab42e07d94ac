//! The merged run configuration: one TOML document covering ingestion,
//! every scorer, and the injector. Precedence is defaults < config file <
//! command-line flags; the fully resolved configuration is echoed into every
//! output file's header for provenance.

use std::fs;
use std::path::Path;

use objectlab_core::baselines::{ClodConfig, MapConfig, TileConfig};
use objectlab_core::dataset::IngestConfig;
use objectlab_core::error::{Error, Result};
use objectlab_core::inject::InjectionSpec;
use objectlab_core::objectlab::ScoringConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub scoring: ScoringConfig,
    pub map: MapConfig,
    pub tile: TileConfig,
    pub clod: ClodConfig,
    pub inject: InjectionSpec,
}

impl RunConfig {
    /// Defaults, optionally overridden by a TOML config file.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.scoring.validate()?;
        self.map.validate()?;
        self.tile.validate()?;
        self.clod.validate()?;
        self.inject.validate()?;
        if self.ingest.tau_down >= self.scoring.tau_up {
            return Err(Error::Config(format!(
                "tau_down ({}) must stay below tau_up ({})",
                self.ingest.tau_down, self.scoring.tau_up
            )));
        }
        Ok(())
    }
}
