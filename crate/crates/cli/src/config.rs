//! TOML run configuration: one table per pipeline stage, every key optional.

use std::path::Path;

use grainkit::analysis::{AnalysisConfig, DenoiseConfig};
use grainkit::synthesis::SynthesisConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub denoise: DenoiseConfig,
    pub analysis: AnalysisConfig,
    pub synthesis: SynthesisConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    /// The defaults, as a config file.
    pub fn default_toml() -> String {
        toml::to_string(&Self::default()).expect("default config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let back: RunConfig = toml::from_str(&RunConfig::default_toml()).unwrap();
        assert_eq!(back, RunConfig::default());
    }

    #[test]
    fn partial_tables() {
        let c: RunConfig = toml::from_str("[analysis]\nmax_intervals = 4\n[synthesis]\nmaster_seed = 9\n").unwrap();
        assert_eq!(c.analysis.max_intervals, 4);
        assert_eq!(c.synthesis.master_seed, 9);
        assert_eq!(c.denoise, DenoiseConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[analysis]\nmax_interval = 4\n").is_err());
        assert!(toml::from_str::<RunConfig>("[decoder]\n").is_err());
    }
}
