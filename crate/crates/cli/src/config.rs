//! Run configuration: built-in defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use zslforge::data::SyntheticSpec;
use zslforge::pipeline::EvalConfig;
use zslforge::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateOptions {
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for AblateOptions {
    fn default() -> Self {
        AblateOptions {
            grid: vec![0, 75, 150, 300],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotOptions {
    pub n_per_class: usize,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions { n_per_class: 100 }
    }
}

/// Everything a command needs. `train.seed` seeds data generation,
/// training and evaluation alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory read by `train`, `evaluate`, `plot` and `ablate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    #[serde(deserialize_with = "over_desk")]
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateOptions,
    pub plot: PlotOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            synthetic: SyntheticSpec::default(),
            train: TrainConfig::desk(),
            eval: EvalConfig::default(),
            ablate: AblateOptions::default(),
            plot: PlotOptions::default(),
        }
    }
}

/// Keys missing from a `[train]` table keep their desk values.
fn over_desk<'de, D: Deserializer<'de>>(d: D) -> Result<TrainConfig, D::Error> {
    let given = toml::Table::deserialize(d)?;
    let mut merged = toml::Table::try_from(TrainConfig::desk()).map_err(D::Error::custom)?;
    merged.extend(given);
    merged.try_into().map_err(D::Error::custom)
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Defaults, overlaid by `path` when given.
    pub fn resolve(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.train.seed > i64::MAX as u64 || self.ablate.seeds.iter().any(|&s| s > i64::MAX as u64) {
            bail!("seeds must be at most {}", i64::MAX);
        }
        if self.plot.n_per_class == 0 {
            bail!("plot.n_per_class must be >= 1");
        }
        Ok(())
    }

    pub fn data_dir(&self) -> anyhow::Result<&Path> {
        self.data
            .as_deref()
            .context("no dataset given; pass --data DIR or set `data` in the config")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.data = Some("some/dir".into());
        cfg.train.seed = 11;
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[train]\nepochs_stage1 = 7\n").unwrap();
        assert_eq!(cfg.train.epochs_stage1, 7);
        assert_eq!(cfg.train.hidden_dim, 256);
        assert_eq!(cfg.eval, EvalConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rate = 1.0\n").is_err());
    }
}
