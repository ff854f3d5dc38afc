use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisOptions;
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::io::LoadOptions;
use crate::synth::SynthSpec;
use crate::typesetter::TrainConfig;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// Input locations. Each subcommand reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub ref_a: Option<PathBuf>,
    pub ref_b: Option<PathBuf>,
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Subtype label plotted as reference A; defaults to the first label.
    pub subtype_a: Option<String>,
    /// Subtype label plotted as reference B; defaults to the second label.
    pub subtype_b: Option<String>,
}

/// Everything a run depends on, apart from the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; when set it replaces the training and synthesis seeds.
    pub seed: Option<u64>,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub filter: FilterParams,
    pub analysis: AnalysisOptions,
    pub load: LoadOptions,
    pub synth: SynthSpec,
    pub pipeline: PipelineOptions,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            train: TrainConfig::default(),
            finetune: TrainConfig::finetune(),
            filter: FilterParams::default(),
            analysis: AnalysisOptions::default(),
            load: LoadOptions::default(),
            synth: SynthSpec::default(),
            pipeline: PipelineOptions::default(),
            paths: Paths::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn to_value(config: &RunConfig) -> Result<toml::Value> {
    toml::Value::try_from(config).map_err(|e| Error::config("config", e.to_string()))
}

impl RunConfig {
    /// Defaults, overridden by `flags`, overridden by the config file.
    pub fn resolve(flags: toml::Table, file: Option<&Path>) -> Result<Self> {
        let mut value = to_value(&RunConfig::default())?;
        merge(&mut value, toml::Value::Table(flags));
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
                Error::config(path.display().to_string(), e.message())
            })?;
            merge(&mut value, toml::Value::Table(table));
        }
        let mut config: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message()))?;
        config.apply_seed();
        config.validate()?;
        Ok(config)
    }

    fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.finetune.seed = seed;
            self.synth.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.finetune.validate()?;
        if !self.finetune.freeze_placements {
            return Err(Error::config(
                "finetune.freeze_placements",
                "finetuning requires frozen placements",
            ));
        }
        self.filter.validate()?;
        if self.load.line_height == 0 {
            return Err(Error::config("load.line_height", "must be positive"));
        }
        self.synth
            .validate()
            .map_err(|e| Error::config("synth", e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RUN_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

/// A required path, or a field-level configuration error.
pub fn require<'a>(value: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::config(format!("paths.{field}"), "required (flag or config file)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn file_overrides_flags_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "seed = 9\n[train]\nmax_rounds = 4\n").unwrap();
        let c =
            RunConfig::resolve(flags("seed = 3\n[filter]\nwarn_at = 10.0"), Some(&file)).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.synth.seed, 9);
        assert_eq!(c.train.max_rounds, 4);
        assert_eq!(c.filter.warn_at, 10.0);
        assert_eq!(c.train.convergence_tol, 1e-5);
        let c = RunConfig::resolve(flags("seed = 3"), None).unwrap();
        assert_eq!(c.finetune.seed, 3);
    }

    #[test]
    fn field_level_errors() {
        let err = RunConfig::resolve(flags("[train]\nmax_rounds = 0"), None).unwrap_err();
        assert!(err.to_string().contains("max_rounds"), "{err}");
        let err = RunConfig::resolve(flags("[filter]\nbogus = 1"), None).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err =
            RunConfig::resolve(flags("[finetune]\nfreeze_placements = false"), None).unwrap_err();
        assert!(err.to_string().contains("freeze_placements"), "{err}");
        assert!(require(&None, "corpus")
            .unwrap_err()
            .to_string()
            .contains("paths.corpus"));
    }
}
