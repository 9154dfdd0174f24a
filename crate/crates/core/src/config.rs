//! One TOML document describing an experiment. Unknown keys are rejected
//! and the schema version is checked before anything runs.
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//! policy = "mp-mapped"
//!
//! [network]
//! preset = "michaelis-menten"
//!
//! [forward]
//! paths = 100000
//! dts = [0.015625]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::importance::PolicyKind;
use crate::network::{Preset, ReactionNetwork, ReactionSpec};
use crate::pipeline::{ForwardSettings, HjbSettings, PipelineConfig, RegressionSettings};
use crate::projection::UnitCosts;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub preset: Option<String>,
    pub species: Option<Vec<String>>,
    pub reactions: Option<Vec<ReactionSpec>>,
    pub initial_state: Option<Vec<i64>>,
    pub final_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub species: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationMethod {
    #[default]
    TauLeap,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSettings {
    pub method: SimulationMethod,
    pub dt: f64,
    pub paths: u64,
    /// Write one CSV per path instead of a final-state summary.
    pub write_paths: bool,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            method: SimulationMethod::TauLeap,
            dt: 1.0 / 16.0,
            paths: 10,
            write_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Tilt factor of the `scaled` policy.
    #[serde(default = "default_scale")]
    pub scale_factor: f64,
    pub network: NetworkConfig,
    #[serde(default)]
    pub observable: Option<ObservableConfig>,
    #[serde(default)]
    pub simulate: SimulateSettings,
    #[serde(default)]
    pub regression: RegressionSettings,
    #[serde(default)]
    pub hjb: HjbSettings,
    #[serde(default)]
    pub forward: ForwardSettings,
    #[serde(default)]
    pub costs: UnitCosts,
}

fn default_policy() -> PolicyKind {
    PolicyKind::MpMapped
}

fn default_scale() -> f64 {
    2.0
}

/// Network, initial state, horizon and observed event after resolving
/// presets.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub network: ReactionNetwork,
    pub initial_state: Vec<i64>,
    pub final_time: f64,
    pub observed_species: usize,
    pub threshold: f64,
}

impl ExperimentConfig {
    pub fn for_preset(name: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            threads: None,
            output_dir: None,
            policy: default_policy(),
            scale_factor: default_scale(),
            network: NetworkConfig {
                preset: Some(name.into()),
                species: None,
                reactions: None,
                initial_state: None,
                final_time: None,
            },
            observable: None,
            simulate: SimulateSettings::default(),
            regression: RegressionSettings::default(),
            hjb: HjbSettings::default(),
            forward: ForwardSettings::default(),
            costs: UnitCosts::default(),
        }
    }

    /// Parses and validates; `overrides` are `dotted.key=value` pairs with
    /// TOML values applied before deserialising.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if !(self.scale_factor > 0.0) {
            return Err(Error::Config("scale_factor must be positive".into()));
        }
        self.resolve().map(|_| ())
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let n = &self.network;
        let mut r = match &n.preset {
            Some(name) => {
                if n.species.is_some() || n.reactions.is_some() {
                    return Err(Error::Config(
                        "network: `preset` cannot be combined with `species` or `reactions`".into(),
                    ));
                }
                let p = Preset::by_name(name)?;
                ResolvedExperiment {
                    network: p.network,
                    initial_state: p.initial_state.to_vec(),
                    final_time: p.final_time,
                    observed_species: p.observed_species,
                    threshold: p.threshold,
                }
            }
            None => {
                let species = n
                    .species
                    .clone()
                    .ok_or_else(|| Error::Config("network: missing key `species`".into()))?;
                let reactions = n
                    .reactions
                    .as_ref()
                    .ok_or_else(|| Error::Config("network: missing key `reactions`".into()))?;
                let network = ReactionNetwork::from_specs(species, reactions)?;
                if n.initial_state.is_none() {
                    return Err(Error::Config("network: missing key `initial_state`".into()));
                }
                if n.final_time.is_none() {
                    return Err(Error::Config("network: missing key `final_time`".into()));
                }
                if self.observable.is_none() {
                    return Err(Error::Config(
                        "missing table `observable` (required for custom networks)".into(),
                    ));
                }
                ResolvedExperiment {
                    network,
                    initial_state: vec![],
                    final_time: 0.0,
                    observed_species: 0,
                    threshold: 0.0,
                }
            }
        };
        if let Some(x0) = &n.initial_state {
            r.initial_state = x0.clone();
        }
        if let Some(t) = n.final_time {
            r.final_time = t;
        }
        if let Some(o) = &self.observable {
            r.observed_species = r.network.species_index(&o.species).ok_or_else(|| {
                Error::Config(format!("observable: unknown species `{}`", o.species))
            })?;
            r.threshold = o.threshold;
        }
        r.network.check_state(&r.initial_state)?;
        if !(r.final_time > 0.0 && r.final_time.is_finite()) {
            return Err(Error::Config("network: final_time must be positive".into()));
        }
        Ok(r)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let r = self.resolve()?;
        Ok(PipelineConfig {
            network: r.network,
            initial_state: r.initial_state,
            final_time: r.final_time,
            observed_species: r.observed_species,
            threshold: r.threshold,
            regression: self.regression.clone(),
            hjb: self.hjb.clone(),
            forward: self.forward.clone(),
            seed: self.seed,
            policy: self.policy,
            output_dir: self.output_dir.clone(),
            model_path: None,
            grid_path: None,
        })
    }
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, head) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in head {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MM: &str = "schema_version = 1\n[network]\npreset = \"michaelis-menten\"\n";

    #[test]
    fn preset_config_resolves() {
        let c = ExperimentConfig::from_toml(MM, &[]).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.observed_species, 2);
        assert_eq!(r.threshold, 22.0);
        assert_eq!(c.policy, PolicyKind::MpMapped);
    }

    #[test]
    fn missing_key_is_named() {
        let e = ExperimentConfig::from_toml("[network]\npreset = \"goutsias\"\n", &[]).unwrap_err();
        assert!(e.to_string().contains("schema_version"), "{e}");
        let e = ExperimentConfig::from_toml("schema_version = 1\n", &[]).unwrap_err();
        assert!(e.to_string().contains("network"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let e =
            ExperimentConfig::from_toml(&format!("{MM}[forward]\npathz = 3\n"), &[]).unwrap_err();
        assert!(e.to_string().contains("pathz"), "{e}");
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::from_toml(
            MM,
            &[
                "forward.paths=12".into(),
                "policy=crude".into(),
                "forward.dts=[0.5]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.forward.paths, 12);
        assert_eq!(c.policy, PolicyKind::Crude);
        assert_eq!(c.forward.dts, vec![0.5]);
    }

    #[test]
    fn custom_network() {
        let text = r#"
schema_version = 1
[network]
species = ["X"]
reactions = [{ reactants = { X = 1 }, rate = 1.0 }]
initial_state = [20]
final_time = 1.0
[observable]
species = "X"
threshold = 10
"#;
        let c = ExperimentConfig::from_toml(text, &[]).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.network.reaction_count(), 1);
        assert_eq!(r.initial_state, vec![20]);
        let bare = text.replace("[observable]\nspecies = \"X\"\nthreshold = 10\n", "");
        let e = ExperimentConfig::from_toml(&bare, &[]);
        assert!(e.is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = ExperimentConfig::from_toml(MM, &[]).unwrap();
        let b = ExperimentConfig::for_preset("michaelis-menten");
        assert_eq!(a.hash(), b.hash());
    }
}
