//! TOML experiment configuration.
//!
//! ```toml
//! output = "runs/imbalance"
//!
//! [dataset]
//! kind = "synthetic"          # or "csv"
//! preset = "imbalance_margin" # or "two_group"; or an inline [dataset.synthetic] table
//! seed = 0
//! train_fraction = 0.7
//! split_seed = 0
//!
//! [model]
//! input_dim = 2
//! hidden = []
//! head = { kind = "sigmoid" }
//!
//! [train]
//! epochs = 30
//! batch_size = 32
//!
//! [profiles]
//! ids = ["hw_ref", "hw_seq32", "hw_pair32", "hw_perm32_s7", "hw_warp32"]
//! reference = "hw_ref"
//!
//! [sweep]
//! seeds = [0, 1, 2, 3, 4]
//!
//! [mitigation]
//! lambdas = [0.0, 0.001, 0.01, 0.1]
//! accuracy_budget = 0.02
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, gen_synthetic, CsvSchema, GroupedDataset, Split, Standardizer, SyntheticSpec};
use crate::error::{Error, Result};
use crate::models::ArchSpec;
use crate::train::TrainConfig;
use crate::vhw::{builtin_profiles, ProfileRegistry, VirtualHardwareProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// `imbalance_margin` or `two_group`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<CsvSchema>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub standardize: bool,
}

fn default_train_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesSection {
    /// Builtin profile ids to use.
    #[serde(default)]
    pub ids: Vec<String>,
    /// Extra profiles defined in the config.
    #[serde(default)]
    pub inline: Vec<VirtualHardwareProfile>,
    #[serde(default = "default_reference")]
    pub reference: String,
}

fn default_reference() -> String {
    "hw_ref".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationSection {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_budget")]
    pub accuracy_budget: f64,
}

impl Default for MitigationSection {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            accuracy_budget: default_budget(),
        }
    }
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0]
}

fn default_budget() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub model: ArchSpec,
    #[serde(default)]
    pub train: TrainConfig,
    pub profiles: ProfilesSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub mitigation: MitigationSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative dataset paths resolve against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.dataset.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        self.train.validate()?;
        if self.sweep.seeds.is_empty() {
            return bad("sweep.seeds must list at least one seed".into());
        }
        if self.sweep.workers == 0 {
            return bad("sweep.workers must be >= 1".into());
        }
        let lambdas = &self.mitigation.lambdas;
        if lambdas.is_empty() || !lambdas.contains(&0.0) {
            return bad("mitigation.lambdas must include 0".into());
        }
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return bad("mitigation.lambdas must be finite and >= 0".into());
        }
        if self.train.mitigation_lambda != 0.0 {
            return bad("set penalty weights through mitigation.lambdas, not train.mitigation_lambda".into());
        }
        if !(self.mitigation.accuracy_budget >= 0.0) {
            return bad("mitigation.accuracy_budget must be >= 0".into());
        }
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Synthetic => {
                if d.preset.is_some() == d.synthetic.is_some() {
                    return bad("synthetic dataset needs exactly one of `preset` or `synthetic`".into());
                }
                if let Some(p) = &d.preset {
                    preset_spec(p, 0)?;
                }
            }
            DatasetKind::Csv => {
                if d.path.is_none() || d.schema.is_none() {
                    return bad("csv dataset needs `path` and `schema`".into());
                }
            }
        }
        self.registry()?;
        Ok(())
    }

    /// Selected profiles, in config order, with the reference first.
    pub fn registry(&self) -> Result<ProfileRegistry> {
        let builtin = builtin_profiles();
        let mut profiles = Vec::new();
        for id in &self.profiles.ids {
            let p = builtin
                .get(id)
                .ok_or_else(|| Error::Config(format!("unknown builtin profile `{id}`")))?;
            profiles.push(p.clone());
        }
        profiles.extend(self.profiles.inline.iter().cloned());
        if let Some(pos) = profiles.iter().position(|p| p.id == self.profiles.reference) {
            let r = profiles.remove(pos);
            profiles.insert(0, r);
        }
        ProfileRegistry::new(profiles, self.profiles.reference.clone())
    }

    /// SHA-256 of the canonical JSON form; the output directory is excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        canonical.sweep.workers = 1;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn load_dataset(&self) -> Result<GroupedDataset> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Synthetic => {
                let spec = match (&d.preset, &d.synthetic) {
                    (Some(p), _) => preset_spec(p, d.seed)?,
                    (None, Some(s)) => SyntheticSpec { seed: d.seed, ..s.clone() },
                    (None, None) => return Err(Error::Config("no synthetic spec".into())),
                };
                gen_synthetic(&spec)
            }
            DatasetKind::Csv => {
                let path = d.path.as_ref().ok_or_else(|| Error::Config("csv path missing".into()))?;
                let schema = d.schema.as_ref().ok_or_else(|| Error::Config("csv schema missing".into()))?;
                data::load_csv(path, schema)
            }
        }
    }

    /// Train/test split, standardized on the training statistics if configured.
    pub fn load_split(&self) -> Result<Split> {
        let ds = self.load_dataset()?;
        let mut sp = data::split(&ds, self.dataset.train_fraction, self.dataset.split_seed)?;
        if self.dataset.standardize {
            let st = Standardizer::fit(&sp.train)?;
            sp.train = st.apply(&sp.train);
            sp.test = st.apply(&sp.test);
        }
        Ok(sp)
    }
}

pub fn preset_spec(name: &str, seed: u64) -> Result<SyntheticSpec> {
    match name {
        "imbalance_margin" => Ok(data::imbalance_margin_spec(seed)),
        "two_group" => Ok(data::two_group_spec(seed)),
        other => Err(Error::Config(format!("unknown dataset preset `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
kind = "synthetic"
preset = "imbalance_margin"

[model]
input_dim = 2
hidden = []
head = { kind = "sigmoid" }

[profiles]
ids = ["hw_seq32", "hw_ref"]

[sweep]
seeds = [0]
"#;

    #[test]
    fn minimal_config_parses_with_reference_first() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.registry().unwrap().ids(), vec!["hw_ref".to_string(), "hw_seq32".into()]);
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn hash_ignores_output_and_workers() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        b.sweep.workers = 4;
        assert_eq!(a.hash(), b.hash());
        b.sweep.seeds.push(1);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let no_zero = format!("{MINIMAL}\n[mitigation]\nlambdas = [0.1]\n");
        assert!(ExperimentConfig::from_toml(&no_zero).is_err());
        let unknown = MINIMAL.replace("hw_seq32", "hw_nope");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let no_seeds = MINIMAL.replace("seeds = [0]", "seeds = []");
        assert!(ExperimentConfig::from_toml(&no_seeds).is_err());
        let typo = MINIMAL.replace("kind = \"synthetic\"", "kind = \"synthetic\"\nsede = 3");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
    }
}
