//! Experiment configuration: one TOML or JSON document describing the task,
//! the model, the partition, and the selection strategy.
//!
//! Canonical serialization goes through the struct, so two files with the
//! same settings in different key order canonicalize to the same JSON (and
//! the same hash downstream).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Scheme;
use crate::error::{Error, Result};
use crate::nn::{Activation, SgdConfig};
use crate::selection::Strategy;

/// Where samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    /// Gaussian class blobs, linearly separable at large `separation`.
    Synthetic {
        #[serde(default = "defaults::classes")]
        classes: usize,
        #[serde(default = "defaults::per_class")]
        per_class: usize,
        #[serde(default = "defaults::dims")]
        dims: usize,
        #[serde(default = "defaults::separation")]
        separation: f64,
    },
    /// Big-endian image/label files on disk.
    Idx { images: PathBuf, labels: PathBuf },
}

mod defaults {
    pub fn classes() -> usize {
        10
    }
    pub fn per_class() -> usize {
        100
    }
    pub fn dims() -> usize {
        20
    }
    pub fn separation() -> f64 {
        3.0
    }
    pub fn local_epochs() -> usize {
        1
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn rho() -> f64 {
        1.0
    }
    pub fn eval_fraction() -> f64 {
        0.2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of clients the data is partitioned over.
    pub clients: usize,
    /// Clients trained per round (the selected set size).
    pub clients_per_round: usize,
    /// Training rounds after the initialization round.
    pub rounds: usize,
    /// MLP layer sizes, input through output.
    pub arch: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default = "defaults::local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub strategy: Strategy,
    /// Candidate pool size for the loss-biased baseline; required for it,
    /// rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pow_d_candidates: Option<usize>,
    pub partition: Scheme,
    /// Exploration scale multiplier in the selection schedule.
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Accuracies closer than this count as unchanged when adjusting
    /// rewards; 0 means exact equality.
    #[serde(default)]
    pub reward_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of each class held out for server-side evaluation.
    #[serde(default = "defaults::eval_fraction")]
    pub eval_fraction: f64,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::config("clients must be at least 1"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.clients {
            return Err(Error::config(format!(
                "clients_per_round {} must lie in 1..={}",
                self.clients_per_round, self.clients
            )));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        if self.arch.len() < 2 {
            return Err(Error::config("arch needs at least input and output sizes"));
        }
        if self.arch.iter().any(|&s| s == 0) {
            return Err(Error::config("arch layer sizes must be positive"));
        }
        self.sgd.validate()?;
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        match (self.strategy, self.pow_d_candidates) {
            (Strategy::PowD, None) => {
                return Err(Error::config("pow_d strategy requires pow_d_candidates"));
            }
            (Strategy::PowD, Some(d)) => {
                if d < self.clients_per_round || d > self.clients {
                    return Err(Error::config(format!(
                        "pow_d_candidates {d} must lie in {}..={}",
                        self.clients_per_round, self.clients
                    )));
                }
            }
            (_, Some(_)) => {
                return Err(Error::config(
                    "pow_d_candidates is only meaningful with the pow_d strategy",
                ));
            }
            (_, None) => {}
        }
        match self.partition {
            Scheme::ShardsPerClient { shards } => {
                if shards == 0 {
                    return Err(Error::config("shards must be at least 1"));
                }
            }
            Scheme::Dirichlet { zeta } => {
                if !(zeta > 0.0) || !zeta.is_finite() {
                    return Err(Error::config("zeta must be positive"));
                }
            }
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::config("rho must be positive"));
        }
        if self.reward_epsilon < 0.0 || !self.reward_epsilon.is_finite() {
            return Err(Error::config("reward_epsilon must be nonnegative"));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::config("eval_fraction must lie strictly between 0 and 1"));
        }
        if let DataConfig::Synthetic { classes, per_class, dims, separation } = &self.data {
            if *classes < 2 {
                return Err(Error::config("synthetic data needs at least 2 classes"));
            }
            if *per_class == 0 {
                return Err(Error::config("per_class must be at least 1"));
            }
            if *dims == 0 {
                return Err(Error::config("dims must be at least 1"));
            }
            if !(*separation > 0.0) || !separation.is_finite() {
                return Err(Error::config("separation must be positive"));
            }
            if (*per_class as f64 * self.eval_fraction) < 1.0 {
                return Err(Error::config(
                    "eval_fraction leaves no evaluation samples for some class",
                ));
            }
            if self.arch[0] != *dims {
                return Err(Error::config(format!(
                    "arch input {} does not match data dims {dims}",
                    self.arch[0]
                )));
            }
            if *self.arch.last().unwrap() != *classes {
                return Err(Error::config(format!(
                    "arch output {} does not match class count {classes}",
                    self.arch.last().unwrap()
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config whose format is picked by file extension (.toml or
    /// .json).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            Some("json") => Self::from_json_str(&text),
            other => Err(Error::config(format!(
                "config {} has extension {:?}; expected .toml or .json",
                path.display(),
                other
            ))),
        }
    }

    /// JSON with the struct's fixed field order, independent of the order
    /// keys appeared in the source file.
    pub fn to_canonical_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE_TOML: &str = r#"
        clients = 20
        clients_per_round = 5
        rounds = 50
        arch = [20, 32, 10]
        seed = 7

        [partition]
        kind = "shards_per_client"
        shards = 1

        [data]
        kind = "synthetic"
    "#;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(BASE_TOML).unwrap()
    }

    #[test]
    fn toml_parses_with_defaults() {
        let cfg = base();
        assert_eq!(cfg.clients, 20);
        assert_eq!(cfg.clients_per_round, 5);
        assert_eq!(cfg.strategy, Strategy::Gpcb);
        assert_eq!(cfg.sgd.learning_rate, 0.005);
        assert_eq!(cfg.sgd.momentum, 0.1);
        assert_eq!(cfg.sgd.weight_decay, 1e-4);
        assert_eq!(cfg.local_epochs, 1);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.rho, 1.0);
        assert_eq!(cfg.eval_fraction, 0.2);
        assert_eq!(cfg.reward_epsilon, 0.0);
        assert_eq!(
            cfg.data,
            DataConfig::Synthetic { classes: 10, per_class: 100, dims: 20, separation: 3.0 }
        );
    }

    #[test]
    fn json_parses_to_same_config() {
        let json = r#"{
            "clients": 20,
            "clients_per_round": 5,
            "rounds": 50,
            "arch": [20, 32, 10],
            "seed": 7,
            "partition": {"kind": "shards_per_client", "shards": 1},
            "data": {"kind": "synthetic"}
        }"#;
        assert_eq!(ExperimentConfig::from_json_str(json).unwrap(), base());
    }

    #[test]
    fn canonical_json_ignores_key_order() {
        let reordered = r#"
            rounds = 50
            seed = 7
            arch = [20, 32, 10]
            clients_per_round = 5
            clients = 20

            [data]
            kind = "synthetic"

            [partition]
            shards = 1
            kind = "shards_per_client"
        "#;
        let a = base().to_canonical_json().unwrap();
        let b = ExperimentConfig::from_toml_str(reordered)
            .unwrap()
            .to_canonical_json()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_json_round_trips() {
        let cfg = base();
        let json = cfg.to_canonical_json().unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&json).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        // The field must sit at the top level: TOML keys after a table
        // header belong to that table.
        let toml = BASE_TOML.replace("[partition]", "lerning_rate = 0.1\n[partition]");
        assert!(ExperimentConfig::from_toml_str(&toml).is_err());
    }

    fn assert_invalid(mutate: impl FnOnce(&mut ExperimentConfig)) {
        let mut cfg = base();
        mutate(&mut cfg);
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }

    #[test]
    fn validation_rejects_bad_settings() {
        assert_invalid(|c| c.clients_per_round = 21);
        assert_invalid(|c| c.clients_per_round = 0);
        assert_invalid(|c| c.rounds = 0);
        assert_invalid(|c| c.arch = vec![20]);
        assert_invalid(|c| c.arch = vec![20, 0, 10]);
        assert_invalid(|c| c.arch = vec![19, 32, 10]);
        assert_invalid(|c| c.arch = vec![20, 32, 9]);
        assert_invalid(|c| c.sgd.learning_rate = 0.0);
        assert_invalid(|c| c.sgd.momentum = 1.0);
        assert_invalid(|c| c.local_epochs = 0);
        assert_invalid(|c| c.batch_size = 0);
        assert_invalid(|c| c.strategy = Strategy::PowD);
        assert_invalid(|c| c.pow_d_candidates = Some(10));
        assert_invalid(|c| {
            c.strategy = Strategy::PowD;
            c.pow_d_candidates = Some(3);
        });
        assert_invalid(|c| {
            c.strategy = Strategy::PowD;
            c.pow_d_candidates = Some(21);
        });
        assert_invalid(|c| c.partition = Scheme::ShardsPerClient { shards: 0 });
        assert_invalid(|c| c.partition = Scheme::Dirichlet { zeta: 0.0 });
        assert_invalid(|c| c.rho = 0.0);
        assert_invalid(|c| c.reward_epsilon = -0.1);
        assert_invalid(|c| c.eval_fraction = 0.0);
        assert_invalid(|c| c.eval_fraction = 1.0);
        assert_invalid(|c| c.eval_fraction = 0.001);
    }

    #[test]
    fn pow_d_config_is_accepted() {
        let mut cfg = base();
        cfg.strategy = Strategy::PowD;
        cfg.pow_d_candidates = Some(10);
        cfg.validate().unwrap();
    }

    #[test]
    fn extension_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("cfg.toml");
        std::fs::write(&toml_path, BASE_TOML).unwrap();
        assert_eq!(ExperimentConfig::from_path(&toml_path).unwrap(), base());

        let json_path = dir.path().join("cfg.json");
        std::fs::write(&json_path, base().to_canonical_json().unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_path(&json_path).unwrap(), base());

        let odd = dir.path().join("cfg.yaml");
        std::fs::write(&odd, "x").unwrap();
        assert!(ExperimentConfig::from_path(&odd).is_err());
    }
}
