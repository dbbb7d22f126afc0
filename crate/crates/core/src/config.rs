//! Simulation configuration and its flat `key = value` text format.
//!
//! One assignment per line, `#` starts a comment, keys are dot paths such as
//! `defense.kind` or `data.dirichlet_q`. Lists are comma separated. Unknown
//! keys are rejected. Relative data paths resolve against the config file's
//! directory.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackKind, StealthReference};
use crate::data::{BlobSpec, TriggerSpec};
use crate::defenses::{DefenseConfig, DefenseKind};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TrainSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Blobs,
    Idx,
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(DataSource::Blobs),
            "idx" => Ok(DataSource::Idx),
            _ => Err(Error::config(format!("unknown data source `{s}`"))),
        }
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DataSource::Blobs => "blobs",
            DataSource::Idx => "idx",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_sep: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dirichlet_q: f64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

impl DataConfig {
    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            class_sep: self.class_sep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub attacks: Vec<AttackKind>,
    pub defenses: Vec<DefenseKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub total_clients: usize,
    pub clients_per_round: usize,
    /// Size of the malicious roster: client ids `0..malicious_count`.
    pub malicious_count: usize,
    /// When non-zero, exactly this many roster members join every round.
    pub force_c_per_round: usize,
    pub rounds: usize,
    pub eval_every: usize,
    pub master_seed: u64,
    /// Worker threads for client training; 0 uses the global pool.
    pub threads: usize,
    pub hidden_dim: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub data: DataConfig,
    /// Boost 0 stands for `clients_per_round`.
    pub attack: AttackConfig,
    pub defense: DefenseConfig,
    pub compare: CompareConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            total_clients: 200,
            clients_per_round: 20,
            malicious_count: 0,
            force_c_per_round: 0,
            rounds: 100,
            eval_every: 1,
            master_seed: 0,
            threads: 0,
            hidden_dim: 0,
            local_epochs: 2,
            batch_size: 10,
            learning_rate: 0.1,
            data: DataConfig {
                source: DataSource::Blobs,
                num_classes: 10,
                feature_dim: 16,
                class_sep: 6.0,
                train_per_class: 200,
                test_per_class: 100,
                dirichlet_q: 0.4,
                train_images: None,
                train_labels: None,
                test_images: None,
                test_labels: None,
            },
            attack: AttackConfig {
                kind: AttackKind::None,
                trigger: TriggerSpec {
                    positions: vec![13, 14, 15],
                    values: vec![5.0, 5.0, 5.0],
                    target_label: 0,
                },
                poison_rate: 0.5,
                boost: 0.0,
                alpha: 0.5,
                stealth_reference: StealthReference::Params,
                pgd_radius: 2.0,
                pgd_per_step: false,
                edge_fraction: 0.1,
                edge_source_label: 1,
            },
            defense: DefenseConfig::default(),
            compare: CompareConfig {
                attacks: vec![AttackKind::None, AttackKind::ModelReplacement],
                defenses: vec![DefenseKind::FedAvg, DefenseKind::Faros],
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_or_empty(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "total_clients",
    "clients_per_round",
    "malicious_count",
    "force_c_per_round",
    "rounds",
    "eval_every",
    "master_seed",
    "threads",
    "model.hidden_dim",
    "train.local_epochs",
    "train.batch_size",
    "train.learning_rate",
    "data.source",
    "data.num_classes",
    "data.feature_dim",
    "data.class_sep",
    "data.train_per_class",
    "data.test_per_class",
    "data.dirichlet_q",
    "data.trigger_positions",
    "data.trigger_values",
    "data.target_label",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "attack.kind",
    "attack.poison_rate",
    "attack.boost",
    "attack.alpha",
    "attack.stealth_reference",
    "attack.pgd_radius",
    "attack.pgd_per_step",
    "attack.edge_fraction",
    "attack.edge_source_label",
    "defense.kind",
    "defense.phi_max",
    "defense.kappa",
    "defense.core_size",
    "defense.accept_count",
    "defense.krum_f",
    "defense.clip_norm",
    "defense.noise_std",
    "defense.phi_static",
    "defense.global_lr",
    "defense.weighted",
    "defense.norm",
    "compare.attacks",
    "compare.defenses",
];

impl SimConfig {
    /// Assign one key. Type errors and unknown keys name the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = |s: &str| if s.is_empty() { None } else { Some(PathBuf::from(s)) };
        match key {
            "total_clients" => self.total_clients = parse(key, v)?,
            "clients_per_round" => self.clients_per_round = parse(key, v)?,
            "malicious_count" => self.malicious_count = parse(key, v)?,
            "force_c_per_round" => self.force_c_per_round = parse(key, v)?,
            "rounds" => self.rounds = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "master_seed" => self.master_seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "model.hidden_dim" => self.hidden_dim = parse(key, v)?,
            "train.local_epochs" => self.local_epochs = parse(key, v)?,
            "train.batch_size" => self.batch_size = parse(key, v)?,
            "train.learning_rate" => self.learning_rate = parse(key, v)?,
            "data.source" => self.data.source = parse(key, v)?,
            "data.num_classes" => self.data.num_classes = parse(key, v)?,
            "data.feature_dim" => self.data.feature_dim = parse(key, v)?,
            "data.class_sep" => self.data.class_sep = parse(key, v)?,
            "data.train_per_class" => self.data.train_per_class = parse(key, v)?,
            "data.test_per_class" => self.data.test_per_class = parse(key, v)?,
            "data.dirichlet_q" => self.data.dirichlet_q = parse(key, v)?,
            "data.trigger_positions" => self.attack.trigger.positions = parse_list(key, v)?,
            "data.trigger_values" => self.attack.trigger.values = parse_list(key, v)?,
            "data.target_label" => self.attack.trigger.target_label = parse(key, v)?,
            "data.train_images" => self.data.train_images = path(v),
            "data.train_labels" => self.data.train_labels = path(v),
            "data.test_images" => self.data.test_images = path(v),
            "data.test_labels" => self.data.test_labels = path(v),
            "attack.kind" => self.attack.kind = parse(key, v)?,
            "attack.poison_rate" => self.attack.poison_rate = parse(key, v)?,
            "attack.boost" => self.attack.boost = parse(key, v)?,
            "attack.alpha" => self.attack.alpha = parse(key, v)?,
            "attack.stealth_reference" => self.attack.stealth_reference = parse(key, v)?,
            "attack.pgd_radius" => self.attack.pgd_radius = parse(key, v)?,
            "attack.pgd_per_step" => self.attack.pgd_per_step = parse(key, v)?,
            "attack.edge_fraction" => self.attack.edge_fraction = parse(key, v)?,
            "attack.edge_source_label" => self.attack.edge_source_label = parse(key, v)?,
            "defense.kind" => self.defense.kind = parse(key, v)?,
            "defense.phi_max" => self.defense.phi_max = parse(key, v)?,
            "defense.kappa" => self.defense.kappa = parse(key, v)?,
            "defense.core_size" => self.defense.core_size = parse(key, v)?,
            "defense.accept_count" => self.defense.accept_count = parse(key, v)?,
            "defense.krum_f" => self.defense.krum_f = parse(key, v)?,
            "defense.clip_norm" => self.defense.clip_norm = parse(key, v)?,
            "defense.noise_std" => self.defense.noise_std = parse(key, v)?,
            "defense.phi_static" => self.defense.phi_static = parse(key, v)?,
            "defense.global_lr" => self.defense.global_lr = parse(key, v)?,
            "defense.weighted" => self.defense.weighted = parse(key, v)?,
            "defense.norm" => self.defense.norm = parse(key, v)?,
            "compare.attacks" => self.compare.attacks = parse_list(key, v)?,
            "compare.defenses" => self.compare.defenses = parse_list(key, v)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Current value of `key` in the same textual form `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let t = &self.attack.trigger;
        Ok(match key {
            "total_clients" => self.total_clients.to_string(),
            "clients_per_round" => self.clients_per_round.to_string(),
            "malicious_count" => self.malicious_count.to_string(),
            "force_c_per_round" => self.force_c_per_round.to_string(),
            "rounds" => self.rounds.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "master_seed" => self.master_seed.to_string(),
            "threads" => self.threads.to_string(),
            "model.hidden_dim" => self.hidden_dim.to_string(),
            "train.local_epochs" => self.local_epochs.to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "train.learning_rate" => self.learning_rate.to_string(),
            "data.source" => self.data.source.to_string(),
            "data.num_classes" => self.data.num_classes.to_string(),
            "data.feature_dim" => self.data.feature_dim.to_string(),
            "data.class_sep" => self.data.class_sep.to_string(),
            "data.train_per_class" => self.data.train_per_class.to_string(),
            "data.test_per_class" => self.data.test_per_class.to_string(),
            "data.dirichlet_q" => self.data.dirichlet_q.to_string(),
            "data.trigger_positions" => join(&t.positions),
            "data.trigger_values" => join(&t.values),
            "data.target_label" => t.target_label.to_string(),
            "data.train_images" => path_or_empty(&self.data.train_images),
            "data.train_labels" => path_or_empty(&self.data.train_labels),
            "data.test_images" => path_or_empty(&self.data.test_images),
            "data.test_labels" => path_or_empty(&self.data.test_labels),
            "attack.kind" => self.attack.kind.to_string(),
            "attack.poison_rate" => self.attack.poison_rate.to_string(),
            "attack.boost" => self.attack.boost.to_string(),
            "attack.alpha" => self.attack.alpha.to_string(),
            "attack.stealth_reference" => self.attack.stealth_reference.to_string(),
            "attack.pgd_radius" => self.attack.pgd_radius.to_string(),
            "attack.pgd_per_step" => self.attack.pgd_per_step.to_string(),
            "attack.edge_fraction" => self.attack.edge_fraction.to_string(),
            "attack.edge_source_label" => self.attack.edge_source_label.to_string(),
            "defense.kind" => self.defense.kind.to_string(),
            "defense.phi_max" => self.defense.phi_max.to_string(),
            "defense.kappa" => self.defense.kappa.to_string(),
            "defense.core_size" => self.defense.core_size.to_string(),
            "defense.accept_count" => self.defense.accept_count.to_string(),
            "defense.krum_f" => self.defense.krum_f.to_string(),
            "defense.clip_norm" => self.defense.clip_norm.to_string(),
            "defense.noise_std" => self.defense.noise_std.to_string(),
            "defense.phi_static" => self.defense.phi_static.to_string(),
            "defense.global_lr" => self.defense.global_lr.to_string(),
            "defense.weighted" => self.defense.weighted.to_string(),
            "defense.norm" => self.defense.norm.to_string(),
            "compare.attacks" => join(&self.compare.attacks),
            "compare.defenses" => join(&self.compare.defenses),
            _ => return Err(Error::UnknownKey(key.to_string())),
        })
    }

    /// All keys with their current values, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| (k, self.get(k).expect("every listed key is readable")))
            .collect()
    }

    /// Render in the text format; `parse_str` of the result reproduces `self`.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Apply the assignments in `text` on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Read a config file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = SimConfig::parse_str(&text)?;
        if let Some(dir) = path.parent() {
            for p in [
                &mut cfg.data.train_images,
                &mut cfg.data.train_labels,
                &mut cfg.data.test_images,
                &mut cfg.data.test_labels,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Apply `key=value` overrides in order; the last one for a key wins.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{o}` is not of the form key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            input_dim: self.data.feature_dim,
            num_classes: self.data.num_classes,
            hidden_dim: self.hidden_dim,
            activation: Default::default(),
        }
    }

    /// Training hyper-parameters; the seed is filled in per client and round.
    pub fn train_spec(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }

    /// Attack settings with the boost default resolved.
    pub fn attack_config(&self) -> AttackConfig {
        let mut a = self.attack.clone();
        if a.boost == 0.0 {
            a.boost = self.clients_per_round as f64;
        }
        if a.trigger.values.len() == 1 && a.trigger.positions.len() > 1 {
            a.trigger.values = vec![a.trigger.values[0]; a.trigger.positions.len()];
        }
        a
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.clients_per_round;
        if self.total_clients == 0 {
            return Err(Error::config("total_clients must be at least 1"));
        }
        if k == 0 || k > self.total_clients {
            return Err(Error::config(format!(
                "clients_per_round {k} must lie in [1, total_clients = {}]",
                self.total_clients
            )));
        }
        if self.malicious_count > self.total_clients {
            return Err(Error::config("malicious_count exceeds total_clients"));
        }
        if self.force_c_per_round > 0 {
            if self.force_c_per_round > self.malicious_count.min(k) {
                return Err(Error::config(format!(
                    "force_c_per_round {} exceeds min(malicious_count, clients_per_round)",
                    self.force_c_per_round
                )));
            }
            if self.total_clients - self.malicious_count < k - self.force_c_per_round {
                return Err(Error::config(
                    "force_c_per_round leaves too few honest clients to fill a round",
                ));
            }
        }
        let expected_c = if self.force_c_per_round > 0 {
            self.force_c_per_round as f64
        } else {
            self.malicious_count as f64 * k as f64 / self.total_clients as f64
        };
        if expected_c >= k as f64 / 2.0 {
            warn!(
                "expected {expected_c} malicious clients per round is not below k/2 = {}",
                k as f64 / 2.0
            );
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if self.attack.boost != 0.0 && self.attack.boost < 1.0 {
            return Err(Error::config("attack.boost must be 0 (meaning k) or >= 1"));
        }
        self.model_spec().validate()?;
        self.train_spec(0).validate()?;
        let d = &self.data;
        if d.source == DataSource::Blobs {
            d.blob_spec().validate()?;
        } else if [&d.train_images, &d.train_labels, &d.test_images, &d.test_labels]
            .iter()
            .any(|p| p.is_none())
        {
            return Err(Error::config(
                "data.source = idx needs data.train_images, data.train_labels, data.test_images and data.test_labels",
            ));
        }
        if d.train_per_class == 0 || d.test_per_class == 0 {
            return Err(Error::config(
                "data.train_per_class and data.test_per_class must be positive",
            ));
        }
        if !(d.dirichlet_q > 0.0 && d.dirichlet_q.is_finite()) {
            return Err(Error::config("data.dirichlet_q must be positive"));
        }
        let acfg = self.attack_config();
        acfg.trigger.validate(d.feature_dim)?;
        if acfg.trigger.target_label >= d.num_classes {
            return Err(Error::config("data.target_label must be below data.num_classes"));
        }
        if acfg.edge_source_label >= d.num_classes {
            return Err(Error::config("attack.edge_source_label must be below data.num_classes"));
        }
        acfg.validate()?;
        self.defense.validate(k)?;
        if self.compare.attacks.is_empty() || self.compare.defenses.is_empty() {
            return Err(Error::config("compare.attacks and compare.defenses must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!(SimConfig::parse_str(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parses_comments_and_lists() {
        let cfg = SimConfig::parse_str(
            "# desk\nrounds = 7  # short\n\ndefense.kind=faros\ndata.trigger_positions = 1, 2\ncompare.attacks = none,edge_case_pgd\n",
        )
        .unwrap();
        assert_eq!(cfg.rounds, 7);
        assert_eq!(cfg.defense.kind, DefenseKind::Faros);
        assert_eq!(cfg.attack.trigger.positions, vec![1, 2]);
        assert_eq!(cfg.compare.attacks, vec![AttackKind::None, AttackKind::EdgeCasePgd]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = SimConfig::parse_str("defense.kapa = 3").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("defense.kapa"));
        let err = SimConfig::parse_str("rounds = many").unwrap_err();
        assert!(err.to_string().contains("rounds"));
        assert!(SimConfig::parse_str("rounds").is_err());
    }

    #[test]
    fn overrides_last_wins() {
        let mut cfg = SimConfig::default();
        cfg.apply_overrides(&["rounds=3", "defense.kind = multi_krum", "rounds=5"])
            .unwrap();
        assert_eq!(cfg.rounds, 5);
        assert_eq!(cfg.defense.kind, DefenseKind::MultiKrum);
        assert!(cfg.apply_overrides(&["nope=1"]).is_err());
        assert!(cfg.apply_overrides(&["rounds"]).is_err());
    }

    #[test]
    fn boost_defaults_to_k() {
        let mut cfg = SimConfig::default();
        cfg.clients_per_round = 10;
        assert_eq!(cfg.attack_config().boost, 10.0);
        cfg.attack.boost = 3.0;
        assert_eq!(cfg.attack_config().boost, 3.0);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = |f: fn(&mut SimConfig)| {
            let mut c = SimConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.clients_per_round = 0));
        assert!(bad(|c| c.clients_per_round = 201));
        assert!(bad(|c| c.rounds = 0));
        assert!(bad(|c| c.force_c_per_round = 1));
        assert!(bad(|c| c.data.dirichlet_q = 0.0));
        assert!(bad(|c| c.attack.trigger.positions = vec![16]));
        assert!(bad(|c| c.attack.trigger.target_label = 10));
        assert!(bad(|c| c.attack.boost = 0.5));
        assert!(bad(|c| c.defense.accept_count = 21));
        assert!(bad(|c| c.data.source = DataSource::Idx));
        assert!(bad(|c| c.compare.defenses.clear()));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.cfg");
        std::fs::write(&p, "data.train_images = imgs/train.idx3\n").unwrap();
        let cfg = SimConfig::load(&p).unwrap();
        assert_eq!(cfg.data.train_images.unwrap(), dir.path().join("imgs/train.idx3"));
        assert!(matches!(
            SimConfig::load(&dir.path().join("missing.cfg")),
            Err(Error::Io { .. })
        ));
    }
}
