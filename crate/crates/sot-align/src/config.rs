//! Declarative pipeline configuration.
//!
//! A flat `key = value` text file (`#` comments, blank lines ignored) plus
//! `--set key=value` command-line overrides; precedence is CLI > file >
//! defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Result, SotError};
use crate::metric::TrainingConfig;
use crate::synth::SynthParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostVariant {
    Word,
    WordChar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // input paths
    pub kg1_triples: PathBuf,
    pub kg1_names: PathBuf,
    pub kg2_triples: PathBuf,
    pub kg2_names: PathBuf,
    pub word_vectors: PathBuf,
    pub gold_pairs: Option<PathBuf>,
    pub dangling1: Option<PathBuf>,
    pub dangling2: Option<PathBuf>,
    pub train_pairs: Option<PathBuf>,

    // hyperparameters
    pub epsilon: f64,
    pub top_n: usize,
    pub margin: f64,
    pub w0: f64,
    pub decay_fraction: f64,
    pub learning_rate: f64,
    pub total_steps: usize,
    pub negatives_per_pair: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub top_k: usize,
    pub grid_k: usize,
    pub grid_size: usize,
    pub node_budget: usize,
    pub seed: u64,
    pub char_weight: f64,

    // modes
    pub mode: Mode,
    pub variant: CostVariant,

    // synthetic-generator block (cmd synthesize)
    pub synth: SynthParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kg1_triples: PathBuf::from("kg1_triples.tsv"),
            kg1_names: PathBuf::from("kg1_names.tsv"),
            kg2_triples: PathBuf::from("kg2_triples.tsv"),
            kg2_names: PathBuf::from("kg2_names.tsv"),
            word_vectors: PathBuf::from("word_vectors.txt"),
            gold_pairs: None,
            dangling1: None,
            dangling2: None,
            train_pairs: None,
            epsilon: 0.99,
            top_n: 3,
            margin: 3.0,
            w0: 0.3,
            decay_fraction: 0.25,
            learning_rate: 1e-3,
            total_steps: 1000,
            negatives_per_pair: 5,
            hidden_dim: 0,
            output_dim: 0,
            top_k: 100,
            grid_k: 10,
            grid_size: 10,
            node_budget: 1_000_000,
            seed: 17,
            char_weight: 1.0,
            mode: Mode::Unsupervised,
            variant: CostVariant::Word,
            synth: SynthParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Parse a config file then apply `--set` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = path {
            let text = crate::kg::read_to_string(path)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    SotError::parse(path, lineno + 1, format!("expected key=value, got {raw:?}"))
                })?;
                entries.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        for raw in overrides {
            let (k, v) = raw.split_once('=').ok_or_else(|| {
                SotError::Config(format!("--set expects key=value, got {raw:?}"))
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut config = PipelineConfig::default();
        for (k, v) in &entries {
            config.apply(k, v)?;
        }
        config.synth.seed = config.seed;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                SotError::Config(format!("bad value {value:?} for key {key:?}"))
            })
        }
        match key {
            "kg1_triples" => self.kg1_triples = value.into(),
            "kg1_names" => self.kg1_names = value.into(),
            "kg2_triples" => self.kg2_triples = value.into(),
            "kg2_names" => self.kg2_names = value.into(),
            "word_vectors" => self.word_vectors = value.into(),
            "gold_pairs" => self.gold_pairs = Some(value.into()),
            "dangling1" => self.dangling1 = Some(value.into()),
            "dangling2" => self.dangling2 = Some(value.into()),
            "train_pairs" => self.train_pairs = Some(value.into()),
            "epsilon" => self.epsilon = num(key, value)?,
            "top_n" => self.top_n = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "w0" => self.w0 = num(key, value)?,
            "decay_fraction" => self.decay_fraction = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "total_steps" => self.total_steps = num(key, value)?,
            "negatives_per_pair" => self.negatives_per_pair = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "output_dim" => self.output_dim = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "grid_k" => self.grid_k = num(key, value)?,
            "grid_size" => self.grid_size = num(key, value)?,
            "node_budget" => self.node_budget = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "char_weight" => self.char_weight = num(key, value)?,
            "mode" => {
                self.mode = match value {
                    "unsupervised" => Mode::Unsupervised,
                    "supervised" => Mode::Supervised,
                    other => {
                        return Err(SotError::Config(format!(
                            "mode must be unsupervised|supervised, got {other:?}"
                        )))
                    }
                }
            }
            "variant" => {
                self.variant = match value {
                    "word" => CostVariant::Word,
                    "word+char" => CostVariant::WordChar,
                    other => {
                        return Err(SotError::Config(format!(
                            "variant must be word|word+char, got {other:?}"
                        )))
                    }
                }
            }
            "synth.matchable" => self.synth.matchable = num(key, value)?,
            "synth.dangling1" => self.synth.dangling1 = num(key, value)?,
            "synth.dangling2" => self.synth.dangling2 = num(key, value)?,
            "synth.dim" => self.synth.dim = num(key, value)?,
            "synth.noise_sigma" => self.synth.noise_sigma = num(key, value)?,
            "synth.family_size" => self.synth.family_size = num(key, value)?,
            "synth.family_rho" => self.synth.family_rho = num(key, value)?,
            "synth.clone_noise" => self.synth.clone_noise = num(key, value)?,
            "synth.avg_degree" => self.synth.avg_degree = num(key, value)?,
            "synth.relation_types" => self.synth.relation_types = num(key, value)?,
            "synth.train_fraction" => self.synth.train_fraction = num(key, value)?,
            other => {
                return Err(SotError::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            margin: self.margin,
            negatives_per_pair: self.negatives_per_pair,
            top_n: self.top_n,
            w0: self.w0,
            decay_fraction: self.decay_fraction,
            learning_rate: self.learning_rate,
            total_steps: self.total_steps,
            rng_seed: self.seed,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
        }
    }

    /// Render the fully resolved configuration back out as `key = value`
    /// lines; written into the artifact directory for reproducibility.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("kg1_triples", self.kg1_triples.display().to_string());
        push("kg1_names", self.kg1_names.display().to_string());
        push("kg2_triples", self.kg2_triples.display().to_string());
        push("kg2_names", self.kg2_names.display().to_string());
        push("word_vectors", self.word_vectors.display().to_string());
        if let Some(p) = &self.gold_pairs {
            push("gold_pairs", p.display().to_string());
        }
        if let Some(p) = &self.dangling1 {
            push("dangling1", p.display().to_string());
        }
        if let Some(p) = &self.dangling2 {
            push("dangling2", p.display().to_string());
        }
        if let Some(p) = &self.train_pairs {
            push("train_pairs", p.display().to_string());
        }
        push("epsilon", format!("{}", self.epsilon));
        push("top_n", format!("{}", self.top_n));
        push("margin", format!("{}", self.margin));
        push("w0", format!("{}", self.w0));
        push("decay_fraction", format!("{}", self.decay_fraction));
        push("learning_rate", format!("{}", self.learning_rate));
        push("total_steps", format!("{}", self.total_steps));
        push("negatives_per_pair", format!("{}", self.negatives_per_pair));
        push("hidden_dim", format!("{}", self.hidden_dim));
        push("output_dim", format!("{}", self.output_dim));
        push("top_k", format!("{}", self.top_k));
        push("grid_k", format!("{}", self.grid_k));
        push("grid_size", format!("{}", self.grid_size));
        push("node_budget", format!("{}", self.node_budget));
        push("seed", format!("{}", self.seed));
        push("char_weight", format!("{}", self.char_weight));
        push(
            "mode",
            match self.mode {
                Mode::Unsupervised => "unsupervised".into(),
                Mode::Supervised => "supervised".into(),
            },
        );
        push(
            "variant",
            match self.variant {
                CostVariant::Word => "word".into(),
                CostVariant::WordChar => "word+char".into(),
            },
        );
        push("synth.matchable", format!("{}", self.synth.matchable));
        push("synth.dangling1", format!("{}", self.synth.dangling1));
        push("synth.dangling2", format!("{}", self.synth.dangling2));
        push("synth.dim", format!("{}", self.synth.dim));
        push("synth.noise_sigma", format!("{}", self.synth.noise_sigma));
        push("synth.family_size", format!("{}", self.synth.family_size));
        push("synth.family_rho", format!("{}", self.synth.family_rho));
        push("synth.clone_noise", format!("{}", self.synth.clone_noise));
        push("synth.avg_degree", format!("{}", self.synth.avg_degree));
        push(
            "synth.relation_types",
            format!("{}", self.synth.relation_types),
        );
        push(
            "synth.train_fraction",
            format!("{}", self.synth.train_fraction),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.epsilon, 0.99);
        assert_eq!(c.top_n, 3);
        assert_eq!(c.w0, 0.3);
        assert_eq!(c.decay_fraction, 0.25);
        assert_eq!(c.top_k, 100);
        assert_eq!(c.grid_k, 10);
        assert_eq!(c.grid_size, 10);
        assert_eq!(c.grid_size * c.grid_size, 100);
    }

    #[test]
    fn file_then_override_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nepsilon = 0.9\ntop_k = 50\n").unwrap();
        let c = PipelineConfig::load(Some(&path), &["epsilon=0.8".into()]).unwrap();
        assert_eq!(c.epsilon, 0.8); // CLI wins
        assert_eq!(c.top_k, 50); // file wins over default
        assert_eq!(c.top_n, 3); // default survives
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = PipelineConfig::load(None, &["nonsense=1".into()]).unwrap_err();
        assert!(matches!(err, SotError::Config(_)));
    }

    #[test]
    fn render_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = PipelineConfig::load(
            None,
            &[
                "epsilon=0.85".into(),
                "mode=supervised".into(),
                "variant=word+char".into(),
                "synth.noise_sigma=0.5".into(),
            ],
        )
        .unwrap();
        let path = dir.path().join("resolved.conf");
        std::fs::write(&path, c.render()).unwrap();
        let back = PipelineConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(c, back);
    }
}
