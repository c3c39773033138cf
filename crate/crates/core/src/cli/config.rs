//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use crate::model::{ModelConfig, Objective};
use crate::trainer::{Metric, TrainConfig};
use crate::{Error, Result};

/// Default learning rate for span-F1 tasks.
pub const LR0_F1: f64 = 0.01;
/// Default learning rate for token-accuracy tasks.
pub const LR0_ACCURACY: f64 = 0.015;

/// Every key a config file may set, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("train", "training corpus (CoNLL columns, label last)"),
    ("dev", "development corpus"),
    ("test", "optional test corpus, evaluated after training"),
    ("embeddings", "optional pre-trained word vectors, `word v1 .. vN` per line"),
    ("checkpoint", "checkpoint written by train and read by tag/eval"),
    ("history", "per-epoch history file written by train"),
    ("metric", "f1 or accuracy"),
    ("objective", "joint or lm"),
    ("seed", "RNG seed"),
    ("min_freq", "words rarer than this in train map to <unk>"),
    ("char_emb_dim", "character embedding size"),
    ("char_state", "character LSTM state size"),
    ("word_emb_dim", "word embedding size"),
    ("word_state", "word LSTM state size"),
    ("highway_depth", "highway units per route"),
    ("lambda", "weight of the language-model loss"),
    ("enable_lm", "co-train the language model"),
    ("enable_highway", "route character states through highway units"),
    ("dropout", "dropout rate on word-level inputs and outputs"),
    ("char_dropout", "also apply dropout to character embeddings"),
    ("constrained_decoding", "only legal BIOES transitions when decoding"),
    ("lr0", "initial learning rate (default 0.01 for f1, 0.015 for accuracy)"),
    ("decay", "learning-rate decay per epoch"),
    ("momentum", "SGD momentum"),
    ("batch_size", "sentences per update"),
    ("clip", "global gradient-norm threshold"),
    ("patience", "epochs without dev improvement before stopping"),
    ("max_epochs", "upper bound on epochs"),
    ("eval_threads", "dev evaluation threads, 0 for all cores"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub metric: Metric,
    pub objective: Objective,
    pub seed: u64,
    pub min_freq: usize,
    pub model: ModelConfig,
    /// `None` picks the default for `metric`.
    pub lr0: Option<f64>,
    pub decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub clip: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub eval_threads: usize,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            train: None,
            dev: None,
            test: None,
            embeddings: None,
            checkpoint: PathBuf::from("model.ckpt"),
            history: PathBuf::from("history.tsv"),
            metric: Metric::F1,
            objective: Objective::Joint,
            seed: 1,
            min_freq: 5,
            model: ModelConfig::default(),
            lr0: None,
            decay: t.decay,
            momentum: t.momentum,
            batch_size: t.batch_size,
            clip: t.clip,
            patience: t.patience,
            max_epochs: t.max_epochs,
            eval_threads: 0,
            base_dir: PathBuf::from("."),
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for key {key}")))
}

impl RunConfig {
    /// Parse config text. `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            c.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(c)
    }

    /// Read a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip(e))))?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "train" => self.train = Some(v.into()),
            "dev" => self.dev = Some(v.into()),
            "test" => self.test = Some(v.into()),
            "embeddings" => self.embeddings = Some(v.into()),
            "checkpoint" => self.checkpoint = v.into(),
            "history" => self.history = v.into(),
            "metric" => {
                self.metric = match v {
                    "f1" => Metric::F1,
                    "accuracy" => Metric::Accuracy,
                    _ => return Err(Error::Config(format!("metric must be f1 or accuracy, got {v:?}"))),
                }
            }
            "objective" => {
                self.objective = match v {
                    "joint" => Objective::Joint,
                    "lm" => Objective::LanguageModel,
                    _ => return Err(Error::Config(format!("objective must be joint or lm, got {v:?}"))),
                }
            }
            "seed" => self.seed = value(key, v)?,
            "min_freq" => self.min_freq = value(key, v)?,
            "char_emb_dim" => m.char_emb_dim = value(key, v)?,
            "char_state" => m.char_state = value(key, v)?,
            "word_emb_dim" => m.word_emb_dim = value(key, v)?,
            "word_state" => m.word_state = value(key, v)?,
            "highway_depth" => m.highway_depth = value(key, v)?,
            "lambda" => m.lambda = value(key, v)?,
            "enable_lm" => m.enable_lm = value(key, v)?,
            "enable_highway" => m.enable_highway = value(key, v)?,
            "dropout" => m.dropout = value(key, v)?,
            "char_dropout" => m.char_dropout = value(key, v)?,
            "constrained_decoding" => m.constrained_decoding = value(key, v)?,
            "lr0" => self.lr0 = Some(value(key, v)?),
            "decay" => self.decay = value(key, v)?,
            "momentum" => self.momentum = value(key, v)?,
            "batch_size" => self.batch_size = value(key, v)?,
            "clip" => self.clip = value(key, v)?,
            "patience" => self.patience = value(key, v)?,
            "max_epochs" => self.max_epochs = value(key, v)?,
            "eval_threads" => self.eval_threads = value(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr0.unwrap_or(match self.metric {
            Metric::F1 => LR0_F1,
            Metric::Accuracy => LR0_ACCURACY,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolved path for a required key.
    pub fn required(&self, key: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        p.as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            clip: self.clip,
            lr0: self.learning_rate(),
            decay: self.decay,
            momentum: self.momentum,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            metric: self.metric,
            objective: self.objective,
            eval_threads: self.eval_threads,
            checkpoint_path: Some(self.resolve(&self.checkpoint)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        self.model.validate().map_err(|e| Error::Config(strip(e)))?;
        self.train_config().validate()
    }
}

/// Message of a config error without its prefix.
fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// First model-config field that differs, as `name: config value vs checkpoint value`.
pub fn model_config_mismatch(config: &ModelConfig, stored: &ModelConfig) -> Option<String> {
    macro_rules! cmp {
        ($($f:ident),*) => {
            $(if config.$f != stored.$f {
                return Some(format!(
                    "{}: config has {}, checkpoint has {}",
                    stringify!($f), config.$f, stored.$f
                ));
            })*
        };
    }
    cmp!(
        char_emb_dim,
        char_state,
        word_emb_dim,
        word_state,
        highway_depth,
        lambda,
        enable_lm,
        enable_highway,
        dropout,
        char_dropout,
        constrained_decoding
    );
    None
}
