//! Mini-batch SGD with momentum, per-epoch learning-rate decay, gradient
//! clipping, early stopping on a dev metric, and checkpoints.

mod checkpoint;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::corpus::{EncodedSentence, LabeledSentence};
use crate::metrics;
use crate::model::{LmLstmCrf, Objective};
use crate::nn_core::{clip_gradients, Mode, ParamStore, Rng};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, MAGIC};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub lr0: f64,
    pub decay: f64,
    pub momentum: f64,
    /// One buffer per parameter, in store order.
    pub velocities: Vec<Vec<f64>>,
    /// Completed epochs.
    pub epoch: usize,
}

impl OptimizerState {
    pub fn new(store: &ParamStore, lr0: f64, decay: f64, momentum: f64) -> Self {
        OptimizerState {
            lr0,
            decay,
            momentum,
            velocities: store.params().iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
            epoch: 0,
        }
    }

    /// `lr0 / (1 + decay * t)`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        self.lr0 / (1.0 + self.decay * t as f64)
    }

    /// `v <- momentum * v - lr * g; p <- p + v`, then zero the gradients.
    pub fn sgd_step(&mut self, store: &mut ParamStore, lr: f64) {
        debug_assert_eq!(self.velocities.len(), store.len());
        for (p, v) in store.params_mut().iter_mut().zip(&mut self.velocities) {
            let (data, grad) = {
                let t = &mut p.tensor;
                let g = t.grad().expect("parameters carry grad").to_vec();
                (t.data_mut(), g)
            };
            for ((x, vel), g) in data.iter_mut().zip(v.iter_mut()).zip(&grad) {
                *vel = self.momentum * *vel - lr * g;
                *x += *vel;
            }
            p.tensor.zero_grad();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Span-level micro F1.
    F1,
    /// Token accuracy.
    Accuracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub clip: f64,
    pub lr0: f64,
    pub decay: f64,
    pub momentum: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub metric: Metric,
    pub objective: Objective,
    /// Dev-set worker threads; 0 uses rayon's default.
    pub eval_threads: usize,
    /// Written whenever the dev metric improves.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            clip: 5.0,
            lr0: 0.01,
            decay: 0.05,
            momentum: 0.9,
            patience: 15,
            max_epochs: 200,
            seed: 1,
            metric: Metric::F1,
            objective: Objective::Joint,
            eval_threads: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("clip must be positive".into()));
        }
        if !(self.lr0 > 0.0) || self.decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "need lr0 > 0, decay >= 0, momentum in [0, 1); got {}, {}, {}",
                self.lr0, self.decay, self.momentum
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Epochs observed so far.
    pub epoch: usize,
    pub best_metric: f64,
    /// 1-based epoch of the best metric (0 before any observation).
    pub best_epoch: usize,
    pub since_improvement: usize,
    pub patience: usize,
    pub max_epochs: usize,
}

impl TrainState {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        TrainState {
            epoch: 0,
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improvement: 0,
            patience,
            max_epochs,
        }
    }

    /// Record one epoch's dev metric.
    pub fn early_stop_update(&mut self, metric: f64) -> Decision {
        self.epoch += 1;
        if metric > self.best_metric {
            self.best_metric = metric;
            self.best_epoch = self.epoch;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        if self.since_improvement >= self.patience || self.epoch >= self.max_epochs {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    pub fn improved_last(&self) -> bool {
        self.best_epoch == self.epoch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Summed training loss over the epoch.
    pub train_loss: f64,
    pub dev_metric: f64,
    pub lr: f64,
    pub seconds: f64,
    pub steps: usize,
}

/// `epoch<TAB>train_loss<TAB>dev_metric<TAB>lr<TAB>seconds` lines.
pub fn format_history(records: &[EpochRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.3}",
            r.epoch, r.train_loss, r.dev_metric, r.lr, r.seconds
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    /// Optimizer state as of the best epoch.
    pub optimizer: OptimizerState,
}

/// Predicted label strings for every sentence, in input order.
pub fn predict_all(model: &LmLstmCrf, sentences: &[Vec<String>], threads: usize) -> Result<Vec<Vec<String>>> {
    let run = || {
        sentences
            .par_iter()
            .map(|words| model.predict_tags(words))
            .collect::<Result<Vec<_>>>()
    };
    if threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)
    }
}

/// Dev metric under `metric` (higher is better).
pub fn evaluate(model: &LmLstmCrf, dev: &[LabeledSentence], metric: Metric, threads: usize) -> Result<f64> {
    let words: Vec<Vec<String>> = dev.iter().map(|s| s.words.clone()).collect();
    let gold: Vec<Vec<String>> = dev.iter().map(|s| s.labels.clone()).collect();
    let pred = predict_all(model, &words, threads)?;
    match metric {
        Metric::F1 => Ok(metrics::label_prf(&gold, &pred)?.f1),
        Metric::Accuracy => metrics::token_accuracy(&gold, &pred),
    }
}

/// Negative mean per-word LM loss over both directions (higher is better).
fn evaluate_lm(model: &LmLstmCrf, dev: &[EncodedSentence]) -> Result<f64> {
    let mut rng = Rng::seed_from_u64(0);
    let mut nll = 0.0;
    let mut words = 0;
    for s in dev {
        let p = model.loss(s, Objective::LanguageModel, Mode::Eval, &mut rng)?;
        nll += p.lm_forward + p.lm_backward;
        words += 2 * s.len();
    }
    Ok(-nll / words.max(1) as f64)
}

/// Train `model` in place and leave it holding the best-dev parameters.
pub fn train_loop(
    model: &mut LmLstmCrf,
    train: &[LabeledSentence],
    dev: &[LabeledSentence],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let encoded: Vec<EncodedSentence> = train.iter().map(|s| model.vocabs.encode(s)).collect();
    if cfg.objective == Objective::Joint {
        if let Some(i) = encoded.iter().position(|e| e.label_ids.is_none()) {
            return Err(Error::Domain(format!("training sentence {i} has an unknown label")));
        }
    }
    let dev_encoded: Vec<EncodedSentence> = match cfg.objective {
        Objective::LanguageModel => dev.iter().map(|s| model.vocabs.encode(s)).collect(),
        Objective::Joint => Vec::new(),
    };

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(&model.store, cfg.lr0, cfg.decay, cfg.momentum);
    let mut state = TrainState::new(cfg.patience, cfg.max_epochs);
    let mut best_params: Option<ParamStore> = None;
    let mut best_opt = opt.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    model.store.zero_grad();

    loop {
        let started = Instant::now();
        let epoch_index = opt.epoch;
        let lr = opt.learning_rate_at(epoch_index);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += model
                    .loss_and_backward(&encoded[i], cfg.objective, Mode::Train, &mut rng)?
                    .total;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss {batch_loss} in epoch {}, batch {b}",
                    epoch_index + 1
                )));
            }
            clip_gradients(model.store.params_mut(), cfg.clip);
            opt.sgd_step(&mut model.store, lr);
            epoch_loss += batch_loss;
            steps += 1;
        }
        opt.epoch += 1;

        let metric = match cfg.objective {
            Objective::Joint => evaluate(model, dev, cfg.metric, cfg.eval_threads)?,
            Objective::LanguageModel => evaluate_lm(model, &dev_encoded)?,
        };
        if !metric.is_finite() {
            return Err(Error::Numeric(format!("dev metric {metric} after epoch {}", opt.epoch)));
        }
        let decision = state.early_stop_update(metric);
        history.push(EpochRecord {
            epoch: opt.epoch,
            train_loss: epoch_loss,
            dev_metric: metric,
            lr,
            seconds: started.elapsed().as_secs_f64(),
            steps,
        });
        if state.improved_last() {
            best_params = Some(model.store.clone());
            best_opt = opt.clone();
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(path, model, Some(&opt))?;
            }
        }
        if decision == Decision::Stop {
            break;
        }
    }

    if let Some(best) = best_params {
        model.store = best;
    }
    Ok(TrainOutcome {
        history,
        best_epoch: state.best_epoch,
        best_metric: state.best_metric,
        optimizer: best_opt,
    })
}
