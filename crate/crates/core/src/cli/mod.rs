//! `train`, `tag` and `eval` commands.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;

pub use config::{model_config_mismatch, RunConfig, KEYS, LR0_ACCURACY, LR0_F1};

use crate::corpus::{build_vocab, classify_line, load_pretrained_embeddings, parse_conll, ConllLine, LabeledSentence};
use crate::metrics;
use crate::model::LmLstmCrf;
use crate::nn_core::Rng;
use crate::trainer::{self, format_history, load_checkpoint, Metric};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lmcrf", about = "Sequence labeling with a co-trained character language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write its best checkpoint and history.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value`, applied after the config file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Append predicted labels to every token line of a column file.
    Tag {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score the checkpoint (or a prediction file) against a labeled file.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Score this labeled file instead of running the model.
        #[arg(long)]
        predicted: Option<PathBuf>,
    },
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parse `args` (program name first), run the command, and return the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train { config, seed, overrides } => cmd_train(&config, seed, &overrides, out),
        Command::Tag { config, input, output } => cmd_tag(&config, &input, &output),
        Command::Eval { config, gold, predicted } => cmd_eval(&config, &gold, predicted.as_deref(), out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn read_corpus(path: &Path) -> Result<Vec<LabeledSentence>> {
    parse_conll(&read_text(path)?).map_err(|e| e.with_path(path))
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::F1 => "f1",
        Metric::Accuracy => "accuracy",
    }
}

pub fn cmd_train(config: &Path, seed: Option<u64>, overrides: &[String], out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let train_path = cfg.required("train", &cfg.train)?;
    let dev_path = cfg.required("dev", &cfg.dev)?;

    let train = read_corpus(&train_path)?;
    let dev = read_corpus(&dev_path)?;
    let test = cfg.test.as_ref().map(|p| read_corpus(&cfg.resolve(p))).transpose()?;
    let vocabs = build_vocab(&train, cfg.min_freq)?;
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut model = LmLstmCrf::new(cfg.model.clone(), vocabs, &mut rng)?;
    if let Some(p) = &cfg.embeddings {
        let (table, cov) =
            load_pretrained_embeddings(&cfg.resolve(p), &model.vocabs.words, cfg.model.word_emb_dim, &mut rng)?;
        model.set_word_embeddings(&table)?;
        let _ = writeln!(out, "embeddings: {} found, {} missing", cov.found, cov.missing);
    }

    let tc = cfg.train_config();
    let outcome = trainer::train_loop(&mut model, &train, &dev, &tc)?;
    let history = cfg.resolve(&cfg.history);
    fs::write(&history, format_history(&outcome.history))
        .map_err(|e| Error::io(format!("writing {}", history.display()), e))?;
    let _ = writeln!(
        out,
        "best dev {} = {} at epoch {} of {}",
        metric_name(cfg.metric),
        outcome.best_metric,
        outcome.best_epoch,
        outcome.history.len()
    );
    if let Some(test) = test {
        let m = trainer::evaluate(&model, &test, cfg.metric, cfg.eval_threads)?;
        let _ = writeln!(out, "test {} = {m}", metric_name(cfg.metric));
    }
    Ok(())
}

/// Load the configured checkpoint and refuse it if its model settings differ.
fn load_model(cfg: &RunConfig) -> Result<LmLstmCrf> {
    let ck = load_checkpoint(&cfg.resolve(&cfg.checkpoint))?;
    if let Some(m) = model_config_mismatch(&cfg.model, &ck.model.config) {
        return Err(Error::Config(format!("checkpoint does not match config: {m}")));
    }
    Ok(ck.model)
}

/// Tag column text: every token line gets the predicted label appended, other
/// lines pass through, so the output has as many lines as the input.
pub fn tag_text(model: &LmLstmCrf, text: &str, threads: usize) -> Result<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut sentences: Vec<(usize, Vec<String>)> = Vec::new();
    let mut current: Option<(usize, Vec<String>)> = None;
    for (i, line) in lines.iter().enumerate() {
        match classify_line(line) {
            ConllLine::Token { columns } => current
                .get_or_insert_with(|| (i, Vec::new()))
                .1
                .push(columns[0].to_string()),
            _ => sentences.extend(current.take()),
        }
    }
    sentences.extend(current.take());

    let words: Vec<Vec<String>> = sentences.iter().map(|(_, w)| w.clone()).collect();
    let tags = trainer::predict_all(model, &words, threads)?;
    let mut label_of: Vec<Option<&str>> = vec![None; lines.len()];
    for ((start, _), t) in sentences.iter().zip(&tags) {
        for (k, tag) in t.iter().enumerate() {
            label_of[start + k] = Some(tag);
        }
    }
    let mut outp = String::with_capacity(text.len() * 2);
    for (line, label) in lines.iter().zip(label_of) {
        match label {
            Some(l) => {
                outp.push_str(line.trim_end());
                outp.push(' ');
                outp.push_str(l);
            }
            None => outp.push_str(line),
        }
        outp.push('\n');
    }
    Ok(outp)
}

pub fn cmd_tag(config: &Path, input: &Path, output: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let model = load_model(&cfg)?;
    let text = read_text(input)?;
    let tagged = tag_text(&model, &text, cfg.eval_threads)?;
    fs::write(output, tagged).map_err(|e| Error::io(format!("writing {}", output.display()), e))
}

/// Single summary line followed by the per-type report.
pub fn eval_report(metric: Metric, gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<String> {
    let tokens: usize = gold.iter().map(Vec::len).sum();
    let summary = match metric {
        Metric::F1 => {
            let m = metrics::label_prf(gold, pred)?;
            format!(
                "metric=f1 precision={} recall={} f1={} correct={} predicted={} gold={} tokens={tokens}",
                m.precision, m.recall, m.f1, m.true_positives, m.predicted, m.gold
            )
        }
        Metric::Accuracy => format!(
            "metric=accuracy accuracy={} tokens={tokens}",
            metrics::token_accuracy(gold, pred)?
        ),
    };
    Ok(format!("{summary}\n{}", metrics::conlleval_report(gold, pred)?))
}

pub fn cmd_eval(config: &Path, gold: &Path, predicted: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let gold_sents = read_corpus(gold)?;
    let gold_labels: Vec<Vec<String>> = gold_sents.iter().map(|s| s.labels.clone()).collect();
    let pred = match predicted {
        Some(p) => {
            let pred_sents = read_corpus(p)?;
            if let Some(i) = gold_sents
                .iter()
                .zip(&pred_sents)
                .position(|(g, p)| g.words != p.words)
            {
                return Err(Error::Domain(format!("sentence {i} differs between gold and predicted files")));
            }
            pred_sents.into_iter().map(|s| s.labels).collect()
        }
        None => {
            let model = load_model(&cfg)?;
            let unknown: std::collections::BTreeSet<&str> = gold_labels
                .iter()
                .flatten()
                .map(String::as_str)
                .filter(|l| model.vocabs.labels.get(l).is_none())
                .collect();
            if !unknown.is_empty() {
                return Err(Error::Config(format!(
                    "gold labels unknown to the checkpoint's label vocabulary: {}",
                    unknown.into_iter().collect::<Vec<_>>().join(", ")
                )));
            }
            let words: Vec<Vec<String>> = gold_sents.iter().map(|s| s.words.clone()).collect();
            trainer::predict_all(&model, &words, cfg.eval_threads)?
        }
    };
    let report = eval_report(cfg.metric, &gold_labels, &pred)?;
    let _ = write!(out, "{report}");
    Ok(())
}
