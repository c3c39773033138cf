mod common;

use std::fs;
use std::path::{Path, PathBuf};

use lm_lstm_crf::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use lm_lstm_crf::corpus::serialize_conll;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn lmcrf(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("lmcrf").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = common::ner_corpus();
        fs::write(dir.path().join("train.txt"), serialize_conll(&corpus[..16])).unwrap();
        fs::write(dir.path().join("dev.txt"), serialize_conll(&corpus[16..])).unwrap();
        let w = Workspace { dir };
        w.config("run.cfg", extra);
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn config(&self, name: &str, extra: &str) -> String {
        let text = format!(
            "# tiny run\ntrain = train.txt\ndev = dev.txt\ncheckpoint = model.ckpt\nhistory = history.tsv\n\
             min_freq = 1\nchar_emb_dim = 4\nchar_state = 8\nword_emb_dim = 6\nword_state = 8\n\
             max_epochs = 3\nseed = 5\n{extra}"
        );
        fs::write(self.path(name), text).unwrap();
        self.p(name)
    }

    fn train(&self) -> Run {
        lmcrf(&["train", "--config", &self.p("run.cfg")])
    }
}

fn without_seconds(history: &str) -> Vec<String> {
    history
        .lines()
        .map(|l| l.split('\t').take(4).collect::<Vec<_>>().join("\t"))
        .collect()
}

#[test]
fn train_writes_checkpoint_and_history() {
    let w = Workspace::new("");
    let r = w.train();
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("best dev f1 = "), "{}", r.out);
    assert!(w.path("model.ckpt").exists());
    let h = fs::read_to_string(w.path("history.tsv")).unwrap();
    assert_eq!(h.lines().count(), 3);
    assert!(h.lines().all(|l| l.split('\t').count() == 5));
}

#[test]
fn same_seed_same_history() {
    let w = Workspace::new("");
    assert_eq!(w.train().code, EXIT_OK);
    let a = fs::read_to_string(w.path("history.tsv")).unwrap();
    let ck_a = fs::read(w.path("model.ckpt")).unwrap();
    assert_eq!(w.train().code, EXIT_OK);
    let b = fs::read_to_string(w.path("history.tsv")).unwrap();
    assert_eq!(without_seconds(&a), without_seconds(&b));
    assert_eq!(ck_a, fs::read(w.path("model.ckpt")).unwrap());

    let r = lmcrf(&["train", "--config", &w.p("run.cfg"), "--seed", "6"]);
    assert_eq!(r.code, EXIT_OK);
    let c = fs::read_to_string(w.path("history.tsv")).unwrap();
    assert_ne!(without_seconds(&a), without_seconds(&c));
}

#[test]
fn override_wins_over_file() {
    let w = Workspace::new("");
    let r = lmcrf(&["train", "--config", &w.p("run.cfg"), "--override", "max_epochs=1"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(fs::read_to_string(w.path("history.tsv")).unwrap().lines().count(), 1);
}

#[test]
fn usage_errors_stop_before_training() {
    let w = Workspace::new("");
    let no_dev = w.config("nodev.cfg", "");
    fs::write(&no_dev, fs::read_to_string(&no_dev).unwrap().replace("dev = dev.txt\n", "")).unwrap();
    let r = lmcrf(&["train", "--config", &no_dev]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("dev"), "{}", r.err);
    assert!(!w.path("model.ckpt").exists());

    let bad = w.config("bad.cfg", "word_sate = 3\n");
    let r = lmcrf(&["train", "--config", &bad]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("word_sate"), "{}", r.err);

    let r = lmcrf(&["train", "--config", &w.p("run.cfg"), "--override", "nonsense"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert_eq!(lmcrf(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(lmcrf(&["train"]).code, EXIT_USAGE);
    assert_eq!(lmcrf(&["--help"]).code, EXIT_OK);
    assert!(!w.path("model.ckpt").exists());
}

#[test]
fn corpus_errors_report_location() {
    let w = Workspace::new("");
    fs::write(w.path("train.txt"), "Ada S-PER\nlonely\n").unwrap();
    let r = w.train();
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("train.txt:2"), "{}", r.err);
}

fn line_count(s: &str) -> usize {
    s.lines().count()
}

#[test]
fn tag_preserves_layout() {
    let w = Workspace::new("");
    assert_eq!(w.train().code, EXIT_OK);
    let input = "-DOCSTART- -X- O\n\nAda\nmet\nOslo today\n\n\njohn x y\n";
    fs::write(w.path("in.txt"), input).unwrap();
    let r = lmcrf(&["tag", "--config", &w.p("run.cfg"), "--input", &w.p("in.txt"), "--output", &w.p("out.txt")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let out = fs::read_to_string(w.path("out.txt")).unwrap();
    assert_eq!(line_count(&out), line_count(input));
    assert_eq!(fs::read_to_string(w.path("in.txt")).unwrap(), input);
    for (a, b) in input.lines().zip(out.lines()) {
        if a.trim().is_empty() || a.starts_with("-DOCSTART-") {
            assert_eq!(a, b);
        } else {
            assert!(b.starts_with(a) && b.split_whitespace().count() == a.split_whitespace().count() + 1, "{b}");
        }
    }

    fs::write(w.path("empty.txt"), "").unwrap();
    let r = lmcrf(&["tag", "--config", &w.p("run.cfg"), "--input", &w.p("empty.txt"), "--output", &w.p("e.out")]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(fs::read_to_string(w.path("e.out")).unwrap(), "");
}

#[test]
fn tag_refuses_mismatched_config() {
    let w = Workspace::new("");
    assert_eq!(w.train().code, EXIT_OK);
    fs::write(w.path("in.txt"), "Ada\n").unwrap();
    let other = w.config("other.cfg", "word_state = 9\n");
    let r = lmcrf(&["tag", "--config", &other, "--input", &w.p("in.txt"), "--output", &w.p("o.txt")]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("word_state"), "{}", r.err);
    assert!(!w.path("o.txt").exists());
}

fn summary(out: &str) -> Vec<(String, String)> {
    out.lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn field(s: &[(String, String)], k: &str) -> f64 {
    s.iter().find(|(key, _)| key == k).unwrap().1.parse().unwrap()
}

#[test]
fn eval_reports() {
    let w = Workspace::new("");
    assert_eq!(w.train().code, EXIT_OK);
    let r = lmcrf(&["eval", "--config", &w.p("run.cfg"), "--gold", &w.p("dev.txt")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let s = summary(&r.out);
    assert_eq!(s[0], ("metric".into(), "f1".into()));
    let (p, rc, f) = (field(&s, "precision"), field(&s, "recall"), field(&s, "f1"));
    assert!([p, rc, f].iter().all(|x| (0.0..=1.0).contains(x)));
    assert!(f == 0.0 || (f >= p.min(rc) - 1e-12 && f <= p.max(rc) + 1e-12));
    assert!(r.out.contains("processed "), "{}", r.out);

    let r = lmcrf(&["eval", "--config", &w.p("run.cfg"), "--gold", &w.p("dev.txt"), "--predicted", &w.p("dev.txt")]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(field(&summary(&r.out), "f1"), 1.0);

    let acc = w.config("acc.cfg", "metric = accuracy\n");
    let r = lmcrf(&["eval", "--config", &acc, "--gold", &w.p("dev.txt")]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.starts_with("metric=accuracy accuracy="), "{}", r.out);
}

#[test]
fn eval_refuses_unknown_labels() {
    let w = Workspace::new("");
    assert_eq!(w.train().code, EXIT_OK);
    fs::write(w.path("gold.txt"), "Ada S-ORG\n").unwrap();
    let r = lmcrf(&["eval", "--config", &w.p("run.cfg"), "--gold", &w.p("gold.txt")]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("S-ORG"), "{}", r.err);
}

#[test]
fn missing_checkpoint_is_data_error() {
    let w = Workspace::new("");
    fs::write(w.path("in.txt"), "Ada\n").unwrap();
    let r = lmcrf(&["tag", "--config", &w.p("run.cfg"), "--input", &w.p("in.txt"), "--output", &w.p("o.txt")]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(Path::new(&w.p("in.txt")).exists());
}

#[test]
fn binary_exit_status() {
    let w = Workspace::new("");
    let bad = w.config("bad.cfg", "unknown_key = 1\n");
    let st = std::process::Command::new(env!("CARGO_BIN_EXE_lmcrf"))
        .args(["train", "--config", &bad])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&st.stderr).contains("unknown_key"));
}
