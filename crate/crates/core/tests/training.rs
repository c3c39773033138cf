mod common;

use lm_lstm_crf::corpus::build_vocab;
use lm_lstm_crf::model::LmLstmCrf;
use lm_lstm_crf::nn_core::Rng;
use lm_lstm_crf::trainer::{
    evaluate, load_checkpoint, read_checkpoint, save_checkpoint, train_loop, write_checkpoint, Metric,
    OptimizerState, TrainConfig, MAGIC,
};
use lm_lstm_crf::Error;
use rand::SeedableRng;

fn setup(state: usize) -> (LmLstmCrf, Vec<lm_lstm_crf::corpus::LabeledSentence>) {
    let corpus = common::ner_corpus();
    let vocabs = build_vocab(&corpus, 1).unwrap();
    let m = LmLstmCrf::new(common::small_config(state), vocabs, &mut Rng::seed_from_u64(1)).unwrap();
    (m, corpus)
}

#[test]
fn epoch_bookkeeping() {
    let (mut m, corpus) = setup(8);
    let (train, dev) = corpus.split_at(16);
    let cfg = TrainConfig { max_epochs: 3, batch_size: 10, ..TrainConfig::default() };
    let out = train_loop(&mut m, train, dev, &cfg).unwrap();
    assert_eq!(out.history.len(), 3);
    for (t, r) in out.history.iter().enumerate() {
        assert_eq!(r.epoch, t + 1);
        assert_eq!(r.steps, 2);
        assert_eq!(r.lr, 0.01 / (1.0 + 0.05 * t as f64));
        assert!(r.train_loss.is_finite() && r.train_loss > 0.0);
    }
    assert_eq!(out.optimizer.epoch, out.best_epoch);
}

#[test]
fn frozen_metric_stops_after_patience() {
    let (mut m, corpus) = setup(8);
    let cfg = TrainConfig { lr0: 1e-300, patience: 3, ..TrainConfig::default() };
    let out = train_loop(&mut m, &corpus[..4], &corpus[4..8], &cfg).unwrap();
    assert_eq!(out.history.len(), 4);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn training_loss_falls() {
    let (mut m, corpus) = setup(16);
    let cfg = TrainConfig { max_epochs: 25, patience: 25, ..TrainConfig::default() };
    let out = train_loop(&mut m, &corpus, &corpus, &cfg).unwrap();
    let first = out.history[0].train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert!(last < 0.8 * first, "{first} -> {last}");
}

#[test]
fn non_finite_loss_names_the_batch() {
    let (mut m, corpus) = setup(8);
    let id = m.crf.bias;
    m.store.data_mut(id)[0] = f64::NAN;
    let err = train_loop(&mut m, &corpus, &corpus, &TrainConfig::default()).unwrap_err();
    match err {
        Error::Numeric(msg) => assert!(msg.contains("epoch 1, batch 0"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn best_checkpoint_reproduces_dev_metric() {
    let (mut m, corpus) = setup(12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    let (train, dev) = corpus.split_at(14);
    let cfg = TrainConfig {
        max_epochs: 5,
        checkpoint_path: Some(path.clone()),
        metric: Metric::Accuracy,
        ..TrainConfig::default()
    };
    let out = train_loop(&mut m, train, dev, &cfg).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.model, m);
    assert_eq!(ck.optimizer.as_ref(), Some(&out.optimizer));
    let metric = evaluate(&ck.model, dev, Metric::Accuracy, 2).unwrap();
    assert_eq!(metric, out.best_metric);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let (m, _) = setup(4);
    let opt = OptimizerState::new(&m.store, 0.01, 0.05, 0.9);
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &m, Some(&opt)).unwrap();
    assert!(read_checkpoint(&bytes[..]).is_ok());

    for cut in [bytes.len() - 1, bytes.len() - 8, bytes.len() / 2, MAGIC.len() + 3] {
        let e = read_checkpoint(&bytes[..cut]).unwrap_err();
        assert!(matches!(e, Error::Integrity(_)), "cut {cut}: {e:?}");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(matches!(read_checkpoint(&longer[..]).unwrap_err(), Error::Integrity(_)));

    let mut other = bytes.clone();
    other[7] = b'2';
    assert!(matches!(read_checkpoint(&other[..]).unwrap_err(), Error::Version(_)));
}

#[test]
fn checkpoint_without_optimizer() {
    let (m, _) = setup(4);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    save_checkpoint(&p, &m, None).unwrap();
    let ck = load_checkpoint(&p).unwrap();
    assert_eq!(ck.model, m);
    assert!(ck.optimizer.is_none());
    assert!(matches!(load_checkpoint(&dir.path().join("absent")), Err(Error::Io { .. })));
}

#[test]
fn header_lookalike_tokens_survive() {
    let corpus = vec![lm_lstm_crf::corpus::LabeledSentence::new(
        vec!["end_header".into(), "back\\slash".into(), "tensor.count".into()],
        vec!["O".into(), "S-X".into(), "O".into()],
    )
    .unwrap()];
    let vocabs = build_vocab(&corpus, 1).unwrap();
    let cfg = lm_lstm_crf::model::ModelConfig { char_dropout: true, ..common::small_config(3) };
    let m = LmLstmCrf::new(cfg, vocabs, &mut Rng::seed_from_u64(2)).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &m, None).unwrap();
    assert_eq!(read_checkpoint(&bytes[..]).unwrap().model, m);
}
