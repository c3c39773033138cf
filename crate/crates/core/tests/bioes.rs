//! Span decoding against a line-by-line port of conlleval's chunk rules.

use lm_lstm_crf::corpus::{decode_bioes, encode_bioes, spans_to_bioes, Span};
use proptest::prelude::*;

fn split(label: &str) -> (&str, &str) {
    label.split_once('-').unwrap_or((label, ""))
}

fn end_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
    matches!(
        (prev_tag, tag),
        ("B", "B") | ("B", "S") | ("B", "O")
            | ("I", "B") | ("I", "S") | ("I", "O")
            | ("E", "E") | ("E", "I") | ("E", "O") | ("E", "S") | ("E", "B")
            | ("S", "E") | ("S", "I") | ("S", "O") | ("S", "S") | ("S", "B")
    ) || (prev_tag != "O" && prev_tag != "." && prev_type != ty)
}

fn start_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
    matches!(
        (prev_tag, tag),
        ("B", "B") | ("I", "B") | ("O", "B") | ("S", "B") | ("E", "B")
            | ("B", "S") | ("I", "S") | ("O", "S") | ("S", "S") | ("E", "S")
            | ("E", "E") | ("E", "I") | ("O", "E") | ("O", "I")
            | ("S", "E") | ("S", "I")
    ) || (tag != "O" && tag != "." && prev_type != ty)
}

fn conlleval_spans(labels: &[String]) -> Vec<Span> {
    let mut out = Vec::new();
    let (mut prev_tag, mut prev_type) = ("O", "");
    let mut open: Option<(usize, &str)> = None;
    for (i, l) in labels.iter().enumerate() {
        let (tag, ty) = split(l);
        if end_of_chunk(prev_tag, tag, prev_type, ty) {
            if let Some((s, t)) = open.take() {
                out.push(Span::new(t, s, i - 1));
            }
        }
        if start_of_chunk(prev_tag, tag, prev_type, ty) {
            open = Some((i, ty));
        }
        prev_tag = tag;
        prev_type = ty;
    }
    if let Some((s, t)) = open {
        out.push(Span::new(t, s, labels.len() - 1));
    }
    out
}

fn well_formed_label() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("O".to_string()),
        ("[BIES]", "PER|LOC").prop_map(|(p, t)| format!("{p}-{t}")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn agrees_with_conlleval(labels in prop::collection::vec(well_formed_label(), 0..14)) {
        prop_assert_eq!(decode_bioes(&labels), conlleval_spans(&labels));
    }

    #[test]
    fn arbitrary_strings_decode(labels in prop::collection::vec(".{0,6}", 0..12)) {
        let spans = decode_bioes(&labels);
        for w in spans.windows(2) {
            prop_assert!(w[0].end < w[1].start);
        }
        for s in &spans {
            prop_assert!(s.start <= s.end && s.end < labels.len());
        }
    }

    #[test]
    fn encode_is_idempotent(labels in prop::collection::vec(well_formed_label(), 0..14)) {
        let once = encode_bioes(&labels);
        prop_assert_eq!(encode_bioes(&once), once.clone());
        prop_assert_eq!(spans_to_bioes(&decode_bioes(&once), once.len()), once);
    }
}

#[test]
fn iob_input_converts() {
    let iob = ["B-PER", "I-PER", "O", "I-LOC", "B-LOC", "B-LOC"];
    assert_eq!(encode_bioes(&iob), ["B-PER", "E-PER", "O", "S-LOC", "S-LOC", "S-LOC"]);
}
