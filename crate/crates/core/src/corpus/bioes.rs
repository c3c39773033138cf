/// A labeled chunk covering words `start..=end`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Span {
            label: label.into(),
            start,
            end,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Prefix {
    B,
    I,
    E,
    S,
    O,
}

/// Split `B-PER` into its prefix and type. Labels without a recognised
/// prefix (including `O`) carry no span.
fn split(label: &str) -> (Prefix, &str) {
    let Some((p, ty)) = label.split_once('-') else {
        return (Prefix::O, "");
    };
    let prefix = match p {
        "B" => Prefix::B,
        "I" => Prefix::I,
        "E" => Prefix::E,
        "S" => Prefix::S,
        _ => return (Prefix::O, ""),
    };
    if ty.is_empty() {
        (Prefix::O, "")
    } else {
        (prefix, ty)
    }
}

/// Extract spans from any BIO/BIOES label sequence.
///
/// Spans open at `B-`/`S-` and close at `E-`/`S-`. An `I-` or `E-` that does
/// not continue an open span of the same type starts a new one, and `O` or a
/// type change closes the open span at the previous word. Never fails.
pub fn decode_bioes<S: AsRef<str>>(labels: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    let close = |open: &mut Option<(&str, usize)>, end: usize, spans: &mut Vec<Span>| {
        if let Some((ty, start)) = open.take() {
            spans.push(Span::new(ty, start, end));
        }
    };
    for (j, label) in labels.iter().enumerate() {
        let (prefix, ty) = split(label.as_ref());
        let continues = matches!(open, Some((t, _)) if t == ty);
        match prefix {
            Prefix::O => close(&mut open, j.wrapping_sub(1), &mut spans),
            Prefix::B => {
                close(&mut open, j.wrapping_sub(1), &mut spans);
                open = Some((ty, j));
            }
            Prefix::S => {
                close(&mut open, j.wrapping_sub(1), &mut spans);
                spans.push(Span::new(ty, j, j));
            }
            Prefix::I => {
                if !continues {
                    close(&mut open, j.wrapping_sub(1), &mut spans);
                    open = Some((ty, j));
                }
            }
            Prefix::E => {
                if !continues {
                    close(&mut open, j.wrapping_sub(1), &mut spans);
                    open = Some((ty, j));
                }
                close(&mut open, j, &mut spans);
            }
        }
    }
    close(&mut open, labels.len().wrapping_sub(1), &mut spans);
    spans
}

/// BIOES labels for `spans` over `n` words; uncovered words get `O`.
pub fn spans_to_bioes(spans: &[Span], n: usize) -> Vec<String> {
    let mut out = vec!["O".to_string(); n];
    for s in spans {
        write_span(&mut out, s);
    }
    out
}

fn write_span(out: &mut [String], s: &Span) {
    if s.start == s.end {
        out[s.start] = format!("S-{}", s.label);
    } else {
        out[s.start] = format!("B-{}", s.label);
        for l in &mut out[s.start + 1..s.end] {
            *l = format!("I-{}", s.label);
        }
        out[s.end] = format!("E-{}", s.label);
    }
}

/// Rewrite BIO (or IOB1, or BIOES) labels as BIOES. Labels without a span
/// prefix pass through unchanged.
pub fn encode_bioes<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    let mut out: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    for s in decode_bioes(labels) {
        write_span(&mut out, &s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_bioes(&["B-PER"]), ["S-PER"]);
        assert_eq!(
            encode_bioes(&["B-LOC", "I-LOC", "I-LOC"]),
            ["B-LOC", "I-LOC", "E-LOC"]
        );
        assert_eq!(encode_bioes(&["O", "I-ORG"]), ["O", "S-ORG"]);
        assert_eq!(encode_bioes(&["NN", "VBZ"]), ["NN", "VBZ"]);
    }

    #[test]
    fn encode_splits_adjacent_iob1_spans() {
        assert_eq!(
            encode_bioes(&["I-PER", "I-PER", "B-PER", "O"]),
            ["B-PER", "E-PER", "S-PER", "O"]
        );
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_bioes(&["B-PER", "E-PER", "O", "S-LOC"]),
            [Span::new("PER", 0, 1), Span::new("LOC", 3, 3)]
        );
        assert_eq!(
            decode_bioes(&["B-PER", "I-ORG"]),
            [Span::new("PER", 0, 0), Span::new("ORG", 1, 1)]
        );
        assert!(decode_bioes::<&str>(&[]).is_empty());
    }

    #[test]
    fn decode_repairs() {
        // unterminated span closes at the end / before O
        assert_eq!(decode_bioes(&["B-X", "I-X"]), [Span::new("X", 0, 1)]);
        assert_eq!(decode_bioes(&["B-X", "I-X", "O"]), [Span::new("X", 0, 1)]);
        // I after E starts a new span
        assert_eq!(
            decode_bioes(&["B-X", "E-X", "I-X"]),
            [Span::new("X", 0, 1), Span::new("X", 2, 2)]
        );
        // stray E is a single-word span
        assert_eq!(decode_bioes(&["O", "E-X"]), [Span::new("X", 1, 1)]);
        // malformed labels are outside
        assert_eq!(decode_bioes(&["B-", "Q-X", "weird"]), []);
    }
}
