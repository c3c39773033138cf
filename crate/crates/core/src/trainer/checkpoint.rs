//! Binary checkpoints.
//!
//! Layout: the 8-byte magic, a UTF-8 header of `key = value` lines ending in
//! `end_header`, the tensor data as little-endian `f64`, and a little-endian
//! `u64` footer holding the data length in bytes. The header names every
//! tensor with its shape and element offset, so files describe themselves.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;

use super::OptimizerState;
use crate::corpus::{Vocabs, Vocabulary, START_LABEL, UNK_CHAR, UNK_WORD};
use crate::model::{LmLstmCrf, ModelConfig};
use crate::nn_core::Rng;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LMLCRF01";
const END: &str = "end_header";
const VELOCITY: &str = "velocity/";

/// A restored model plus the optimizer state saved with it, if any.
#[derive(Debug)]
pub struct Checkpoint {
    pub model: LmLstmCrf,
    pub optimizer: Option<OptimizerState>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::Integrity(format!("bad escape \\{other:?} in header"))),
        }
    }
    Ok(out)
}

/// Serialize `model` (and optionally `optimizer`) into `w`.
pub fn write_checkpoint<W: Write>(mut w: W, model: &LmLstmCrf, optimizer: Option<&OptimizerState>) -> Result<()> {
    let c = &model.config;
    let mut h = String::new();
    let _ = writeln!(h, "config.char_emb_dim = {}", c.char_emb_dim);
    let _ = writeln!(h, "config.char_state = {}", c.char_state);
    let _ = writeln!(h, "config.word_emb_dim = {}", c.word_emb_dim);
    let _ = writeln!(h, "config.word_state = {}", c.word_state);
    let _ = writeln!(h, "config.highway_depth = {}", c.highway_depth);
    let _ = writeln!(h, "config.lambda = {}", c.lambda);
    let _ = writeln!(h, "config.enable_lm = {}", c.enable_lm);
    let _ = writeln!(h, "config.enable_highway = {}", c.enable_highway);
    let _ = writeln!(h, "config.dropout = {}", c.dropout);
    let _ = writeln!(h, "config.char_dropout = {}", c.char_dropout);
    let _ = writeln!(h, "config.constrained_decoding = {}", c.constrained_decoding);
    for (kind, v) in [
        ("words", &model.vocabs.words),
        ("chars", &model.vocabs.chars),
        ("labels", &model.vocabs.labels),
    ] {
        let _ = writeln!(h, "vocab.{kind}.count = {}", v.len());
        for (i, t) in v.tokens().iter().enumerate() {
            let _ = writeln!(h, "vocab.{kind}.{i} = {}", escape(t));
        }
    }

    let mut tensors: Vec<(String, &[usize], &[f64])> = model
        .store
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.tensor.shape(), p.tensor.data()))
        .collect();
    if let Some(o) = optimizer {
        if o.velocities.len() != model.store.len() {
            return Err(Error::Shape(format!(
                "{} velocity buffers for {} parameters",
                o.velocities.len(),
                model.store.len()
            )));
        }
        let _ = writeln!(h, "optimizer.lr0 = {}", o.lr0);
        let _ = writeln!(h, "optimizer.decay = {}", o.decay);
        let _ = writeln!(h, "optimizer.momentum = {}", o.momentum);
        let _ = writeln!(h, "optimizer.epoch = {}", o.epoch);
        for (p, v) in model.store.params().iter().zip(&o.velocities) {
            tensors.push((format!("{VELOCITY}{}", p.name), p.tensor.shape(), v));
        }
    }
    let _ = writeln!(h, "tensor.count = {}", tensors.len());
    let mut offset = 0;
    for (i, (name, shape, data)) in tensors.iter().enumerate() {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        let _ = writeln!(h, "tensor.{i} = {name} {} {offset}", dims.join("x"));
        offset += data.len();
    }
    h.push_str(END);
    h.push('\n');

    let mut bytes = Vec::with_capacity(MAGIC.len() + h.len() + 8 * offset + 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(h.as_bytes());
    for (_, _, data) in &tensors {
        for x in data.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    bytes.extend_from_slice(&((8 * offset) as u64).to_le_bytes());
    w.write_all(&bytes).map_err(|e| Error::io("writing checkpoint", e))
}

pub fn save_checkpoint(path: &Path, model: &LmLstmCrf, optimizer: Option<&OptimizerState>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model, optimizer)?;
    fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

struct Header {
    fields: HashMap<String, String>,
}

impl Header {
    fn raw(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Integrity(format!("header is missing {key}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| Error::Integrity(format!("header field {key} has bad value {v:?}")))
    }

    fn vocab(&self, kind: &str, unk: Option<&str>, lowercase: bool) -> Result<Vocabulary> {
        let n: usize = self.parse(&format!("vocab.{kind}.count"))?;
        let tokens = (0..n)
            .map(|i| unescape(self.raw(&format!("vocab.{kind}.{i}"))?))
            .collect::<Result<Vec<_>>>()?;
        Vocabulary::from_tokens(tokens, unk, lowercase).map_err(|e| Error::Integrity(e.to_string()))
    }
}

/// Parse a checkpoint. Nothing is returned unless every check passes.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("reading checkpoint", e))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Version(format!(
            "not a checkpoint of this format (expected magic {:?})",
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let rest = &bytes[MAGIC.len()..];
    // anchored at a line start so a vocabulary token cannot end the header
    let marker = format!("\n{END}\n");
    let header_len = rest
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| Error::Integrity("truncated header".into()))?
        + marker.len();
    let text = std::str::from_utf8(&rest[..header_len])
        .map_err(|_| Error::Integrity("header is not UTF-8".into()))?;
    let mut fields = HashMap::new();
    for line in text.lines().filter(|l| *l != END) {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Integrity(format!("malformed header line {line:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let h = Header { fields };

    let n: usize = h.parse("tensor.count")?;
    let mut manifest = Vec::with_capacity(n);
    let mut total = 0usize;
    for i in 0..n {
        let line = h.raw(&format!("tensor.{i}"))?;
        let bad = || Error::Integrity(format!("malformed tensor entry {line:?}"));
        let mut parts = line.split(' ');
        let name = parts.next().ok_or_else(bad)?.to_string();
        let shape = parts
            .next()
            .ok_or_else(bad)?
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let offset: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if offset != total || parts.next().is_some() {
            return Err(bad());
        }
        total += shape.iter().product::<usize>();
        manifest.push((name, shape, offset));
    }

    let body = &rest[header_len..];
    let data_bytes = 8 * total;
    if body.len() != data_bytes + 8 {
        return Err(Error::Integrity(format!(
            "expected {} bytes after the header, found {}",
            data_bytes + 8,
            body.len()
        )));
    }
    let footer = u64::from_le_bytes(body[data_bytes..].try_into().expect("8 bytes"));
    if footer != data_bytes as u64 {
        return Err(Error::Integrity(format!("length footer {footer} does not match {data_bytes}")));
    }
    let values: Vec<f64> = body[..data_bytes]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let config = ModelConfig {
        char_emb_dim: h.parse("config.char_emb_dim")?,
        char_state: h.parse("config.char_state")?,
        word_emb_dim: h.parse("config.word_emb_dim")?,
        word_state: h.parse("config.word_state")?,
        highway_depth: h.parse("config.highway_depth")?,
        lambda: h.parse("config.lambda")?,
        enable_lm: h.parse("config.enable_lm")?,
        enable_highway: h.parse("config.enable_highway")?,
        dropout: h.parse("config.dropout")?,
        char_dropout: h.parse("config.char_dropout")?,
        constrained_decoding: h.parse("config.constrained_decoding")?,
    };
    let vocabs = Vocabs {
        words: h.vocab("words", Some(UNK_WORD), true)?,
        chars: h.vocab("chars", Some(UNK_CHAR), false)?,
        labels: h.vocab("labels", None, false)?,
    };
    if vocabs.labels.tokens().last().map(String::as_str) != Some(START_LABEL) {
        return Err(Error::Integrity("label vocabulary does not end with the start label".into()));
    }
    let mut model = LmLstmCrf::new(config, vocabs, &mut Rng::seed_from_u64(0))
        .map_err(|e| Error::Integrity(format!("stored configuration rejected: {e}")))?;

    let slices: HashMap<&str, (&[usize], &[f64])> = manifest
        .iter()
        .map(|(name, shape, off)| {
            let len = shape.iter().product::<usize>();
            (name.as_str(), (shape.as_slice(), &values[*off..*off + len]))
        })
        .collect();
    let lookup = |name: &str, shape: &[usize]| -> Result<&[f64]> {
        let (s, d) = slices
            .get(name)
            .ok_or_else(|| Error::Integrity(format!("tensor {name} missing")))?;
        if *s != shape {
            return Err(Error::Integrity(format!("tensor {name} has shape {s:?}, expected {shape:?}")));
        }
        Ok(d)
    };

    let has_optimizer = h.fields.contains_key("optimizer.lr0");
    let expected = model.store.len() * if has_optimizer { 2 } else { 1 };
    if manifest.len() != expected {
        return Err(Error::Integrity(format!("{} tensors stored, expected {expected}", manifest.len())));
    }
    let mut velocities = Vec::new();
    for p in model.store.params_mut() {
        let shape = p.tensor.shape().to_vec();
        p.tensor.data_mut().copy_from_slice(lookup(&p.name, &shape)?);
        if has_optimizer {
            velocities.push(lookup(&format!("{VELOCITY}{}", p.name), &shape)?.to_vec());
        }
    }
    let optimizer = if has_optimizer {
        Some(OptimizerState {
            lr0: h.parse("optimizer.lr0")?,
            decay: h.parse("optimizer.decay")?,
            momentum: h.parse("optimizer.momentum")?,
            velocities,
            epoch: h.parse("optimizer.epoch")?,
        })
    } else {
        None
    };
    Ok(Checkpoint { model, optimizer })
}
