//! File formats through which embeddings, labels, logits and scores enter and
//! leave the toolkit.
//!
//! Embeddings use the LEB1 binary layout:
//!
//! ```text
//! "LEB1" | u32 LE header length | UTF-8 JSON header | n*L*d f32 LE values
//! ```
//!
//! The header is `{"n":…, "L":…, "d":…, "dtype":"f32", "pooling":"cls"|"avg", "ids":[…]}`
//! and the payload is ordered `[sample][layer][dim]`. Layer 1 is the first
//! encoder layer, layer `L` the top one.
//!
//! Labels and logits are JSON-lines; scores are a two-column CSV.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

pub const LEB1_MAGIC: &[u8; 4] = b"LEB1";

/// How token embeddings were reduced to one vector per layer at extraction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Cls,
    Avg,
}

/// `n` samples x `L` layers x `d` dims of sequence-level embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    layers: usize,
    dim: usize,
    pooling: Pooling,
    data: Vec<f32>,
}

impl EmbeddingSet {
    /// Builds a set after checking every invariant: shape, finiteness and id uniqueness.
    pub fn new(
        ids: Vec<String>,
        layers: usize,
        dim: usize,
        pooling: Pooling,
        data: Vec<f32>,
    ) -> Result<Self> {
        if ids.is_empty() || layers == 0 || dim == 0 {
            bail!(
                Invariant,
                "n, L and d must all be >= 1 (got n={}, L={layers}, d={dim})",
                ids.len()
            );
        }
        let expected = ids
            .len()
            .checked_mul(layers)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::Invariant("n*L*d overflows".into()))?;
        if data.len() != expected {
            bail!(
                Invariant,
                "data has {} values, expected n*L*d = {expected}",
                data.len()
            );
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let d = dim;
            let l = layers;
            bail!(
                Invariant,
                "non-finite value {} at sample {}, layer {}, dim {}",
                data[pos],
                pos / (l * d),
                (pos / d) % l + 1,
                pos % d
            );
        }
        check_unique(ids.iter().map(String::as_str))?;
        Ok(Self {
            ids,
            layers,
            dim,
            pooling,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// All layers of sample `i`, concatenated (`L*d` values).
    pub fn sample(&self, i: usize) -> &[f32] {
        let stride = self.layers * self.dim;
        &self.data[i * stride..(i + 1) * stride]
    }

    /// Vector of sample `i` at 1-based `layer`.
    pub fn vector(&self, i: usize, layer: usize) -> &[f32] {
        debug_assert!(layer >= 1 && layer <= self.layers);
        let start = (i * self.layers + layer - 1) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Returns a copy with every value mapped through `f` (must keep values finite).
    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(
            self.ids.clone(),
            self.layers,
            self.dim,
            self.pooling,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Leb1Header {
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    d: usize,
    dtype: String,
    pooling: Pooling,
    ids: Vec<String>,
}

pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut sink: W) -> Result<()> {
    if set.data.iter().any(|v| !v.is_finite()) {
        bail!(Invariant, "refusing to write non-finite embedding values");
    }
    let header = Leb1Header {
        n: set.len(),
        layers: set.layers,
        d: set.dim,
        dtype: "f32".into(),
        pooling: set.pooling,
        ids: set.ids.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header.len())
        .map_err(|_| Error::Format("LEB1 header exceeds 4 GiB".into()))?;
    sink.write_all(LEB1_MAGIC)?;
    sink.write_all(&header_len.to_le_bytes())?;
    sink.write_all(&header)?;
    let mut buf = Vec::with_capacity(set.data.len().min(1 << 20) * 4);
    for chunk in set.data.chunks(1 << 20) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut source: R) -> Result<EmbeddingSet> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut source, &mut magic, "magic")?;
    if &magic != LEB1_MAGIC {
        bail!(Format, "bad magic {:?}, expected \"LEB1\"", magic);
    }
    let mut len = [0u8; 4];
    read_exact_or(&mut source, &mut len, "header length")?;
    let len = u32::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    read_exact_or(&mut source, &mut header, "header")?;
    let header: Leb1Header = serde_json::from_slice(&header)
        .map_err(|e| Error::Format(format!("invalid LEB1 header: {e}")))?;
    if header.dtype != "f32" {
        bail!(Format, "unsupported dtype {:?}", header.dtype);
    }
    if header.ids.len() != header.n {
        bail!(
            Format,
            "header declares n={} but lists {} ids",
            header.n,
            header.ids.len()
        );
    }
    let count = header
        .n
        .checked_mul(header.layers)
        .and_then(|v| v.checked_mul(header.d))
        .ok_or_else(|| Error::Format("n*L*d overflows".into()))?;
    let mut data = Vec::with_capacity(count);
    let mut buf = vec![0u8; 4 * count.min(1 << 20)];
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(1 << 20);
        let bytes = &mut buf[..take * 4];
        read_exact_or(&mut source, bytes, "payload")
            .map_err(|_| Error::Format(format!("payload truncated: expected {count} values")))?;
        data.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        remaining -= take;
    }
    let mut probe = [0u8; 1];
    if source.read(&mut probe)? != 0 {
        bail!(Format, "trailing bytes after payload of {count} values");
    }
    EmbeddingSet::new(header.ids, header.layers, header.d, header.pooling, data)
}

fn read_exact_or<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("unexpected end of file in {what}")),
        _ => Error::Io(e),
    })
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            bail!(Invariant, "duplicate id {id:?}");
        }
    }
    Ok(())
}

/// Ground-truth domain of a sample, also the output of a thresholded detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    In,
    Out,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::In => "in",
            Domain::Out => "out",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    id: String,
    label: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelEntry {
    pub label: Domain,
    pub text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    entries: IndexMap<String, LabelEntry>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, label: Domain, text: Option<String>) -> Result<()> {
        let id = id.into();
        if self.entries.contains_key(&id) {
            bail!(Invariant, "duplicate id {id:?}");
        }
        self.entries.insert(id, LabelEntry { label, text });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Domain> {
        self.entries.get(id).map(|e| e.label)
    }

    pub fn entry(&self, id: &str) -> Option<&LabelEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LabelEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn read_labels<R: Read>(source: R) -> Result<LabelSet> {
    let mut set = LabelSet::new();
    for_each_json_line(source, |line: LabelLine| set.insert(line.id, line.label, line.text))?;
    Ok(set)
}

pub fn write_labels<W: Write>(set: &LabelSet, mut sink: W) -> Result<()> {
    for (id, entry) in set.iter() {
        let line = LabelLine {
            id: id.to_owned(),
            label: entry.label,
            text: entry.text.clone(),
        };
        serde_json::to_writer(&mut sink, &line)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitLine {
    id: String,
    logits: Vec<f64>,
}

/// Classifier logits per sample; every vector has the same length `K >= 2`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogitSet {
    entries: IndexMap<String, Vec<f64>>,
}

impl LogitSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, logits: Vec<f64>) -> Result<()> {
        let id = id.into();
        if logits.len() < 2 {
            bail!(Invariant, "sample {id:?} has {} logits, need at least 2", logits.len());
        }
        if let Some(k) = self.classes() {
            if logits.len() != k {
                bail!(
                    Invariant,
                    "sample {id:?} has {} logits but the set has K={k}",
                    logits.len()
                );
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            bail!(Invariant, "sample {id:?} has a non-finite logit");
        }
        if self.entries.contains_key(&id) {
            bail!(Invariant, "duplicate id {id:?}");
        }
        self.entries.insert(id, logits);
        Ok(())
    }

    /// Number of classes `K`, or `None` for an empty set.
    pub fn classes(&self) -> Option<usize> {
        self.entries.values().next().map(Vec::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn read_logits<R: Read>(source: R) -> Result<LogitSet> {
    let mut set = LogitSet::new();
    for_each_json_line(source, |line: LogitLine| set.insert(line.id, line.logits))?;
    Ok(set)
}

pub fn write_logits<W: Write>(set: &LogitSet, mut sink: W) -> Result<()> {
    for (id, logits) in set.iter() {
        let line = LogitLine {
            id: id.to_owned(),
            logits: logits.to_vec(),
        };
        serde_json::to_writer(&mut sink, &line)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

fn for_each_json_line<R, T, F>(source: R, mut f: F) -> Result<()>
where
    R: Read,
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> Result<()>,
{
    for (lineno, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: T = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        f(parsed).map_err(|e| match e {
            Error::Invariant(msg) => Error::Invariant(format!("line {}: {msg}", lineno + 1)),
            other => other,
        })?;
    }
    Ok(())
}

/// Anomaly score per sample; higher means more likely out-of-domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    entries: IndexMap<String, f64>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, score: f64) -> Result<()> {
        let id = id.into();
        if !score.is_finite() {
            bail!(Invariant, "score for {id:?} is not finite ({score})");
        }
        if self.entries.contains_key(&id) {
            bail!(Invariant, "duplicate id {id:?}");
        }
        self.entries.insert(id, score);
        Ok(())
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut set = Self::new();
        for (id, score) in pairs {
            set.insert(id, score)?;
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_scores<W: Write>(set: &ScoreSet, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "score"])?;
    for (id, score) in set.iter() {
        w.write_record([id, &format_score(score)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(source: R) -> Result<ScoreSet> {
    let mut r = csv::Reader::from_reader(source);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "score" {
        bail!(Format, "expected header \"id,score\", got {:?}", headers);
    }
    let mut set = ScoreSet::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let score: f64 = record[1]
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("row {}: bad score {:?}: {e}", i + 1, &record[1])))?;
        set.insert(&record[0], score)?;
    }
    Ok(set)
}
