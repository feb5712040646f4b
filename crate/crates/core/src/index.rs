//! Inverted index with the corpus statistics BM25 needs, and its on-disk form.
//!
//! File layout (one JSON value per line):
//!
//! ```text
//! {"fmt":"addr-idx","version":1,"n_docs":3,"avg_len":2.0,"digest":"…","doc_len":[2,2,2]}
//! {"term":"blue","postings":[[1,1]]}
//! …
//! {"checksum":"<sha256 of every preceding byte>"}
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analyzer::Analyzer;
use crate::corpus::Corpus;

pub const FORMAT_NAME: &str = "addr-idx";
pub const FORMAT_VERSION: u32 = 1;

const CHECKSUM_PREFIX: &[u8] = b"{\"checksum\":\"";
const CHECKSUM_SUFFIX: &[u8] = b"\"}";

/// Position of a record in its corpus.
pub type DocId = u32;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index from an empty corpus")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: DocId,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_len: Vec<u32>,
    avg_len: f64,
    analyzer_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    fmt: String,
    version: u32,
    n_docs: u32,
    avg_len: f64,
    digest: String,
    doc_len: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(DocId, u32)>,
}

impl InvertedIndex {
    /// Indexes `full_address` of every record with `analyzer`.
    pub fn build(corpus: &Corpus, analyzer: &Analyzer) -> Result<Self, IndexError> {
        let docs = corpus
            .records()
            .iter()
            .map(|r| analyzer.tokenize(&r.full_address));
        Self::from_documents(docs, analyzer.config_digest())
    }

    /// Builds from already-analyzed documents, one token sequence per doc.
    pub fn from_documents<D, T>(docs: D, analyzer_digest: String) -> Result<Self, IndexError>
    where
        D: IntoIterator<Item = Vec<T>>,
        T: AsRef<str>,
    {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_len = Vec::new();
        for (doc, tokens) in docs.into_iter().enumerate() {
            let doc = DocId::try_from(doc).expect("more documents than DocId can address");
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
            for (term, tf) in counts {
                // Docs are visited in id order, so each list stays sorted.
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { doc, tf });
            }
            doc_len.push(tokens.len() as u32);
        }
        if doc_len.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let avg_len = mean_len(&doc_len);
        Ok(InvertedIndex {
            postings,
            doc_len,
            avg_len,
            analyzer_digest,
        })
    }

    pub fn n_docs(&self) -> u32 {
        self.doc_len.len() as u32
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, doc: DocId) -> Option<u32> {
        self.doc_len.get(doc as usize).copied()
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_len
    }

    /// Number of documents containing `term`.
    pub fn df(&self, term: &str) -> u32 {
        self.postings.get(term).map_or(0, |p| p.len() as u32)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn tf(&self, term: &str, doc: DocId) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings
            .iter()
            .map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn analyzer_digest(&self) -> &str {
        &self.analyzer_digest
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = HashingWriter {
            inner: out,
            hasher: Sha256::new(),
        };
        let header = Header {
            fmt: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            n_docs: self.n_docs(),
            avg_len: self.avg_len,
            digest: self.analyzer_digest.clone(),
            doc_len: self.doc_len.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (term, list) in &self.postings {
            let line = TermLine {
                term: term.clone(),
                postings: list.iter().map(|p| (p.doc, p.tf)).collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        let sum = hex::encode(out.hasher.finalize_reset());
        let mut inner = out.inner;
        inner.write_all(CHECKSUM_PREFIX)?;
        inner.write_all(sum.as_bytes())?;
        inner.write_all(CHECKSUM_SUFFIX)?;
        inner.write_all(b"\n")?;
        inner.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let io = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        self.write_to(std::io::BufWriter::new(file)).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Integrity is checked before anything else is trusted, including the
    /// version field.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let corrupt = |msg: &str| IndexError::CorruptFile(msg.to_string());
        let body = verify_checksum(bytes)?;
        let text = std::str::from_utf8(body).map_err(|_| corrupt("not UTF-8"))?;
        let mut lines = text.lines();

        let header: Value = lines
            .next()
            .and_then(|l| serde_json::from_str(l).ok())
            .ok_or_else(|| corrupt("missing header"))?;
        if header.get("fmt").and_then(Value::as_str) != Some(FORMAT_NAME) {
            return Err(corrupt("not an address index"));
        }
        match header.get("version").and_then(Value::as_u64) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(found) => {
                return Err(IndexError::VersionMismatch {
                    found,
                    expected: FORMAT_VERSION,
                })
            }
            None => return Err(corrupt("missing version")),
        }
        let header: Header = serde_json::from_value(header).map_err(|_| corrupt("bad header"))?;
        if header.n_docs as usize != header.doc_len.len() || header.doc_len.is_empty() {
            return Err(corrupt("document count disagrees with length table"));
        }
        if mean_len(&header.doc_len).to_bits() != header.avg_len.to_bits() {
            return Err(corrupt("average length disagrees with length table"));
        }

        let mut postings = BTreeMap::new();
        let mut previous: Option<String> = None;
        for line in lines {
            let TermLine {
                term,
                postings: list,
            } = serde_json::from_str(line).map_err(|_| corrupt("bad term line"))?;
            if previous.as_ref().is_some_and(|p| *p >= term) {
                return Err(corrupt("terms out of order"));
            }
            let ok = !list.is_empty()
                && list.windows(2).all(|w| w[0].0 < w[1].0)
                && list.iter().all(|&(d, tf)| tf >= 1 && d < header.n_docs);
            if !ok {
                return Err(corrupt("invalid postings list"));
            }
            let list = list
                .into_iter()
                .map(|(doc, tf)| Posting { doc, tf })
                .collect();
            previous = Some(term.clone());
            postings.insert(term, list);
        }
        Ok(InvertedIndex {
            postings,
            doc_len: header.doc_len,
            avg_len: header.avg_len,
            analyzer_digest: header.digest,
        })
    }
}

fn mean_len(doc_len: &[u32]) -> f64 {
    let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
    total as f64 / doc_len.len() as f64
}

/// Returns the body preceding the checksum line if it hashes correctly.
fn verify_checksum(bytes: &[u8]) -> Result<&[u8], IndexError> {
    let corrupt = |msg: &str| IndexError::CorruptFile(msg.to_string());
    let without_nl = bytes
        .strip_suffix(b"\n")
        .ok_or_else(|| corrupt("truncated"))?;
    let split = without_nl
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |i| i + 1);
    let (body, last) = without_nl.split_at(split);
    let hex_sum = last
        .strip_prefix(CHECKSUM_PREFIX)
        .and_then(|r| r.strip_suffix(CHECKSUM_SUFFIX))
        .ok_or_else(|| corrupt("missing checksum line"))?;
    let actual = hex::encode(Sha256::digest(body));
    if hex_sum != actual.as_bytes() {
        return Err(corrupt("checksum mismatch"));
    }
    Ok(body)
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}
