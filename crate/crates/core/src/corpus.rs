//! Tokenization, vocabulary construction and frequent-word subsampling.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::{mix64, unit_from_bits};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidEncoding { offset: usize },
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("subsampling threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("token id {id} out of range for vocabulary of {len} words")]
    UnknownTokenId { id: u32, len: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Tokens<'_> {
    Tokens { rest: text }
}

pub struct Tokens<'a> {
    rest: &'a str,
}

impl<'a> Iterator for Tokens<'a> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        let start = self.rest.find(char::is_alphanumeric)?;
        let tail = &self.rest[start..];
        let end = tail
            .find(|c: char| !c.is_alphanumeric())
            .unwrap_or(tail.len());
        let token = tail[..end].to_lowercase();
        self.rest = &tail[end..];
        Some(token)
    }
}

/// Validate a byte buffer as UTF-8, reporting the first bad offset.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str, CorpusError> {
    std::str::from_utf8(bytes).map_err(|e| CorpusError::InvalidEncoding {
        offset: e.valid_up_to(),
    })
}

/// Tokenize raw bytes, rejecting invalid encodings.
pub fn tokenize_bytes(bytes: &[u8]) -> Result<Vec<String>, CorpusError> {
    Ok(tokenize(decode_utf8(bytes)?).collect())
}

/// Read a corpus file as text, one document per line.
pub fn read_text(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_utf8(&bytes)?;
    // Validated above.
    Ok(String::from_utf8(bytes).expect("utf-8 validated"))
}

/// Word to id mapping with raw corpus frequencies.
///
/// Ids are assigned by descending count, ties broken lexicographically, so
/// the same counts always produce the same ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    total_tokens: u64,
    raw_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    /// Build from word counts. Words below `min_count` are dropped but still
    /// contribute to [`raw_tokens`](Self::raw_tokens).
    pub fn from_counts<I, S>(counts: I, min_count: u64) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        if min_count < 1 {
            return Err(CorpusError::InvalidMinCount);
        }
        let mut raw_tokens = 0;
        let mut kept: Vec<(String, u64)> = Vec::new();
        for (word, count) in counts {
            raw_tokens += count;
            if count >= min_count {
                kept.push((word.into(), count));
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Self::from_sorted(kept, min_count);
        vocab.raw_tokens = raw_tokens;
        Ok(vocab)
    }

    /// Build from words already in id order, e.g. when loading a file.
    pub(crate) fn from_sorted(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (id, (word, count)) in entries.into_iter().enumerate() {
            index.insert(word.clone(), id as u32);
            words.push(word);
            counts.push(count);
        }
        let total_tokens = counts.iter().sum();
        Vocabulary {
            words,
            counts,
            index,
            total_tokens,
            raw_tokens: total_tokens,
            min_count,
        }
    }

    /// A vocabulary over `words` with unknown frequencies (all zero).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = words.into_iter().map(|w| (w.into(), 0)).collect();
        Self::from_sorted(entries, 0)
    }

    /// Restore the pre-threshold token count recorded alongside a saved
    /// vocabulary.
    pub(crate) fn with_raw_tokens(mut self, raw_tokens: u64) -> Self {
        self.raw_tokens = raw_tokens;
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of retained-word counts.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Token count including words dropped by the frequency threshold.
    pub fn raw_tokens(&self) -> u64 {
        self.raw_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Relative frequency of `id` among retained tokens.
    pub fn frequency(&self, id: u32) -> f64 {
        self.counts[id as usize] as f64 / self.total_tokens as f64
    }
}

/// Mergeable token counter. Merging is commutative, so shards may be
/// counted in any order.
#[derive(Clone, Debug, Default)]
pub struct VocabCounter {
    counts: HashMap<String, u64>,
}

impl VocabCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, token: &str) {
        if let Some(c) = self.counts.get_mut(token) {
            *c += 1;
        } else {
            self.counts.insert(token.to_owned(), 1);
        }
    }

    pub fn add_text(&mut self, text: &str) {
        for token in tokenize(text) {
            *self.counts.entry(token).or_insert(0) += 1;
        }
    }

    pub fn merge(mut self, other: VocabCounter) -> VocabCounter {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (std::mem::take(&mut self.counts), other.counts)
        } else {
            (other.counts, std::mem::take(&mut self.counts))
        };
        for (word, count) in small {
            *big.entry(word).or_insert(0) += count;
        }
        VocabCounter { counts: big }
    }

    /// Count a multi-line text with one shard per line, in parallel.
    pub fn from_text_parallel(text: &str) -> VocabCounter {
        text.par_lines()
            .fold(VocabCounter::new, |mut acc, line| {
                acc.add_text(line);
                acc
            })
            .reduce(VocabCounter::new, VocabCounter::merge)
    }

    pub fn finish(self, min_count: u64) -> Result<Vocabulary, CorpusError> {
        Vocabulary::from_counts(self.counts, min_count)
    }
}

/// Build a vocabulary from a token stream.
pub fn build_vocab<I, S>(tokens: I, min_count: u64) -> Result<Vocabulary, CorpusError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counter = VocabCounter::new();
    for t in tokens {
        counter.add(t.as_ref());
    }
    counter.finish(min_count)
}

/// Token ids grouped into documents. Windows never cross a document
/// boundary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    ids: Vec<u32>,
    // Start offset of each document in `ids`, plus a final sentinel.
    bounds: Vec<usize>,
}

impl Corpus {
    /// A corpus made of one document.
    pub fn from_ids(ids: Vec<u32>) -> Self {
        let bounds = vec![0, ids.len()];
        Corpus { ids, bounds }
    }

    pub fn from_docs<I>(docs: I) -> Self
    where
        I: IntoIterator<Item = Vec<u32>>,
    {
        let mut corpus = Corpus {
            ids: Vec::new(),
            bounds: vec![0],
        };
        for doc in docs {
            corpus.push_doc(&doc);
        }
        corpus
    }

    fn push_doc(&mut self, doc: &[u32]) {
        if doc.is_empty() {
            return;
        }
        self.ids.extend_from_slice(doc);
        self.bounds.push(self.ids.len());
    }

    /// Map text to ids, one document per line; out-of-vocabulary tokens are
    /// dropped.
    pub fn from_text(text: &str, vocab: &Vocabulary) -> Self {
        let docs: Vec<Vec<u32>> = text
            .par_lines()
            .map(|line| tokenize(line).filter_map(|t| vocab.id(&t)).collect())
            .collect();
        Self::from_docs(docs)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn n_docs(&self) -> usize {
        self.bounds.len().saturating_sub(1)
    }

    pub fn doc(&self, i: usize) -> &[u32] {
        &self.ids[self.bounds[i]..self.bounds[i + 1]]
    }

    /// Documents with the global offset of their first token.
    pub fn docs(&self) -> impl Iterator<Item = (usize, &[u32])> + '_ {
        self.bounds
            .windows(2)
            .map(move |w| (w[0], &self.ids[w[0]..w[1]]))
    }

    /// The first `n` tokens, keeping document boundaries.
    pub fn truncated(&self, n: usize) -> Corpus {
        let mut out = Corpus::from_docs(std::iter::empty());
        for (_, doc) in self.docs() {
            let room = n - out.len();
            if room == 0 {
                break;
            }
            out.push_doc(&doc[..doc.len().min(room)]);
        }
        out
    }

    pub fn check_ids(&self, vocab_len: usize) -> Result<(), CorpusError> {
        match self.ids.iter().find(|&&id| id as usize >= vocab_len) {
            Some(&id) => Err(CorpusError::UnknownTokenId { id, len: vocab_len }),
            None => Ok(()),
        }
    }

    /// Subsample every document; token positions are global so the result
    /// does not depend on how documents are sharded.
    pub fn subsample(&self, subsampler: &Subsampler) -> Corpus {
        if subsampler.is_identity() {
            return self.clone();
        }
        let mut out = Corpus::from_docs(std::iter::empty());
        let mut buf = Vec::new();
        for (offset, doc) in self.docs() {
            buf.clear();
            buf.extend(
                doc.iter()
                    .enumerate()
                    .filter(|&(i, &id)| subsampler.keep(id, (offset + i) as u64))
                    .map(|(_, &id)| id),
            );
            out.push_doc(&buf);
        }
        out
    }
}

/// Frequent-word subsampling knob. `threshold == None` disables it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsampleParams {
    pub threshold: Option<f64>,
    pub seed: u64,
}

impl SubsampleParams {
    pub fn disabled() -> Self {
        SubsampleParams {
            threshold: None,
            seed: 0,
        }
    }

    pub fn new(threshold: f64, seed: u64) -> Result<Self, CorpusError> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(CorpusError::InvalidThreshold(threshold));
        }
        Ok(SubsampleParams {
            threshold: Some(threshold),
            seed,
        })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SubsampleParams { seed, ..self }
    }
}

/// Per-word keep probabilities with a counter-based random source.
///
/// Token `w` at position `p` is kept iff `u(seed, p) < sqrt(t / f(w))`,
/// i.e. discarded with probability `max(0, 1 - sqrt(t / f(w)))`.
#[derive(Clone, Debug)]
pub struct Subsampler {
    keep_prob: Option<Vec<f64>>,
    seed: u64,
}

impl Subsampler {
    pub fn new(vocab: &Vocabulary, params: SubsampleParams) -> Self {
        let keep_prob = params.threshold.map(|t| {
            (0..vocab.len() as u32)
                .map(|id| {
                    let f = vocab.frequency(id);
                    if f <= t {
                        1.0
                    } else {
                        (t / f).sqrt()
                    }
                })
                .collect()
        });
        Subsampler {
            keep_prob,
            seed: params.seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.keep_prob.is_none()
    }

    pub fn keep_probability(&self, id: u32) -> f64 {
        self.keep_prob.as_ref().map_or(1.0, |p| p[id as usize])
    }

    #[inline]
    pub fn keep(&self, id: u32, position: u64) -> bool {
        match &self.keep_prob {
            None => true,
            Some(p) => {
                let p = p[id as usize];
                p >= 1.0 || unit_from_bits(mix64(self.seed ^ mix64(position))) < p
            }
        }
    }
}

/// Subsample a single token stream.
pub fn subsample(tokens: &[u32], vocab: &Vocabulary, params: SubsampleParams) -> Vec<u32> {
    let s = Subsampler::new(vocab, params);
    tokens
        .iter()
        .enumerate()
        .filter(|&(i, &id)| s.keep(id, i as u64))
        .map(|(_, &id)| id)
        .collect()
}
