//! On-disk formats.
//!
//! Embeddings: UTF-8 text, header `vocab_size dim`, then one
//! `word v1 ... v_dim` line per word in id order, values as `{:.5e}`.
//!
//! Vocabulary: UTF-8 text, `#raw_tokens\tN` and `#min_count\tN` header lines,
//! then one `word\tcount` line per word in id order.
//!
//! Cooccurrence matrix: little-endian binary.
//!
//! | field        | type  |
//! |--------------|-------|
//! | magic        | `COOC`|
//! | version      | u32   |
//! | vocab size   | u32   |
//! | context size | u32   |
//! | window       | u32   |
//! | positional   | u8    |
//! | record count | u64   |
//! | grand total  | f64   |
//!
//! followed by `record count` records of (word u32, ctx u32, count f64)
//! sorted by (word, ctx). The grand total is the sequential sum of counts in
//! record order and must match the recomputed value bit for bit.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cooccurrence::{CoocError, CoocMatrix, ContextSpace};
use crate::corpus::Vocabulary;
use crate::factorizer::Embeddings;

pub const COOC_MAGIC: &[u8; 4] = b"COOC";
pub const COOC_VERSION: u32 = 1;
const COOC_HEADER_LEN: usize = 4 + 4 * 4 + 1 + 8 + 8;
const COOC_RECORD_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Text {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: byte {offset}: {reason}")]
    Binary {
        path: PathBuf,
        offset: usize,
        reason: String,
    },
    #[error("inconsistent sizes: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_utf8(path: &Path) -> Result<String, StorageError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    String::from_utf8(bytes).map_err(|e| {
        let offset = e.utf8_error().valid_up_to();
        StorageError::Binary {
            path: path.to_owned(),
            offset,
            reason: "invalid UTF-8".into(),
        }
    })
}

fn format_rows<'a>(
    names: impl Iterator<Item = &'a str>,
    data: &[f64],
    dim: usize,
) -> String {
    let rows = data.len() / dim;
    let mut out = String::with_capacity(rows * (dim * 13 + 16) + 32);
    out.push_str(&format!("{rows} {dim}\n"));
    for (name, row) in names.zip(data.chunks_exact(dim)) {
        out.push_str(name);
        for v in row {
            out.push(' ');
            out.push_str(&format!("{v:.5e}"));
        }
        out.push('\n');
    }
    out
}

/// Text serialization of the word matrix.
pub fn embeddings_to_string(emb: &Embeddings, vocab: &Vocabulary) -> Result<String, StorageError> {
    if emb.n_words() != vocab.len() {
        return Err(StorageError::Mismatch(format!(
            "{} embedding rows for {} words",
            emb.n_words(),
            vocab.len()
        )));
    }
    if let Some(w) = vocab.words().iter().find(|w| w.is_empty() || w.contains(char::is_whitespace)) {
        return Err(StorageError::Mismatch(format!("word {w:?} cannot be written")));
    }
    Ok(format_rows(
        vocab.words().iter().map(String::as_str),
        emb.word_matrix(),
        emb.dim(),
    ))
}

pub fn save_embeddings(emb: &Embeddings, vocab: &Vocabulary, path: &Path) -> Result<(), StorageError> {
    write_file(path, embeddings_to_string(emb, vocab)?.as_bytes())
}

/// Sibling path for the context matrix: `vectors.txt` → `vectors.ctx.txt`.
pub fn context_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.ctx.{}", ext.to_string_lossy()),
        None => format!("{stem}.ctx"),
    };
    path.with_file_name(name)
}

/// Write the context matrix, naming rows by context id.
pub fn save_context_embeddings(emb: &Embeddings, path: &Path) -> Result<(), StorageError> {
    let names: Vec<String> = (0..emb.n_contexts()).map(|c| format!("c{c}")).collect();
    let text = format_rows(names.iter().map(String::as_str), emb.context_matrix(), emb.dim());
    write_file(path, text.as_bytes())
}

/// Parse the text format. The context matrix of the result is empty.
pub fn parse_embeddings(text: &str, path: &Path) -> Result<(Embeddings, Vocabulary), StorageError> {
    let err = |line: usize, reason: String| StorageError::Text {
        path: path.to_owned(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let mut hf = header.split(' ');
    let parse_dim = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
    let (rows, dim) = match (parse_dim(hf.next()), parse_dim(hf.next()), hf.next()) {
        (Some(r), Some(d), None) if d > 0 => (r, d),
        _ => return Err(err(1, format!("header must be \"vocab_size dim\", got {header:?}"))),
    };

    let mut words = Vec::with_capacity(rows);
    let mut seen = HashSet::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    for (n, line) in lines {
        if words.len() == rows {
            return Err(err(n, format!("more than the declared {rows} rows")));
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        if word.is_empty() {
            return Err(err(n, "missing word".into()));
        }
        let start = data.len();
        for f in fields {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => return Err(err(n, format!("malformed value {f:?}"))),
            }
        }
        let got = data.len() - start;
        if got != dim {
            return Err(err(n, format!("expected {dim} values, found {got}")));
        }
        if !seen.insert(word) {
            return Err(err(n, format!("duplicate word {word:?}")));
        }
        words.push(word);
    }
    if words.len() != rows {
        return Err(err(
            text.lines().count() + 1,
            format!("declared {rows} rows, found {}", words.len()),
        ));
    }
    Ok((
        Embeddings::from_parts(dim, data, Vec::new()),
        Vocabulary::from_words(words),
    ))
}

pub fn load_embeddings(path: &Path) -> Result<(Embeddings, Vocabulary), StorageError> {
    parse_embeddings(&read_utf8(path)?, path)
}

pub fn vocab_to_string(vocab: &Vocabulary) -> String {
    let mut out = format!("#raw_tokens\t{}\n#min_count\t{}\n", vocab.raw_tokens(), vocab.min_count());
    for (w, c) in vocab.words().iter().zip(vocab.counts()) {
        out.push_str(&format!("{w}\t{c}\n"));
    }
    out
}

pub fn save_vocab(vocab: &Vocabulary, path: &Path) -> Result<(), StorageError> {
    write_file(path, vocab_to_string(vocab).as_bytes())
}

pub fn parse_vocab(text: &str, path: &Path) -> Result<Vocabulary, StorageError> {
    let err = |line: usize, reason: String| StorageError::Text {
        path: path.to_owned(),
        line,
        reason,
    };
    let mut raw_tokens = None;
    let mut min_count = None;
    let mut entries: Vec<(String, u64)> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let (key, value) = line
            .split_once('\t')
            .ok_or_else(|| err(n, "expected \"word<TAB>count\"".into()))?;
        let value: u64 = value
            .parse()
            .map_err(|_| err(n, format!("malformed count {value:?}")))?;
        match key {
            "#raw_tokens" if entries.is_empty() => raw_tokens = Some(value),
            "#min_count" if entries.is_empty() => min_count = Some(value),
            _ => {
                if key.is_empty() {
                    return Err(err(n, "missing word".into()));
                }
                if let Some(&(_, prev)) = entries.last() {
                    if value > prev {
                        return Err(err(n, "counts must be non-increasing".into()));
                    }
                }
                if !seen.insert(key.to_owned()) {
                    return Err(err(n, format!("duplicate word {key:?}")));
                }
                entries.push((key.to_owned(), value));
            }
        }
    }
    let vocab = Vocabulary::from_sorted(entries, min_count.unwrap_or(1));
    let raw = raw_tokens.unwrap_or(vocab.total_tokens());
    if raw < vocab.total_tokens() {
        return Err(err(1, "raw_tokens below the sum of counts".into()));
    }
    Ok(vocab.with_raw_tokens(raw))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary, StorageError> {
    parse_vocab(&read_utf8(path)?, path)
}

pub fn cooc_to_bytes(m: &CoocMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(COOC_HEADER_LEN + m.nnz() * COOC_RECORD_LEN);
    out.extend_from_slice(COOC_MAGIC);
    out.extend_from_slice(&COOC_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n_words() as u32).to_le_bytes());
    out.extend_from_slice(&(m.n_contexts() as u32).to_le_bytes());
    out.extend_from_slice(&(m.window() as u32).to_le_bytes());
    out.push(m.positional() as u8);
    out.extend_from_slice(&(m.nnz() as u64).to_le_bytes());
    out.extend_from_slice(&m.grand_total().to_le_bytes());
    for (w, c, v) in m.cells() {
        out.extend_from_slice(&w.to_le_bytes());
        out.extend_from_slice(&c.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_cooc(m: &CoocMatrix, path: &Path) -> Result<(), StorageError> {
    write_file(path, &cooc_to_bytes(m))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let s = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        s.try_into().ok()
    }
}

pub fn parse_cooc(bytes: &[u8], path: &Path) -> Result<CoocMatrix, StorageError> {
    let err = |offset: usize, reason: String| StorageError::Binary {
        path: path.to_owned(),
        offset,
        reason,
    };
    let mut r = Reader { bytes, pos: 0 };
    let truncated = |r: &Reader| err(r.pos, "truncated header".into());
    let magic: [u8; 4] = r.take().ok_or_else(|| truncated(&r))?;
    if &magic != COOC_MAGIC {
        return Err(err(0, format!("bad magic {magic:?}")));
    }
    let u32_at = |r: &mut Reader| r.take::<4>().map(u32::from_le_bytes);
    let version = u32_at(&mut r).ok_or_else(|| truncated(&r))?;
    if version != COOC_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let vocab = u32_at(&mut r).ok_or_else(|| truncated(&r))? as usize;
    let ctx = u32_at(&mut r).ok_or_else(|| truncated(&r))? as usize;
    let window = u32_at(&mut r).ok_or_else(|| truncated(&r))? as usize;
    let positional = match r.take::<1>().ok_or_else(|| truncated(&r))?[0] {
        0 => false,
        1 => true,
        b => return Err(err(r.pos - 1, format!("positional flag must be 0 or 1, got {b}"))),
    };
    let records = u64::from_le_bytes(r.take().ok_or_else(|| truncated(&r))?) as usize;
    let total = f64::from_le_bytes(r.take().ok_or_else(|| truncated(&r))?);

    let space = ContextSpace::new(vocab, window, positional).map_err(|e| err(8, e.to_string()))?;
    if space.size() != ctx {
        return Err(err(
            12,
            format!("context size {ctx} does not match vocab {vocab}, window {window}, positional {positional}"),
        ));
    }
    let body = bytes.len() - COOC_HEADER_LEN;
    if body != records * COOC_RECORD_LEN {
        let complete = body / COOC_RECORD_LEN;
        return Err(err(
            COOC_HEADER_LEN + complete.min(records) * COOC_RECORD_LEN,
            format!("expected {records} records, file holds {body} body bytes"),
        ));
    }
    let cells = bytes[COOC_HEADER_LEN..].chunks_exact(COOC_RECORD_LEN).map(|rec| {
        (
            u32::from_le_bytes(rec[0..4].try_into().unwrap()),
            u32::from_le_bytes(rec[4..8].try_into().unwrap()),
            f64::from_le_bytes(rec[8..16].try_into().unwrap()),
        )
    });
    let m = CoocMatrix::from_sorted_cells(space, cells).map_err(|e| {
        let index = match &e {
            CoocError::Unsorted { word, ctx }
            | CoocError::OutOfRange { word, ctx, .. }
            | CoocError::InvalidCount { word, ctx, .. } => record_index(bytes, *word, *ctx),
            _ => None,
        };
        err(COOC_HEADER_LEN + index.unwrap_or(0) * COOC_RECORD_LEN, e.to_string())
    })?;
    if m.grand_total().to_bits() != total.to_bits() {
        return Err(err(
            COOC_HEADER_LEN - 8,
            format!("marginals sum to {} but header records {total}", m.grand_total()),
        ));
    }
    Ok(m)
}

/// First record holding (word, ctx), for error positions.
fn record_index(bytes: &[u8], word: u32, ctx: u32) -> Option<usize> {
    let mut key = [0u8; 8];
    key[..4].copy_from_slice(&word.to_le_bytes());
    key[4..].copy_from_slice(&ctx.to_le_bytes());
    let mut hits = bytes[COOC_HEADER_LEN..]
        .chunks_exact(COOC_RECORD_LEN)
        .enumerate()
        .filter(|(_, rec)| rec[..8] == key)
        .map(|(i, _)| i);
    let first = hits.next()?;
    // An unsorted duplicate is reported at its second occurrence.
    Some(hits.next().unwrap_or(first))
}

pub fn load_cooc(path: &Path) -> Result<CoocMatrix, StorageError> {
    parse_cooc(&fs::read(path).map_err(io_err(path))?, path)
}
