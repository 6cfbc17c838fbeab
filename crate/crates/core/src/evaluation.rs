//! Intrinsic evaluations: word similarity, analogies, bag-of-vectors
//! sentence similarity, and spectrum histograms.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{tokenize, Vocabulary};
use crate::factorizer::{dot, Embeddings};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("correlation needs two lists of equal length >= 2 (got {0} and {1})")]
    BadLengths(usize, usize),
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
    #[error("no evaluable items (all out of vocabulary)")]
    NothingCovered,
    #[error("histogram of an empty list")]
    EmptyInput,
    #[error("bucket width must be positive, got {0}")]
    BadWidth(f64),
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

fn check_pair_lengths(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(EvalError::BadLengths(xs.len(), ys.len()));
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair_lengths(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair_lengths(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// A word pair with a gold similarity score.
#[derive(Clone, Debug, PartialEq)]
pub struct WordPairScore {
    pub word_a: String,
    pub word_b: String,
    pub gold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordSimResult {
    pub spearman: f64,
    pub covered: usize,
    pub total: usize,
}

impl WordSimResult {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.total as f64
    }
}

/// Embedding rows looked up by surface form.
#[derive(Clone, Copy)]
pub struct WordVectors<'a> {
    pub emb: &'a Embeddings,
    pub vocab: &'a Vocabulary,
}

impl<'a> WordVectors<'a> {
    pub fn new(emb: &'a Embeddings, vocab: &'a Vocabulary) -> Self {
        assert_eq!(emb.n_words(), vocab.len(), "embedding rows must match vocabulary");
        WordVectors { emb, vocab }
    }

    pub fn get(&self, word: &str) -> Option<&'a [f64]> {
        self.vocab.id(word).map(|id| self.emb.word(id))
    }
}

/// Spearman between cosine(W_a, W_b) and gold over in-vocabulary pairs.
pub fn eval_word_similarity(
    vectors: WordVectors<'_>,
    data: &[WordPairScore],
) -> Result<WordSimResult, EvalError> {
    let (model, gold): (Vec<f64>, Vec<f64>) = data
        .iter()
        .filter_map(|p| {
            let a = vectors.get(&p.word_a)?;
            let b = vectors.get(&p.word_b)?;
            Some((cosine(a, b), p.gold))
        })
        .unzip();
    if model.is_empty() {
        return Err(EvalError::NothingCovered);
    }
    Ok(WordSimResult {
        spearman: spearman(&model, &gold)?,
        covered: model.len(),
        total: data.len(),
    })
}

/// `a : a_star :: b : b_star`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalogyQuestion {
    pub a: String,
    pub a_star: String,
    pub b: String,
    pub b_star: String,
    pub category: String,
}

/// Google analogy categories whose names start with `gram` are syntactic.
pub fn is_syntactic_category(category: &str) -> bool {
    category.starts_with("gram")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryScore {
    pub correct: usize,
    pub answerable: usize,
    pub total: usize,
}

impl CategoryScore {
    pub fn accuracy(&self) -> f64 {
        if self.answerable == 0 {
            0.0
        } else {
            self.correct as f64 / self.answerable as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalogyResult {
    pub accuracy: f64,
    pub correct: usize,
    pub answerable: usize,
    pub unanswerable: usize,
    pub per_category: BTreeMap<String, CategoryScore>,
}

impl AnalogyResult {
    /// Aggregate over categories selected by `keep`.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> CategoryScore {
        let mut out = CategoryScore::default();
        for (name, s) in &self.per_category {
            if keep(name) {
                out.correct += s.correct;
                out.answerable += s.answerable;
                out.total += s.total;
            }
        }
        out
    }
}

fn unit_rows(emb: &Embeddings) -> Vec<f64> {
    let d = emb.dim();
    let mut out = emb.word_matrix().to_vec();
    out.par_chunks_mut(d).for_each(|row| {
        let n = dot(row, row).sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    });
    out
}

/// 3CosAdd: argmax over the vocabulary of cos(x, W_b - W_a + W_a*) on unit
/// rows, excluding the three query words.
pub fn eval_analogies(
    vectors: WordVectors<'_>,
    data: &[AnalogyQuestion],
) -> Result<AnalogyResult, EvalError> {
    let d = vectors.emb.dim();
    let unit = unit_rows(vectors.emb);
    let vocab = vectors.vocab;
    let outcomes: Vec<Option<bool>> = data
        .par_iter()
        .map(|q| {
            let ids = [
                vocab.id(&q.a)?,
                vocab.id(&q.a_star)?,
                vocab.id(&q.b)?,
                vocab.id(&q.b_star)?,
            ];
            let row = |i: u32| &unit[i as usize * d..(i as usize + 1) * d];
            let query: Vec<f64> = (0..d)
                .map(|k| row(ids[2])[k] - row(ids[0])[k] + row(ids[1])[k])
                .collect();
            Some(nearest(&unit, d, &query, &ids[..3]) == Some(ids[3]))
        })
        .collect();

    let mut per_category: BTreeMap<String, CategoryScore> = BTreeMap::new();
    for (q, o) in data.iter().zip(&outcomes) {
        let s = per_category.entry(q.category.clone()).or_default();
        s.total += 1;
        if let Some(ok) = o {
            s.answerable += 1;
            s.correct += *ok as usize;
        }
    }
    let answerable = outcomes.iter().filter(|o| o.is_some()).count();
    if answerable == 0 {
        return Err(EvalError::NothingCovered);
    }
    let correct = outcomes.iter().filter(|o| **o == Some(true)).count();
    Ok(AnalogyResult {
        accuracy: correct as f64 / answerable as f64,
        correct,
        answerable,
        unanswerable: data.len() - answerable,
        per_category,
    })
}

/// Row of `unit` with the largest dot product against `query`, skipping
/// `exclude`. Rows are unit length, so this is the cosine argmax.
fn nearest(unit: &[f64], d: usize, query: &[f64], exclude: &[u32]) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (i, row) in unit.chunks_exact(d).enumerate() {
        let i = i as u32;
        if exclude.contains(&i) {
            continue;
        }
        let s = dot(row, query);
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
}

/// Sentence pair with a gold similarity in [0, 5].
#[derive(Clone, Debug, PartialEq)]
pub struct SentencePair {
    pub sent_1: Vec<String>,
    pub sent_2: Vec<String>,
    pub gold: f64,
}

impl SentencePair {
    /// Tokenize both sentences with the corpus tokenizer.
    pub fn from_text(sent_1: &str, sent_2: &str, gold: f64) -> Self {
        SentencePair {
            sent_1: tokenize(sent_1).collect(),
            sent_2: tokenize(sent_2).collect(),
            gold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StsResult {
    pub pearson: f64,
    pub covered: usize,
    pub total: usize,
}

impl StsResult {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.total as f64
    }
}

/// Mean of the in-vocabulary word rows, or `None` if no token is covered.
pub fn bag_of_vectors(vectors: WordVectors<'_>, tokens: &[String]) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; vectors.emb.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = vectors.get(t) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

pub fn eval_sts(vectors: WordVectors<'_>, data: &[SentencePair]) -> Result<StsResult, EvalError> {
    let (model, gold): (Vec<f64>, Vec<f64>) = data
        .iter()
        .filter_map(|p| {
            let a = bag_of_vectors(vectors, &p.sent_1)?;
            let b = bag_of_vectors(vectors, &p.sent_2)?;
            Some((cosine(&a, &b), p.gold))
        })
        .unzip();
    if model.is_empty() {
        return Err(EvalError::NothingCovered);
    }
    Ok(StsResult {
        pearson: pearson(&model, &gold)?,
        covered: model.len(),
        total: data.len(),
    })
}

/// Fixed-width buckets over `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramSpec {
    pub bucket_width: f64,
    pub min: f64,
    pub max: f64,
}

impl HistogramSpec {
    pub const DEFAULT_WIDTH: f64 = 0.2;

    /// Range spanning the data.
    pub fn fit(values: &[f64], bucket_width: f64) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(HistogramSpec {
            bucket_width,
            min,
            max,
        })
    }

    fn n_buckets(&self) -> usize {
        (((self.max - self.min) / self.bucket_width).ceil() as usize).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bucket {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub buckets: Vec<Bucket>,
    /// Values outside `[min, max]` that were clamped into a terminal bucket.
    pub clamped: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }

    /// `bucket_start,bucket_end,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bucket_start,bucket_end,count\n");
        for b in &self.buckets {
            s.push_str(&format!("{:.4},{:.4},{}\n", b.start, b.end, b.count));
        }
        s
    }
}

/// Bucket `i` covers `[min + i w, min + (i+1) w)`; the last bucket is
/// closed on the right.
pub fn histogram(values: &[f64], spec: HistogramSpec) -> Result<Histogram, EvalError> {
    if !(spec.bucket_width > 0.0 && spec.bucket_width.is_finite()) {
        return Err(EvalError::BadWidth(spec.bucket_width));
    }
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = spec.n_buckets();
    let mut buckets: Vec<Bucket> = (0..n)
        .map(|i| Bucket {
            start: spec.min + i as f64 * spec.bucket_width,
            end: (spec.min + (i + 1) as f64 * spec.bucket_width).min(spec.max.max(spec.min)),
            count: 0,
        })
        .collect();
    if let Some(last) = buckets.last_mut() {
        last.end = spec.max.max(last.start);
    }
    let mut clamped = 0;
    for &v in values {
        let idx = if v < spec.min || v.is_nan() {
            clamped += 1;
            0
        } else if v > spec.max {
            clamped += 1;
            n - 1
        } else {
            (((v - spec.min) / spec.bucket_width).floor() as usize).min(n - 1)
        };
        buckets[idx].count += 1;
    }
    Ok(Histogram { buckets, clamped })
}

/// Counts over the four intervals used to describe a clipped PMI spectrum
/// with floor `z`: `[z, z]`, `(z, 0]`, `[-2, 0]` and `(0, inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpectrumSummary {
    pub at_floor: usize,
    pub floor_to_zero: usize,
    pub minus_two_to_zero: usize,
    pub positive: usize,
    pub total: usize,
}

/// Interval counts reported for the 10^5-pair reference sample with z = -5.
pub const REFERENCE_SPECTRUM: [usize; 4] = [41695, 11001, 10759, 47304];

impl SpectrumSummary {
    pub fn from_values(values: &[f64], z: f64) -> Self {
        let count = |f: &dyn Fn(f64) -> bool| values.iter().filter(|&&v| f(v)).count();
        SpectrumSummary {
            at_floor: count(&|v| v == z),
            floor_to_zero: count(&|v| v > z && v <= 0.0),
            minus_two_to_zero: count(&|v| (-2.0..=0.0).contains(&v)),
            positive: count(&|v| v > 0.0),
            total: values.len(),
        }
    }

    pub fn summary_line(&self, z: f64) -> String {
        format!(
            "# intervals z={z}: [z,z]={} (z,0]={} [-2,0]={} (0,inf)={} total={} \
             reference(n=100000,z=-5): {}/{}/{}/{}",
            self.at_floor,
            self.floor_to_zero,
            self.minus_two_to_zero,
            self.positive,
            self.total,
            REFERENCE_SPECTRUM[0],
            REFERENCE_SPECTRUM[1],
            REFERENCE_SPECTRUM[2],
            REFERENCE_SPECTRUM[3],
        )
    }
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn lower(word: &str) -> String {
    word.to_lowercase()
}

/// `word1<TAB>word2<TAB>score` lines. A first line whose score does not
/// parse is taken as a header; `#` lines are comments.
pub fn parse_word_pairs(text: &str, path: &str) -> Result<Vec<WordPairScore>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |reason: &str| EvalError::Parse {
            path: path.to_owned(),
            line: i + 1,
            reason: reason.to_owned(),
        };
        if fields.len() < 3 {
            return Err(err("expected word1<TAB>word2<TAB>score"));
        }
        match fields[2].trim().parse::<f64>() {
            Ok(gold) if gold.is_finite() => out.push(WordPairScore {
                word_a: lower(fields[0].trim()),
                word_b: lower(fields[1].trim()),
                gold,
            }),
            _ if out.is_empty() && i == first_content_line(text) => continue,
            _ => return Err(err("score is not a finite number")),
        }
    }
    Ok(out)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| !(l.trim().is_empty() || l.starts_with('#')))
        .unwrap_or(0)
}

pub fn load_word_pairs(path: &Path) -> Result<Vec<WordPairScore>, EvalError> {
    parse_word_pairs(&read(path)?, &path.display().to_string())
}

/// Google format: `: category` headers followed by `a a* b b*` lines.
pub fn parse_analogies(text: &str, path: &str) -> Result<Vec<AnalogyQuestion>, EvalError> {
    let mut category = String::from("uncategorized");
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix(':') {
            category = c.trim().to_owned();
            continue;
        }
        let w: Vec<&str> = line.split_whitespace().collect();
        if w.len() != 4 {
            return Err(EvalError::Parse {
                path: path.to_owned(),
                line: i + 1,
                reason: format!("expected 4 words, found {}", w.len()),
            });
        }
        out.push(AnalogyQuestion {
            a: lower(w[0]),
            a_star: lower(w[1]),
            b: lower(w[2]),
            b_star: lower(w[3]),
            category: category.clone(),
        });
    }
    Ok(out)
}

pub fn load_analogies(path: &Path) -> Result<Vec<AnalogyQuestion>, EvalError> {
    parse_analogies(&read(path)?, &path.display().to_string())
}

/// Column layout of a tab-separated STS file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StsColumns {
    pub score: usize,
    pub sent_1: usize,
    pub sent_2: usize,
}

impl Default for StsColumns {
    /// STS-B's `sts-*.csv` layout: genre, file, year, id, score, s1, s2.
    fn default() -> Self {
        StsColumns {
            score: 4,
            sent_1: 5,
            sent_2: 6,
        }
    }
}

/// Tab-separated rows; a first row whose score does not parse is a header.
pub fn parse_sts(text: &str, path: &str, cols: StsColumns) -> Result<Vec<SentencePair>, EvalError> {
    let mut out = Vec::new();
    let need = cols.score.max(cols.sent_1).max(cols.sent_2) + 1;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |reason: String| EvalError::Parse {
            path: path.to_owned(),
            line: i + 1,
            reason,
        };
        if fields.len() < need {
            return Err(err(format!("expected at least {need} columns")));
        }
        let gold = match fields[cols.score].trim().parse::<f64>() {
            Ok(g) if g.is_finite() => g,
            _ if out.is_empty() && i == 0 => continue,
            _ => return Err(err("score is not a finite number".into())),
        };
        out.push(SentencePair::from_text(fields[cols.sent_1], fields[cols.sent_2], gold));
    }
    Ok(out)
}

pub fn load_sts(path: &Path, cols: StsColumns) -> Result<Vec<SentencePair>, EvalError> {
    parse_sts(&read(path)?, &path.display().to_string(), cols)
}
