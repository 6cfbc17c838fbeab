//! Sparse (word, context) cooccurrence counts from a sliding symmetric
//! window, with the marginals the PMI transforms need.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, SubsampleParams, Subsampler, Vocabulary};

#[derive(Debug, Error)]
pub enum CoocError {
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("smoothing exponent must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("all context marginals are zero")]
    EmptyMarginals,
    #[error("cell ({word}, {ctx}) outside a {rows} x {cols} matrix")]
    OutOfRange {
        word: u32,
        ctx: u32,
        rows: usize,
        cols: usize,
    },
    #[error("cell ({word}, {ctx}) is not in strictly increasing (word, ctx) order")]
    Unsorted { word: u32, ctx: u32 },
    #[error("cell ({word}, {ctx}) has invalid count {count}")]
    InvalidCount { word: u32, ctx: u32, count: f64 },
}

/// Layout of context ids.
///
/// With positional contexts a context is (word, signed offset) and gets id
/// `word * 2w + slot`, where offsets `-w..=-1` map to slots `0..w` and
/// `1..=w` to slots `w..2w`. Without them the context id is the word id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextSpace {
    pub vocab_size: usize,
    pub window: usize,
    pub positional: bool,
}

/// A context word together with its signed offset from the center word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionalContext {
    pub word_id: u32,
    pub offset: i32,
}

impl ContextSpace {
    pub fn new(vocab_size: usize, window: usize, positional: bool) -> Result<Self, CoocError> {
        if window == 0 {
            return Err(CoocError::InvalidWindow);
        }
        Ok(ContextSpace {
            vocab_size,
            window,
            positional,
        })
    }

    /// Number of distinct context ids.
    pub fn size(&self) -> usize {
        if self.positional {
            self.vocab_size * 2 * self.window
        } else {
            self.vocab_size
        }
    }

    #[inline]
    pub fn ctx_id(&self, word: u32, offset: i32) -> u32 {
        debug_assert!(offset != 0 && offset.unsigned_abs() as usize <= self.window);
        if !self.positional {
            return word;
        }
        let w = self.window as i32;
        let slot = if offset < 0 { offset + w } else { offset + w - 1 };
        word * (2 * self.window as u32) + slot as u32
    }

    /// Inverse of [`ctx_id`](Self::ctx_id). Non-positional contexts report
    /// offset 0.
    pub fn decode(&self, ctx: u32) -> PositionalContext {
        if !self.positional {
            return PositionalContext {
                word_id: ctx,
                offset: 0,
            };
        }
        let span = 2 * self.window as u32;
        let w = self.window as i32;
        let slot = (ctx % span) as i32;
        let offset = if slot < w { slot - w } else { slot - w + 1 };
        PositionalContext {
            word_id: ctx / span,
            offset,
        }
    }
}

/// Sparse count matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CoocMatrix {
    space: ContextSpace,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    row_marginals: Vec<f64>,
    col_marginals: Vec<f64>,
    grand_total: f64,
}

impl CoocMatrix {
    /// Build from cells sorted strictly by (word, ctx) with positive finite
    /// counts.
    pub fn from_sorted_cells<I>(space: ContextSpace, cells: I) -> Result<Self, CoocError>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let rows = space.vocab_size;
        let ncols = space.size();
        let mut row_ptr = vec![0usize; rows + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut prev: Option<(u32, u32)> = None;
        for (word, ctx, count) in cells {
            if word as usize >= rows || ctx as usize >= ncols {
                return Err(CoocError::OutOfRange {
                    word,
                    ctx,
                    rows,
                    cols: ncols,
                });
            }
            if prev.is_some_and(|p| p >= (word, ctx)) {
                return Err(CoocError::Unsorted { word, ctx });
            }
            if !(count.is_finite() && count > 0.0) {
                return Err(CoocError::InvalidCount { word, ctx, count });
            }
            prev = Some((word, ctx));
            row_ptr[word as usize + 1] += 1;
            cols.push(ctx);
            vals.push(count);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = CoocMatrix {
            space,
            row_ptr,
            cols,
            vals,
            row_marginals: Vec::new(),
            col_marginals: Vec::new(),
            grand_total: 0.0,
        };
        m.recompute_marginals();
        Ok(m)
    }

    fn recompute_marginals(&mut self) {
        let mut rows = vec![0.0; self.space.vocab_size];
        let mut cols = vec![0.0; self.space.size()];
        let mut total = 0.0;
        for (w, row) in rows.iter_mut().enumerate() {
            for k in self.row_ptr[w]..self.row_ptr[w + 1] {
                let v = self.vals[k];
                *row += v;
                cols[self.cols[k] as usize] += v;
                total += v;
            }
        }
        self.row_marginals = rows;
        self.col_marginals = cols;
        self.grand_total = total;
    }

    pub fn space(&self) -> ContextSpace {
        self.space
    }

    pub fn n_words(&self) -> usize {
        self.space.vocab_size
    }

    pub fn n_contexts(&self) -> usize {
        self.space.size()
    }

    pub fn window(&self) -> usize {
        self.space.window
    }

    pub fn positional(&self) -> bool {
        self.space.positional
    }

    /// Number of stored (nonzero) cells.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// M_wc, zero for unobserved pairs.
    #[inline]
    pub fn get(&self, word: u32, ctx: u32) -> f64 {
        let (lo, hi) = (self.row_ptr[word as usize], self.row_ptr[word as usize + 1]);
        match self.cols[lo..hi].binary_search(&ctx) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Stored cells of one row as (ctx, count).
    pub fn row(&self, word: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[word as usize], self.row_ptr[word as usize + 1]);
        self.cols[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    /// All stored cells in (word, ctx) order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.space.vocab_size as u32).flat_map(move |w| self.row(w).map(move |(c, v)| (w, c, v)))
    }

    pub fn row_marginal(&self, word: u32) -> f64 {
        self.row_marginals[word as usize]
    }

    pub fn col_marginal(&self, ctx: u32) -> f64 {
        self.col_marginals[ctx as usize]
    }

    pub fn row_marginals(&self) -> &[f64] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[f64] {
        &self.col_marginals
    }

    /// M_**, the sequential sum of cells in (word, ctx) order.
    pub fn grand_total(&self) -> f64 {
        self.grand_total
    }
}

/// Thread-local accumulator for cooccurrence counts.
#[derive(Clone, Debug)]
pub struct CoocBuilder {
    space: ContextSpace,
    cells: HashMap<u64, f64>,
}

impl CoocBuilder {
    pub fn new(space: ContextSpace) -> Self {
        CoocBuilder {
            space,
            cells: HashMap::new(),
        }
    }

    #[inline]
    fn bump(&mut self, word: u32, ctx: u32) {
        *self.cells.entry(((word as u64) << 32) | ctx as u64).or_insert(0.0) += 1.0;
    }

    /// Count pairs whose center lies in `centers`; contexts may fall anywhere
    /// in `stream`. Counting disjoint center ranges of one stream and merging
    /// equals counting the whole stream.
    pub fn add_centers(&mut self, stream: &[u32], centers: std::ops::Range<usize>) {
        let w = self.space.window as i32;
        let n = stream.len() as i64;
        for p in centers {
            let center = stream[p];
            for off in -w..=w {
                if off == 0 {
                    continue;
                }
                let q = p as i64 + off as i64;
                if q < 0 || q >= n {
                    continue;
                }
                let ctx = self.space.ctx_id(stream[q as usize], off);
                self.bump(center, ctx);
            }
        }
    }

    pub fn add_stream(&mut self, stream: &[u32]) {
        self.add_centers(stream, 0..stream.len());
    }

    pub fn merge(mut self, other: CoocBuilder) -> CoocBuilder {
        let (mut big, small) = if self.cells.len() >= other.cells.len() {
            (std::mem::take(&mut self.cells), other.cells)
        } else {
            (other.cells, std::mem::take(&mut self.cells))
        };
        for (k, v) in small {
            *big.entry(k).or_insert(0.0) += v;
        }
        CoocBuilder {
            space: self.space,
            cells: big,
        }
    }

    pub fn finish(self) -> CoocMatrix {
        let mut cells: Vec<(u64, f64)> = self.cells.into_iter().collect();
        cells.par_sort_unstable_by_key(|e| e.0);
        CoocMatrix::from_sorted_cells(
            self.space,
            cells.into_iter().map(|(k, v)| ((k >> 32) as u32, k as u32, v)),
        )
        .expect("builder cells are in range and positive")
    }
}

/// Slide a symmetric window over the subsampled corpus and count pairs.
///
/// Documents are counted in parallel shards and merged; all increments are
/// integers so the merge is exact in any order.
pub fn count_cooccurrences(
    corpus: &Corpus,
    vocab: &Vocabulary,
    window: usize,
    positional: bool,
    subsample: SubsampleParams,
) -> Result<CoocMatrix, CoocError> {
    let space = ContextSpace::new(vocab.len(), window, positional)?;
    corpus.check_ids(vocab.len())?;
    let sub = Subsampler::new(vocab, subsample);
    let corpus = corpus.subsample(&sub);
    let docs: Vec<&[u32]> = corpus.docs().map(|(_, d)| d).collect();
    let builder = docs
        .par_chunks(256)
        .fold(
            || CoocBuilder::new(space),
            |mut b, chunk| {
                for doc in chunk {
                    b.add_stream(doc);
                }
                b
            },
        )
        .reduce(|| CoocBuilder::new(space), CoocBuilder::merge);
    Ok(builder.finish())
}

/// Context probabilities proportional to `col_marginal^alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedContextDistribution {
    probabilities: Vec<f64>,
    alpha: f64,
}

impl SmoothedContextDistribution {
    pub fn from_marginals(marginals: &[f64], alpha: f64) -> Result<Self, CoocError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CoocError::InvalidAlpha(alpha));
        }
        let powered: Vec<f64> = marginals.iter().map(|&m| m.powf(alpha)).collect();
        let z: f64 = powered.iter().sum();
        if !(z > 0.0) {
            return Err(CoocError::EmptyMarginals);
        }
        Ok(SmoothedContextDistribution {
            probabilities: powered.into_iter().map(|p| p / z).collect(),
            alpha,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, ctx: u32) -> f64 {
        self.probabilities[ctx as usize]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn smoothed_context_distribution(
    m: &CoocMatrix,
    alpha: f64,
) -> Result<SmoothedContextDistribution, CoocError> {
    SmoothedContextDistribution::from_marginals(m.col_marginals(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_counts((0..n).map(|i| (format!("w{i:03}"), (n - i) as u64 * 10)), 1)
            .unwrap()
    }

    fn count(ids: Vec<u32>, v: &Vocabulary, window: usize, positional: bool) -> CoocMatrix {
        count_cooccurrences(
            &Corpus::from_ids(ids),
            v,
            window,
            positional,
            SubsampleParams::disabled(),
        )
        .unwrap()
    }

    /// Dense double loop over (center, context) positions.
    fn brute_force(stream: &[u32], space: ContextSpace) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; space.size()]; space.vocab_size];
        for p in 0..stream.len() {
            for q in 0..stream.len() {
                let off = q as i64 - p as i64;
                if off == 0 || off.unsigned_abs() as usize > space.window {
                    continue;
                }
                let ctx = space.ctx_id(stream[q], off as i32);
                dense[stream[p] as usize][ctx as usize] += 1.0;
            }
        }
        dense
    }

    #[test]
    fn two_token_stream() {
        let v = vocab(2);
        let m = count(vec![0, 1], &v, 2, true);
        let s = m.space();
        assert_eq!(m.get(0, s.ctx_id(1, 1)), 1.0);
        assert_eq!(m.get(1, s.ctx_id(0, -1)), 1.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.grand_total(), 2.0);
    }

    #[test]
    fn aba_non_positional() {
        let v = vocab(2);
        let m = count(vec![0, 1, 0], &v, 1, false);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.grand_total(), 4.0);
        let dense = brute_force(&[0, 1, 0], m.space());
        assert_eq!(dense[0][1], 2.0);
        assert_eq!(dense[1][0], 2.0);
    }

    #[test]
    fn context_ids_round_trip() {
        let s = ContextSpace::new(7, 3, true).unwrap();
        let mut seen = std::collections::HashSet::new();
        for w in 0..7 {
            for off in [-3, -2, -1, 1, 2, 3] {
                let c = s.ctx_id(w, off);
                assert!((c as usize) < s.size());
                assert!(seen.insert(c));
                assert_eq!(s.decode(c), PositionalContext { word_id: w, offset: off });
            }
        }
        assert_eq!(seen.len(), s.size());
        assert!(ContextSpace::new(3, 0, true).is_err());
    }

    #[test]
    fn unknown_token_is_an_error() {
        let v = vocab(2);
        let r = count_cooccurrences(
            &Corpus::from_ids(vec![0, 5]),
            &v,
            2,
            true,
            SubsampleParams::disabled(),
        );
        assert!(matches!(
            r,
            Err(CoocError::Corpus(CorpusError::UnknownTokenId { id: 5, .. }))
        ));
    }

    #[test]
    fn windows_stop_at_document_bounds() {
        let v = vocab(3);
        let c = Corpus::from_docs(vec![vec![0, 1], vec![2]]);
        let m = count_cooccurrences(&c, &v, 2, false, SubsampleParams::disabled()).unwrap();
        assert_eq!(m.grand_total(), 2.0);
        assert_eq!(m.row_marginal(2), 0.0);
    }

    #[test]
    fn smoothing_examples() {
        let d = SmoothedContextDistribution::from_marginals(&[16.0, 1.0], 0.75).unwrap();
        let a = 16f64.powf(0.75);
        assert!((d.probability(0) - 0.8889).abs() < 1e-4);
        assert!((d.probability(1) - 0.1111).abs() < 1e-4);
        assert!((d.probability(0) - a / (a + 1.0)).abs() < 1e-15);

        let d = SmoothedContextDistribution::from_marginals(&[3.0, 1.0], 1.0).unwrap();
        assert_eq!(d.probabilities(), [0.75, 0.25]);

        for alpha in [0.1, 0.75, 1.0] {
            let d = SmoothedContextDistribution::from_marginals(&[5.0; 4], alpha).unwrap();
            for &p in d.probabilities() {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }

        assert!(matches!(
            SmoothedContextDistribution::from_marginals(&[0.0, 0.0], 0.75),
            Err(CoocError::EmptyMarginals)
        ));
        assert!(SmoothedContextDistribution::from_marginals(&[1.0], 0.0).is_err());
        assert!(SmoothedContextDistribution::from_marginals(&[1.0], 1.5).is_err());
    }

    #[test]
    fn from_sorted_cells_rejects_bad_input() {
        let s = ContextSpace::new(2, 1, false).unwrap();
        assert!(matches!(
            CoocMatrix::from_sorted_cells(s, [(0, 1, 1.0), (0, 0, 1.0)]),
            Err(CoocError::Unsorted { .. })
        ));
        assert!(matches!(
            CoocMatrix::from_sorted_cells(s, [(0, 2, 1.0)]),
            Err(CoocError::OutOfRange { .. })
        ));
        assert!(matches!(
            CoocMatrix::from_sorted_cells(s, [(0, 1, f64::NAN)]),
            Err(CoocError::InvalidCount { .. })
        ));
    }

    fn stream_strategy() -> impl Strategy<Value = (Vec<u32>, usize, bool)> {
        (prop::collection::vec(0u32..8, 0..300), 1usize..4, any::<bool>())
    }

    proptest! {
        #[test]
        fn streamed_counting_equals_brute_force((stream, window, positional) in stream_strategy()) {
            let v = vocab(8);
            let m = count(stream.clone(), &v, window, positional);
            let dense = brute_force(&stream, m.space());
            for w in 0..8u32 {
                for c in 0..m.n_contexts() as u32 {
                    prop_assert_eq!(m.get(w, c), dense[w as usize][c as usize]);
                }
            }
        }

        #[test]
        fn marginals_are_consistent((stream, window, positional) in stream_strategy()) {
            let v = vocab(8);
            let m = count(stream, &v, window, positional);
            let sum: f64 = m.cells().map(|c| c.2).sum();
            prop_assert_eq!(sum, m.grand_total());
            for w in 0..8u32 {
                let r: f64 = m.row(w).map(|e| e.1).sum();
                prop_assert_eq!(r, m.row_marginal(w));
            }
            let mut cols = vec![0.0; m.n_contexts()];
            for (_, c, x) in m.cells() {
                cols[c as usize] += x;
            }
            prop_assert_eq!(cols.as_slice(), m.col_marginals());
        }

        #[test]
        fn positional_counts_are_mirror_symmetric(stream in prop::collection::vec(0u32..8, 0..300), window in 1usize..4) {
            let v = vocab(8);
            let m = count(stream, &v, window, true);
            let s = m.space();
            for w in 0..8u32 {
                for u in 0..8u32 {
                    for i in 1..=window as i32 {
                        prop_assert_eq!(m.get(w, s.ctx_id(u, i)), m.get(u, s.ctx_id(w, -i)));
                    }
                }
            }
        }

        #[test]
        fn shard_merge_equals_single_pass(stream in prop::collection::vec(0u32..8, 1..300), cuts in prop::collection::vec(0usize..300, 0..5)) {
            let space = ContextSpace::new(8, 2, true).unwrap();
            let mut whole = CoocBuilder::new(space);
            whole.add_stream(&stream);

            let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c % (stream.len() + 1)).collect();
            bounds.push(0);
            bounds.push(stream.len());
            bounds.sort_unstable();
            let merged = bounds
                .windows(2)
                .map(|r| {
                    let mut b = CoocBuilder::new(space);
                    b.add_centers(&stream, r[0]..r[1]);
                    b
                })
                .rev()
                .fold(CoocBuilder::new(space), CoocBuilder::merge);
            prop_assert_eq!(merged.finish(), whole.finish());
        }
    }
}
