//! Word embeddings from weighted factorization of PMI-variant matrices.
//!
//! The pipeline runs in stages that each round-trip through [`storage`]:
//!
//! 1. [`corpus`]: tokenize raw text, build a frequency-sorted vocabulary
//!    and subsample frequent words.
//! 2. [`cooccurrence`]: slide a symmetric window over the corpus and count
//!    (word, positional context) pairs into a sparse matrix with marginals.
//! 3. [`pmi`]: compute target cell values lazily for PPMI, clipped PMI,
//!    NPMI, NNEGPMI and Laplace-smoothed PMI, plus the sign filter used by
//!    the positive-only and nonpositive-only ablations.
//! 4. [`factorizer`]: learn word and context matrices by SGD on window
//!    sampled and negative sampled pairs.
//! 5. [`evaluation`]: word similarity, analogies, sentence similarity and
//!    spectrum histograms.

pub mod cooccurrence;
pub mod corpus;
pub mod evaluation;
pub mod factorizer;
pub mod pmi;
pub mod storage;

pub use cooccurrence::{CoocMatrix, ContextSpace, SmoothedContextDistribution};
pub use corpus::{Corpus, SubsampleParams, Vocabulary};
pub use factorizer::{Embeddings, TrainConfig, TrainReport};
pub use pmi::{CellFilter, PmiKind, PmiTransform, PmiValue, PmiVariantSpec};

/// Derive an independent seed for a named pipeline stage.
///
/// Counting and training subsample with different streams even when the
/// user supplies one seed.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    mix64(seed ^ mix64(stage.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// splitmix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) from a 64-bit hash.
#[inline]
pub(crate) fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
