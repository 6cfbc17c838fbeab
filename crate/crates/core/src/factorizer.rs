//! SGD factorization `M' ~ W C^T` over window-sampled and negative-sampled
//! cells.
//!
//! Every in-window (word, context) pair yields one step on
//! `1/2 (W_w . C_c - M'_wc)^2`, and every center word additionally yields
//! `k` steps on contexts drawn from `P_n(c) ~ M_*c^neg_power`. The cell
//! filter of the variant decides which of these steps are executed.

use std::ops::ControlFlow;
use std::time::Instant;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::WeightedAliasIndex;
use thiserror::Error;

use crate::cooccurrence::{CoocError, CoocMatrix, ContextSpace};
use crate::corpus::{Corpus, SubsampleParams, Subsampler, Vocabulary};
use crate::pmi::{PmiKind, PmiTransform, PmiVariantSpec};
use crate::derive_seed;

/// Seed-derivation tags for the stochastic stages.
pub mod stage {
    pub const COUNT_SUBSAMPLE: u64 = 1;
    pub const TRAIN_SUBSAMPLE: u64 = 2;
    pub const TRAIN_NEGATIVES: u64 = 3;
    pub const INIT: u64 = 4;
}

/// Final learning rate as a fraction of the initial one.
pub const LR_FLOOR: f64 = 1e-4;
/// Mean epoch loss above which training is aborted.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(
        "cooccurrence matrix was built with window {m_window} positional={m_positional}, \
         training asks for window {window} positional={positional}"
    )]
    MatrixMismatch {
        m_window: usize,
        m_positional: bool,
        window: usize,
        positional: bool,
    },
    #[error("corpus uses word id {id} but the matrix has {n_words} rows")]
    VocabMismatch { id: u32, n_words: usize },
    #[error("non-finite residual {residual} at step {step} on pair ({word}, {ctx})")]
    NonFinite {
        step: u64,
        word: u32,
        ctx: u32,
        residual: f64,
    },
    #[error("training diverged: mean loss {mean_loss} in epoch {epoch}")]
    Diverged {
        epoch: usize,
        mean_loss: f64,
        report: Box<TrainReport>,
    },
    #[error(transparent)]
    Matrix(#[from] CoocError),
}

/// Word matrix W (|V| x d) and context matrix C (|contexts| x d), row major.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    dim: usize,
    words: Vec<f64>,
    contexts: Vec<f64>,
}

impl Embeddings {
    /// Entries i.i.d. uniform on [-0.5/dim, 0.5/dim].
    pub fn init(
        vocab_size: usize,
        ctx_size: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if vocab_size == 0 || ctx_size == 0 || dim == 0 {
            return Err(TrainError::Config(
                "vocabulary, context space and dimension must be non-empty".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dim as f64;
        let law = Uniform::new_inclusive(-half, half);
        let words = (0..vocab_size * dim).map(|_| law.sample(&mut rng)).collect();
        let contexts = (0..ctx_size * dim).map(|_| law.sample(&mut rng)).collect();
        Ok(Embeddings {
            dim,
            words,
            contexts,
        })
    }

    /// Build from raw row-major data.
    pub fn from_parts(dim: usize, words: Vec<f64>, contexts: Vec<f64>) -> Self {
        assert!(dim > 0 && words.len() % dim == 0 && contexts.len() % dim == 0);
        Embeddings {
            dim,
            words,
            contexts,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_words(&self) -> usize {
        self.words.len() / self.dim
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len() / self.dim
    }

    pub fn word(&self, w: u32) -> &[f64] {
        let d = self.dim;
        &self.words[w as usize * d..(w as usize + 1) * d]
    }

    pub fn context(&self, c: u32) -> &[f64] {
        let d = self.dim;
        &self.contexts[c as usize * d..(c as usize + 1) * d]
    }

    pub fn word_matrix(&self) -> &[f64] {
        &self.words
    }

    pub fn context_matrix(&self) -> &[f64] {
        &self.contexts
    }

    /// W_w . C_c
    pub fn score(&self, w: u32, c: u32) -> f64 {
        dot(self.word(w), self.context(c))
    }

    pub fn all_finite(&self) -> bool {
        self.words.iter().chain(&self.contexts).all(|x| x.is_finite())
    }

    fn rows_mut(&mut self, w: u32, c: u32) -> (&mut [f64], &mut [f64]) {
        let d = self.dim;
        (
            &mut self.words[w as usize * d..(w as usize + 1) * d],
            &mut self.contexts[c as usize * d..(c as usize + 1) * d],
        )
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One simultaneous gradient step on `1/2 (w . c - target)^2`.
///
/// Returns the loss before the update and the residual.
#[inline]
fn update_rows(w: &mut [f64], c: &mut [f64], target: f64, lr: f64) -> (f64, f64) {
    let e = dot(w, c) - target;
    if !e.is_finite() {
        return (f64::NAN, e);
    }
    let g = lr * e;
    for (wi, ci) in w.iter_mut().zip(c.iter_mut()) {
        let (w0, c0) = (*wi, *ci);
        *wi = w0 - g * c0;
        *ci = c0 - g * w0;
    }
    (0.5 * e * e, e)
}

/// A single SGD step on cell (w, c). Returns the pre-update loss.
pub fn sgd_step(
    emb: &mut Embeddings,
    w: u32,
    c: u32,
    target: f64,
    lr: f64,
) -> Result<f64, TrainError> {
    if !target.is_finite() || !(lr > 0.0) {
        return Err(TrainError::Config(format!(
            "sgd_step needs a finite target and positive rate, got {target} and {lr}"
        )));
    }
    let (wr, cr) = emb.rows_mut(w, c);
    let (loss, e) = update_rows(wr, cr, target, lr);
    if !loss.is_finite() {
        return Err(TrainError::NonFinite {
            step: 0,
            word: w,
            ctx: c,
            residual: e,
        });
    }
    Ok(loss)
}

/// Every hyperparameter of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub window: usize,
    pub positional: bool,
    pub dim: usize,
    pub negatives: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Subsampling threshold; `None` disables subsampling.
    pub subsample: Option<f64>,
    pub alpha: f64,
    pub neg_power: f64,
    pub variant: PmiVariantSpec,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 2,
            positional: true,
            dim: 300,
            negatives: 5,
            lr: 0.025,
            epochs: 5,
            subsample: Some(1e-5),
            alpha: 0.75,
            neg_power: 0.75,
            variant: "ppmi".parse().expect("static variant"),
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0 && t.is_finite()) {
                return bad("subsample threshold must be positive");
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.neg_power > 0.0 && self.neg_power.is_finite()) {
            return bad("neg_power must be positive");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    /// The variant with this config's smoothing exponent.
    pub fn resolved_variant(&self) -> PmiVariantSpec {
        PmiVariantSpec {
            alpha: self.alpha,
            ..self.variant
        }
    }

    /// Subsampling used by the training pass of `epoch`.
    pub fn train_subsample(&self, epoch: usize) -> SubsampleParams {
        SubsampleParams {
            threshold: self.subsample,
            seed: derive_seed(derive_seed(self.seed, stage::TRAIN_SUBSAMPLE), epoch as u64),
        }
    }

    /// Subsampling used when counting the matrix for this run.
    pub fn count_subsample(&self) -> SubsampleParams {
        SubsampleParams {
            threshold: self.subsample,
            seed: derive_seed(self.seed, stage::COUNT_SUBSAMPLE),
        }
    }

    fn negatives_seed(&self, epoch: usize, shard: usize) -> u64 {
        derive_seed(
            derive_seed(self.seed, stage::TRAIN_NEGATIVES),
            ((epoch as u64) << 32) | shard as u64,
        )
    }

    fn check_matrix(&self, m: &CoocMatrix) -> Result<(), TrainError> {
        if m.window() != self.window || m.positional() != self.positional {
            return Err(TrainError::MatrixMismatch {
                m_window: m.window(),
                m_positional: m.positional(),
                window: self.window,
                positional: self.positional,
            });
        }
        Ok(())
    }
}

/// Where a visited pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSource {
    Window,
    Negative,
}

/// A visited cell with its transformed target value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledPair {
    pub w: u32,
    pub c: u32,
    pub source: PairSource,
    pub target: f64,
}

/// Per-epoch statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub executed: u64,
    pub skipped: u64,
    /// Executed steps whose target was > 0 / <= 0.
    pub executed_positive: u64,
    pub executed_nonpositive: u64,
    /// Pairs with a word or context absent from the matrix.
    pub undefined: u64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    pub fn steps_executed(&self) -> u64 {
        self.epochs.iter().map(|e| e.executed).sum()
    }

    pub fn steps_skipped(&self) -> u64 {
        self.epochs.iter().map(|e| e.skipped).sum()
    }

    pub fn executed_positive(&self) -> u64 {
        self.epochs.iter().map(|e| e.executed_positive).sum()
    }

    pub fn executed_nonpositive(&self) -> u64 {
        self.epochs.iter().map(|e| e.executed_nonpositive).sum()
    }

    pub fn mean_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }

    /// One `key=value` line per epoch.
    pub fn log_lines(&self) -> Vec<String> {
        self.epochs
            .iter()
            .map(|e| {
                format!(
                    "epoch={} mean_loss={:.6} executed={} skipped={} executed_positive={} \
                     executed_nonpositive={} undefined={} wall_s={:.3}",
                    e.epoch,
                    e.mean_loss,
                    e.executed,
                    e.skipped,
                    e.executed_positive,
                    e.executed_nonpositive,
                    e.undefined,
                    e.wall_seconds
                )
            })
            .collect()
    }
}

/// Receives every visited pair during single-threaded training.
pub trait StepObserver {
    fn on_pair(&mut self, pair: &SampledPair, executed: bool);
}

impl<F: FnMut(&SampledPair, bool)> StepObserver for F {
    fn on_pair(&mut self, pair: &SampledPair, executed: bool) {
        self(pair, executed)
    }
}

/// Negative context sampler with `P_n(c) ~ M_*c^power`.
pub struct NegativeSampler {
    alias: Option<WeightedAliasIndex<f64>>,
}

impl NegativeSampler {
    pub fn new(m: &CoocMatrix, power: f64) -> Result<Self, TrainError> {
        let weights: Vec<f64> = m.col_marginals().iter().map(|&x| x.powf(power)).collect();
        if weights.iter().all(|&w| w == 0.0) {
            return Ok(NegativeSampler { alias: None });
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| TrainError::Config(format!("negative distribution: {e}")))?;
        Ok(NegativeSampler { alias: Some(alias) })
    }

    #[inline]
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Option<u32> {
        self.alias.as_ref().map(|a| a.sample(rng) as u32)
    }
}

/// Visit the pairs of one shard of documents in training order: for each
/// retained center, its window pairs left to right, then `k` negatives.
///
/// `progress` receives the fraction of the shard's raw tokens processed
/// before each center.
fn walk_shard<F>(
    docs: &[(usize, &[u32])],
    space: ContextSpace,
    negatives: usize,
    subsampler: &Subsampler,
    sampler: &NegativeSampler,
    rng: &mut ChaCha8Rng,
    mut visit: F,
) -> ControlFlow<()>
where
    F: FnMut(u32, u32, PairSource, f64) -> ControlFlow<()>,
{
    let raw_total: usize = docs.iter().map(|d| d.1.len()).sum::<usize>().max(1);
    let window = space.window as i64;
    let mut raw_done = 0usize;
    let mut kept = Vec::new();
    for &(offset, doc) in docs {
        kept.clear();
        kept.extend(
            doc.iter()
                .enumerate()
                .filter(|&(i, &id)| subsampler.keep(id, (offset + i) as u64))
                .map(|(_, &id)| id),
        );
        let n = kept.len() as i64;
        for p in 0..n {
            let progress =
                (raw_done as f64 + doc.len() as f64 * p as f64 / n as f64) / raw_total as f64;
            let center = kept[p as usize];
            for off in -window..=window {
                let q = p + off;
                if off == 0 || q < 0 || q >= n {
                    continue;
                }
                let ctx = space.ctx_id(kept[q as usize], off as i32);
                visit(center, ctx, PairSource::Window, progress)?;
            }
            for _ in 0..negatives {
                if let Some(ctx) = sampler.sample(rng) {
                    visit(center, ctx, PairSource::Negative, progress)?;
                }
            }
        }
        raw_done += doc.len();
    }
    ControlFlow::Continue(())
}

fn shards(corpus: &Corpus, n: usize) -> Vec<Vec<(usize, &[u32])>> {
    let docs: Vec<(usize, &[u32])> = corpus.docs().collect();
    let per = corpus.len().div_ceil(n.max(1)).max(1);
    let mut out: Vec<Vec<(usize, &[u32])>> = vec![Vec::new()];
    let mut filled = 0;
    for d in docs {
        if filled >= per && out.len() < n {
            out.push(Vec::new());
            filled = 0;
        }
        filled += d.1.len();
        out.last_mut().expect("non-empty").push(d);
    }
    out
}

/// Row storage shared by Hogwild workers without locking.
///
/// Workers may race on the same row; lost or torn updates are tolerated.
struct SharedRows {
    words: *mut f64,
    contexts: *mut f64,
    dim: usize,
}

unsafe impl Send for SharedRows {}
unsafe impl Sync for SharedRows {}

impl SharedRows {
    fn new(emb: &mut Embeddings) -> Self {
        SharedRows {
            words: emb.words.as_mut_ptr(),
            contexts: emb.contexts.as_mut_ptr(),
            dim: emb.dim,
        }
    }

    /// # Safety
    /// `w` and `c` must be in range; the returned slices may alias slices
    /// held by other threads.
    #[allow(clippy::mut_from_ref)]
    #[inline]
    unsafe fn rows(&self, w: u32, c: u32) -> (&mut [f64], &mut [f64]) {
        (
            std::slice::from_raw_parts_mut(self.words.add(w as usize * self.dim), self.dim),
            std::slice::from_raw_parts_mut(self.contexts.add(c as usize * self.dim), self.dim),
        )
    }
}

#[derive(Default)]
struct ShardStats {
    loss: f64,
    report: EpochReport,
    error: Option<TrainError>,
}

#[allow(clippy::too_many_arguments)]
fn train_shard(
    docs: &[(usize, &[u32])],
    rows: &SharedRows,
    transform: &PmiTransform<'_>,
    cfg: &TrainConfig,
    subsampler: &Subsampler,
    sampler: &NegativeSampler,
    epoch: usize,
    shard: usize,
    step_base: u64,
    mut observer: Option<&mut dyn StepObserver>,
) -> ShardStats {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.negatives_seed(epoch, shard));
    let mut st = ShardStats::default();
    let space = transform.matrix().space();
    let total_epochs = cfg.epochs as f64;
    let mut step = step_base;
    let _ = walk_shard(
        docs,
        space,
        cfg.negatives,
        subsampler,
        sampler,
        &mut rng,
        |w, c, source, progress| {
            if !transform.is_defined(w, c) {
                st.report.undefined += 1;
                return ControlFlow::Continue(());
            }
            let target = transform
                .transform_cell(w, c)
                .expect("defined cells always transform");
            let executed = transform.should_train(target);
            if let Some(obs) = observer.as_deref_mut() {
                obs.on_pair(&SampledPair { w, c, source, target }, executed);
            }
            if !executed {
                st.report.skipped += 1;
                return ControlFlow::Continue(());
            }
            let frac = (epoch as f64 + progress) / total_epochs;
            let lr = cfg.lr * (1.0 - (1.0 - LR_FLOOR) * frac.min(1.0));
            // SAFETY: ids are validated against the matrix before training.
            let (wr, cr) = unsafe { rows.rows(w, c) };
            let (loss, e) = update_rows(wr, cr, target, lr);
            step += 1;
            if !loss.is_finite() {
                st.error = Some(TrainError::NonFinite {
                    step,
                    word: w,
                    ctx: c,
                    residual: e,
                });
                return ControlFlow::Break(());
            }
            st.loss += loss;
            st.report.executed += 1;
            if target > 0.0 {
                st.report.executed_positive += 1;
            } else {
                st.report.executed_nonpositive += 1;
            }
            ControlFlow::Continue(())
        },
    );
    st
}

fn check_corpus(corpus: &Corpus, m: &CoocMatrix) -> Result<(), TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if let Some(&id) = corpus.ids().iter().find(|&&id| id as usize >= m.n_words()) {
        return Err(TrainError::VocabMismatch {
            id,
            n_words: m.n_words(),
        });
    }
    Ok(())
}

/// Train embeddings; parallel (Hogwild) when `cfg.threads > 1`.
pub fn train(
    corpus: &Corpus,
    vocab: &Vocabulary,
    m: &CoocMatrix,
    cfg: &TrainConfig,
) -> Result<(Embeddings, TrainReport), TrainError> {
    train_impl(corpus, vocab, m, cfg, None)
}

/// Single-threaded training that reports every visited pair.
pub fn train_with_observer(
    corpus: &Corpus,
    vocab: &Vocabulary,
    m: &CoocMatrix,
    cfg: &TrainConfig,
    observer: &mut dyn StepObserver,
) -> Result<(Embeddings, TrainReport), TrainError> {
    let cfg = TrainConfig {
        threads: 1,
        ..cfg.clone()
    };
    train_impl(corpus, vocab, m, &cfg, Some(observer))
}

fn train_impl(
    corpus: &Corpus,
    vocab: &Vocabulary,
    m: &CoocMatrix,
    cfg: &TrainConfig,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<(Embeddings, TrainReport), TrainError> {
    cfg.validate()?;
    cfg.check_matrix(m)?;
    check_corpus(corpus, m)?;
    let transform = PmiTransform::new(m, cfg.resolved_variant())?;
    let sampler = NegativeSampler::new(m, cfg.neg_power)?;
    let mut emb = Embeddings::init(
        m.n_words(),
        m.n_contexts(),
        cfg.dim,
        derive_seed(cfg.seed, stage::INIT),
    )?;
    let shards = shards(corpus, cfg.threads);
    let mut report = TrainReport::default();
    let mut steps = 0u64;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let subsampler = Subsampler::new(vocab, cfg.train_subsample(epoch));
        let rows = SharedRows::new(&mut emb);
        let stats: Vec<ShardStats> = if shards.len() == 1 {
            vec![train_shard(
                &shards[0],
                &rows,
                &transform,
                cfg,
                &subsampler,
                &sampler,
                epoch,
                0,
                steps,
                observer.as_mut().map(|o| &mut **o as &mut dyn StepObserver),
            )]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(i, docs)| {
                        let (rows, transform, sampler, subsampler) =
                            (&rows, &transform, &sampler, &subsampler);
                        scope.spawn(move || {
                            train_shard(
                                docs, rows, transform, cfg, subsampler, sampler, epoch, i, steps,
                                None,
                            )
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            })
        };

        let mut er = EpochReport {
            epoch: epoch + 1,
            ..EpochReport::default()
        };
        let mut loss = 0.0;
        for mut s in stats {
            if let Some(e) = s.error.take() {
                return Err(e);
            }
            loss += s.loss;
            er.executed += s.report.executed;
            er.skipped += s.report.skipped;
            er.executed_positive += s.report.executed_positive;
            er.executed_nonpositive += s.report.executed_nonpositive;
            er.undefined += s.report.undefined;
        }
        steps += er.executed;
        er.mean_loss = if er.executed > 0 {
            loss / er.executed as f64
        } else {
            0.0
        };
        er.wall_seconds = started.elapsed().as_secs_f64();
        let mean = er.mean_loss;
        report.epochs.push(er);
        if !(mean <= DIVERGENCE_LOSS) {
            return Err(TrainError::Diverged {
                epoch: epoch + 1,
                mean_loss: mean,
                report: Box::new(report),
            });
        }
    }
    Ok((emb, report))
}

/// Pairs drawn for a spectrum histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSample {
    pub pairs: Vec<SampledPair>,
    /// The corpus was exhausted and sampling continued with a fresh epoch.
    pub wrapped: bool,
}

/// Draw `n` pairs in training order (filters ignored) and record
/// `max(z, PMI)` for each.
pub fn sample_spectrum(
    corpus: &Corpus,
    vocab: &Vocabulary,
    m: &CoocMatrix,
    cfg: &TrainConfig,
    n: usize,
    z: f64,
) -> Result<SpectrumSample, TrainError> {
    if n == 0 {
        return Err(TrainError::Config("n must be at least 1".into()));
    }
    cfg.validate()?;
    cfg.check_matrix(m)?;
    check_corpus(corpus, m)?;
    let variant = PmiVariantSpec::new(PmiKind::Cpmi { z }, cfg.alpha, Default::default())
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let transform = PmiTransform::new(m, variant)?;
    let sampler = NegativeSampler::new(m, cfg.neg_power)?;
    let docs: Vec<(usize, &[u32])> = corpus.docs().collect();
    let mut pairs = Vec::with_capacity(n);
    let mut wrapped = false;
    let mut epoch = 0;
    loop {
        let before = pairs.len();
        let subsampler = Subsampler::new(vocab, cfg.train_subsample(epoch));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.negatives_seed(epoch, 0));
        let flow = walk_shard(
            &docs,
            m.space(),
            cfg.negatives,
            &subsampler,
            &sampler,
            &mut rng,
            |w, c, source, _| {
                if transform.is_defined(w, c) {
                    let target = transform.transform_cell(w, c).expect("defined");
                    pairs.push(SampledPair { w, c, source, target });
                }
                if pairs.len() >= n {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        );
        if flow.is_break() {
            return Ok(SpectrumSample { pairs, wrapped });
        }
        if pairs.len() == before {
            return Err(TrainError::Config(
                "corpus yields no sampleable pairs".into(),
            ));
        }
        wrapped = true;
        epoch += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccurrence::count_cooccurrences;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Embeddings::init(10, 40, 300, 5).unwrap();
        let b = Embeddings::init(10, 40, 300, 5).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 600.0;
        assert!(a
            .word_matrix()
            .iter()
            .chain(a.context_matrix())
            .all(|x| x.abs() <= bound));
        assert_ne!(a, Embeddings::init(10, 40, 300, 6).unwrap());
        assert!(Embeddings::init(0, 1, 1, 0).is_err());
    }

    #[test]
    fn init_mean_is_zero() {
        let e = Embeddings::init(1000, 1, 1000, 17).unwrap();
        let xs = e.word_matrix();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        // Uniform on [-h, h] has variance h^2/3.
        let h = 0.5 / 1000.0;
        let se = (h * h / 3.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn zero_residual_leaves_rows() {
        let mut e = Embeddings::from_parts(2, vec![1.0, 2.0], vec![3.0, 4.0]);
        let loss = sgd_step(&mut e, 0, 0, 11.0, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(e.word(0), [1.0, 2.0]);
        assert_eq!(e.context(0), [3.0, 4.0]);
    }

    #[test]
    fn hand_evaluated_step() {
        let mut e = Embeddings::from_parts(1, vec![1.0], vec![1.0]);
        let loss = sgd_step(&mut e, 0, 0, 0.0, 0.1).unwrap();
        assert_eq!(loss, 0.5);
        assert!((e.word(0)[0] - 0.9).abs() < 1e-15);
        assert!((e.context(0)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_step_is_reported() {
        let mut e = Embeddings::from_parts(1, vec![f64::MAX], vec![f64::MAX]);
        assert!(matches!(
            sgd_step(&mut e, 0, 0, 0.0, 0.1),
            Err(TrainError::NonFinite { .. })
        ));
    }

    /// Gradient recovered from a step: new = old - lr * grad.
    fn step_gradient(w: &[f64], c: &[f64], target: f64) -> (Vec<f64>, Vec<f64>) {
        let lr = 1e-3;
        let mut e = Embeddings::from_parts(w.len(), w.to_vec(), c.to_vec());
        sgd_step(&mut e, 0, 0, target, lr).unwrap();
        let gw = w.iter().zip(e.word(0)).map(|(a, b)| (a - b) / lr).collect();
        let gc = c.iter().zip(e.context(0)).map(|(a, b)| (a - b) / lr).collect();
        (gw, gc)
    }

    fn loss(w: &[f64], c: &[f64], target: f64) -> f64 {
        let e = dot(w, c) - target;
        0.5 * e * e
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-5;
        for _ in 0..100 {
            let w: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target = rng.gen_range(-3.0..3.0);
            let (gw, gc) = step_gradient(&w, &c, target);
            for i in 0..10 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (loss(&wp, &c, target) - loss(&wm, &c, target)) / (2.0 * h);
                assert!((fd - gw[i]).abs() <= 1e-6 * fd.abs().max(gw[i].abs()).max(1e-3));
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp[i] += h;
                cm[i] -= h;
                let fd = (loss(&w, &cp, target) - loss(&w, &cm, target)) / (2.0 * h);
                assert!((fd - gc[i]).abs() <= 1e-6 * fd.abs().max(gc[i].abs()).max(1e-3));
            }
        }
    }

    fn toy(n_words: usize, len: usize, seed: u64) -> (Vocabulary, Corpus) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<u32> = (0..len)
            .map(|_| {
                // Skewed toward small ids.
                let u: f64 = rng.gen();
                ((u * u) * n_words as f64) as u32
            })
            .collect();
        let mut counts = vec![0u64; n_words];
        for &i in &ids {
            counts[i as usize] += 1;
        }
        let vocab = Vocabulary::from_sorted(
            counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("w{i}"), c))
                .collect(),
            1,
        );
        (vocab, Corpus::from_ids(ids))
    }

    fn quick_cfg(variant: &str) -> TrainConfig {
        TrainConfig {
            dim: 8,
            epochs: 2,
            subsample: None,
            variant: variant.parse().unwrap(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rejects_empty_corpus_and_mismatch() {
        let (vocab, corpus) = toy(10, 200, 1);
        let cfg = quick_cfg("ppmi");
        let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
        assert!(matches!(
            train(&Corpus::default(), &vocab, &m, &cfg),
            Err(TrainError::EmptyCorpus)
        ));
        let cfg3 = TrainConfig { window: 3, ..cfg.clone() };
        assert!(matches!(
            train(&corpus, &vocab, &m, &cfg3),
            Err(TrainError::MatrixMismatch { .. })
        ));
        let bad = TrainConfig { epochs: 0, ..cfg };
        assert!(matches!(train(&corpus, &vocab, &m, &bad), Err(TrainError::Config(_))));
    }

    #[test]
    fn filters_are_respected() {
        let (vocab, corpus) = toy(20, 2000, 2);
        for (variant, positive_allowed) in [("ppmi+pos", true), ("cpmi:-2+neg", false)] {
            let cfg = quick_cfg(variant);
            let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
            let mut rejected = 0u64;
            let mut violations = 0u64;
            let mut obs = |p: &SampledPair, executed: bool| {
                if !executed {
                    rejected += 1;
                } else if (p.target > 0.0) != positive_allowed {
                    violations += 1;
                }
            };
            let (_, report) = train_with_observer(&corpus, &vocab, &m, &cfg, &mut obs).unwrap();
            assert_eq!(violations, 0, "{variant}");
            assert_eq!(report.steps_skipped(), rejected);
            assert!(rejected > 0 && report.steps_executed() > 0);
            if positive_allowed {
                assert_eq!(report.executed_nonpositive(), 0);
            } else {
                assert_eq!(report.executed_positive(), 0);
            }
        }
    }

    #[test]
    fn window_only_visits_match_enumeration() {
        let (vocab, corpus) = toy(12, 100, 3);
        let cfg = TrainConfig {
            negatives: 0,
            epochs: 1,
            ..quick_cfg("ppmi")
        };
        let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
        let mut visited = Vec::new();
        let mut obs = |p: &SampledPair, _: bool| visited.push((p.w, p.c));
        train_with_observer(&corpus, &vocab, &m, &cfg, &mut obs).unwrap();

        let ids = corpus.ids();
        let s = m.space();
        let mut expected = Vec::new();
        for p in 0..ids.len() as i64 {
            for off in [-2i64, -1, 1, 2] {
                let q = p + off;
                if q >= 0 && q < ids.len() as i64 {
                    expected.push((ids[p as usize], s.ctx_id(ids[q as usize], off as i32)));
                }
            }
        }
        assert_eq!(visited, expected);
    }

    #[test]
    fn single_thread_runs_are_bit_identical() {
        let (vocab, corpus) = toy(30, 3000, 4);
        let cfg = TrainConfig {
            subsample: Some(1e-2),
            ..quick_cfg("nnegpmi")
        };
        let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
        let a = train(&corpus, &vocab, &m, &cfg).unwrap();
        let b = train(&corpus, &vocab, &m, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.mean_losses(), b.1.mean_losses());
        assert!(a.0.all_finite());
    }

    #[test]
    fn hogwild_training_runs() {
        let (vocab, corpus) = toy(30, 3000, 4);
        let corpus = Corpus::from_docs(corpus.ids().chunks(100).map(|c| c.to_vec()));
        let cfg = TrainConfig {
            threads: 3,
            ..quick_cfg("ppmi")
        };
        let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
        let (emb, report) = train(&corpus, &vocab, &m, &cfg).unwrap();
        assert!(emb.all_finite());
        assert_eq!(report.epochs.len(), 2);
        assert!(report.steps_executed() > 0);
    }

    #[test]
    fn negative_sampling_law() {
        let space = ContextSpace::new(4, 1, false).unwrap();
        let m = CoocMatrix::from_sorted_cells(
            space,
            [(0, 0, 100.0), (1, 1, 10.0), (2, 2, 1.0), (3, 3, 50.0)],
        )
        .unwrap();
        let sampler = NegativeSampler::new(&m, 0.75).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let mut hist = [0usize; 4];
        for _ in 0..n {
            hist[sampler.sample(&mut rng).unwrap() as usize] += 1;
        }
        let w: Vec<f64> = m.col_marginals().iter().map(|x| x.powf(0.75)).collect();
        let z: f64 = w.iter().sum();
        let tv: f64 = (0..4)
            .map(|i| (hist[i] as f64 / n as f64 - w[i] / z).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn spectrum_floor_matches_unobserved_fraction() {
        let (vocab, corpus) = toy(40, 10_000, 5);
        let cfg = TrainConfig {
            subsample: Some(1e-2),
            ..quick_cfg("ppmi")
        };
        let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
        let s = sample_spectrum(&corpus, &vocab, &m, &cfg, 5000, -5.0).unwrap();
        assert_eq!(s.pairs.len(), 5000);
        assert!(s.pairs.iter().all(|p| p.target >= -5.0));
        let at_floor = s.pairs.iter().filter(|p| p.target == -5.0).count();
        let unobserved = s.pairs.iter().filter(|p| m.get(p.w, p.c) == 0.0).count();
        assert_eq!(at_floor, unobserved);
        assert!(!s.wrapped);

        // More pairs than one epoch yields.
        let big = sample_spectrum(&corpus, &vocab, &m, &cfg, 500_000, -5.0).unwrap();
        assert!(big.wrapped);
        assert_eq!(big.pairs.len(), 500_000);
    }

    #[test]
    fn spectrum_follows_training_order() {
        let (vocab, corpus) = toy(15, 500, 6);
        let cfg = TrainConfig { epochs: 1, ..quick_cfg("ppmi") };
        let m = count_cooccurrences(&corpus, &vocab, 2, true, cfg.count_subsample()).unwrap();
        let mut visited = Vec::new();
        let mut obs = |p: &SampledPair, _: bool| visited.push((p.w, p.c, p.source));
        train_with_observer(&corpus, &vocab, &m, &cfg, &mut obs).unwrap();
        let s = sample_spectrum(&corpus, &vocab, &m, &cfg, visited.len(), -3.0).unwrap();
        let sampled: Vec<_> = s.pairs.iter().map(|p| (p.w, p.c, p.source)).collect();
        assert_eq!(sampled, visited);
    }

    proptest! {
        #[test]
        fn step_reduces_loss_for_small_rates(
            w in prop::collection::vec(-1.0f64..1.0, 5),
            c in prop::collection::vec(-1.0f64..1.0, 5),
            target in -2.0f64..2.0,
        ) {
            let before = loss(&w, &c, target);
            let mut e = Embeddings::from_parts(5, w, c);
            sgd_step(&mut e, 0, 0, target, 1e-3).unwrap();
            let after = loss(e.word(0), e.context(0), target);
            prop_assert!(after <= before + 1e-12);
        }
    }
}
