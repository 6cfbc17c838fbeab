//! PMI variants evaluated lazily per cell, and the sign filter of the
//! positive-only / nonpositive-only ablation models.
//!
//! All logarithms are natural. With context smoothing the context
//! probability `M_*c / M_**` is replaced by `M_*c^a / sum_c' M_*c'^a`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cooccurrence::{CoocError, CoocMatrix, SmoothedContextDistribution};

#[derive(Debug, Error, PartialEq)]
pub enum PmiError {
    #[error("word {word} has zero marginal")]
    UndefinedWord { word: u32 },
    #[error("context {ctx} has zero marginal")]
    UndefinedContext { ctx: u32 },
    #[error("invalid variant {input:?}: {reason}")]
    Grammar { input: String, reason: String },
    #[error("clip floor z must be finite and <= 0, got {0}")]
    InvalidFloor(f64),
    #[error("Laplace pseudocount must be finite and > 0, got {0}")]
    InvalidPseudocount(f64),
    #[error("smoothing exponent must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
}

/// Which transform of the count matrix is factorized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PmiKind {
    Ppmi,
    /// max(z, PMI) with z <= 0.
    Cpmi { z: f64 },
    Npmi,
    /// NPMI on the negative spectrum, PMI elsewhere.
    Nnegpmi,
    /// PMI over counts with `beta` added to every cell.
    Lpmi { beta: f64 },
}

/// Which SGD steps are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CellFilter {
    #[default]
    All,
    /// Train only cells whose target is > 0.
    PositiveOnly,
    /// Train only cells whose target is <= 0.
    NonpositiveOnly,
}

impl CellFilter {
    #[inline]
    pub fn accepts(self, target: f64) -> bool {
        match self {
            CellFilter::All => true,
            CellFilter::PositiveOnly => target > 0.0,
            CellFilter::NonpositiveOnly => target <= 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmiVariantSpec {
    pub kind: PmiKind,
    pub alpha: f64,
    pub filter: CellFilter,
}

impl PmiVariantSpec {
    pub const DEFAULT_ALPHA: f64 = 0.75;

    pub fn new(kind: PmiKind, alpha: f64, filter: CellFilter) -> Result<Self, PmiError> {
        match kind {
            PmiKind::Cpmi { z } if !(z.is_finite() && z <= 0.0) => {
                return Err(PmiError::InvalidFloor(z))
            }
            PmiKind::Lpmi { beta } if !(beta.is_finite() && beta > 0.0) => {
                return Err(PmiError::InvalidPseudocount(beta))
            }
            _ => {}
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(PmiError::InvalidAlpha(alpha));
        }
        Ok(PmiVariantSpec {
            kind,
            alpha,
            filter,
        })
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self, PmiError> {
        Self::new(self.kind, alpha, self.filter)
    }
}

impl FromStr for PmiVariantSpec {
    type Err = PmiError;

    /// Grammar: `ppmi | cpmi:<z> | npmi | nnegpmi | lpmi:<beta>`, optionally
    /// followed by `+pos` or `+neg`.
    fn from_str(input: &str) -> Result<Self, PmiError> {
        let bad = |reason: &str| PmiError::Grammar {
            input: input.to_owned(),
            reason: reason.to_owned(),
        };
        let s = input.trim().to_ascii_lowercase();
        let (body, filter) = if let Some(b) = s.strip_suffix("+pos") {
            (b, CellFilter::PositiveOnly)
        } else if let Some(b) = s.strip_suffix("+neg") {
            (b, CellFilter::NonpositiveOnly)
        } else {
            (s.as_str(), CellFilter::All)
        };
        let (name, param) = match body.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (body, None),
        };
        let number = |p: Option<&str>| -> Result<f64, PmiError> {
            let p = p.ok_or_else(|| bad("missing numeric parameter"))?;
            p.parse::<f64>()
                .map_err(|_| bad(&format!("cannot parse {p:?} as a number")))
        };
        let kind = match name {
            "ppmi" | "npmi" | "nnegpmi" if param.is_some() => {
                return Err(bad("this variant takes no parameter"))
            }
            "ppmi" => PmiKind::Ppmi,
            "npmi" => PmiKind::Npmi,
            "nnegpmi" => PmiKind::Nnegpmi,
            "cpmi" => {
                let p = param.unwrap_or("");
                if p.starts_with('+') {
                    return Err(bad("clip floor z must be <= 0"));
                }
                let z = number(param)?;
                if !(z.is_finite() && z <= 0.0) {
                    return Err(bad("clip floor z must be <= 0"));
                }
                PmiKind::Cpmi { z }
            }
            "lpmi" => {
                let beta = number(param)?;
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(bad("pseudocount must be > 0"));
                }
                PmiKind::Lpmi { beta }
            }
            _ => return Err(bad("unknown variant")),
        };
        PmiVariantSpec::new(kind, Self::DEFAULT_ALPHA, filter)
    }
}

impl fmt::Display for PmiVariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PmiKind::Ppmi => write!(f, "ppmi")?,
            PmiKind::Cpmi { z } => write!(f, "cpmi:{z}")?,
            PmiKind::Npmi => write!(f, "npmi")?,
            PmiKind::Nnegpmi => write!(f, "nnegpmi")?,
            PmiKind::Lpmi { beta } => write!(f, "lpmi:{beta}")?,
        }
        match self.filter {
            CellFilter::All => Ok(()),
            CellFilter::PositiveOnly => write!(f, "+pos"),
            CellFilter::NonpositiveOnly => write!(f, "+neg"),
        }
    }
}

/// PMI of one cell; negative infinity only for unobserved pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PmiValue {
    Finite(f64),
    NegInfinity,
}

impl PmiValue {
    pub fn to_f64(self) -> f64 {
        match self {
            PmiValue::Finite(v) => v,
            PmiValue::NegInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_neg_infinity(self) -> bool {
        matches!(self, PmiValue::NegInfinity)
    }
}

/// PMI of (w, c) using the smoothed context distribution.
pub fn pmi(
    m: &CoocMatrix,
    dist: &SmoothedContextDistribution,
    w: u32,
    c: u32,
) -> Result<PmiValue, PmiError> {
    check_defined(m, w, c)?;
    let mwc = m.get(w, c);
    if mwc == 0.0 {
        return Ok(PmiValue::NegInfinity);
    }
    Ok(PmiValue::Finite(smoothed_pmi(
        mwc,
        m.row_marginal(w),
        m.grand_total(),
        dist.probability(c),
        dist.alpha(),
        m.col_marginal(c),
    )))
}

fn check_defined(m: &CoocMatrix, w: u32, c: u32) -> Result<(), PmiError> {
    if m.row_marginal(w) <= 0.0 {
        return Err(PmiError::UndefinedWord { word: w });
    }
    if m.col_marginal(c) <= 0.0 {
        return Err(PmiError::UndefinedContext { ctx: c });
    }
    Ok(())
}

// With alpha = 1 the context probability is M_*c / M_**, and the result is
// evaluated as ln(M_wc M_** / (M_w* M_*c)) directly.
#[inline]
fn smoothed_pmi(mwc: f64, mw: f64, total: f64, pc: f64, alpha: f64, mc: f64) -> f64 {
    if alpha == 1.0 {
        (mwc * total / (mw * mc)).ln()
    } else {
        (mwc / mw / pc).ln()
    }
}

#[inline]
fn npmi_from(pmi: PmiValue, mwc: f64, total: f64) -> f64 {
    match pmi {
        PmiValue::NegInfinity => -1.0,
        PmiValue::Finite(p) => {
            let denom = -(mwc / total).ln();
            if p == denom {
                1.0
            } else {
                p / denom
            }
        }
    }
}

#[inline]
fn apply_kind(kind: PmiKind, pmi: PmiValue, mwc: f64, total: f64) -> f64 {
    match kind {
        PmiKind::Ppmi => pmi.to_f64().max(0.0),
        PmiKind::Cpmi { z } => pmi.to_f64().max(z),
        PmiKind::Npmi => npmi_from(pmi, mwc, total),
        PmiKind::Nnegpmi => match pmi {
            PmiValue::Finite(p) if p >= 0.0 => p,
            _ => npmi_from(pmi, mwc, total),
        },
        PmiKind::Lpmi { .. } => unreachable!("handled by the Laplace path"),
    }
}

/// Target value of (w, c) under `spec`. Always finite.
///
/// This recomputes Laplace-adjusted marginals on every call; use
/// [`PmiTransform`] when evaluating many cells.
pub fn transform_cell(
    spec: &PmiVariantSpec,
    m: &CoocMatrix,
    dist: &SmoothedContextDistribution,
    w: u32,
    c: u32,
) -> Result<f64, PmiError> {
    match spec.kind {
        PmiKind::Lpmi { beta } => {
            check_defined(m, w, c)?;
            let t = PmiTransform::laplace(m, beta, dist.alpha()).map_err(|_| {
                PmiError::InvalidAlpha(dist.alpha())
            })?;
            t.transform_cell(w, c)
        }
        kind => {
            let p = pmi(m, dist, w, c)?;
            Ok(apply_kind(kind, p, m.get(w, c), m.grand_total()))
        }
    }
}

/// Whether an SGD step on a cell with this target is executed.
#[inline]
pub fn should_train_cell(spec: &PmiVariantSpec, target: f64) -> bool {
    spec.filter.accepts(target)
}

/// Cached per-row and per-context terms for fast lazy evaluation.
#[derive(Clone, Debug)]
pub struct PmiTransform<'a> {
    m: &'a CoocMatrix,
    spec: PmiVariantSpec,
    // Added to every cell count; zero except for LPMI.
    pseudocount: f64,
    // ln of the (adjusted) row marginal.
    ln_row: Vec<f64>,
    // ln of the (adjusted, smoothed) context probability.
    ln_ctx: Vec<f64>,
    total: f64,
    ln_total: f64,
}

impl<'a> PmiTransform<'a> {
    pub fn new(m: &'a CoocMatrix, spec: PmiVariantSpec) -> Result<Self, CoocError> {
        let beta = match spec.kind {
            PmiKind::Lpmi { beta } => beta,
            _ => 0.0,
        };
        let mut t = Self::laplace(m, beta, spec.alpha)?;
        t.spec = spec;
        Ok(t)
    }

    fn laplace(m: &'a CoocMatrix, beta: f64, alpha: f64) -> Result<Self, CoocError> {
        let n_rows = m.n_words() as f64;
        let n_cols = m.n_contexts() as f64;
        let ln_row = m
            .row_marginals()
            .iter()
            .map(|&r| (r + beta * n_cols).ln())
            .collect();
        let total = m.grand_total() + beta * n_rows * n_cols;
        let ln_ctx = if alpha == 1.0 {
            m.col_marginals()
                .iter()
                .map(|&c| ((c + beta * n_rows) / total).ln())
                .collect()
        } else {
            let adjusted: Vec<f64> = m.col_marginals().iter().map(|&c| c + beta * n_rows).collect();
            let dist = SmoothedContextDistribution::from_marginals(&adjusted, alpha)?;
            dist.probabilities().iter().map(|p| p.ln()).collect()
        };
        let spec = PmiVariantSpec {
            kind: if beta > 0.0 {
                PmiKind::Lpmi { beta }
            } else {
                PmiKind::Ppmi
            },
            alpha,
            filter: CellFilter::All,
        };
        Ok(PmiTransform {
            m,
            spec,
            pseudocount: beta,
            ln_row,
            ln_ctx,
            total,
            ln_total: total.ln(),
        })
    }

    pub fn spec(&self) -> &PmiVariantSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &'a CoocMatrix {
        self.m
    }

    /// Both the word and the context occur in the counted corpus.
    #[inline]
    pub fn is_defined(&self, w: u32, c: u32) -> bool {
        self.m.row_marginal(w) > 0.0 && self.m.col_marginal(c) > 0.0
    }

    /// Plain (unsmoothed-by-Laplace) PMI of the cell.
    #[inline]
    pub fn pmi(&self, w: u32, c: u32) -> Result<PmiValue, PmiError> {
        check_defined(self.m, w, c)?;
        let mwc = self.m.get(w, c);
        Ok(self.pmi_of_count(w, c, mwc))
    }

    #[inline]
    fn pmi_of_count(&self, w: u32, c: u32, mwc: f64) -> PmiValue {
        let x = mwc + self.pseudocount;
        if x == 0.0 {
            return PmiValue::NegInfinity;
        }
        if self.spec.alpha == 1.0 {
            let mw = self.m.row_marginal(w) + self.pseudocount * self.m.n_contexts() as f64;
            let mc = self.m.col_marginal(c) + self.pseudocount * self.m.n_words() as f64;
            PmiValue::Finite((x * self.total / (mw * mc)).ln())
        } else {
            PmiValue::Finite(x.ln() - self.ln_row[w as usize] - self.ln_ctx[c as usize])
        }
    }

    /// Target value of (w, c). Always finite.
    #[inline]
    pub fn transform_cell(&self, w: u32, c: u32) -> Result<f64, PmiError> {
        check_defined(self.m, w, c)?;
        Ok(self.transform_count(w, c, self.m.get(w, c)))
    }

    /// Target value assuming the cell holds `mwc`, marginals unchanged.
    #[inline]
    pub fn transform_count(&self, w: u32, c: u32, mwc: f64) -> f64 {
        let p = self.pmi_of_count(w, c, mwc);
        match self.spec.kind {
            PmiKind::Lpmi { .. } => p.to_f64(),
            kind => apply_kind(kind, p, mwc, self.total),
        }
    }

    #[inline]
    pub fn should_train(&self, target: f64) -> bool {
        self.spec.filter.accepts(target)
    }

    pub fn ln_total(&self) -> f64 {
        self.ln_total
    }
}
