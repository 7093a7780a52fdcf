//! Consistency wrappers around a blackbox completer.
//!
//! The wrapped completer never sees raw ratings in `sc` or `uc` mode. Input is
//! mapped to its canonical form (zero row/column sums, or unit row/column
//! products), the blackbox completes that, and the row/column offsets or
//! scales are applied in reverse to the output. Any deterministic blackbox
//! wrapped this way is shift consistent (`sc`) or unit consistent (`uc`).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::canonical::{self, ScaleVectors, ShiftVectors, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::ratings::{DenseMatrix, RatingsMatrix};
use crate::svd::{self, RandomizedOptions, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};

/// Refinement stops once no absent cell moves by more than this.
pub const REFINE_STOP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Sc,
    Uc,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Plain, Mode::Sc, Mode::Uc];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Sc => "sc",
            Mode::Uc => "uc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(Mode::Plain),
            "sc" => Ok(Mode::Sc),
            "uc" => Ok(Mode::Uc),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// How plain mode fills absent cells before the blackbox runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    ItemMean,
    UserMean,
    GlobalMean,
}

impl FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "item_mean" => Ok(FillPolicy::ItemMean),
            "user_mean" => Ok(FillPolicy::UserMean),
            "global_mean" => Ok(FillPolicy::GlobalMean),
            other => Err(Error::InvalidConfig(format!("unknown fill policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub k: usize,
    pub fill_policy: Option<FillPolicy>,
    pub clamp: Option<(f64, f64)>,
    pub canonical_tol: f64,
    pub canonical_max_iter: usize,
    pub refine_iters: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Plain,
            k: 10,
            fill_policy: Some(FillPolicy::ItemMean),
            clamp: None,
            canonical_tol: DEFAULT_TOL,
            canonical_max_iter: DEFAULT_MAX_ITER,
            refine_iters: 0,
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_clamp(mut self, clamp: Option<(f64, f64)>) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidRank { k: 0, max: 0 });
        }
        if !(self.canonical_tol > 0.0) {
            return Err(Error::InvalidConfig("canonical_tol must be positive".into()));
        }
        if self.canonical_max_iter == 0 {
            return Err(Error::InvalidConfig("canonical_max_iter must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!("clamp range [{lo}, {hi}] is empty")));
            }
        }
        if self.mode == Mode::Plain && self.fill_policy.is_none() {
            return Err(Error::MissingFillPolicy);
        }
        Ok(())
    }

    pub fn svd_options(&self) -> RandomizedOptions {
        RandomizedOptions {
            oversample: self.oversample,
            power_iters: self.power_iters,
            seed: self.seed,
        }
    }
}

/// The system whose consistency is imposed from outside.
///
/// Receives a fully filled matrix and the observation mask, returns a
/// prediction of the same shape.
pub trait CompletionBlackbox: Sync {
    fn complete(&self, input: &DenseMatrix, k: usize, mask: &RatingsMatrix) -> Result<DenseMatrix>;
}

impl<F> CompletionBlackbox for F
where
    F: Fn(&DenseMatrix, usize, &RatingsMatrix) -> Result<DenseMatrix> + Sync,
{
    fn complete(&self, input: &DenseMatrix, k: usize, mask: &RatingsMatrix) -> Result<DenseMatrix> {
        self(input, k, mask)
    }
}

/// Rank-`k` truncated SVD reconstruction, optionally with refinement passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvdBlackbox {
    pub refine_iters: usize,
    pub options: RandomizedOptions,
}

impl SvdBlackbox {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        SvdBlackbox {
            refine_iters: cfg.refine_iters,
            options: cfg.svd_options(),
        }
    }
}

impl CompletionBlackbox for SvdBlackbox {
    fn complete(&self, input: &DenseMatrix, k: usize, mask: &RatingsMatrix) -> Result<DenseMatrix> {
        svd_blackbox(input, k, self.refine_iters, mask, self.options)
    }
}

/// With `refine_iters = 0` this is a single rank-`k` reconstruction. Otherwise
/// absent cells of the working matrix are replaced by the latest prediction
/// (observed cells keep their input values) and the reconstruction repeats.
pub fn svd_blackbox(
    input: &DenseMatrix,
    k: usize,
    refine_iters: usize,
    mask: &RatingsMatrix,
    options: RandomizedOptions,
) -> Result<DenseMatrix> {
    input.check_shape(mask.n_rows(), mask.n_cols())?;
    let mut prediction = svd::reconstruct(&svd::rank_k_svd(input, k, options)?, k)?;
    if refine_iters == 0 {
        return Ok(prediction);
    }

    let mut working = input.clone();
    for _ in 0..refine_iters {
        let mut change = 0.0f64;
        {
            let w = working.as_matrix_mut();
            let p = prediction.as_matrix();
            for j in 0..mask.n_cols() {
                let mut observed = mask.col(j).map(|e| e.row).peekable();
                for i in 0..mask.n_rows() {
                    if observed.peek() == Some(&i) {
                        observed.next();
                        continue;
                    }
                    change = change.max((p[(i, j)] - w[(i, j)]).abs());
                    w[(i, j)] = p[(i, j)];
                }
            }
        }
        if change < REFINE_STOP {
            break;
        }
        prediction = svd::reconstruct(&svd::rank_k_svd(&working, k, options)?, k)?;
    }
    Ok(prediction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalDiagnostics {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub full: DenseMatrix,
    pub config: PipelineConfig,
    pub diagnostics: Option<CanonicalDiagnostics>,
}

#[derive(Debug, Clone)]
enum Restore {
    Identity,
    Shift(ShiftVectors),
    Scale(ScaleVectors),
}

/// Blackbox input for one mode, computed once and reusable across ranks.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    mode: Mode,
    dense: DenseMatrix,
    restore: Restore,
    diagnostics: Option<CanonicalDiagnostics>,
}

impl PreparedInput {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// The matrix handed to the blackbox.
    pub fn dense(&self) -> &DenseMatrix {
        &self.dense
    }

    pub fn diagnostics(&self) -> Option<CanonicalDiagnostics> {
        self.diagnostics
    }
}

/// Fills (plain) or canonicalizes (sc/uc) the observed ratings.
pub fn prepare(m: &RatingsMatrix, cfg: &PipelineConfig) -> Result<PreparedInput> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Plain => {
            let policy = cfg.fill_policy.ok_or(Error::MissingFillPolicy)?;
            Ok(PreparedInput {
                mode: Mode::Plain,
                dense: fill_plain(m, policy),
                restore: Restore::Identity,
                diagnostics: None,
            })
        }
        Mode::Sc => {
            let r = canonical::sc_canonicalize(m, cfg.canonical_tol, cfg.canonical_max_iter)?;
            Ok(PreparedInput {
                mode: Mode::Sc,
                dense: r.canonical,
                restore: Restore::Shift(r.transform),
                diagnostics: Some(CanonicalDiagnostics {
                    iterations: r.iterations,
                    residual: r.residual,
                }),
            })
        }
        Mode::Uc => {
            let r = canonical::uc_canonicalize(m, cfg.canonical_tol, cfg.canonical_max_iter)?;
            Ok(PreparedInput {
                mode: Mode::Uc,
                dense: r.canonical,
                restore: Restore::Scale(r.transform),
                diagnostics: Some(CanonicalDiagnostics {
                    iterations: r.iterations,
                    residual: r.residual,
                }),
            })
        }
    }
}

/// Runs the blackbox on prepared input, maps back, and clamps.
pub fn finish<B: CompletionBlackbox + ?Sized>(
    prepared: &PreparedInput,
    m: &RatingsMatrix,
    k: usize,
    clamp: Option<(f64, f64)>,
    bb: &B,
) -> Result<DenseMatrix> {
    let raw = bb.complete(&prepared.dense, k, m)?;
    raw.check_shape(m.n_rows(), m.n_cols())?;
    let mut out = match &prepared.restore {
        Restore::Identity => raw,
        Restore::Shift(t) => canonical::sc_restore(&raw, t)?,
        Restore::Scale(t) => canonical::uc_restore(&raw, t)?,
    };
    if let Some((lo, hi)) = clamp {
        out.as_matrix_mut().apply(|x| *x = x.clamp(lo, hi));
    }
    DenseMatrix::from_matrix(out.into_matrix())
}

pub fn complete<B: CompletionBlackbox + ?Sized>(m: &RatingsMatrix, cfg: &PipelineConfig, bb: &B) -> Result<Prediction> {
    let prepared = prepare(m, cfg)?;
    let full = finish(&prepared, m, cfg.k, cfg.clamp, bb)?;
    Ok(Prediction {
        full,
        config: cfg.clone(),
        diagnostics: prepared.diagnostics,
    })
}

/// Absent cells get the column, row, or global mean of observed ratings.
/// Rows or columns without ratings fall back to the global mean.
pub fn fill_plain(m: &RatingsMatrix, policy: FillPolicy) -> DenseMatrix {
    let global = if m.nnz() == 0 {
        0.0
    } else {
        m.entries().iter().map(|e| e.value).sum::<f64>() / m.nnz() as f64
    };
    let mean_or_global = |sum: f64, n: usize| if n == 0 { global } else { sum / n as f64 };
    let mut dense = match policy {
        FillPolicy::GlobalMean => DenseMatrix::from_fn(m.n_rows(), m.n_cols(), |_, _| global),
        FillPolicy::ItemMean => {
            let means: Vec<f64> = (0..m.n_cols())
                .map(|j| mean_or_global(m.col(j).map(|e| e.value).sum(), m.col_len(j)))
                .collect();
            DenseMatrix::from_fn(m.n_rows(), m.n_cols(), |_, j| means[j])
        }
        FillPolicy::UserMean => {
            let means: Vec<f64> = (0..m.n_rows())
                .map(|i| mean_or_global(m.row(i).iter().map(|e| e.value).sum(), m.row_len(i)))
                .collect();
            DenseMatrix::from_fn(m.n_rows(), m.n_cols(), |i, _| means[i])
        }
    };
    let d = dense.as_matrix_mut();
    for e in m.entries() {
        d[(e.row, e.col)] = e.value;
    }
    dense
}
