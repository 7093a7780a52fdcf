//! Unit- and shift-consistent matrix completion.
//!
//! A blackbox completer (by default a rank-`k` truncated SVD) is wrapped so
//! that its predictions commute with per-user/per-item rescaling
//! ([`Mode::Uc`]) or per-user/per-item additive offsets ([`Mode::Sc`]). The
//! [`eval`] module holds the benchmark and manipulation harness.
//!
//! ```
//! use consistent_core::{complete, Mode, PipelineConfig, RatingsMatrix, SvdBlackbox};
//!
//! let m = RatingsMatrix::build(3, 3, [(0, 0, 4.0), (0, 1, 2.0), (1, 1, 3.0), (2, 1, 5.0), (2, 2, 1.0)])?;
//! let cfg = PipelineConfig::default().with_mode(Mode::Sc).with_k(1);
//! let pred = complete(&m, &cfg, &SvdBlackbox::from_config(&cfg))?;
//! assert_eq!(pred.full.n_rows(), 3);
//! # Ok::<(), consistent_core::Error>(())
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod par;
pub mod pipeline;
pub mod ratings;
pub mod svd;

pub use canonical::{
    sc_canonicalize, sc_restore, uc_canonicalize, uc_restore, CanonicalResult, ScaleVectors, ShiftVectors,
};
pub use error::{Error, Result};
pub use par::Execution;
pub use pipeline::{
    complete, CompletionBlackbox, FillPolicy, Mode, PipelineConfig, Prediction, SvdBlackbox,
};
pub use ratings::{ComponentLabeling, DenseMatrix, Entry, RatingsMatrix};
pub use svd::{full_svd, reconstruct, truncated_svd, RandomizedOptions, SvdFactors};
