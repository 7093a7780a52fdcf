//! Shift- and scale-invariant canonical forms of masked matrices.
//!
//! The shift canonical form adds a per-row offset `u[i]` and a per-column
//! offset `v[j]` to every observed entry so that each row and each column of
//! observed entries sums to zero; absent cells are filled with 0. The scale
//! canonical form multiplies by positive `d[i]` and `e[j]` so that observed
//! entries in each row and column multiply to one; absent cells are filled
//! with 1. The scale form is the shift form of the entrywise logarithm.
//!
//! Offsets are determined up to one constant per connected component of the
//! observation graph (add `c` to the component's `u`, subtract it from its
//! `v`). The returned vectors fix that freedom by making `v` sum to zero over
//! each component's columns. Rows and columns with no observed entries get
//! offset 0 (scale 1).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ratings::{ComponentLabeling, DenseMatrix, RatingsMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Extra sweeps after convergence aim for `tol * POLISH_TARGET`...
const POLISH_TARGET: f64 = 1e-3;
/// ...and stop as soon as a sweep shrinks the residual by less than this factor.
const POLISH_MIN_GAIN: f64 = 0.99;

/// Additive row (`u`) and column (`v`) offsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftVectors {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ShiftVectors {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        ShiftVectors {
            u: vec![0.0; n_rows],
            v: vec![0.0; n_cols],
        }
    }
}

/// Positive row (`d`) and column (`e`) scale factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleVectors {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl ScaleVectors {
    pub fn ones(n_rows: usize, n_cols: usize) -> Self {
        ScaleVectors {
            d: vec![1.0; n_rows],
            e: vec![1.0; n_cols],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CanonicalResult<T> {
    pub canonical: DenseMatrix,
    pub transform: T,
    pub iterations: usize,
    /// Largest absolute observed row/column sum (log-product for the scale form).
    pub residual: f64,
}

fn check_params(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }
    Ok(())
}

pub fn sc_canonicalize(m: &RatingsMatrix, tol: f64, max_iter: usize) -> Result<CanonicalResult<ShiftVectors>> {
    sc_canonicalize_from(m, tol, max_iter, None)
}

/// [`sc_canonicalize`] starting from a given iterate instead of zero offsets.
pub fn sc_canonicalize_from(
    m: &RatingsMatrix,
    tol: f64,
    max_iter: usize,
    start: Option<&ShiftVectors>,
) -> Result<CanonicalResult<ShiftVectors>> {
    check_params(tol, max_iter)?;
    let values: Vec<f64> = m.entries().iter().map(|e| e.value).collect();
    let solved = solve_offsets(m, &values, tol, max_iter, start)?;

    let mut canonical = DenseMatrix::from_fn(m.n_rows(), m.n_cols(), |_, _| 0.0);
    let cm = canonical.as_matrix_mut();
    for e in m.entries() {
        cm[(e.row, e.col)] = e.value + solved.u[e.row] + solved.v[e.col];
    }
    Ok(CanonicalResult {
        canonical,
        transform: ShiftVectors {
            u: solved.u,
            v: solved.v,
        },
        iterations: solved.iterations,
        residual: solved.residual,
    })
}

/// Scale canonical form, computed as the shift canonical form of `ln M`.
pub fn uc_canonicalize(m: &RatingsMatrix, tol: f64, max_iter: usize) -> Result<CanonicalResult<ScaleVectors>> {
    check_params(tol, max_iter)?;
    if let Some(e) = m.entries().iter().find(|e| !(e.value > 0.0)) {
        return Err(Error::NonPositiveEntry {
            row: e.row,
            col: e.col,
            value: e.value,
        });
    }
    let logs: Vec<f64> = m.entries().iter().map(|e| e.value.ln()).collect();
    let solved = solve_offsets(m, &logs, tol, max_iter, None)?;

    let mut canonical = DenseMatrix::from_fn(m.n_rows(), m.n_cols(), |_, _| 1.0);
    let cm = canonical.as_matrix_mut();
    for (e, l) in m.entries().iter().zip(&logs) {
        cm[(e.row, e.col)] = (l + solved.u[e.row] + solved.v[e.col]).exp();
    }
    Ok(CanonicalResult {
        canonical,
        transform: ScaleVectors {
            d: solved.u.iter().map(|x| x.exp()).collect(),
            e: solved.v.iter().map(|x| x.exp()).collect(),
        },
        iterations: solved.iterations,
        residual: solved.residual,
    })
}

/// `predictions[i,j] - u[i] - v[j]`.
pub fn sc_restore(predictions: &DenseMatrix, t: &ShiftVectors) -> Result<DenseMatrix> {
    predictions.check_shape(t.u.len(), t.v.len())?;
    Ok(DenseMatrix::from_fn(t.u.len(), t.v.len(), |i, j| {
        predictions.get(i, j) - t.u[i] - t.v[j]
    }))
}

/// `predictions[i,j] / (d[i] * e[j])`.
pub fn uc_restore(predictions: &DenseMatrix, t: &ScaleVectors) -> Result<DenseMatrix> {
    predictions.check_shape(t.d.len(), t.e.len())?;
    Ok(DenseMatrix::from_fn(t.d.len(), t.e.len(), |i, j| {
        predictions.get(i, j) / (t.d[i] * t.e[j])
    }))
}

/// Largest absolute row or column sum of `values + u + v` over observed cells.
pub fn shift_residual(m: &RatingsMatrix, values: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let entries = m.entries();
    let mut worst = 0.0f64;
    for i in 0..m.n_rows() {
        let s: f64 = m
            .row_entry_range(i)
            .map(|p| values[p] + u[i] + v[entries[p].col])
            .sum();
        worst = worst.max(s.abs());
    }
    for j in 0..m.n_cols() {
        let s: f64 = m
            .col_entry_indices(j)
            .iter()
            .map(|&p| values[p] + u[entries[p].row] + v[j])
            .sum();
        worst = worst.max(s.abs());
    }
    worst
}

struct Offsets {
    u: Vec<f64>,
    v: Vec<f64>,
    iterations: usize,
    residual: f64,
}

/// Alternating row/column mean sweeps on `values` (aligned with `m.entries()`).
fn solve_offsets(
    m: &RatingsMatrix,
    values: &[f64],
    tol: f64,
    max_iter: usize,
    start: Option<&ShiftVectors>,
) -> Result<Offsets> {
    if m.nnz() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (n_rows, n_cols) = (m.n_rows(), m.n_cols());
    let (mut u, mut v) = match start {
        Some(s) => {
            if s.u.len() != n_rows || s.v.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected_rows: n_rows,
                    expected_cols: n_cols,
                    rows: s.u.len(),
                    cols: s.v.len(),
                });
            }
            (s.u.clone(), s.v.clone())
        }
        None => (vec![0.0; n_rows], vec![0.0; n_cols]),
    };
    let labels = m.components();
    let mut residual = f64::INFINITY;

    let mut iteration = 0;
    while iteration < max_iter {
        iteration += 1;
        sweep(m, values, &labels, &mut u, &mut v);
        residual = shift_residual(m, values, &u, &v);
        if residual <= tol {
            break;
        }
        if !residual.is_finite() {
            return Err(Error::NoConvergence { residual, max_iter });
        }
    }
    if residual > tol {
        return Err(Error::NoConvergence { residual, max_iter });
    }

    // Keep sweeping while it still pays off, so that results sit well inside
    // the tolerance and re-canonicalizing them moves nothing measurable.
    while iteration < max_iter && residual > tol * POLISH_TARGET {
        let (prev_u, prev_v) = (u.clone(), v.clone());
        sweep(m, values, &labels, &mut u, &mut v);
        iteration += 1;
        let next = shift_residual(m, values, &u, &v);
        if !(next < residual * POLISH_MIN_GAIN) {
            if !(next < residual) {
                u = prev_u;
                v = prev_v;
                iteration -= 1;
            } else {
                residual = next;
            }
            break;
        }
        residual = next;
    }
    Ok(Offsets {
        u,
        v,
        iterations: iteration,
        residual,
    })
}

/// One row pass then one column pass, followed by gauge fixing.
fn sweep(m: &RatingsMatrix, values: &[f64], labels: &ComponentLabeling, u: &mut [f64], v: &mut [f64]) {
    let entries = m.entries();
    for (i, ui) in u.iter_mut().enumerate() {
        let range = m.row_entry_range(i);
        let len = range.len();
        if len == 0 {
            *ui = 0.0;
            continue;
        }
        let s: f64 = range.map(|p| values[p] + v[entries[p].col]).sum();
        *ui = -s / len as f64;
    }
    for (j, vj) in v.iter_mut().enumerate() {
        let idx = m.col_entry_indices(j);
        if idx.is_empty() {
            *vj = 0.0;
            continue;
        }
        let s: f64 = idx.iter().map(|&p| values[p] + u[entries[p].row]).sum();
        *vj = -s / idx.len() as f64;
    }
    fix_gauge(labels, u, v);
}

/// Moves each component's mean column offset onto its rows.
fn fix_gauge(labels: &ComponentLabeling, u: &mut [f64], v: &mut [f64]) {
    let mut sum = vec![0.0; labels.n_components];
    let mut count = vec![0usize; labels.n_components];
    for (j, &c) in labels.col_component.iter().enumerate() {
        sum[c] += v[j];
        count[c] += 1;
    }
    let shift: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    for (j, &c) in labels.col_component.iter().enumerate() {
        v[j] -= shift[c];
    }
    for (i, &c) in labels.row_component.iter().enumerate() {
        // empty rows are singleton components with no columns, so shift is 0
        u[i] += shift[c];
    }
}
