//! Masked rating matrices.
//!
//! A [`RatingsMatrix`] stores the observed cells of a users × items table in
//! coordinate form, sorted row-major, together with a column-major index so
//! that both row sweeps and column sweeps are linear in the number of
//! observed entries.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// One observed rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Entry { row, col, value }
    }
}

impl From<(usize, usize, f64)> for Entry {
    fn from((row, col, value): (usize, usize, f64)) -> Self {
        Entry { row, col, value }
    }
}

#[derive(Debug, Clone)]
pub struct RatingsMatrix {
    n_rows: usize,
    n_cols: usize,
    /// Sorted by (row, col).
    entries: Vec<Entry>,
    row_ptr: Vec<usize>,
    /// Entry indices sorted by (col, row).
    col_order: Vec<usize>,
    col_ptr: Vec<usize>,
    rating_range: Option<(f64, f64)>,
}

impl RatingsMatrix {
    /// Builds a matrix from triplets. Input order does not matter.
    pub fn build<I, T>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<Entry>,
    {
        let mut entries: Vec<Entry> = Vec::new();
        for t in triplets {
            let e: Entry = t.into();
            if e.row >= n_rows || e.col >= n_cols {
                return Err(Error::IndexOutOfRange {
                    row: e.row,
                    col: e.col,
                    n_rows,
                    n_cols,
                });
            }
            if !e.value.is_finite() {
                return Err(Error::NonFinite {
                    row: e.row,
                    col: e.col,
                });
            }
            entries.push(e);
        }
        Self::from_entries(n_rows, n_cols, entries)
    }

    fn from_entries(n_rows: usize, n_cols: usize, mut entries: Vec<Entry>) -> Result<Self> {
        entries.sort_by_key(|e| (e.row, e.col));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].row == w[1].row && w[0].col == w[1].col)
        {
            return Err(Error::DuplicateEntry {
                row: w[0].row,
                col: w[0].col,
            });
        }

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_ptr = vec![0usize; n_cols + 1];
        for e in &entries {
            row_ptr[e.row + 1] += 1;
            col_ptr[e.col + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }

        // counting sort by column; stable, so rows stay ascending within a column
        let mut next = col_ptr.clone();
        let mut col_order = vec![0usize; entries.len()];
        for (idx, e) in entries.iter().enumerate() {
            col_order[next[e.col]] = idx;
            next[e.col] += 1;
        }

        Ok(RatingsMatrix {
            n_rows,
            n_cols,
            entries,
            row_ptr,
            col_order,
            col_ptr,
            rating_range: None,
        })
    }

    /// Attaches a rating range, checking every observed rating against it.
    pub fn with_rating_range(mut self, min: f64, max: f64) -> Result<Self> {
        if !(min < max) {
            return Err(Error::InvalidConfig(format!(
                "rating range min {min} must be below max {max}"
            )));
        }
        if let Some(e) = self.entries.iter().find(|e| e.value < min || e.value > max) {
            return Err(Error::RatingOutOfRange {
                row: e.row,
                col: e.col,
                value: e.value,
                min,
                max,
            });
        }
        self.rating_range = Some((min, max));
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn rating_range(&self) -> Option<(f64, f64)> {
        self.rating_range
    }

    /// All observed entries in row-major order.
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Entry] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn col(&self, j: usize) -> impl ExactSizeIterator<Item = &Entry> + '_ {
        self.col_order[self.col_ptr[j]..self.col_ptr[j + 1]]
            .iter()
            .map(move |&idx| &self.entries[idx])
    }

    /// Positions in [`Self::entries`] of column `j`'s entries, rows ascending.
    pub fn col_entry_indices(&self, j: usize) -> &[usize] {
        &self.col_order[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Positions in [`Self::entries`] spanned by row `i`.
    pub fn row_entry_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn col_len(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.row(i);
        row.binary_search_by_key(&j, |e| e.col)
            .ok()
            .map(|p| row[p].value)
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    /// Applies `f(row, col, value)` to every observed value, keeping the mask.
    /// The rating range is dropped because the new values need not respect it.
    pub fn map_entries<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, f64) -> f64,
    {
        let mut out = self.clone();
        out.rating_range = None;
        for e in &mut out.entries {
            e.value = f(e.row, e.col, e.value);
            if !e.value.is_finite() {
                return Err(Error::NonFinite {
                    row: e.row,
                    col: e.col,
                });
            }
        }
        Ok(out)
    }

    /// Restriction to the given rows and columns, re-indexed in the order given.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut col_pos = vec![usize::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            if old >= self.n_cols {
                return Err(Error::IndexOutOfRange {
                    row: 0,
                    col: old,
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                });
            }
            col_pos[old] = new;
        }
        let mut entries = Vec::new();
        for (new_row, &old_row) in rows.iter().enumerate() {
            if old_row >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    row: old_row,
                    col: 0,
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                });
            }
            for e in self.row(old_row) {
                let c = col_pos[e.col];
                if c != usize::MAX {
                    entries.push(Entry::new(new_row, c, e.value));
                }
            }
        }
        let mut out = Self::from_entries(rows.len(), cols.len(), entries)?;
        out.rating_range = self.rating_range;
        Ok(out)
    }

    /// Dense materialization with `fill` at absent positions.
    pub fn to_dense(&self, fill: f64) -> DenseMatrix {
        let mut m = DMatrix::from_element(self.n_rows, self.n_cols, fill);
        for e in &self.entries {
            m[(e.row, e.col)] = e.value;
        }
        DenseMatrix(m)
    }

    /// Connected components of the bipartite row/column observation graph.
    pub fn components(&self) -> ComponentLabeling {
        let mut dsu = DisjointSet::new(self.n_rows + self.n_cols);
        for e in &self.entries {
            dsu.union(e.row, self.n_rows + e.col);
        }

        const UNSET: usize = usize::MAX;
        let mut label_of_root = vec![UNSET; self.n_rows + self.n_cols];
        let mut row_component = vec![UNSET; self.n_rows];
        let mut col_component = vec![UNSET; self.n_cols];
        let mut next = 0;
        // ids in order of smallest row index; column-only singletons come last
        for i in 0..self.n_rows {
            let r = dsu.find(i);
            if label_of_root[r] == UNSET {
                label_of_root[r] = next;
                next += 1;
            }
            row_component[i] = label_of_root[r];
        }
        for j in 0..self.n_cols {
            let r = dsu.find(self.n_rows + j);
            if label_of_root[r] == UNSET {
                label_of_root[r] = next;
                next += 1;
            }
            col_component[j] = label_of_root[r];
        }

        ComponentLabeling {
            empty_rows: (0..self.n_rows).filter(|&i| self.row_len(i) == 0).collect(),
            empty_cols: (0..self.n_cols).filter(|&j| self.col_len(j) == 0).collect(),
            row_component,
            col_component,
            n_components: next,
        }
    }
}

/// Component ids for rows and columns of the observation graph.
///
/// Empty rows and columns each form their own singleton component and are
/// listed in `empty_rows` / `empty_cols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub row_component: Vec<usize>,
    pub col_component: Vec<usize>,
    pub n_components: usize,
    pub empty_rows: Vec<usize>,
    pub empty_cols: Vec<usize>,
}

impl ComponentLabeling {
    /// Number of components that contain at least one observed entry.
    pub fn n_nonempty(&self) -> usize {
        self.n_components - self.empty_rows.len() - self.empty_cols.len()
    }

    pub fn is_connected(&self) -> bool {
        self.n_nonempty() <= 1
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// A fully populated real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "dense matrix contains non-finite values".into(),
            ));
        }
        Ok(DenseMatrix(m))
    }

    /// Row-major construction; panics if `values.len() != n_rows * n_cols`.
    pub fn from_rows(n_rows: usize, n_cols: usize, values: &[f64]) -> Self {
        DenseMatrix(DMatrix::from_row_slice(n_rows, n_cols, values))
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n_rows: usize, n_cols: usize, f: F) -> Self {
        DenseMatrix(DMatrix::from_fn(n_rows, n_cols, f))
    }

    pub fn n_rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub(crate) fn check_shape(&self, n_rows: usize, n_cols: usize) -> Result<()> {
        if self.n_rows() != n_rows || self.n_cols() != n_cols {
            return Err(Error::DimensionMismatch {
                expected_rows: n_rows,
                expected_cols: n_cols,
                rows: self.n_rows(),
                cols: self.n_cols(),
            });
        }
        Ok(())
    }
}
