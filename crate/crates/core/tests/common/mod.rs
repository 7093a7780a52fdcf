#![allow(dead_code)]

use std::path::PathBuf;

use consistent_core::{DenseMatrix, RatingsMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Same generator as `scripts/golden.py`.
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }
}

/// Ratings in 1..=5 with each cell absent with probability `absent`.
pub fn integer_ratings(n_rows: usize, n_cols: usize, absent: f64, seed: u64) -> RatingsMatrix {
    let mut rng = SplitMix64::new(seed);
    let mut t = Vec::new();
    for i in 0..n_rows {
        for j in 0..n_cols {
            let r = 1.0 + ((rng.uniform() * 5.0) as usize).min(4) as f64;
            if rng.uniform() >= absent {
                t.push((i, j, r));
            }
        }
    }
    RatingsMatrix::build(n_rows, n_cols, t).unwrap()
}

/// Random mask with no empty rows or columns and a connected observation graph.
pub fn connected_mask(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize, density: f64) -> Vec<(usize, usize)> {
    loop {
        let cells: Vec<(usize, usize)> = (0..n_rows)
            .flat_map(|i| (0..n_cols).map(move |j| (i, j)))
            .filter(|_| rng.random_bool(density))
            .collect();
        let probe = RatingsMatrix::build(n_rows, n_cols, cells.iter().map(|&(i, j)| (i, j, 0.0))).unwrap();
        let c = probe.components();
        if c.is_connected() && c.empty_rows.is_empty() && c.empty_cols.is_empty() {
            return cells;
        }
    }
}

/// Dense least squares for offsets with zero row/column sums of `M + u + v`
/// over observed cells, gauge `sum(v) = 0`. Mask must be connected.
pub fn shift_oracle(m: &RatingsMatrix) -> (Vec<f64>, Vec<f64>) {
    let (r, c) = (m.n_rows(), m.n_cols());
    let n = r + c;
    let mut a = DMatrix::<f64>::zeros(n + 1, n);
    let mut b = DVector::<f64>::zeros(n + 1);
    for e in m.entries() {
        a[(e.row, e.row)] += 1.0;
        a[(e.row, r + e.col)] += 1.0;
        b[e.row] -= e.value;
        a[(r + e.col, e.row)] += 1.0;
        a[(r + e.col, r + e.col)] += 1.0;
        b[r + e.col] -= e.value;
    }
    for j in 0..c {
        a[(n, r + j)] = 1.0;
    }
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    let x = qr.r().solve_upper_triangular(&rhs).expect("oracle system is full rank");
    (x.rows(0, r).iter().copied().collect(), x.rows(r, c).iter().copied().collect())
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `U diag(sigma) V^T` with random orthonormal factors.
pub fn planted(m: usize, n: usize, sigma: &[f64], rng: &mut ChaCha8Rng) -> DenseMatrix {
    let r = sigma.len();
    let u = gaussian(m, r, rng).qr().q();
    let v = gaussian(n, r, rng).qr().q();
    let a = u * DMatrix::from_diagonal(&DVector::from_column_slice(sigma)) * v.transpose();
    DenseMatrix::from_matrix(a).unwrap()
}

pub fn data_dir() -> PathBuf {
    match std::env::var_os("RS_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}
