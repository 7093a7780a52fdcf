//! Dense singular value decompositions.
//!
//! [`full_svd`] is the exact path (used for small problems and as a test
//! oracle). [`truncated_svd`] is a seeded randomized range finder: sketch the
//! column space with a Gaussian test matrix, sharpen it with subspace
//! iterations, then take an exact SVD of the small projected matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ratings::DenseMatrix;

pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 4;

/// Below this smaller dimension the exact SVD is always used.
pub const EXACT_DIM_LIMIT: usize = 64;

const JACOBI_MAX_SWEEPS: usize = 80;
/// Singular values below this fraction of the largest get a completed basis vector.
const NULL_RATIO: f64 = 1e-12;

/// `u · diag(singular_values) · vᵀ`, singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// Randomized solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomizedOptions {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RandomizedOptions {
    fn default() -> Self {
        RandomizedOptions {
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }
}

pub fn full_svd(a: &DenseMatrix) -> Result<SvdFactors> {
    exact_svd(a.as_matrix().clone())
}

fn exact_svd(a: DMatrix<f64>) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(m, 0),
            singular_values: Vec::new(),
            v: DMatrix::zeros(n, 0),
        });
    }
    if m >= n {
        jacobi_svd(&a)
    } else {
        let t = jacobi_svd(&a.transpose())?;
        Ok(SvdFactors {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

/// One-sided (Hestenes) Jacobi SVD of a tall matrix (`m >= n`).
///
/// Column pairs of a working copy are rotated until mutually orthogonal; the
/// accumulated rotations give `v`, the column norms give the singular values.
fn jacobi_svd(a: &DMatrix<f64>) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = a.column_iter().map(|c| c.iter().copied().collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    // rounding noise in a length-m dot product is about sqrt(m) ulps
    let threshold = (m as f64).sqrt().max(1.0) * f64::EPSILON;
    // columns this small are numerically null and get a completed basis vector
    let frob2: f64 = cols.iter().flatten().map(|x| x * x).sum();
    let negligible = frob2 * NULL_RATIO * NULL_RATIO * 1e-2;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= threshold * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let sigma: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let mut u = DMatrix::zeros(m, n);
    let mut null = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        if sigma[j] > sigma_max * NULL_RATIO && sigma[j] > 0.0 {
            for (i, x) in c.iter().enumerate() {
                u[(i, j)] = x / sigma[j];
            }
        } else {
            null.push(j);
        }
    }
    complete_basis(&mut u, &null);
    let v = DMatrix::from_fn(n, n, |i, j| v[j][i]);
    sorted_factors(u, DVector::from_vec(sigma), v)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all others.
fn complete_basis(u: &mut DMatrix<f64>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &j in missing {
        while candidate < m {
            let mut x = DVector::<f64>::zeros(m);
            x[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for &f in &filled {
                    let proj = u.column(f).dot(&x);
                    x.axpy(-proj, &u.column(f), 1.0);
                }
            }
            let norm = x.norm();
            if norm > 1e-8 {
                u.set_column(j, &(x / norm));
                filled.push(j);
                break;
            }
        }
    }
}

/// Reorders singular triples so that values are nonincreasing.
fn sorted_factors(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Result<SvdFactors> {
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite singular value".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    // stable sort keeps the solver's order among ties, so output is deterministic
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Ok(SvdFactors {
        u: u.select_columns(&order),
        singular_values: order.iter().map(|&i| s[i].max(0.0)).collect(),
        v: v.select_columns(&order),
    })
}

fn check_rank(k: usize, max: usize) -> Result<()> {
    if k == 0 || k > max {
        return Err(Error::InvalidRank { k, max });
    }
    Ok(())
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column-major fill order is part of the determinism contract
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)))
}

/// Seeded randomized SVD retaining the `k` largest singular triples.
pub fn truncated_svd(a: &DenseMatrix, k: usize, opts: RandomizedOptions) -> Result<SvdFactors> {
    let a = a.as_matrix();
    let (m, n) = a.shape();
    let min_dim = m.min(n);
    check_rank(k, min_dim)?;
    let width = (k + opts.oversample).min(min_dim);

    let omega = gaussian(n, width, opts.seed);
    let mut q = orthonormal_basis(a * omega);
    for _ in 0..opts.power_iters {
        let z = orthonormal_basis(a.tr_mul(&q));
        q = orthonormal_basis(a * z);
    }

    // small problem: B = Qᵀ A (width × n)
    let b = q.tr_mul(a);
    let small = exact_svd(b)?;
    let u = &q * &small.u;
    Ok(SvdFactors {
        u: u.columns(0, k).into_owned(),
        singular_values: small.singular_values[..k].to_vec(),
        v: small.v.columns(0, k).into_owned(),
    })
}

/// Rank-`k` factors, choosing the exact solver when randomization cannot pay off.
pub fn rank_k_svd(a: &DenseMatrix, k: usize, opts: RandomizedOptions) -> Result<SvdFactors> {
    let min_dim = a.n_rows().min(a.n_cols());
    check_rank(k, min_dim)?;
    if min_dim <= EXACT_DIM_LIMIT || 2 * k >= min_dim {
        let mut f = full_svd(a)?;
        f.u = f.u.columns(0, k).into_owned();
        f.v = f.v.columns(0, k).into_owned();
        f.singular_values.truncate(k);
        Ok(f)
    } else {
        truncated_svd(a, k, opts)
    }
}

/// `u[:, :k] · diag(σ[:k]) · v[:, :k]ᵀ`.
pub fn reconstruct(f: &SvdFactors, k: usize) -> Result<DenseMatrix> {
    if k > f.rank() {
        return Err(Error::InvalidRank { k, max: f.rank() });
    }
    let mut us = f.u.columns(0, k).into_owned();
    for (mut col, s) in us.column_iter_mut().zip(&f.singular_values[..k]) {
        col *= *s;
    }
    DenseMatrix::from_matrix(us * f.v.columns(0, k).transpose())
}

/// Largest deviation of `qᵀq` from the identity.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
