//! Dense matrix helpers: constraint-set projections and norms.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
pub type Matrix = Array2<f64>;

const POWER_ITER_SEED: u64 = 0x5eed_0f_5eed;
const POWER_ITER_CAP: usize = 10_000;

/// Elementwise clamp to the non-negative orthant.
pub fn project_nonneg(x: &Matrix) -> Matrix {
    x.mapv(|v| v.max(0.0))
}

pub fn project_nonneg_inplace(x: &mut Matrix) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Euclidean projection of every column onto the probability simplex.
pub fn project_simplex_columns(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    project_simplex_columns_inplace(&mut out);
    out
}

pub fn project_simplex_columns_inplace(x: &mut Matrix) {
    let mut scratch = Vec::with_capacity(x.nrows());
    for col in x.columns_mut() {
        project_simplex_lane(col, &mut scratch);
    }
}

/// Projects a single vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut a = Array1::from(v.to_vec());
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_lane(a.view_mut(), &mut scratch);
    a.to_vec()
}

/// Sort-then-threshold projection. Points already on the simplex up to
/// rounding are returned untouched so that the projection is idempotent
/// bit for bit.
fn project_simplex_lane(mut col: ArrayViewMut1<f64>, sorted: &mut Vec<f64>) {
    let n = col.len();
    if n == 0 {
        return;
    }
    if on_simplex_within_rounding(col.iter().copied(), n) {
        return;
    }
    sorted.clear();
    sorted.extend(col.iter().copied());
    sort_descending(sorted);

    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    col.mapv_inplace(|v| (v - tau).max(0.0));
}

/// Insertion sort for the short columns typical here, falling back to the
/// library sort. Under a total order both give the same sequence.
fn sort_descending(v: &mut [f64]) {
    if v.len() > 32 {
        v.sort_unstable_by(|a, b| b.total_cmp(a));
        return;
    }
    for i in 1..v.len() {
        let x = v[i];
        let mut j = i;
        while j > 0 && v[j - 1].total_cmp(&x).is_lt() {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
    }
}

fn on_simplex_within_rounding(values: impl Iterator<Item = f64>, n: usize) -> bool {
    let mut sum = 0.0;
    for v in values {
        if v < 0.0 || !v.is_finite() {
            return false;
        }
        sum += v;
    }
    (sum - 1.0).abs() <= 4.0 * n as f64 * f64::EPSILON
}

/// Sum of squared entries.
pub fn frobenius_sq(x: &Matrix) -> f64 {
    match x.as_slice() {
        Some(xs) => xs.iter().map(|v| v * v).sum(),
        None => x.iter().map(|v| v * v).sum(),
    }
}

/// Frobenius norm of `a - b`, squared.
pub fn diff_frobenius_sq(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    // Same row-major summation order either way; the slice path is just faster.
    match (a.as_slice(), b.as_slice()) {
        (Some(xs), Some(ys)) if a.dim() == b.dim() => {
            xs.iter().zip(ys).map(|(x, y)| (x - y) * (x - y)).sum()
        }
        _ => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// The start vector is drawn from a fixed seed, so the result is
/// reproducible. `tol` is the relative change of the squared singular value
/// between two iterations that ends the loop.
pub fn spectral_norm(x: &Matrix, tol: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("spectral norm of an empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let gram = if x.nrows() < x.ncols() {
        x.dot(&x.t())
    } else {
        x.t().dot(x)
    };
    largest_eigenvalue_psd(&gram, tol).map(f64::sqrt)
}

fn largest_eigenvalue_psd(gram: &Matrix, tol: f64) -> Result<f64> {
    let n = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITER_SEED);
    let mut v: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;

    let mut estimate = 0.0;
    for _ in 0..POWER_ITER_CAP {
        let w = gram.dot(&v);
        let next = w.dot(&w).sqrt();
        if next == 0.0 {
            // v is in the null space; for a PSD Gram matrix built from a
            // random start this only happens when the matrix is zero.
            return if gram.iter().all(|&g| g == 0.0) {
                Ok(0.0)
            } else {
                Err(Error::NoConvergence(0))
            };
        }
        v = w / next;
        if (next - estimate).abs() <= tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NoConvergence(POWER_ITER_CAP))
}

/// Stacks `top` over `bottom`.
pub fn vstack(top: ArrayView2<f64>, bottom: ArrayView2<f64>) -> Matrix {
    ndarray::concatenate(Axis(0), &[top, bottom]).expect("column counts checked by caller")
}

/// Largest deviation of a column sum from one, or of an entry below zero.
pub fn simplex_violation(x: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for col in x.columns() {
        let sum: f64 = col.sum();
        worst = worst.max((sum - 1.0).abs());
        for &v in col {
            worst = worst.max(-v);
        }
    }
    worst
}

pub fn nonneg_violation(x: &Matrix) -> f64 {
    x.iter().fold(0.0f64, |w, &v| w.max(-v))
}
