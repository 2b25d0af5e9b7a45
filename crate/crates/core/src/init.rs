//! Feasible starting point: pure-pixel endmember pursuit, constrained least
//! squares abundances and k-means for the spatial and clustering blocks.

use ndarray::{Array1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{vstack, Matrix};
use crate::model::{Constraint, ConstraintSet, FactorState, ProblemSpec, Variant};
use crate::solver::constrained_least_squares;

const KMEANS_MAX_ITERS: usize = 300;

/// Residual norm, relative to the largest column norm, below which the data
/// is considered exhausted by the endmembers picked so far.
const PURSUIT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `dim x k`, one centroid per column.
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    /// `k x n` indicator matrix with a single 1 per column.
    pub fn indicators(&self) -> Matrix {
        let k = self.centroids.ncols();
        let mut z = Matrix::zeros((k, self.assignments.len()));
        for (p, &c) in self.assignments.iter().enumerate() {
            z[[c, p]] = 1.0;
        }
        z
    }
}

fn sq_dist(x: &Matrix, p: usize, centroids: &Matrix, c: usize) -> f64 {
    x.column(p)
        .iter()
        .zip(centroids.column(c))
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Nearest centroid of every column, lowest index winning ties.
fn assign(x: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    let k = centroids.ncols();
    (0..x.ncols())
        .map(|p| {
            let mut best = (0, sq_dist(x, p, centroids, 0));
            for c in 1..k {
                let d = sq_dist(x, p, centroids, c);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd's k-means on the columns of `x` with k-means++ seeding.
///
/// Empty clusters are re-seeded at the point farthest from its centroid.
/// Stops when assignments no longer change or after 300 iterations.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let (dim, n) = x.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= {n} columns, got k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids = Matrix::zeros((dim, k));
    let first = rng.random_range(0..n);
    centroids.column_mut(0).assign(&x.column(first));
    let mut nearest: Vec<f64> = (0..n).map(|p| sq_dist(x, p, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let last = nearest.iter().rposition(|&w| w > 0.0).expect("total > 0");
            nearest
                .iter()
                .position(|&w| {
                    if w > 0.0 && target < w {
                        return true;
                    }
                    target -= w;
                    false
                })
                .unwrap_or(last)
        } else {
            rng.random_range(0..n)
        };
        centroids.column_mut(c).assign(&x.column(pick));
        for (p, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, p, &centroids, c));
        }
    }

    let (mut assignments, mut dists) = assign(x, &centroids);
    let mut inertia_trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        // Update step.
        let mut sums = Matrix::zeros((dim, k));
        let mut counts = vec![0usize; k];
        for (p, &c) in assignments.iter().enumerate() {
            let mut col = sums.column_mut(c);
            col += &x.column(p);
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.column(c) / counts[c] as f64;
                centroids.column_mut(c).assign(&mean);
            }
        }
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = dists
                .iter()
                .enumerate()
                .fold(0, |best, (p, &d)| if d > dists[best] { p } else { best });
            centroids.column_mut(c).assign(&x.column(far));
            dists[far] = 0.0;
        }

        let (next, next_dists) = assign(x, &centroids);
        let inertia: f64 = next_dists.iter().sum();
        if let Some(&prev) = inertia_trace.last() {
            debug_assert!(inertia <= prev * (1.0 + 1e-12) + 1e-12, "inertia rose {prev} -> {inertia}");
        }
        inertia_trace.push(inertia);
        let unchanged = next == assignments;
        assignments = next;
        dists = next_dists;
        if unchanged {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignments,
        inertia: dists.iter().sum(),
        inertia_trace,
    })
}

/// Pure-pixel endmember pursuit by successive orthogonal projections.
///
/// Repeatedly selects the column of `y` whose residual, after projecting out
/// the span of the columns already selected, has the largest norm. Returns
/// the selected columns, clamped to be non-negative, and their indices.
pub fn vca_extract(y: &Matrix, r1: usize) -> Result<(Matrix, Vec<usize>)> {
    let (d1, p) = y.dim();
    if r1 == 0 || r1 > d1.min(p) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= R1 <= min(d1, P) = {}, got {r1}",
            d1.min(p)
        )));
    }
    let mut residual = y.clone();
    let mut norms: Array1<f64> = residual.map_axis(Axis(0), |c| c.dot(&c));
    let scale = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut picked = Vec::with_capacity(r1);

    for found in 0..r1 {
        let mut best: Option<(usize, f64)> = None;
        for (j, &n) in norms.iter().enumerate() {
            if picked.contains(&j) {
                continue;
            }
            if best.map_or(true, |(_, b)| n > b) {
                best = Some((j, n));
            }
        }
        let (j, n) = best.expect("r1 <= P leaves a candidate");
        if !(n > PURSUIT_RANK_TOL * PURSUIT_RANK_TOL * scale) {
            return Err(Error::RankDeficient {
                found,
                requested: r1,
            });
        }
        picked.push(j);
        let q = &residual.column(j) / n.sqrt();
        let coeffs = q.dot(&residual);
        for (mut col, c) in residual.columns_mut().into_iter().zip(coeffs.iter()) {
            col.scaled_add(-c, &q);
        }
        norms = residual.map_axis(Axis(0), |c| c.dot(&c));
    }

    let mut m = Matrix::zeros((d1, r1));
    for (r, &j) in picked.iter().enumerate() {
        m.column_mut(r).assign(&y.column(j));
    }
    m.mapv_inplace(|v| v.max(0.0));
    Ok((m, picked))
}

fn normalize_columns_l1(m: &mut Matrix) {
    for mut col in m.columns_mut() {
        let s: f64 = col.sum();
        if s > 0.0 {
            col /= s;
        } else {
            let n = col.len() as f64;
            col.fill(1.0 / n);
        }
    }
}

/// Builds a feasible starting point for `spec`.
///
/// `M` comes from pure-pixel pursuit, `A` from constrained least squares,
/// `(D, U)` from k-means on the columns of `S` and `(B, Z)` from k-means on
/// the stacked codes. Assignment blocks are hard indicators.
pub fn initialize(spec: &ProblemSpec, seed: u64) -> Result<FactorState> {
    spec.validate()?;
    let variant = spec.variant;
    let ranks = spec.ranks;
    let mut st = FactorState::empty();

    let (mut m, _) = vca_extract(&spec.y, ranks.r1)?;
    let abundance_set = match spec.constraint {
        Constraint::AbundanceSimplex => ConstraintSet::SimplexColumns,
        Constraint::EndmemberSimplex => {
            normalize_columns_l1(&mut m);
            ConstraintSet::NonNegative
        }
    };
    st.a = constrained_least_squares(&spec.y, &m, abundance_set)?;
    st.m = m;

    match variant {
        Variant::Sp2u => {
            let s = spec.s.as_ref().expect("validated");
            let spatial = kmeans(s, ranks.r2, seed)?;
            st.d = spatial.centroids.mapv(|v| v.max(0.0));
            st.u = spatial.indicators();
        }
        Variant::NSp2u => {
            // Dictionary matching the abundances: min ||S^T - A^T D^T||, D >= 0.
            let s = spec.s.as_ref().expect("validated");
            let dt = constrained_least_squares(
                &s.t().to_owned(),
                &st.a.t().to_owned(),
                ConstraintSet::NonNegative,
            )?;
            st.d = dt.t().to_owned();
        }
        _ => {}
    }

    if variant.uses_clustering() {
        let codes = if variant == Variant::Sp2u {
            vstack(st.a.view(), st.u.view())
        } else {
            st.a.clone()
        };
        let clusters = kmeans(&codes, ranks.k, seed.wrapping_add(1))?;
        st.b = clusters.centroids.mapv(|v| v.max(0.0));
        st.z = clusters.indicators();
    }

    spec.check_feasible(&st)?;
    Ok(st)
}
