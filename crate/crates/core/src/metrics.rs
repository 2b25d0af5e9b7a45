//! Unmixing quality metrics, endmember relabeling and cluster reports.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::linalg::{diff_frobenius_sq, Matrix};
use crate::model::{cluster_signatures, FactorState};

fn same_shape(left: &'static str, right: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dims(
            left,
            right,
            format!("{:?} vs {:?}", a.dim(), b.dim()),
        ));
    }
    Ok(())
}

fn column_norms(x: &Matrix) -> Result<Vec<f64>> {
    x.columns()
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let n = c.dot(&c).sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::ZeroColumn(j))
            }
        })
        .collect()
}

/// `R x R` matrix of angles between reference column `i` and estimate column `j`.
pub fn angle_matrix(m_ref: &Matrix, m: &Matrix) -> Result<Matrix> {
    if m_ref.nrows() != m.nrows() || m_ref.ncols() != m.ncols() {
        return Err(Error::dims("M_ref", "M", format!("{:?} vs {:?}", m_ref.dim(), m.dim())));
    }
    let nr = column_norms(m_ref)?;
    let ne = column_norms(m)?;
    let dots = m_ref.t().dot(m);
    Ok(Matrix::from_shape_fn(dots.dim(), |(i, j)| {
        (dots[[i, j]] / (nr[i] * ne[j])).clamp(-1.0, 1.0).acos()
    }))
}

/// Mean angle (radians) between corresponding columns.
pub fn asam(m_ref: &Matrix, m: &Matrix) -> Result<f64> {
    let angles = angle_matrix(m_ref, m)?;
    let r = angles.nrows();
    Ok((0..r).map(|i| angles[[i, i]]).sum::<f64>() / r as f64)
}

/// `sqrt(||A_ref - A||_F^2 / (R1 P))`.
pub fn rmse(a_ref: &Matrix, a: &Matrix) -> Result<f64> {
    same_shape("A_ref", "A", a_ref, a)?;
    let n = a.len().max(1) as f64;
    Ok((diff_frobenius_sq(a_ref.view(), a.view()) / n).sqrt())
}

/// `sqrt(||Y - M A||_F^2 / (d1 P))`.
pub fn reconstruction_error(y: &Matrix, m: &Matrix, a: &Matrix) -> Result<f64> {
    if m.ncols() != a.nrows() {
        return Err(Error::dims("M", "A", format!("{:?} vs {:?}", m.dim(), a.dim())));
    }
    let fit = m.dot(a);
    same_shape("Y", "MA", y, &fit)?;
    let n = y.len().max(1) as f64;
    Ok((diff_frobenius_sq(y.view(), fit.view()) / n).sqrt())
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method with potentials). Row `i` is assigned column `result[i]`.
pub fn min_cost_assignment(cost: &Matrix) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::dims("cost rows", "cost cols", format!("{:?}", cost.dim())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("assignment costs must be finite".into()));
    }
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Permutation `perm` such that estimate column `perm[i]` is matched to
/// reference column `i`, minimizing the aSAM.
pub fn match_endmembers(m_ref: &Matrix, m: &Matrix) -> Result<Vec<usize>> {
    min_cost_assignment(&angle_matrix(m_ref, m)?)
}

/// Column `i` of the result is column `perm[i]` of `x`.
pub fn permute_columns(x: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_shape_fn((x.nrows(), perm.len()), |(r, i)| x[[r, perm[i]]])
}

/// Row `i` of the result is row `perm[i]` of `x`.
pub fn permute_rows(x: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_shape_fn((perm.len(), x.ncols()), |(i, c)| x[[perm[i], c]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Radians.
    pub asam: f64,
    pub rmse: f64,
    pub re: f64,
    /// Estimate index matched to each reference endmember.
    pub permutation: Vec<usize>,
    pub wall_time: Duration,
}

/// Relabels the estimate against the ground truth, then scores it.
pub fn evaluate(
    y: &Matrix,
    m_ref: &Matrix,
    a_ref: &Matrix,
    m: &Matrix,
    a: &Matrix,
    wall_time: Duration,
) -> Result<EvalReport> {
    let permutation = match_endmembers(m_ref, m)?;
    let m_matched = permute_columns(m, &permutation);
    let a_matched = permute_rows(a, &permutation);
    Ok(EvalReport {
        asam: asam(m_ref, &m_matched)?,
        rmse: rmse(a_ref, &a_matched)?,
        re: reconstruction_error(y, m, a)?,
        permutation,
        wall_time,
    })
}

/// Index of the largest entry of every column, lowest index on ties.
pub fn argmax_columns(z: &Matrix) -> Vec<usize> {
    z.columns()
        .into_iter()
        .map(|col| {
            let mut best = 0;
            for (k, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    /// Column of `Z` this cluster corresponds to.
    pub index: usize,
    pub population: usize,
    /// Pixel membership, row-major like the image.
    pub mask: Vec<bool>,
    /// Mean spectral signature `M b_k^(1)`.
    pub spectral: Vec<f64>,
    /// Mean spatial signature `D b_k^(2)`, row-major `w x w` thumbnail.
    /// Absent when the state has no spatial dictionary.
    pub spatial: Option<Vec<f64>>,
}

/// Per-cluster masks and signatures, most populated cluster first (ties by
/// cluster index).
pub fn summarize_clusters(st: &FactorState) -> Result<Vec<ClusterSummary>> {
    let k = st.z.nrows();
    if st.b.ncols() != k {
        return Err(Error::dims("B", "Z", format!("{:?} vs {:?}", st.b.dim(), st.z.dim())));
    }
    let signatures = cluster_signatures(st)?;
    let d1 = st.m.nrows();
    let labels = argmax_columns(&st.z);
    let mut out: Vec<ClusterSummary> = (0..k)
        .map(|c| {
            let col = signatures.column(c);
            let mask: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            ClusterSummary {
                index: c,
                population: mask.iter().filter(|&&m| m).count(),
                mask,
                spectral: col.iter().take(d1).copied().collect(),
                spatial: (col.len() > d1).then(|| col.iter().skip(d1).copied().collect()),
            }
        })
        .collect();
    out.sort_by(|a, b| b.population.cmp(&a.population).then(a.index.cmp(&b.index)));
    Ok(out)
}
