//! Numeric kernels: weighted second-moment matrices, the smallest eigenpair of
//! a symmetric matrix, and Euclidean projection onto the capped simplex.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::ArmSet;

/// Absolute asymmetry accepted by [`min_eigpair`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// `sum_j w_j a_j a_j^T`, exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCovariance {
    pub matrix: DMatrix<f64>,
    pub weight_sum: f64,
}

impl WeightedCovariance {
    pub fn min_eigpair(&self) -> Result<(f64, DVector<f64>)> {
        min_eigpair(&self.matrix)
    }
}

/// Row-major arms as an `m x d` nalgebra matrix.
pub fn arm_matrix(arms: &ArmSet) -> DMatrix<f64> {
    DMatrix::from_row_slice(arms.len(), arms.dim(), arms.rows())
}

pub fn weighted_covariance(arms: &ArmSet, weights: &[f64]) -> Result<WeightedCovariance> {
    if weights.len() != arms.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} arms",
            weights.len(),
            arms.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    Ok(covariance_of_matrix(&arm_matrix(arms), weights))
}

/// Weighted covariance from a prebuilt `m x d` arm matrix. Zero-weight rows are
/// skipped.
pub fn covariance_of_matrix(a: &DMatrix<f64>, weights: &[f64]) -> WeightedCovariance {
    let d = a.ncols();
    let active: Vec<usize> = (0..a.nrows()).filter(|&j| weights[j] > 0.0).collect();
    if active.len() == a.nrows() {
        let mut scaled = a.clone();
        for (j, w) in weights.iter().enumerate() {
            scaled.row_mut(j).scale_mut(*w);
        }
        let mut matrix = a.tr_mul(&scaled);
        symmetrize(&mut matrix);
        return WeightedCovariance { matrix, weight_sum: weights.iter().sum() };
    }
    let mut rows = DMatrix::<f64>::zeros(active.len(), d);
    let mut scaled = DMatrix::<f64>::zeros(active.len(), d);
    for (r, &j) in active.iter().enumerate() {
        for c in 0..d {
            rows[(r, c)] = a[(j, c)];
            scaled[(r, c)] = weights[j] * a[(j, c)];
        }
    }
    let mut matrix = rows.tr_mul(&scaled);
    symmetrize(&mut matrix);
    WeightedCovariance { matrix, weight_sum: weights.iter().sum() }
}

/// `|G|^-1 sum_{j in G} a_j a_j^T`.
pub fn subset_covariance(arms: &ArmSet, subset: &[usize]) -> Result<WeightedCovariance> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("empty subset".into()));
    }
    let mut w = vec![0.0; arms.len()];
    let share = 1.0 / subset.len() as f64;
    for &j in subset {
        if j >= arms.len() {
            return Err(Error::ArmOutOfRange(j));
        }
        w[j] += share;
    }
    weighted_covariance(arms, &w)
}

/// Smallest eigenvalue of the normalized Gram matrix of `subset`.
pub fn subset_min_eig(arms: &ArmSet, subset: &[usize]) -> Result<f64> {
    Ok(subset_covariance(arms, subset)?.min_eigpair()?.0)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn min_eigpair(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(m.clone());
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let mut v = eig.eigenvectors.column(idx).into_owned();
    let norm = v.norm();
    v /= norm;
    Ok((lambda, v))
}

/// Euclidean projection of `v` onto `{mu : sum mu = 1, 0 <= mu_i <= cap}`.
///
/// The projection has the form `mu_i = clamp(v_i - tau, 0, cap)`; the total
/// mass is piecewise linear and nonincreasing in `tau`, so sorting the
/// breakpoints `v_i - cap` and `v_i` locates `tau` exactly.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Result<Vec<f64>> {
    let m = v.len();
    if m == 0 {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(Error::InvalidArgument(format!("cap must lie in (0, 1], got {cap}")));
    }
    // A relative slack lets cap = 1/m pass despite rounding in the division.
    if (m as f64) * cap < 1.0 - 1e-12 {
        return Err(Error::InfeasibleCap { m, cap });
    }
    let tau = capped_threshold(v, cap);
    let mut mu: Vec<f64> = v.iter().map(|x| (x - tau).clamp(0.0, cap)).collect();
    polish_mass(&mut mu, cap);
    Ok(mu)
}

fn capped_mass(v: &[f64], cap: f64, tau: f64) -> f64 {
    v.iter().map(|x| (x - tau).clamp(0.0, cap)).sum()
}

fn capped_threshold(v: &[f64], cap: f64) -> f64 {
    let mut bps: Vec<f64> = v.iter().flat_map(|&x| [x - cap, x]).collect();
    bps.sort_by(|a, b| a.total_cmp(b));
    bps.dedup();
    // mass(tau) is m*cap at the smallest breakpoint and 0 at the largest.
    let (mut lo, mut hi) = (0usize, bps.len() - 1);
    if capped_mass(v, cap, bps[lo]) <= 1.0 {
        return bps[lo];
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if capped_mass(v, cap, bps[mid]) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Linear between consecutive breakpoints.
    let (t0, t1) = (bps[lo], bps[hi]);
    let (s0, s1) = (capped_mass(v, cap, t0), capped_mass(v, cap, t1));
    if s0 == s1 {
        return t0;
    }
    t0 + (s0 - 1.0) * (t1 - t0) / (s0 - s1)
}

/// Spread the rounding residue of `sum mu - 1` over coordinates strictly
/// inside the box, which keeps the KKT form intact.
fn polish_mass(mu: &mut [f64], cap: f64) {
    for _ in 0..3 {
        let excess: f64 = mu.iter().sum::<f64>() - 1.0;
        if excess.abs() <= 1e-15 {
            return;
        }
        let free: Vec<usize> = (0..mu.len()).filter(|&i| mu[i] > 0.0 && mu[i] < cap).collect();
        if free.is_empty() {
            return;
        }
        let share = excess / free.len() as f64;
        for i in free {
            mu[i] = (mu[i] - share).clamp(0.0, cap);
        }
    }
}

/// Largest KKT violation of `mu` as a projection of `v` onto the capped simplex:
/// feasibility error plus the spread of `v_i - mu_i` across free coordinates and
/// the sign conditions at the bounds.
pub fn capped_simplex_kkt_residual(v: &[f64], mu: &[f64], cap: f64) -> f64 {
    let mass_err = (mu.iter().sum::<f64>() - 1.0).abs();
    let bound_err = mu
        .iter()
        .map(|&x| (-x).max(x - cap).max(0.0))
        .fold(0.0, f64::max);
    let eps = 1e-12;
    let free: Vec<f64> = v
        .iter()
        .zip(mu)
        .filter(|(_, &x)| x > eps && x < cap - eps)
        .map(|(vi, x)| vi - x)
        .collect();
    let tau = if free.is_empty() {
        // Every coordinate sits on a bound: any tau between the two families works.
        let lower = v
            .iter()
            .zip(mu)
            .filter(|(_, &x)| x >= cap - eps)
            .map(|(vi, _)| vi - cap)
            .fold(f64::INFINITY, f64::min);
        let upper = v
            .iter()
            .zip(mu)
            .filter(|(_, &x)| x <= eps)
            .map(|(vi, _)| *vi)
            .fold(f64::NEG_INFINITY, f64::max);
        if lower.is_finite() && upper.is_finite() {
            return mass_err.max(bound_err).max((upper - lower).max(0.0));
        }
        return mass_err.max(bound_err);
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    let stationarity = v
        .iter()
        .zip(mu)
        .map(|(vi, x)| (x - (vi - tau).clamp(0.0, cap)).abs())
        .fold(0.0, f64::max);
    mass_err.max(bound_err).max(stationarity)
}
