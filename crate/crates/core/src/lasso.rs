//! Lasso (and ridge) estimators on the unnormalized squared loss
//! `sum_t (r_t - <theta, x_t>)^2 + penalty(theta)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Design rows and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    x: DMatrix<f64>,
    r: DVector<f64>,
}

impl Regression {
    pub fn new(rows: &[Vec<f64>], r: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("regression needs at least one row".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidArgument("ragged design matrix".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_parts(DMatrix::from_row_slice(rows.len(), d, &flat), DVector::from_column_slice(r))
    }

    pub fn from_parts(x: DMatrix<f64>, r: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("empty design matrix".into()));
        }
        if x.nrows() != r.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} observations",
                x.nrows(),
                r.len()
            )));
        }
        if x.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression data"));
        }
        if x.iter().any(|v| v.abs() > 1.0 + 1e-12) {
            return Err(Error::InvalidArgument("design entries must satisfy |x_ij| <= 1".into()));
        }
        Ok(Self { x, r })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    /// `||r - X theta||^2 + lambda ||theta||_1`.
    pub fn lasso_objective(&self, theta: &[f64], lambda: f64) -> f64 {
        let t = DVector::from_column_slice(theta);
        let resid = &self.r - &self.x * t;
        resid.norm_squared() + lambda * theta.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub lambda: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, max_sweeps: 10_000, tol: 1e-8 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// `sqrt(ln d / n)`.
pub fn default_lambda(n: usize, d: usize) -> f64 {
    ((d as f64).ln() / n as f64).sqrt()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent from zero with a cached Gram matrix.
///
/// With the unnormalized loss the exact coordinate minimizer is
/// `S(c_j - sum_{i != j} G_ji theta_i, lambda / 2) / G_jj`.
pub fn lasso_fit(reg: &Regression, cfg: &LassoConfig) -> Result<LassoFit> {
    cfg.validate()?;
    let d = reg.d();
    let gram = reg.x.tr_mul(&reg.x);
    let corr = reg.x.tr_mul(&reg.r);
    let rr = reg.r.norm_squared();
    let half = 0.5 * cfg.lambda;

    let objective = |theta: &[f64], g_theta: &[f64]| -> f64 {
        let quad: f64 = theta.iter().zip(g_theta).map(|(t, g)| t * g).sum();
        let lin: f64 = theta.iter().zip(corr.iter()).map(|(t, c)| t * c).sum();
        let l1: f64 = theta.iter().map(|t| t.abs()).sum();
        (rr - 2.0 * lin + quad).max(0.0) + cfg.lambda * l1
    };

    let mut theta = vec![0.0; d];
    let mut g_theta = vec![0.0; d];
    let mut best = (objective(&theta, &g_theta), theta.clone());
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let rho = corr[j] - g_theta[j] + gjj * theta[j];
            let new = soft_threshold(rho, half) / gjj;
            let delta = new - theta[j];
            if delta != 0.0 {
                theta[j] = new;
                for (i, g) in g_theta.iter_mut().enumerate() {
                    *g += gram[(i, j)] * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        let obj = objective(&theta, &g_theta);
        if obj < best.0 {
            best = (obj, theta.clone());
        }
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    let (_, theta) = best;
    let objective = reg.lasso_objective(&theta, cfg.lambda);
    Ok(LassoFit { theta, objective, sweeps, converged })
}

/// Ridge regression: minimizes `||r - X theta||^2 + penalty ||theta||_2^2`.
pub fn ridge_fit(reg: &Regression, penalty: f64) -> Result<Vec<f64>> {
    if !(penalty >= 0.0) || !penalty.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge penalty must be >= 0, got {penalty}")));
    }
    let d = reg.d();
    let mut gram = reg.x.tr_mul(&reg.x);
    for i in 0..d {
        gram[(i, i)] += penalty;
    }
    let rhs = reg.x.tr_mul(&reg.r);
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&rhs).iter().copied().collect());
    }
    // Singular system (penalty 0, rank-deficient design): minimum-norm solution.
    let svd = gram.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("ridge solve failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}
