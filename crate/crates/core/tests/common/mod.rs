//! Reference implementations used as oracles. None of them call into the
//! library's numerics.

#![allow(dead_code)]

use rand::Rng;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `sum_j w_j a_j a_j^T` by explicit loops.
pub fn weighted_gram(arms: &[Vec<f64>], weights: &[f64]) -> Vec<Vec<f64>> {
    let d = arms[0].len();
    let mut g = vec![vec![0.0; d]; d];
    for (a, w) in arms.iter().zip(weights) {
        for i in 0..d {
            for j in 0..d {
                g[i][j] += w * a[i] * a[j];
            }
        }
    }
    g
}

pub fn min_eig(arms: &[Vec<f64>], weights: &[f64]) -> f64 {
    jacobi_eigenvalues(weighted_gram(arms, weights))[0]
}

/// Smallest eigenvalue of the normalized Gram matrix of `subset`.
pub fn subset_min_eig(arms: &[Vec<f64>], subset: &[usize]) -> f64 {
    let rows: Vec<Vec<f64>> = subset.iter().map(|&j| arms[j].clone()).collect();
    let w = vec![1.0 / subset.len() as f64; subset.len()];
    min_eig(&rows, &w)
}

/// Best normalized-Gram minimum eigenvalue over every nonempty subset.
pub fn exhaustive_best(arms: &[Vec<f64>]) -> f64 {
    let m = arms.len();
    assert!(m <= 16);
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        best = best.max(subset_min_eig(arms, &subset));
    }
    best
}

pub fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// `||r - X theta||^2 + lambda ||theta||_1`.
pub fn lasso_objective(x: &[Vec<f64>], r: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let rss: f64 = x
        .iter()
        .zip(r)
        .map(|(row, ri)| {
            let p: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            (ri - p).powi(2)
        })
        .sum();
    rss + lambda * theta.iter().map(|t| t.abs()).sum::<f64>()
}

/// Descent along the minimum-norm subgradient with step `1/L`; coordinates
/// that would cross zero stop at zero.
pub fn subgradient_lasso(x: &[Vec<f64>], r: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
    let d = x[0].len();
    let gram = {
        let mut g = vec![vec![0.0; d]; d];
        for row in x {
            for i in 0..d {
                for j in 0..d {
                    g[i][j] += 2.0 * row[i] * row[j];
                }
            }
        }
        g
    };
    let lip = jacobi_eigenvalues(gram.clone())[d - 1].max(1e-12);
    let mut corr = vec![0.0; d];
    for (row, ri) in x.iter().zip(r) {
        for i in 0..d {
            corr[i] += 2.0 * row[i] * ri;
        }
    }
    let mut theta = vec![0.0; d];
    for _ in 0..iters {
        let grad: Vec<f64> = (0..d).map(|i| (0..d).map(|j| gram[i][j] * theta[j]).sum::<f64>() - corr[i]).collect();
        let mut moved = false;
        for i in 0..d {
            let dir = if theta[i] != 0.0 {
                grad[i] + lambda * theta[i].signum()
            } else if grad[i] > lambda {
                grad[i] - lambda
            } else if grad[i] < -lambda {
                grad[i] + lambda
            } else {
                0.0
            };
            if dir == 0.0 {
                continue;
            }
            let next = theta[i] - dir / lip;
            let crossed = theta[i] != 0.0 && next.signum() != theta[i].signum();
            let new = if crossed { 0.0 } else { next };
            moved |= new != theta[i];
            theta[i] = new;
        }
        if !moved {
            break;
        }
    }
    theta
}

/// Euclidean projection of a 3-vector onto `{mu : sum = 1, 0 <= mu_i <= cap}`
/// by grid search followed by local refinement.
pub fn grid_projection_3d(v: &[f64; 3], cap: f64) -> [f64; 3] {
    let dist = |a: f64, b: f64| -> Option<f64> {
        let c = 1.0 - a - b;
        let ok = |x: f64| (-1e-15..=cap + 1e-15).contains(&x);
        (ok(a) && ok(b) && ok(c)).then(|| (a - v[0]).powi(2) + (b - v[1]).powi(2) + (c - v[2]).powi(2))
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let n = 400;
    for i in 0..=n {
        for j in 0..=n {
            let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
            if let Some(f) = dist(a, b) {
                if f < best.0 {
                    best = (f, a, b);
                }
            }
        }
    }
    let mut step = 1.0 / n as f64;
    while step > 1e-9 {
        let mut improved = false;
        for (da, db) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let (a, b) = (best.1 + da * step, best.2 + db * step);
            if let Some(f) = dist(a, b) {
                if f < best.0 {
                    best = (f, a, b);
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    [best.1, best.2, 1.0 - best.1 - best.2]
}

/// Maximum of `lambda_min(sum mu_j a_j a_j^T)` over the simplex capped at
/// `cap`, by lattice search plus pairwise mass-transfer refinement.
pub fn grid_relaxation(arms: &[Vec<f64>], cap: f64, lattice: usize) -> f64 {
    let m = arms.len();
    let mut best_mu = vec![1.0 / m as f64; m];
    let mut best = min_eig(arms, &best_mu);
    let max_units = (cap * lattice as f64 + 1e-9).floor() as usize;
    let mut counts = vec![0usize; m];
    fn rec(
        pos: usize,
        left: usize,
        max_units: usize,
        lattice: usize,
        counts: &mut Vec<usize>,
        arms: &[Vec<f64>],
        best: &mut f64,
        best_mu: &mut Vec<f64>,
    ) {
        let m = counts.len();
        if pos == m - 1 {
            if left > max_units {
                return;
            }
            counts[pos] = left;
            let mu: Vec<f64> = counts.iter().map(|&c| c as f64 / lattice as f64).collect();
            let f = min_eig(arms, &mu);
            if f > *best {
                *best = f;
                *best_mu = mu;
            }
            return;
        }
        for c in 0..=left.min(max_units) {
            counts[pos] = c;
            rec(pos + 1, left - c, max_units, lattice, counts, arms, best, best_mu);
        }
    }
    rec(0, lattice, max_units, lattice, &mut counts, arms, &mut best, &mut best_mu);
    let mut step = 1.0 / lattice as f64;
    while step > 1e-8 {
        let mut improved = false;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let mut mu = best_mu.clone();
                let s = step.min(mu[j]).min(cap - mu[i]);
                if s <= 0.0 {
                    continue;
                }
                mu[i] += s;
                mu[j] -= s;
                let f = min_eig(arms, &mu);
                if f > best + 1e-15 {
                    best = f;
                    best_mu = mu;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    best
}
