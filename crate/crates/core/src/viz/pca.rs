//! Principal component projection via cyclic Jacobi eigendecomposition of
//! the sample covariance.

use crate::error::{Error, Result};

/// Convergence threshold on the off-diagonal Frobenius norm, relative to
/// the matrix norm (floored at 1).
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) and column eigenvectors of a symmetric `d×d`
/// matrix, stored row-major with `vectors[i * d + k]` the `i`-th entry of
/// eigenvector `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

fn off_norm(a: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[i * d + j] * a[i * d + j];
            }
        }
    }
    s.sqrt()
}

pub fn jacobi_eigen(matrix: &[f64], d: usize) -> Result<SymmetricEigen> {
    if matrix.len() != d * d {
        return Err(crate::error::dim_err("jacobi_eigen", d * d, matrix.len()));
    }
    let mut a = matrix.to_vec();
    for i in 0..d {
        for j in 0..i {
            if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 * (1.0 + a[i * d + j].abs()) {
                return Err(Error::Usage("jacobi_eigen needs a symmetric matrix".into()));
            }
        }
    }
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let mut sweeps = 0;
    while off_norm(&a, d) > JACOBI_TOL * scale {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Usage(format!("Jacobi iteration did not converge in {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * d + p], a[q * d + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k * d + p], a[k * d + q]);
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p * d + k], a[q * d + k]);
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[k * d + p], v[k * d + q]);
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let mut vectors = vec![0.0; d * d];
    for (new, &old) in order.iter().enumerate() {
        for i in 0..d {
            vectors[i * d + new] = v[i * d + old];
        }
    }
    Ok(SymmetricEigen { values, vectors, sweeps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// `n×k` projected coordinates, row-major.
    pub coords: Vec<f64>,
    pub k: usize,
    /// Fraction of total variance per returned component.
    pub explained: Vec<f64>,
    /// Fractions for all `d` components (sums to 1 unless all variance is 0).
    pub explained_all: Vec<f64>,
}

/// Projects `n×d` row-major embeddings onto their top `k` principal
/// directions. Each component's sign makes its largest-magnitude projected
/// coordinate positive.
pub fn pca_project(data: &[f64], n: usize, d: usize, k: usize) -> Result<PcaResult> {
    if n < 2 {
        return Err(Error::Usage(format!("PCA needs at least 2 points, got {n}")));
    }
    if k == 0 || k > d {
        return Err(Error::Usage(format!("PCA needs 1 <= k <= d, got k={k}, d={d}")));
    }
    if data.len() != n * d {
        return Err(crate::error::dim_err("pca_project", n * d, data.len()));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for j in 0..d {
            mean[j] += data[r * d + j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = (0..n * d).map(|i| data[i] - mean[i % d]).collect();
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        let row = &centered[r * d..(r + 1) * d];
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let eig = jacobi_eigen(&cov, d)?;
    let values: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let explained_all: Vec<f64> = if total > 0.0 {
        values.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; d]
    };
    let mut coords = vec![0.0; n * k];
    for c in 0..k {
        let mut best = 0.0f64;
        for r in 0..n {
            let p: f64 = (0..d).map(|i| centered[r * d + i] * eig.vectors[i * d + c]).sum();
            coords[r * k + c] = p;
            if p.abs() > best.abs() {
                best = p;
            }
        }
        if best < 0.0 {
            for r in 0..n {
                coords[r * k + c] = -coords[r * k + c];
            }
        }
    }
    Ok(PcaResult {
        coords,
        k,
        explained: explained_all[..k].to_vec(),
        explained_all,
    })
}
