//! L2 energy between state-action and goal embeddings.
//!
//! Energy is the *negated* Euclidean distance, so larger means closer and the
//! contrastive loss pulls positive pairs together.

use crate::error::{dim_err, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

/// `−‖phi − psi‖₂`.
pub fn critic_energy<T: Scalar>(phi: &[T], psi: &[T]) -> Result<T> {
    if phi.len() != psi.len() {
        return Err(dim_err("critic_energy", phi.len(), psi.len()));
    }
    Ok(-sq_dist(phi, psi).sqrt())
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += (*x - *y) * (*x - *y);
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Pairwise energies `L[i][j] = −‖phi_i − psi_j‖` together with the
/// distances needed for the backward pass.
pub struct EnergyMatrix<T> {
    pub energies: RealArray<T>,
    distances: Vec<T>,
}

impl<T: Scalar> EnergyMatrix<T> {
    pub fn compute(phi: &RealArray<T>, psi: &RealArray<T>) -> Result<Self> {
        if phi.cols() != psi.cols() {
            return Err(dim_err("energy_matrix", phi.cols(), psi.cols()));
        }
        let (n, m) = (phi.rows(), psi.rows());
        let mut distances = vec![T::zero(); n * m];
        for i in 0..n {
            let p = phi.row(i);
            for j in 0..m {
                distances[i * m + j] = sq_dist(p, psi.row(j)).sqrt();
            }
        }
        let energies = RealArray::matrix(n, m, distances.iter().map(|&d| -d).collect())?;
        Ok(Self { energies, distances })
    }

    /// Chain rule from `∂loss/∂L` to `(∂loss/∂phi, ∂loss/∂psi)`. Entries at
    /// zero distance contribute a zero subgradient.
    pub fn backward(
        &self,
        phi: &RealArray<T>,
        psi: &RealArray<T>,
        grad: &RealArray<T>,
    ) -> Result<(RealArray<T>, RealArray<T>)> {
        let (n, m) = (phi.rows(), psi.rows());
        if grad.rows() != n || grad.cols() != m {
            return Err(dim_err("energy_matrix backward", format!("[{n}, {m}]"), format!("{:?}", grad.shape())));
        }
        let d = phi.cols();
        // With C_ij = −grad_ij / dist_ij:
        //   dphi_i = rowsum(C)_i · phi_i − (C psi)_i
        //   dpsi_j = colsum(C)_j · psi_j − (Cᵀ phi)_j
        let mut c = vec![T::zero(); n * m];
        let mut rowsum = vec![T::zero(); n];
        let mut colsum = vec![T::zero(); m];
        for i in 0..n {
            for j in 0..m {
                let dist = self.distances[i * m + j];
                if dist > T::zero() {
                    let v = -grad.data()[i * m + j] / dist;
                    c[i * m + j] = v;
                    rowsum[i] += v;
                    colsum[j] += v;
                }
            }
        }
        let mut dphi = RealArray::zeros(&[n, d]);
        let mut dpsi = RealArray::zeros(&[m, d]);
        for i in 0..n {
            let (p, out) = (phi.row(i), dphi.row_mut(i));
            for k in 0..d {
                out[k] = rowsum[i] * p[k];
            }
        }
        for j in 0..m {
            let (q, out) = (psi.row(j), dpsi.row_mut(j));
            for k in 0..d {
                out[k] = colsum[j] * q[k];
            }
        }
        let (mi, di) = (m as isize, d as isize);
        T::gemm(n, m, d, -T::one(), &c, (mi, 1), psi.data(), (di, 1), T::one(), dphi.data_mut(), (di, 1));
        T::gemm(m, n, d, -T::one(), &c, (1, mi), phi.data(), (di, 1), T::one(), dpsi.data_mut(), (di, 1));
        Ok((dphi, dpsi))
    }
}

/// Convenience wrapper returning only the energy matrix.
pub fn energy_matrix<T: Scalar>(phi: &RealArray<T>, psi: &RealArray<T>) -> Result<RealArray<T>> {
    Ok(EnergyMatrix::compute(phi, psi)?.energies)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_values() {
        assert_eq!(critic_energy(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(critic_energy(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), -5.0);
        assert!(critic_energy(&[0.0], &[3.0, 4.0]).is_err());
    }

    #[test]
    fn energy_is_rotation_invariant() {
        let (phi, psi) = ([0.3, -1.0], [2.0, 0.5]);
        let th: f64 = 0.7;
        let rot = |v: [f64; 2]| [th.cos() * v[0] - th.sin() * v[1], th.sin() * v[0] + th.cos() * v[1]];
        let a = critic_energy(&phi, &psi).unwrap();
        let b = critic_energy(&rot(phi), &rot(psi)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_matrix_by_hand() {
        let phi = RealArray::matrix(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let psi = RealArray::matrix(2, 2, vec![3.0, 4.0, 1.0, 0.0]).unwrap();
        let l = energy_matrix::<f64>(&phi, &psi).unwrap();
        // |(0,0)-(3,4)|=5, |(0,0)-(1,0)|=1, |(1,1)-(3,4)|=sqrt(13), |(1,1)-(1,0)|=1
        let expect = [-5.0, -1.0, -(13f64.sqrt()), -1.0];
        for (a, b) in l.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_embeddings_give_constant_matrix() {
        let phi = RealArray::matrix(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let psi = RealArray::matrix(3, 2, vec![0.0, 5.0, 0.0, 5.0, 0.0, 5.0]).unwrap();
        let l = energy_matrix::<f64>(&phi, &psi).unwrap();
        assert!(l.data().iter().all(|&v| v == l.data()[0]));
        let one = energy_matrix::<f64>(&RealArray::matrix(1, 2, vec![0.0, 1.0]).unwrap(), &RealArray::matrix(1, 2, vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(one.shape(), &[1, 1]);
    }
}
