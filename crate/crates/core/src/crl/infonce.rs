use crate::error::{dim_err, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

/// Value and per-row statistics of the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoNceStats {
    pub loss: f64,
    /// Mean row log-partition `logsumexp_j L[i][j]`.
    pub mean_logsumexp: f64,
    /// Fraction of rows whose largest energy is on the diagonal.
    pub diag_accuracy: f64,
}

/// InfoNCE over a square energy matrix with in-batch negatives plus the
/// `λ·mean(logsumexp²)` penalty.
pub fn infonce_loss<T: Scalar>(energies: &RealArray<T>, penalty: f64) -> Result<f64> {
    Ok(infonce_forward_backward(energies, penalty, false)?.0.loss)
}

/// Loss statistics and, when `want_grad`, `∂loss/∂L`.
pub fn infonce_forward_backward<T: Scalar>(
    energies: &RealArray<T>,
    penalty: f64,
    want_grad: bool,
) -> Result<(InfoNceStats, Option<RealArray<T>>)> {
    let b = energies.rows();
    if energies.cols() != b || b == 0 {
        return Err(dim_err("infonce_loss", "non-empty square matrix", format!("{:?}", energies.shape())));
    }
    let inv_b = 1.0 / b as f64;
    let mut grad = want_grad.then(|| RealArray::zeros(&[b, b]));
    let mut loss = 0.0;
    let mut lse_sum = 0.0;
    let mut hits = 0usize;
    let mut probs = vec![0.0f64; b];
    for i in 0..b {
        let row = energies.row(i);
        let (argmax, max) = row
            .iter()
            .map(|v| v.as_f64())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        let mut sum = 0.0;
        for (p, v) in probs.iter_mut().zip(row) {
            *p = (v.as_f64() - max).exp();
            sum += *p;
        }
        let lse = max + sum.ln();
        loss += lse - row[i].as_f64() + penalty * lse * lse;
        lse_sum += lse;
        if argmax == i {
            hits += 1;
        }
        if let Some(g) = grad.as_mut() {
            let scale = (1.0 + 2.0 * penalty * lse) * inv_b;
            let gr = g.row_mut(i);
            for j in 0..b {
                let mut v = probs[j] / sum * scale;
                if j == i {
                    v -= inv_b;
                }
                gr[j] = T::of(v);
            }
        }
    }
    let stats = InfoNceStats {
        loss: loss * inv_b,
        mean_logsumexp: lse_sum * inv_b,
        diag_accuracy: hits as f64 * inv_b,
    };
    Ok((stats, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rows_give_log_batch() {
        let l = RealArray::<f64>::full(&[4, 4], 0.37);
        assert!((infonce_loss(&l, 0.0).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_is_near_zero() {
        let mut l = RealArray::<f64>::full(&[3, 3], -1e9);
        for i in 0..3 {
            l.row_mut(i)[i] = 0.0;
        }
        assert!(infonce_loss(&l, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_by_two_direct_value() {
        let l = RealArray::<f64>::matrix(2, 2, vec![0.0, -1.0, -1.0, 0.0]).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((infonce_loss(&l, 0.0).unwrap() - expected).abs() < 1e-12);
        // penalty adds λ·lse² with lse = ln(1 + e⁻¹) for both rows
        let with_pen = infonce_loss(&l, 0.1).unwrap();
        assert!((with_pen - expected - 0.1 * expected * expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square() {
        assert!(infonce_loss(&RealArray::<f64>::zeros(&[2, 3]), 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data: Vec<f64> = (0..9).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.4).collect();
        let l = RealArray::matrix(3, 3, data).unwrap();
        let (_, g) = infonce_forward_backward(&l, 0.1, true).unwrap();
        let g = g.unwrap();
        let h = 1e-6;
        for k in 0..9 {
            let mut p = l.clone();
            p.data_mut()[k] += h;
            let mut m = l.clone();
            m.data_mut()[k] -= h;
            let fd = (infonce_loss(&p, 0.1).unwrap() - infonce_loss(&m, 0.1).unwrap()) / (2.0 * h);
            assert!((fd - g.data()[k]).abs() < 1e-8, "{k}: {fd} vs {}", g.data()[k]);
        }
    }
}
