//! Layer primitives. The array-level functions accept a single vector or a
//! batch (rows × features); the slice kernels underneath are what the network
//! tape calls on whole batches.

use crate::error::{dim_err, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

/// Default layer-norm variance guard.
pub const LN_EPS: f64 = 1e-6;

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Elementwise `x·σ(x)`.
pub fn swish<T: Scalar>(x: &RealArray<T>) -> RealArray<T> {
    let mut out = x.clone();
    swish_forward(x.data(), out.data_mut());
    out
}

/// Normalizes each row over the feature axis, then applies `gain` and `bias`.
pub fn layer_norm<T: Scalar>(
    h: &RealArray<T>,
    gain: &RealArray<T>,
    bias: &RealArray<T>,
    eps: T,
) -> Result<RealArray<T>> {
    let width = h.cols();
    if gain.len() != width || bias.len() != width {
        return Err(dim_err(
            "layer_norm",
            format!("gain/bias of width {width}"),
            format!("{}/{}", gain.len(), bias.len()),
        ));
    }
    let mut out = RealArray::zeros(h.shape());
    let mut inv = vec![T::zero(); h.rows()];
    let mut xhat = vec![T::zero(); h.len()];
    ln_forward(h.data(), width, gain.data(), bias.data(), eps, out.data_mut(), &mut xhat, &mut inv);
    Ok(out)
}

/// `x·W + b` for `W` of shape `[in, out]`.
pub fn dense<T: Scalar>(x: &RealArray<T>, w: &RealArray<T>, b: &RealArray<T>) -> Result<RealArray<T>> {
    if w.shape().len() != 2 {
        return Err(dim_err("dense", "rank-2 weight", format!("{:?}", w.shape())));
    }
    let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
    if x.cols() != fan_in {
        return Err(dim_err("dense", format!("input width {fan_in}"), x.cols()));
    }
    if b.len() != fan_out {
        return Err(dim_err("dense", format!("bias of length {fan_out}"), b.len()));
    }
    let rows = x.rows();
    let mut shape = x.shape().to_vec();
    match shape.last_mut() {
        Some(last) => *last = fan_out,
        None => shape.push(fan_out),
    }
    let mut out = RealArray::zeros(&shape);
    dense_forward(x.data(), rows, fan_in, w.data(), b.data(), fan_out, out.data_mut());
    Ok(out)
}

/// Parameters of one residual block: four (dense, layer-norm) units.
#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub units: Vec<UnitParams<T>>,
}

#[derive(Debug, Clone)]
pub struct UnitParams<T> {
    pub weight: RealArray<T>,
    pub bias: RealArray<T>,
    pub ln_gain: RealArray<T>,
    pub ln_bias: RealArray<T>,
}

/// Number of dense → layer-norm → swish units inside a residual block.
pub const BLOCK_UNITS: usize = 4;

/// `h + F(h)` where `F` is four dense → layer-norm → swish units. The skip is
/// added after the last activation.
pub fn residual_block<T: Scalar>(h: &RealArray<T>, block: &BlockParams<T>, eps: T) -> Result<RealArray<T>> {
    if block.units.len() != BLOCK_UNITS {
        return Err(dim_err("residual_block", BLOCK_UNITS, block.units.len()));
    }
    let mut x = h.clone();
    for unit in &block.units {
        x = dense(&x, &unit.weight, &unit.bias)?;
        x = layer_norm(&x, &unit.ln_gain, &unit.ln_bias, eps)?;
        x = swish(&x);
    }
    if x.shape() != h.shape() {
        return Err(dim_err("residual_block", format!("{:?}", h.shape()), format!("{:?}", x.shape())));
    }
    x.data_mut().iter_mut().zip(h.data()).for_each(|(a, &b)| *a += b);
    Ok(x)
}

// ---- batch kernels --------------------------------------------------------

pub(crate) fn dense_forward<T: Scalar>(
    x: &[T],
    rows: usize,
    fan_in: usize,
    w: &[T],
    b: &[T],
    fan_out: usize,
    out: &mut [T],
) {
    for r in 0..rows {
        out[r * fan_out..(r + 1) * fan_out].copy_from_slice(b);
    }
    T::gemm(
        rows,
        fan_in,
        fan_out,
        T::one(),
        x,
        (fan_in as isize, 1),
        w,
        (fan_out as isize, 1),
        T::one(),
        out,
        (fan_out as isize, 1),
    );
}

/// Accumulates `dW += xᵀ·g`, `db += Σ g` (when `param_grads` is given) and
/// writes `dx = g·Wᵀ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    rows: usize,
    fan_in: usize,
    w: &[T],
    fan_out: usize,
    g: &[T],
    param_grads: Option<(&mut [T], &mut [T])>,
    dx: &mut [T],
) {
    if let Some((dw, db)) = param_grads {
        T::gemm(
            fan_in,
            rows,
            fan_out,
            T::one(),
            x,
            (1, fan_in as isize),
            g,
            (fan_out as isize, 1),
            T::one(),
            dw,
            (fan_out as isize, 1),
        );
        for r in 0..rows {
            for (acc, &v) in db.iter_mut().zip(&g[r * fan_out..(r + 1) * fan_out]) {
                *acc += v;
            }
        }
    }
    T::gemm(
        rows,
        fan_out,
        fan_in,
        T::one(),
        g,
        (fan_out as isize, 1),
        w,
        (1, fan_out as isize),
        T::zero(),
        dx,
        (fan_in as isize, 1),
    );
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn ln_forward<T: Scalar>(
    x: &[T],
    width: usize,
    gain: &[T],
    bias: &[T],
    eps: T,
    out: &mut [T],
    xhat: &mut [T],
    inv_std: &mut [T],
) {
    let n = T::of(width as f64);
    for (r, inv_slot) in inv_std.iter_mut().enumerate() {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        *inv_slot = inv;
        let xh = &mut xhat[r * width..(r + 1) * width];
        let o = &mut out[r * width..(r + 1) * width];
        for j in 0..width {
            xh[j] = (row[j] - mean) * inv;
            o[j] = xh[j] * gain[j] + bias[j];
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn ln_backward<T: Scalar>(
    xhat: &[T],
    inv_std: &[T],
    width: usize,
    gain: &[T],
    g: &[T],
    param_grads: Option<(&mut [T], &mut [T])>,
    dx: &mut [T],
) {
    let n = T::of(width as f64);
    let mut dxhat = vec![T::zero(); width];
    let mut pg = param_grads;
    for (r, &inv) in inv_std.iter().enumerate() {
        let xh = &xhat[r * width..(r + 1) * width];
        let gr = &g[r * width..(r + 1) * width];
        if let Some((dgain, dbias)) = pg.as_mut() {
            for j in 0..width {
                dgain[j] += gr[j] * xh[j];
                dbias[j] += gr[j];
            }
        }
        let mut sum = T::zero();
        let mut sum_xh = T::zero();
        for j in 0..width {
            dxhat[j] = gr[j] * gain[j];
            sum += dxhat[j];
            sum_xh += dxhat[j] * xh[j];
        }
        let mean = sum / n;
        let mean_xh = sum_xh / n;
        let out = &mut dx[r * width..(r + 1) * width];
        for j in 0..width {
            out[j] = inv * (dxhat[j] - mean - xh[j] * mean_xh);
        }
    }
}

pub(crate) fn swish_forward<T: Scalar>(x: &[T], out: &mut [T]) {
    T::sigmoid_into(x, out);
    for (o, &v) in out.iter_mut().zip(x) {
        *o *= v;
    }
}

pub(crate) fn swish_backward<T: Scalar>(x: &[T], g: &mut [T]) {
    let mut s = vec![T::zero(); x.len()];
    T::sigmoid_into(x, &mut s);
    for ((gi, &v), &s) in g.iter_mut().zip(x).zip(&s) {
        *gi *= s * (T::one() + v * (T::one() - s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(v: &[f64]) -> RealArray<f64> {
        RealArray::vector(v.to_vec())
    }

    #[test]
    fn swish_values() {
        let y = swish(&arr(&[0.0, 20.0, -1.0]));
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 20.0).abs() < 1e-6);
        // -1 / (1 + e)
        assert!((y.data()[2] + 0.268_941_421_369_995).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_cases() {
        let ones = arr(&[1.0; 4]);
        let zeros = arr(&[0.0; 4]);
        let y = layer_norm(&arr(&[3.0; 4]), &ones, &zeros, 1e-6).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let y = layer_norm(&arr(&[1.0, -1.0]), &arr(&[1.0, 1.0]), &arr(&[0.0, 0.0]), 0.0).unwrap();
        assert_eq!(y.data(), &[1.0, -1.0]);

        let bias = arr(&[0.5, -2.0, 3.0, 0.0]);
        let y = layer_norm(&arr(&[1.0, 7.0, -3.0, 2.0]), &zeros, &bias, 1e-6).unwrap();
        assert_eq!(y.data(), bias.data());
    }

    #[test]
    fn layer_norm_rejects_bad_gain() {
        let e = layer_norm(&arr(&[1.0, 2.0]), &arr(&[1.0]), &arr(&[0.0, 0.0]), 1e-6);
        assert!(e.is_err());
    }

    #[test]
    fn dense_cases() {
        let eye = RealArray::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = arr(&[1.0, 2.0]);
        assert_eq!(dense(&x, &eye, &arr(&[0.0, 0.0])).unwrap().data(), &[1.0, 2.0]);
        let zero = RealArray::zeros(&[2, 2]);
        assert_eq!(dense(&x, &zero, &arr(&[4.0, 5.0])).unwrap().data(), &[4.0, 5.0]);
        let w = RealArray::matrix(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(dense(&x, &w, &arr(&[1.0, 1.0])).unwrap().data(), &[2.0, 5.0]);
    }

    #[test]
    fn dense_shape_mismatch_is_structured() {
        let w = RealArray::<f64>::zeros(&[3, 2]);
        let err = dense(&arr(&[1.0, 2.0]), &w, &arr(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, crate::Error::Dimension { op: "dense", .. }));
    }

    fn zero_block(width: usize) -> BlockParams<f64> {
        BlockParams {
            units: (0..BLOCK_UNITS)
                .map(|_| UnitParams {
                    weight: RealArray::zeros(&[width, width]),
                    bias: RealArray::zeros(&[width]),
                    ln_gain: RealArray::zeros(&[width]),
                    ln_bias: RealArray::zeros(&[width]),
                })
                .collect(),
        }
    }

    #[test]
    fn zero_block_is_identity_and_zero_input_stays_zero() {
        let h = arr(&[0.3, -1.2, 2.5]);
        let y = residual_block(&h, &zero_block(3), 1e-6).unwrap();
        assert_eq!(y, h);

        let mut block = zero_block(3);
        for u in &mut block.units {
            u.ln_gain.fill(1.0);
            u.weight.fill(0.7);
        }
        let z = arr(&[0.0; 3]);
        assert_eq!(residual_block(&z, &block, 1e-6).unwrap(), z);
    }

    #[test]
    fn width_two_block_matches_scalar_trace() {
        // Hand-set weights; every unit shares W = [[0.5, -0.25], [0.1, 0.2]],
        // b = [0.05, -0.05], gain = [1.5, 0.5], ln bias = [0.1, -0.2].
        let unit = UnitParams {
            weight: RealArray::matrix(2, 2, vec![0.5, -0.25, 0.1, 0.2]).unwrap(),
            bias: arr(&[0.05, -0.05]),
            ln_gain: arr(&[1.5, 0.5]),
            ln_bias: arr(&[0.1, -0.2]),
        };
        let block = BlockParams {
            units: vec![unit; 4],
        };
        let h: [f64; 2] = [0.8, -0.4];
        let eps = 1e-6;

        // Scalar-by-scalar oracle.
        let mut x = h;
        for _ in 0..4 {
            let d0 = x[0] * 0.5 + x[1] * 0.1 + 0.05;
            let d1 = x[0] * -0.25 + x[1] * 0.2 - 0.05;
            let mean = (d0 + d1) / 2.0;
            let var = ((d0 - mean).powi(2) + (d1 - mean).powi(2)) / 2.0;
            let s = (var + eps).sqrt();
            let n0 = (d0 - mean) / s * 1.5 + 0.1;
            let n1 = (d1 - mean) / s * 0.5 - 0.2;
            x = [n0 / (1.0 + (-n0).exp()), n1 / (1.0 + (-n1).exp())];
        }
        let expected = [h[0] + x[0], h[1] + x[1]];

        let y = residual_block(&arr(&h), &block, eps).unwrap();
        for (a, b) in y.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
