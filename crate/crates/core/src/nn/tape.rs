//! Generic layer program with a recorded evaluation tape for reverse mode.
//!
//! A [`Network`] is a flat list of [`Layer`]s. Residual blocks are delimited by
//! `BlockStart`/`BlockEnd` markers: the forward pass pushes the block input on
//! a skip stack at `BlockStart` and adds it back at `BlockEnd`; the backward
//! pass mirrors this by forking the incoming gradient at `BlockEnd` and
//! merging it again at `BlockStart`.

use crate::error::{dim_err, Error, Result};
use crate::nn::ops::{dense_backward, dense_forward, ln_backward, ln_forward, swish_backward, swish_forward};
use crate::nn::{ParameterStore, RealArray};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Dense {
        weight: usize,
        bias: usize,
        fan_in: usize,
        fan_out: usize,
    },
    LayerNorm {
        gain: usize,
        bias: usize,
        width: usize,
    },
    Swish,
    BlockStart,
    BlockEnd,
}

/// Whether a backward pass accumulates parameter gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Accumulate,
    /// Only the input gradient is produced; parameter grads stay untouched.
    InputOnly,
}

enum Saved<T> {
    Dense(Vec<T>),
    LayerNorm { xhat: Vec<T>, inv_std: Vec<T> },
    Swish(Vec<T>),
    Marker,
}

struct Tape<T> {
    rows: usize,
    saved: Vec<Saved<T>>,
}

/// A differentiable feed-forward network.
pub struct Network<T> {
    pub params: ParameterStore<T>,
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
    ln_eps: T,
    tape: Option<Tape<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(params: ParameterStore<T>, layers: Vec<Layer>, input_dim: usize, output_dim: usize, ln_eps: T) -> Self {
        Self {
            params,
            layers,
            input_dim,
            output_dim,
            ln_eps,
            tape: None,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::BlockStart)).count()
    }

    /// Forward pass without recording.
    pub fn forward(&self, x: &RealArray<T>) -> Result<RealArray<T>> {
        let (out, _) = self.run(x, false, None)?;
        Ok(out)
    }

    /// Forward pass that records the tape consumed by [`Network::backward`].
    pub fn forward_train(&mut self, x: &RealArray<T>) -> Result<RealArray<T>> {
        let (out, tape) = self.run(x, true, None)?;
        self.tape = tape;
        Ok(out)
    }

    /// Forward pass reporting the per-row L2 norm of each residual branch
    /// output `F_i(h_i)` (one `Vec` per block, in block order).
    pub fn forward_with_branch_norms(&self, x: &RealArray<T>) -> Result<(RealArray<T>, Vec<Vec<f64>>)> {
        let mut norms = Vec::new();
        let mut observe = |rows: usize, width: usize, branch: &[T]| {
            norms.push(
                (0..rows)
                    .map(|r| {
                        branch[r * width..(r + 1) * width]
                            .iter()
                            .map(|v| v.as_f64().powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect(),
            );
        };
        let (out, _) = self.run(x, false, Some(&mut observe))?;
        Ok((out, norms))
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    fn check_input(&self, x: &RealArray<T>) -> Result<usize> {
        if x.cols() != self.input_dim {
            return Err(dim_err("network forward", format!("input width {}", self.input_dim), x.cols()));
        }
        Ok(x.rows())
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        x: &RealArray<T>,
        record: bool,
        mut observe: Option<&mut dyn FnMut(usize, usize, &[T])>,
    ) -> Result<(RealArray<T>, Option<Tape<T>>)> {
        let rows = self.check_input(x)?;
        let mut h = x.data().to_vec();
        let mut width = self.input_dim;
        let mut skips: Vec<Vec<T>> = Vec::new();
        let mut saved = Vec::with_capacity(if record { self.layers.len() } else { 0 });

        for layer in &self.layers {
            match *layer {
                Layer::Dense {
                    weight,
                    bias,
                    fan_in,
                    fan_out,
                } => {
                    debug_assert_eq!(fan_in, width);
                    let mut out = vec![T::zero(); rows * fan_out];
                    dense_forward(
                        &h,
                        rows,
                        fan_in,
                        self.params.at(weight).value.data(),
                        self.params.at(bias).value.data(),
                        fan_out,
                        &mut out,
                    );
                    let input = std::mem::replace(&mut h, out);
                    if record {
                        saved.push(Saved::Dense(input));
                    }
                    width = fan_out;
                }
                Layer::LayerNorm { gain, bias, width: w } => {
                    debug_assert_eq!(w, width);
                    let mut out = vec![T::zero(); rows * w];
                    let mut xhat = vec![T::zero(); rows * w];
                    let mut inv_std = vec![T::zero(); rows];
                    ln_forward(
                        &h,
                        w,
                        self.params.at(gain).value.data(),
                        self.params.at(bias).value.data(),
                        self.ln_eps,
                        &mut out,
                        &mut xhat,
                        &mut inv_std,
                    );
                    h = out;
                    if record {
                        saved.push(Saved::LayerNorm { xhat, inv_std });
                    }
                }
                Layer::Swish => {
                    let mut out = vec![T::zero(); h.len()];
                    swish_forward(&h, &mut out);
                    let input = std::mem::replace(&mut h, out);
                    if record {
                        saved.push(Saved::Swish(input));
                    }
                }
                Layer::BlockStart => {
                    skips.push(h.clone());
                    if record {
                        saved.push(Saved::Marker);
                    }
                }
                Layer::BlockEnd => {
                    let skip = skips.pop().ok_or_else(|| Error::Usage("unbalanced residual block".into()))?;
                    if let Some(obs) = observe.as_mut() {
                        obs(rows, width, &h);
                    }
                    h.iter_mut().zip(&skip).for_each(|(a, &b)| *a += b);
                    if record {
                        saved.push(Saved::Marker);
                    }
                }
            }
        }
        let out = RealArray::matrix(rows, width, h)?;
        Ok((out, record.then_some(Tape { rows, saved })))
    }

    /// Propagates `upstream = ∂loss/∂output` through the recorded tape,
    /// returning `∂loss/∂input`. The tape is consumed.
    pub fn backward(&mut self, upstream: &RealArray<T>, mode: GradMode) -> Result<RealArray<T>> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::Usage("backward called without a recorded forward pass".into()))?;
        let rows = tape.rows;
        if upstream.rows() != rows || upstream.cols() != self.output_dim {
            return Err(dim_err(
                "network backward",
                format!("[{rows}, {}]", self.output_dim),
                format!("{:?}", upstream.shape()),
            ));
        }
        let mut g = upstream.data().to_vec();
        let mut forks: Vec<Vec<T>> = Vec::new();

        for (layer, saved) in self.layers.iter().zip(tape.saved).rev() {
            match (*layer, saved) {
                (
                    Layer::Dense {
                        weight,
                        bias,
                        fan_in,
                        fan_out,
                    },
                    Saved::Dense(input),
                ) => {
                    let mut dx = vec![T::zero(); rows * fan_in];
                    let w = std::mem::take(&mut self.params.at_mut(weight).value);
                    match mode {
                        GradMode::Accumulate => {
                            let mut dw = std::mem::take(&mut self.params.at_mut(weight).grad);
                            let db = &mut self.params.at_mut(bias).grad;
                            dense_backward(
                                &input,
                                rows,
                                fan_in,
                                w.data(),
                                fan_out,
                                &g,
                                Some((dw.data_mut(), db.data_mut())),
                                &mut dx,
                            );
                            self.params.at_mut(weight).grad = dw;
                        }
                        GradMode::InputOnly => {
                            dense_backward(&input, rows, fan_in, w.data(), fan_out, &g, None, &mut dx);
                        }
                    }
                    self.params.at_mut(weight).value = w;
                    g = dx;
                }
                (Layer::LayerNorm { gain, bias, width }, Saved::LayerNorm { xhat, inv_std }) => {
                    let mut dx = vec![T::zero(); rows * width];
                    let gain_v = std::mem::take(&mut self.params.at_mut(gain).value);
                    match mode {
                        GradMode::Accumulate => {
                            let mut dgain = std::mem::take(&mut self.params.at_mut(gain).grad);
                            let dbias = &mut self.params.at_mut(bias).grad;
                            ln_backward(
                                &xhat,
                                &inv_std,
                                width,
                                gain_v.data(),
                                &g,
                                Some((dgain.data_mut(), dbias.data_mut())),
                                &mut dx,
                            );
                            self.params.at_mut(gain).grad = dgain;
                        }
                        GradMode::InputOnly => {
                            ln_backward(&xhat, &inv_std, width, gain_v.data(), &g, None, &mut dx);
                        }
                    }
                    self.params.at_mut(gain).value = gain_v;
                    g = dx;
                }
                (Layer::Swish, Saved::Swish(input)) => swish_backward(&input, &mut g),
                (Layer::BlockEnd, Saved::Marker) => forks.push(g.clone()),
                (Layer::BlockStart, Saved::Marker) => {
                    let skip = forks.pop().ok_or_else(|| Error::Usage("unbalanced residual block".into()))?;
                    g.iter_mut().zip(&skip).for_each(|(a, &b)| *a += b);
                }
                _ => return Err(Error::Usage("tape does not match network layers".into())),
            }
        }
        RealArray::matrix(rows, self.input_dim, g)
    }
}
