//! Residual actor/critic network construction.
//!
//! Layout: input projection (dense → layer norm → swish, `input_dim → width`),
//! then `depth / 4` residual blocks of four dense → layer norm → swish units,
//! then a linear output head (`width → output_dim`). Only the dense layers
//! inside residual blocks count toward `depth`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradMode, Layer, Network, ParameterStore, RealArray, BLOCK_UNITS, LN_EPS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub output_dim: usize,
    pub use_input_projection: bool,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, width: usize, depth: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            width,
            depth,
            output_dim,
            use_input_projection: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth % BLOCK_UNITS != 0 {
            return Err(Error::Config(format!(
                "network depth must be a positive multiple of {BLOCK_UNITS} (dense layers per residual block), got {}",
                self.depth
            )));
        }
        if self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!(
                "network dims must be >= 1 (input {}, width {}, output {})",
                self.input_dim, self.width, self.output_dim
            )));
        }
        if !self.use_input_projection && self.input_dim != self.width {
            return Err(Error::Config(format!(
                "without an input projection, input_dim ({}) must equal width ({})",
                self.input_dim, self.width
            )));
        }
        Ok(())
    }

    pub fn num_blocks(&self) -> usize {
        self.depth / BLOCK_UNITS
    }
}

/// Exact number of scalar parameters `build_network` allocates for `spec`.
pub fn param_count(spec: &NetworkSpec) -> usize {
    let w = spec.width;
    let unit = |fan_in: usize| fan_in * w + w + 2 * w;
    let proj = if spec.use_input_projection { unit(spec.input_dim) } else { 0 };
    let blocks = spec.depth * unit(w);
    let head = w * spec.output_dim + spec.output_dim;
    proj + blocks + head
}

/// A network built from a [`NetworkSpec`].
pub struct BuiltNetwork<T> {
    pub spec: NetworkSpec,
    pub net: Network<T>,
}

impl<T: Scalar> BuiltNetwork<T> {
    pub fn forward(&self, x: &RealArray<T>) -> Result<RealArray<T>> {
        self.net.forward(x)
    }

    pub fn forward_train(&mut self, x: &RealArray<T>) -> Result<RealArray<T>> {
        self.net.forward_train(x)
    }

    pub fn backward(&mut self, upstream: &RealArray<T>, mode: GradMode) -> Result<RealArray<T>> {
        self.net.backward(upstream, mode)
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.net.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.net.params
    }

    /// Sets every parameter of residual block `index` to zero.
    pub fn zero_block(&mut self, index: usize) {
        let prefix = format!("block{index}/");
        for (name, entry) in self.net.params.iter_mut() {
            if name.starts_with(&prefix) {
                entry.value.fill(T::zero());
            }
        }
    }
}

struct Builder<'a, T> {
    store: ParameterStore<T>,
    layers: Vec<Layer>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<()> {
        let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("valid std");
        let w: Vec<T> = (0..fan_in * fan_out).map(|_| T::of(normal.sample(self.rng))).collect();
        let weight = self
            .store
            .insert(format!("{prefix}/w"), RealArray::matrix(fan_in, fan_out, w)?)?;
        let bias = self.store.insert(format!("{prefix}/b"), RealArray::zeros(&[fan_out]))?;
        self.layers.push(Layer::Dense {
            weight,
            bias,
            fan_in,
            fan_out,
        });
        Ok(())
    }

    fn unit(&mut self, prefix: &str, fan_in: usize, width: usize) -> Result<()> {
        self.dense(prefix, fan_in, width)?;
        let gain = self
            .store
            .insert(format!("{prefix}/ln_gain"), RealArray::full(&[width], T::one()))?;
        let bias = self.store.insert(format!("{prefix}/ln_bias"), RealArray::zeros(&[width]))?;
        self.layers.push(Layer::LayerNorm { gain, bias, width });
        self.layers.push(Layer::Swish);
        Ok(())
    }
}

/// Builds a residual network with deterministic initialization from `seed`:
/// fan-in variance-scaled normal weights, zero biases, unit layer-norm gains.
pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<BuiltNetwork<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        store: ParameterStore::new(),
        layers: Vec::new(),
        rng: &mut rng,
    };
    let w = spec.width;
    if spec.use_input_projection {
        b.unit("proj", spec.input_dim, w)?;
    }
    for blk in 0..spec.num_blocks() {
        b.layers.push(Layer::BlockStart);
        for u in 0..BLOCK_UNITS {
            b.unit(&format!("block{blk}/unit{u}"), w, w)?;
        }
        b.layers.push(Layer::BlockEnd);
    }
    b.dense("head", w, spec.output_dim)?;
    let Builder { store, layers, .. } = b;
    let net = Network::new(store, layers, spec.input_dim, spec.output_dim, T::of(LN_EPS));
    Ok(BuiltNetwork { spec: *spec, net })
}
