//! Minimal feed-forward network engine.
//!
//! A model is a stack of shared ReLU layers feeding one or more linear heads.
//! The first layer consumes a dense numeric vector followed by one row from
//! each embedding table. Tables marked non-trainable act as read-only lookup
//! stores (for example quasi-static listing features keyed by listing id).

mod dropout;
mod init;
mod network;
mod optim;

pub use dropout::dropout_mask;
pub use init::{embedding_init, xavier_bound, xavier_init};
pub use network::{Activations, DenseGrad, Gradients, Slot, SparseRows};
pub use optim::{adam_step, lazy_adam_step, AdamConfig, OptimizerKind, OptimizerState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::{cast, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::invalid(format!(
                "layer dims must be >= 1, got {input_dim}x{output_dim}"
            )));
        }
        Ok(Self {
            input_dim,
            output_dim,
            activation,
        })
    }
}

/// Affine layer; `weights` is `output_dim x input_dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub shape: LayerShape,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(shape: LayerShape) -> Self {
        Self {
            shape,
            weights: vec![T::zero(); shape.input_dim * shape.output_dim],
            bias: vec![T::zero(); shape.output_dim],
        }
    }

    pub fn xavier(shape: LayerShape, seed: u64) -> Result<Self> {
        Ok(Self {
            shape,
            weights: xavier_init(shape.input_dim, shape.output_dim, seed)?,
            bias: vec![T::zero(); shape.output_dim],
        })
    }

    #[inline]
    pub fn row(&self, out: usize) -> &[T] {
        let n = self.shape.input_dim;
        &self.weights[out * n..(out + 1) * n]
    }

    /// `out = W x + b`, no activation.
    pub fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.shape.output_dim).map(|o| self.bias[o] + dot(self.row(o), x)));
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            shape: self.shape,
            weights: self.weights.iter().map(|&v| cast(v)).collect(),
            bias: self.bias.iter().map(|&v| cast(v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub name: String,
    pub bucket_count: usize,
    pub dim: usize,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    pub name: String,
    pub bucket_count: usize,
    pub dim: usize,
    pub trainable: bool,
    /// `bucket_count x dim`, row-major.
    pub values: Vec<T>,
}

impl<T: Real> EmbeddingTable<T> {
    pub fn zeros(spec: &EmbeddingSpec) -> Self {
        Self {
            name: spec.name.clone(),
            bucket_count: spec.bucket_count,
            dim: spec.dim,
            trainable: spec.trainable,
            values: vec![T::zero(); spec.bucket_count * spec.dim],
        }
    }

    pub fn spec(&self) -> EmbeddingSpec {
        EmbeddingSpec {
            name: self.name.clone(),
            bucket_count: self.bucket_count,
            dim: self.dim,
            trainable: self.trainable,
        }
    }

    #[inline]
    pub fn row(&self, idx: usize) -> &[T] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn cast<U: Real>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            name: self.name.clone(),
            bucket_count: self.bucket_count,
            dim: self.dim,
            trainable: self.trainable,
            values: self.values.iter().map(|&v| cast(v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head<T> {
    pub name: String,
    pub layer: Dense<T>,
}

/// Network shape: what [`ModelParams::init`] builds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub dense_dim: usize,
    pub embeddings: Vec<EmbeddingSpec>,
    pub hidden: Vec<usize>,
    pub heads: Vec<String>,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.dense_dim + self.embeddings.iter().map(|e| e.dim).sum::<usize>()
    }

    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        let mut shapes = Vec::with_capacity(self.hidden.len());
        let mut fan_in = self.input_dim();
        for &width in &self.hidden {
            shapes.push(LayerShape::new(fan_in, width, Activation::Relu)?);
            fan_in = width;
        }
        Ok(shapes)
    }

    pub fn head_shape(&self) -> Result<LayerShape> {
        let fan_in = self.hidden.last().copied().unwrap_or_else(|| self.input_dim());
        LayerShape::new(fan_in, 1, Activation::Identity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub dense_dim: usize,
    pub embeddings: Vec<EmbeddingTable<T>>,
    pub hidden: Vec<Dense<T>>,
    pub heads: Vec<Head<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Xavier-uniform weights, zero biases, uniform [-1, 1] trainable
    /// embeddings. Non-trainable tables start at zero and are filled by the
    /// caller.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        if arch.heads.is_empty() {
            return Err(Error::invalid("model needs at least one head"));
        }
        let hidden = arch
            .layer_shapes()?
            .into_iter()
            .enumerate()
            .map(|(i, s)| Dense::xavier(s, seed_for(seed, 100 + i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let head_shape = arch.head_shape()?;
        let heads = arch
            .heads
            .iter()
            .enumerate()
            .map(|(i, name)| {
                Ok(Head {
                    name: name.clone(),
                    layer: Dense::xavier(head_shape, seed_for(seed, 200 + i as u64))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let embeddings = arch
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                if spec.trainable {
                    let mut t = embedding_init(spec.bucket_count, spec.dim, seed_for(seed, 300 + i as u64))?;
                    t.name = spec.name.clone();
                    Ok(t)
                } else if spec.bucket_count == 0 || spec.dim == 0 {
                    Err(Error::invalid(format!("empty embedding table `{}`", spec.name)))
                } else {
                    Ok(EmbeddingTable::zeros(spec))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dense_dim: arch.dense_dim,
            embeddings,
            hidden,
            heads,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            dense_dim: self.dense_dim,
            embeddings: self.embeddings.iter().map(|t| t.spec()).collect(),
            hidden: self.hidden.iter().map(|l| l.shape.output_dim).collect(),
            heads: self.heads.iter().map(|h| h.name.clone()).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dense_dim + self.embeddings.iter().map(|e| e.dim).sum::<usize>()
    }

    pub fn head_index(&self, name: &str) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.name == name)
            .ok_or_else(|| Error::invalid(format!("no head named `{name}`")))
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.embeddings.iter().position(|t| t.name == name)
    }

    /// Checks that layer dims chain and every value is finite.
    pub fn validate(&self) -> Result<()> {
        let mut fan_in = self.input_dim();
        for (i, layer) in self.hidden.iter().enumerate() {
            if layer.shape.input_dim != fan_in || layer.shape.activation != Activation::Relu {
                return Err(Error::invalid(format!("hidden layer {i} does not chain")));
            }
            fan_in = layer.shape.output_dim;
        }
        for head in &self.heads {
            let s = head.layer.shape;
            if s.input_dim != fan_in || s.output_dim != 1 || s.activation != Activation::Identity {
                return Err(Error::invalid(format!("head `{}` has bad shape", head.name)));
            }
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        let dense_ok = self
            .hidden
            .iter()
            .chain(self.heads.iter().map(|h| &h.layer))
            .all(|l| finite(&l.weights) && finite(&l.bias));
        if !dense_ok || !self.embeddings.iter().all(|t| finite(&t.values)) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            dense_dim: self.dense_dim,
            embeddings: self.embeddings.iter().map(|t| t.cast()).collect(),
            hidden: self.hidden.iter().map(|l| l.cast()).collect(),
            heads: self
                .heads
                .iter()
                .map(|h| Head {
                    name: h.name.clone(),
                    layer: h.layer.cast(),
                })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        let dense: usize = self
            .hidden
            .iter()
            .chain(self.heads.iter().map(|h| &h.layer))
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        dense + self.embeddings.iter().map(|t| t.values.len()).sum::<usize>()
    }
}

/// Dot product with four interleaved accumulators (fixed summation order,
/// so results are reproducible, but wide enough to vectorize).
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn seed_for(seed: u64, tag: u64) -> u64 {
    use rand::RngCore;
    substream(seed, tag).next_u64()
}
