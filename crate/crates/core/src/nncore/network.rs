use std::collections::BTreeMap;

use super::{Dense, ModelParams};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Source of one embedding slot of the input vector.
#[derive(Clone, Copy, Debug)]
pub enum Slot<'a, T> {
    /// Look up a row of the table.
    Row(usize),
    /// Use these values in place of a table row (same width as the table).
    Inline(&'a [T]),
}

/// Per-layer values retained by the forward pass for backprop.
#[derive(Clone, Debug, Default)]
pub struct Activations<T> {
    pub input: Vec<T>,
    /// Hidden pre-activations.
    pub pre: Vec<Vec<T>>,
    /// Hidden outputs after ReLU (and dropout, when training).
    pub post: Vec<Vec<T>>,
    /// Dropout masks per hidden layer; empty at inference.
    pub masks: Vec<Vec<T>>,
}

impl<T: Real> Activations<T> {
    /// Input of the heads: the last hidden output, or the raw input for a
    /// purely linear model.
    pub fn last(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseGrad<T> {
    pub fn zeros_like(layer: &Dense<T>) -> Self {
        Self {
            weights: vec![T::zero(); layer.weights.len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }
}

/// Sparse embedding gradient: row index -> gradient of that row.
pub type SparseRows<T> = BTreeMap<usize, Vec<T>>;

/// Gradients shaped like [`ModelParams`]. Embedding gradients are sparse.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub hidden: Vec<DenseGrad<T>>,
    pub heads: Vec<DenseGrad<T>>,
    pub embeddings: Vec<SparseRows<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        Self {
            hidden: params.hidden.iter().map(DenseGrad::zeros_like).collect(),
            heads: params.heads.iter().map(|h| DenseGrad::zeros_like(&h.layer)).collect(),
            embeddings: vec![BTreeMap::new(); params.embeddings.len()],
        }
    }

    pub fn clear(&mut self) {
        for g in self.hidden.iter_mut().chain(self.heads.iter_mut()) {
            g.weights.iter_mut().for_each(|v| *v = T::zero());
            g.bias.iter_mut().for_each(|v| *v = T::zero());
        }
        self.embeddings.iter_mut().for_each(BTreeMap::clear);
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.hidden.iter_mut().chain(self.heads.iter_mut()) {
            g.weights.iter_mut().for_each(|v| *v *= factor);
            g.bias.iter_mut().for_each(|v| *v *= factor);
        }
        for rows in &mut self.embeddings {
            rows.values_mut().flat_map(|r| r.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        let dense = self
            .hidden
            .iter()
            .chain(self.heads.iter())
            .all(|g| g.weights.iter().chain(&g.bias).all(|v| v.is_finite()));
        dense
            && self
                .embeddings
                .iter()
                .all(|rows| rows.values().flatten().all(|v| v.is_finite()))
    }

    /// Adds the embedding part of an input gradient to the rows it was
    /// gathered from. Inline slots and non-trainable tables get nothing.
    pub fn scatter_input(&mut self, params: &ModelParams<T>, slots: &[Slot<'_, T>], input_grad: &[T]) {
        let mut offset = params.dense_dim;
        for ((table, slot), rows) in params.embeddings.iter().zip(slots).zip(&mut self.embeddings) {
            let g = &input_grad[offset..offset + table.dim];
            offset += table.dim;
            if let (Slot::Row(r), true) = (slot, table.trainable) {
                let acc = rows.entry(*r).or_insert_with(|| vec![T::zero(); table.dim]);
                acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        }
    }
}

impl<T: Real> ModelParams<T> {
    /// Builds the first-layer input: `dense` followed by one row (or inline
    /// override) per embedding table, in table order.
    pub fn gather(&self, dense: &[T], slots: &[Slot<'_, T>], out: &mut Vec<T>) -> Result<()> {
        if dense.len() != self.dense_dim {
            return Err(Error::invalid(format!(
                "dense input has {} values, model expects {}",
                dense.len(),
                self.dense_dim
            )));
        }
        if slots.len() != self.embeddings.len() {
            return Err(Error::invalid(format!(
                "{} embedding slots given, model has {} tables",
                slots.len(),
                self.embeddings.len()
            )));
        }
        out.clear();
        out.extend_from_slice(dense);
        for (table, slot) in self.embeddings.iter().zip(slots) {
            match *slot {
                Slot::Row(r) if r < table.bucket_count => out.extend_from_slice(table.row(r)),
                Slot::Row(r) => {
                    return Err(Error::invalid(format!(
                        "row {r} out of range for table `{}` ({} buckets)",
                        table.name, table.bucket_count
                    )))
                }
                Slot::Inline(v) if v.len() == table.dim => out.extend_from_slice(v),
                Slot::Inline(v) => {
                    return Err(Error::invalid(format!(
                        "inline slot for `{}` has {} values, expected {}",
                        table.name,
                        v.len(),
                        table.dim
                    )))
                }
            }
        }
        Ok(())
    }

    /// Runs the shared hidden stack. `masks`, when given, holds one dropout
    /// mask per hidden layer (training only).
    pub fn forward_hidden(&self, input: &[T], masks: Option<&[Vec<T>]>, acts: &mut Activations<T>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if let Some(i) = input.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite input at index {i}")));
        }
        acts.input.clear();
        acts.input.extend_from_slice(input);
        acts.pre.resize_with(self.hidden.len(), Vec::new);
        acts.post.resize_with(self.hidden.len(), Vec::new);
        acts.masks.clear();
        if let Some(m) = masks {
            if m.len() != self.hidden.len() || m.iter().zip(&self.hidden).any(|(m, l)| m.len() != l.shape.output_dim) {
                return Err(Error::invalid("dropout masks do not match hidden layers"));
            }
            acts.masks.extend(m.iter().cloned());
        }
        for (i, layer) in self.hidden.iter().enumerate() {
            let (before, rest) = acts.post.split_at_mut(i);
            let x = before.last().map(Vec::as_slice).unwrap_or(&acts.input);
            layer.affine(x, &mut acts.pre[i]);
            let post = &mut rest[0];
            post.clear();
            post.extend(acts.pre[i].iter().map(|&v| if v > T::zero() { v } else { T::zero() }));
            if let Some(mask) = acts.masks.get(i) {
                post.iter_mut().zip(mask).for_each(|(p, &m)| *p *= m);
            }
        }
        Ok(())
    }

    /// Raw logit of `head` given a completed hidden pass.
    pub fn head_logit(&self, head: usize, acts: &Activations<T>) -> T {
        let layer = &self.heads[head].layer;
        layer.bias[0] + super::dot(&layer.weights, acts.last())
    }

    /// Inference forward pass for one head.
    pub fn forward(&self, input: &[T], head: &str) -> Result<(T, Activations<T>)> {
        let h = self.head_index(head)?;
        let mut acts = Activations::default();
        self.forward_hidden(input, None, &mut acts)?;
        Ok((self.head_logit(h, &acts), acts))
    }

    /// Accumulates `d loss / d params` into `grads` for the given per-head
    /// logit gradients and returns `d loss / d input`.
    pub fn backward(&self, acts: &Activations<T>, dlogits: &[(usize, T)], grads: &mut Gradients<T>) -> Result<Vec<T>> {
        if acts.input.len() != self.input_dim() || acts.post.len() != self.hidden.len() {
            return Err(Error::invalid("activations do not match model shape"));
        }
        if grads.hidden.len() != self.hidden.len() || grads.heads.len() != self.heads.len() {
            return Err(Error::invalid("gradient buffer does not match model shape"));
        }
        let last = acts.last();
        let mut g_out = vec![T::zero(); last.len()];
        for &(h, d) in dlogits {
            let head = self
                .heads
                .get(h)
                .ok_or_else(|| Error::invalid(format!("head index {h} out of range")))?;
            if d == T::zero() {
                continue;
            }
            let gh = &mut grads.heads[h];
            for ((gw, &x), (&w, go)) in gh
                .weights
                .iter_mut()
                .zip(last)
                .zip(head.layer.weights.iter().zip(&mut g_out))
            {
                *gw += d * x;
                *go += d * w;
            }
            gh.bias[0] += d;
        }
        for i in (0..self.hidden.len()).rev() {
            let layer = &self.hidden[i];
            let x = if i == 0 { &acts.input } else { &acts.post[i - 1] };
            // d post / d pre: ReLU derivative (exactly 0 for pre <= 0) times mask.
            for (o, g) in g_out.iter_mut().enumerate() {
                if acts.pre[i][o] <= T::zero() {
                    *g = T::zero();
                } else if let Some(mask) = acts.masks.get(i) {
                    *g *= mask[o];
                }
            }
            let gl = &mut grads.hidden[i];
            let n = layer.shape.input_dim;
            let mut g_in = vec![T::zero(); n];
            for (o, &g) in g_out.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                gl.bias[o] += g;
                let gw = &mut gl.weights[o * n..(o + 1) * n];
                for (((gw, &xv), &w), gi) in gw.iter_mut().zip(x).zip(layer.row(o)).zip(&mut g_in) {
                    *gw += g * xv;
                    *gi += g * w;
                }
            }
            g_out = g_in;
        }
        Ok(g_out)
    }
}
