use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    LazyAdam,
}

#[derive(Clone, Debug, PartialEq)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Moments<T> {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }
}

/// First/second moment accumulators shaped like the model, plus the shared
/// step counter used for bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    step: u64,
    hidden: Vec<(Moments<T>, Moments<T>)>,
    heads: Vec<(Moments<T>, Moments<T>)>,
    embeddings: Vec<Moments<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>, config: AdamConfig) -> Self {
        let dense = |l: &super::Dense<T>| (Moments::zeros(l.weights.len()), Moments::zeros(l.bias.len()));
        Self {
            config,
            step: 0,
            hidden: params.hidden.iter().map(dense).collect(),
            heads: params.heads.iter().map(|h| dense(&h.layer)).collect(),
            embeddings: params
                .embeddings
                .iter()
                .map(|t| {
                    if t.trainable {
                        Moments::zeros(t.values.len())
                    } else {
                        Moments::zeros(0)
                    }
                })
                .collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// First and second moments of embedding table `table`.
    pub fn embedding_moments(&self, table: usize) -> (&[T], &[T]) {
        let m = &self.embeddings[table];
        (&m.m, &m.v)
    }

    fn check_shape(&self, params: &ModelParams<T>) -> Result<()> {
        let ok = self.hidden.len() == params.hidden.len()
            && self.heads.len() == params.heads.len()
            && self.embeddings.len() == params.embeddings.len()
            && self
                .hidden
                .iter()
                .zip(&params.hidden)
                .all(|(m, l)| m.0.m.len() == l.weights.len());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("optimizer state does not match model"))
        }
    }
}

struct StepCoeffs<T> {
    beta1: T,
    beta2: T,
    one_minus_beta1: T,
    one_minus_beta2: T,
    step_size: T,
    eps_hat: T,
    bc2_sqrt: T,
}

impl<T: Real> StepCoeffs<T> {
    fn new(c: &AdamConfig, t: u64) -> Self {
        let bc1 = 1.0 - c.beta1.powi(t as i32);
        let bc2 = 1.0 - c.beta2.powi(t as i32);
        Self {
            beta1: T::lit(c.beta1),
            beta2: T::lit(c.beta2),
            one_minus_beta1: T::lit(1.0 - c.beta1),
            one_minus_beta2: T::lit(1.0 - c.beta2),
            step_size: T::lit(c.learning_rate / bc1),
            eps_hat: T::lit(c.epsilon),
            bc2_sqrt: T::lit(bc2.sqrt()),
        }
    }

    /// p -= lr * m_hat / (sqrt(v_hat) + eps), with
    /// m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t).
    #[inline]
    fn apply(&self, p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]) {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = self.beta1 * *m + self.one_minus_beta1 * g;
            *v = self.beta2 * *v + self.one_minus_beta2 * g * g;
            *p -= self.step_size * *m / (v.sqrt() / self.bc2_sqrt + self.eps_hat);
        }
    }

    #[inline]
    fn apply_zero_grad(&self, p: &mut [T], m: &mut [T], v: &mut [T]) {
        for ((p, m), v) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = self.beta1 * *m;
            *v = self.beta2 * *v;
            *p -= self.step_size * *m / (v.sqrt() / self.bc2_sqrt + self.eps_hat);
        }
    }
}

fn dense_updates<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    c: &StepCoeffs<T>,
) {
    let layers = params
        .hidden
        .iter_mut()
        .chain(params.heads.iter_mut().map(|h| &mut h.layer));
    let moments = state.hidden.iter_mut().chain(state.heads.iter_mut());
    let gs = grads.hidden.iter().chain(grads.heads.iter());
    for ((layer, (mw, mb)), g) in layers.zip(moments).zip(gs) {
        c.apply(&mut layer.weights, &g.weights, &mut mw.m, &mut mw.v);
        c.apply(&mut layer.bias, &g.bias, &mut mb.m, &mut mb.v);
    }
}

fn validate<T: Real>(params: &ModelParams<T>, grads: &Gradients<T>, state: &OptimizerState<T>) -> Result<()> {
    state.check_shape(params)?;
    if grads.hidden.len() != params.hidden.len()
        || grads.heads.len() != params.heads.len()
        || grads.embeddings.len() != params.embeddings.len()
        || grads
            .hidden
            .iter()
            .chain(&grads.heads)
            .zip(params.hidden.iter().chain(params.heads.iter().map(|h| &h.layer)))
            .any(|(g, l)| g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len())
    {
        return Err(Error::invalid("gradients do not match model shape"));
    }
    for (rows, table) in grads.embeddings.iter().zip(&params.embeddings) {
        if let Some((&r, g)) = rows
            .iter()
            .find(|(&r, g)| r >= table.bucket_count || g.len() != table.dim)
        {
            return Err(Error::invalid(format!(
                "gradient row {r} (width {}) invalid for table `{}`",
                g.len(),
                table.name
            )));
        }
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient; step rejected".into()));
    }
    Ok(())
}

/// Dense Adam step. Embedding rows without a gradient entry are treated as
/// zero gradient, so every trainable row's moments decay.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    validate(params, grads, state)?;
    state.step += 1;
    let c = StepCoeffs::new(&state.config, state.step);
    dense_updates(params, grads, state, &c);
    for ((table, rows), mom) in params
        .embeddings
        .iter_mut()
        .zip(&grads.embeddings)
        .zip(&mut state.embeddings)
    {
        if !table.trainable {
            continue;
        }
        let dim = table.dim;
        for r in 0..table.bucket_count {
            let span = r * dim..(r + 1) * dim;
            match rows.get(&r) {
                Some(g) => c.apply(
                    &mut table.values[span.clone()],
                    g,
                    &mut mom.m[span.clone()],
                    &mut mom.v[span],
                ),
                None => c.apply_zero_grad(
                    &mut table.values[span.clone()],
                    &mut mom.m[span.clone()],
                    &mut mom.v[span],
                ),
            }
        }
    }
    Ok(())
}

/// LazyAdam: dense parameters update exactly as [`adam_step`]; for embedding
/// tables only `touched_rows` are updated, and untouched rows keep both their
/// values and their moments.
pub fn lazy_adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    touched_rows: &[BTreeSet<usize>],
) -> Result<()> {
    validate(params, grads, state)?;
    if touched_rows.len() != params.embeddings.len() {
        return Err(Error::invalid(format!(
            "touched_rows has {} entries, model has {} tables",
            touched_rows.len(),
            params.embeddings.len()
        )));
    }
    for (rows, table) in touched_rows.iter().zip(&params.embeddings) {
        if let Some(&r) = rows.iter().next_back().filter(|&&r| r >= table.bucket_count) {
            return Err(Error::invalid(format!(
                "touched row {r} out of range for table `{}`",
                table.name
            )));
        }
    }
    state.step += 1;
    let c = StepCoeffs::new(&state.config, state.step);
    dense_updates(params, grads, state, &c);
    for (((table, rows), mom), touched) in params
        .embeddings
        .iter_mut()
        .zip(&grads.embeddings)
        .zip(&mut state.embeddings)
        .zip(touched_rows)
    {
        if !table.trainable {
            continue;
        }
        let dim = table.dim;
        for &r in touched {
            let span = r * dim..(r + 1) * dim;
            match rows.get(&r) {
                Some(g) => c.apply(
                    &mut table.values[span.clone()],
                    g,
                    &mut mom.m[span.clone()],
                    &mut mom.v[span],
                ),
                None => c.apply_zero_grad(
                    &mut table.values[span.clone()],
                    &mut mom.m[span.clone()],
                    &mut mom.v[span],
                ),
            }
        }
    }
    Ok(())
}
