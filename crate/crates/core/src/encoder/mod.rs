//! The shared text encoder: hashed tokens → embedding lookup → mean pooling
//! → linear projection → L2 normalization.
//!
//! Every point, label and anchor is embedded by the same parameters, so the
//! cosine between two items is a plain dot product of encoder outputs.
//!
//! The backward pass is written out by hand. With pooled vector `h`,
//! projection `P` (H×D), `v = Pᵀh` and `u = v/‖v‖`, an upstream gradient `g`
//! on `u` becomes `(I − uuᵀ)g/‖v‖` on `v`, then `h ⊗ g_v` on `P` and
//! `P g_v / n` on each of the `n` token rows.

mod checkpoint;
mod tokenizer;

use std::collections::BTreeMap;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use tokenizer::{tokenize, TokenUnit, TokenizerConfig};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pre-normalization norms below this fall back to the first basis vector.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Trainable encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// V × H token embedding table.
    pub embed: Array2<f64>,
    /// H × D output projection.
    pub proj: Array2<f64>,
}

impl EncoderParams {
    pub fn new(embed: Array2<f64>, proj: Array2<f64>) -> Result<Self> {
        if embed.ncols() != proj.nrows() {
            return Err(Error::DimensionMismatch {
                context: "embedding width vs projection rows",
                expected: embed.ncols(),
                actual: proj.nrows(),
            });
        }
        if proj.ncols() < 2 {
            return Err(Error::Validation("output dimension must be at least 2".into()));
        }
        if embed.iter().chain(proj.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "encoder parameters".into(),
            });
        }
        Ok(Self { embed, proj })
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.proj.ncols()
    }

    pub fn num_parameters(&self) -> usize {
        self.embed.len() + self.proj.len()
    }
}

/// Draws every entry uniformly from `[-1/√H, 1/√H]`.
pub fn init_params(vocab: usize, hidden: usize, dim: usize, seed: u64) -> Result<EncoderParams> {
    if vocab == 0 || hidden == 0 {
        return Err(Error::Validation("vocabulary and hidden sizes must be positive".into()));
    }
    let bound = 1.0 / (hidden as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed = Array2::from_shape_simple_fn((vocab, hidden), || rng.random_range(-bound..=bound));
    let proj = Array2::from_shape_simple_fn((hidden, dim), || rng.random_range(-bound..=bound));
    EncoderParams::new(embed, proj)
}

/// Intermediate values of a forward pass, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pooled: Array1<f64>,
    pub output: Array1<f64>,
    /// ‖v‖ before normalization; zero when the fallback was taken.
    pub norm: f64,
}

impl ForwardCache {
    pub fn is_degenerate(&self) -> bool {
        self.norm < DEGENERATE_NORM
    }
}

fn check_tokens(tokens: &[u32], params: &EncoderParams) -> Result<()> {
    let v = params.vocab_size();
    match tokens.iter().find(|&&t| t as usize >= v) {
        Some(&t) => Err(Error::OutOfRange {
            what: "token id",
            index: t as usize,
            bound: v,
        }),
        None => Ok(()),
    }
}

fn basis(dim: usize) -> Array1<f64> {
    let mut e = Array1::zeros(dim);
    e[0] = 1.0;
    e
}

pub fn encode_forward(tokens: &[u32], params: &EncoderParams) -> Result<ForwardCache> {
    check_tokens(tokens, params)?;
    let h = params.hidden_dim();
    let d = params.output_dim();
    if tokens.is_empty() {
        return Ok(ForwardCache {
            pooled: Array1::zeros(h),
            output: basis(d),
            norm: 0.0,
        });
    }
    let mut pooled = Array1::<f64>::zeros(h);
    for &t in tokens {
        pooled += &params.embed.row(t as usize);
    }
    pooled /= tokens.len() as f64;
    let v = params.proj.t().dot(&pooled);
    let norm = v.dot(&v).sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            context: "encoder output".into(),
        });
    }
    if norm < DEGENERATE_NORM {
        return Ok(ForwardCache {
            pooled,
            output: basis(d),
            norm: 0.0,
        });
    }
    Ok(ForwardCache {
        pooled,
        output: v / norm,
        norm,
    })
}

/// Unit-norm embedding of a token sequence.
pub fn encode(tokens: &[u32], params: &EncoderParams) -> Result<Array1<f64>> {
    Ok(encode_forward(tokens, params)?.output)
}

/// Encodes many token sequences into the rows of an n × D matrix.
pub fn encode_all(items: &[Vec<u32>], params: &EncoderParams) -> Result<Array2<f64>> {
    use rayon::prelude::*;
    let rows: Vec<Array1<f64>> = items
        .par_iter()
        .map(|t| encode(t, params))
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((items.len(), params.output_dim()));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
    Ok(out)
}

/// Parameter gradients: touched embedding rows plus the dense projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embed_rows: BTreeMap<usize, Array1<f64>>,
    pub proj: Array2<f64>,
}

impl Gradients {
    pub fn zeros(hidden: usize, dim: usize) -> Self {
        Self {
            embed_rows: BTreeMap::new(),
            proj: Array2::zeros((hidden, dim)),
        }
    }

    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self::zeros(params.hidden_dim(), params.output_dim())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.proj.scaled_add(scale, &other.proj);
        for (&r, g) in &other.embed_rows {
            self.embed_rows
                .entry(r)
                .or_insert_with(|| Array1::zeros(g.len()))
                .scaled_add(scale, g);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.proj *= s;
        for g in self.embed_rows.values_mut() {
            *g *= s;
        }
    }

    /// Gradient entry for a flat parameter index (embedding table first,
    /// row-major, then the projection).
    pub fn flat(&self, index: usize, params: &EncoderParams) -> f64 {
        let h = params.hidden_dim();
        let n_embed = params.embed.len();
        if index < n_embed {
            self.embed_rows
                .get(&(index / h))
                .map_or(0.0, |row| row[index % h])
        } else {
            let k = index - n_embed;
            self.proj[(k / params.output_dim(), k % params.output_dim())]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.proj.iter().all(|x| x.is_finite())
            && self.embed_rows.values().all(|r| r.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.proj
            .iter()
            .chain(self.embed_rows.values().flat_map(|r| r.iter()))
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Mutable access to a flat parameter index, in the layout of
/// [`Gradients::flat`].
pub fn flat_param_mut(params: &mut EncoderParams, index: usize) -> &mut f64 {
    let h = params.hidden_dim();
    let d = params.output_dim();
    let n_embed = params.embed.len();
    if index < n_embed {
        &mut params.embed[(index / h, index % h)]
    } else {
        let k = index - n_embed;
        &mut params.proj[(k / d, k % d)]
    }
}

/// Gradient of the pre-normalization vector given an upstream gradient on
/// the unit output.
pub fn normalize_backward(cache: &ForwardCache, upstream: ArrayView1<f64>) -> Array1<f64> {
    let u = &cache.output;
    let along = u.dot(&upstream);
    (&upstream - &(u * along)) / cache.norm
}

/// Accumulates `scale ·` the parameter gradient of `upstream · encode(tokens)`
/// into `grads`, reusing a forward cache.
pub fn accumulate_backward(
    tokens: &[u32],
    params: &EncoderParams,
    cache: &ForwardCache,
    upstream: ArrayView1<f64>,
    grads: &mut Gradients,
) {
    if tokens.is_empty() || cache.is_degenerate() {
        return;
    }
    let gv = normalize_backward(cache, upstream);
    // d/dP = h ⊗ g_v
    for (hi, mut prow) in cache.pooled.iter().zip(grads.proj.rows_mut()) {
        if *hi != 0.0 {
            prow.scaled_add(*hi, &gv);
        }
    }
    let gh = params.proj.dot(&gv) / tokens.len() as f64;
    for &t in tokens {
        grads
            .embed_rows
            .entry(t as usize)
            .or_insert_with(|| Array1::zeros(params.hidden_dim()))
            .scaled_add(1.0, &gh);
    }
}

/// Parameter gradient of `upstream · encode(tokens)`.
pub fn encode_backward(
    tokens: &[u32],
    params: &EncoderParams,
    upstream: ArrayView1<f64>,
) -> Result<Gradients> {
    if upstream.len() != params.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "upstream gradient",
            expected: params.output_dim(),
            actual: upstream.len(),
        });
    }
    let cache = encode_forward(tokens, params)?;
    let mut grads = Gradients::zeros_like(params);
    accumulate_backward(tokens, params, &cache, upstream, &mut grads);
    Ok(grads)
}
