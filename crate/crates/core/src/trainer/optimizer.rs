use ndarray::{Array1, Array2, Zip};

use super::config::OptimizerKind;
use crate::encoder::{EncoderParams, Gradients};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state. Adam moments for embedding rows are allocated on first
/// touch and only rows present in a gradient are updated.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    m_embed: Vec<Option<(Array1<f64>, Array1<f64>)>>,
    m_proj: Array2<f64>,
    v_proj: Array2<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &EncoderParams) -> Self {
        let shape = (params.hidden_dim(), params.output_dim());
        let adam = kind == OptimizerKind::Adam;
        Self {
            kind,
            step: 0,
            m_embed: vec![None; if adam { params.vocab_size() } else { 0 }],
            m_proj: Array2::zeros(if adam { shape } else { (0, 0) }),
            v_proj: Array2::zeros(if adam { shape } else { (0, 0) }),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr`.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &Gradients, lr: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite { context: "gradient".into() });
        }
        if grads.proj.dim() != params.proj.dim() {
            return Err(Error::DimensionMismatch {
                context: "projection gradient rows",
                expected: params.proj.nrows(),
                actual: grads.proj.nrows(),
            });
        }
        if let Some((&r, _)) = grads.embed_rows.iter().find(|(&r, _)| r >= params.vocab_size()) {
            return Err(Error::OutOfRange { what: "embedding gradient row", index: r, bound: params.vocab_size() });
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                params.proj.scaled_add(-lr, &grads.proj);
                for (&r, g) in &grads.embed_rows {
                    params.embed.row_mut(r).scaled_add(-lr, g);
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as f64;
                let c1 = 1.0 - BETA1.powf(t);
                let c2 = 1.0 - BETA2.powf(t);
                let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                };
                Zip::from(&mut params.proj)
                    .and(&mut self.m_proj)
                    .and(&mut self.v_proj)
                    .and(&grads.proj)
                    .for_each(|p, m, v, &g| update(p, m, v, g));
                for (&r, g) in &grads.embed_rows {
                    let h = g.len();
                    let (m, v) = self.m_embed[r].get_or_insert_with(|| (Array1::zeros(h), Array1::zeros(h)));
                    Zip::from(params.embed.row_mut(r))
                        .and(m)
                        .and(v)
                        .and(g)
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                }
            }
        }
        Ok(())
    }
}
