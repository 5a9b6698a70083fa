//! Triplet objective with anchor-graph regularizers.
//!
//! For a batch, the task loss sums `[s(q,k) − s(q,l) + γ]₊` over each query
//! `q`, each sampled positive label `l` and each hard negative label `k`
//! mined from the labels present in the batch. Every anchor set `t` adds two
//! regularizers of the same shape: queries against their linked anchors
//! (`R_x`) and labels against their linked anchors (`R_z`), with negatives
//! mined from the anchors present in the batch. The total is
//! `L + Σ_t (λx_t R_x^t + λz_t R_z^t)`.
//!
//! Scores are cosines of encoder outputs. Losses are summed, not averaged.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::encoder::{accumulate_backward, encode_forward, EncoderParams, ForwardCache, Gradients};
use crate::error::{Error, Result};
use crate::sparse::SparseBinaryMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Triplet margin γ.
    pub margin: f64,
    /// Default weight of every query-side regularizer.
    pub lambda_x: f64,
    /// Default weight of every label-side regularizer.
    pub lambda_z: f64,
    /// Per anchor-set overrides of `lambda_x`, keyed by set name.
    pub lambda_x_overrides: BTreeMap<String, f64>,
    pub lambda_z_overrides: BTreeMap<String, f64>,
    /// Positive labels sampled per query per batch.
    pub num_positives: usize,
    /// Hard negatives mined per item.
    pub num_hard_negatives: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.3,
            lambda_x: 1.0,
            lambda_z: 1.0,
            lambda_x_overrides: BTreeMap::new(),
            lambda_z_overrides: BTreeMap::new(),
            num_positives: 2,
            num_hard_negatives: 12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::config("margin", "must be non-negative"));
        }
        let lambdas = [("lambda_x", self.lambda_x), ("lambda_z", self.lambda_z)]
            .into_iter()
            .chain(self.lambda_x_overrides.values().map(|&v| ("lambda_x", v)))
            .chain(self.lambda_z_overrides.values().map(|&v| ("lambda_z", v)));
        for (key, v) in lambdas {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, "must be a finite non-negative number"));
            }
        }
        if self.num_positives == 0 {
            return Err(Error::config("num_positives", "must be at least 1"));
        }
        if self.num_hard_negatives == 0 {
            return Err(Error::config("num_hard_negatives", "must be at least 1"));
        }
        Ok(())
    }

    pub fn lambda_x_for(&self, set: &str) -> f64 {
        self.lambda_x_overrides.get(set).copied().unwrap_or(self.lambda_x)
    }

    pub fn lambda_z_for(&self, set: &str) -> f64 {
        self.lambda_z_overrides.get(set).copied().unwrap_or(self.lambda_z)
    }
}

/// `max(0, s_neg − s_pos + γ)`.
pub fn triplet_hinge(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (s_neg - s_pos + margin).max(0.0)
}

/// Orders scored candidates by descending score, then ascending id, and
/// returns the first `count` ids that are not forbidden.
pub fn rank_hard_negatives(
    scored: &[(usize, f64)],
    forbidden: impl Fn(usize) -> bool,
    count: usize,
) -> Vec<usize> {
    let mut allowed: Vec<(usize, f64)> = scored.iter().copied().filter(|&(id, _)| !forbidden(id)).collect();
    allowed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    allowed.into_iter().take(count).map(|(id, _)| id).collect()
}

/// Highest-cosine candidates for `query`, excluding `forbidden`.
pub fn select_hard_negatives(
    query: ArrayView1<f64>,
    candidates: &[(usize, ArrayView1<f64>)],
    forbidden: &BTreeSet<usize>,
    count: usize,
) -> Vec<usize> {
    let scored: Vec<(usize, f64)> = candidates.iter().map(|(id, e)| (*id, query.dot(e))).collect();
    rank_hard_negatives(&scored, |id| forbidden.contains(&id), count)
}

/// One training mini-batch.
///
/// Anchor slots are `None` when the item has no edge in that anchor set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    pub queries: Vec<usize>,
    /// Sampled positive labels, parallel to `queries`.
    pub positives: Vec<Vec<usize>>,
    /// `[query][anchor set]` sampled positive anchor.
    pub query_anchors: Vec<Vec<Option<usize>>>,
    /// Distinct labels present in the batch, ascending.
    pub labels: Vec<usize>,
    /// `[label][anchor set]` sampled positive anchor, parallel to `labels`.
    pub label_anchors: Vec<Vec<Option<usize>>>,
}

impl Batch {
    pub fn num_anchor_sets(&self) -> usize {
        self.query_anchors
            .first()
            .or(self.label_anchors.first())
            .map_or(0, Vec::len)
    }

    /// Anchors of set `t` present anywhere in the batch, ascending.
    pub fn anchors_in_set(&self, t: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .query_anchors
            .iter()
            .chain(&self.label_anchors)
            .filter_map(|slots| slots.get(t).copied().flatten())
            .collect();
        set.into_iter().collect()
    }
}

/// Token sequences and reference graphs of one anchor set.
#[derive(Debug, Clone, Copy)]
pub struct AnchorSetInputs<'a> {
    pub name: &'a str,
    pub anchor_tokens: &'a [Vec<u32>],
    /// Point edges that never serve as negatives.
    pub point_reference: &'a SparseBinaryMatrix,
    /// Label edges that never serve as negatives.
    pub label_reference: &'a SparseBinaryMatrix,
}

/// Everything besides the batch and parameters the objective reads.
#[derive(Debug, Clone)]
pub struct ObjectiveInputs<'a> {
    pub point_tokens: &'a [Vec<u32>],
    pub label_tokens: &'a [Vec<u32>],
    /// Labels that are never negatives for a query.
    pub ground_truth: &'a SparseBinaryMatrix,
    pub anchor_sets: Vec<AnchorSetInputs<'a>>,
}

/// Which side of an anchor set a regularizer acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Label,
}

/// Loss components of one evaluation. Regularizer values are unweighted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectiveValue {
    pub total: f64,
    pub task: f64,
    pub reg_x: Vec<f64>,
    pub reg_z: Vec<f64>,
}

impl ObjectiveValue {
    pub fn reg_x_sum(&self) -> f64 {
        self.reg_x.iter().sum()
    }

    pub fn reg_z_sum(&self) -> f64 {
        self.reg_z.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Point(usize),
    Label(usize),
    Anchor(usize, usize),
}

/// Gradient weights per component.
struct Weights {
    task: f64,
    reg_x: Vec<f64>,
    reg_z: Vec<f64>,
}

/// Active triplet `(anchor item, positive item, negative item)` in
/// batch-local item indices.
type Triplet = (usize, usize, usize);

struct Scored {
    loss: f64,
    active: Vec<Triplet>,
}

struct Evaluation {
    items: Vec<Item>,
    caches: Vec<ForwardCache>,
    task: Scored,
    reg_x: Vec<Scored>,
    reg_z: Vec<Scored>,
}

fn item_tokens<'a>(item: Item, inputs: &'a ObjectiveInputs<'_>) -> &'a [u32] {
    match item {
        Item::Point(i) => &inputs.point_tokens[i],
        Item::Label(l) => &inputs.label_tokens[l],
        Item::Anchor(t, m) => &inputs.anchor_sets[t].anchor_tokens[m],
    }
}

fn check_batch(batch: &Batch, inputs: &ObjectiveInputs<'_>) -> Result<()> {
    let t = inputs.anchor_sets.len();
    let mismatch = |context: &'static str, expected: usize, actual: usize| {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    };
    if batch.positives.len() != batch.queries.len() {
        return mismatch("batch positives vs queries", batch.queries.len(), batch.positives.len());
    }
    if batch.query_anchors.len() != batch.queries.len() {
        return mismatch("batch query anchors vs queries", batch.queries.len(), batch.query_anchors.len());
    }
    if batch.label_anchors.len() != batch.labels.len() {
        return mismatch("batch label anchors vs labels", batch.labels.len(), batch.label_anchors.len());
    }
    for slots in batch.query_anchors.iter().chain(&batch.label_anchors) {
        if slots.len() != t {
            return mismatch("anchor slots vs anchor sets", t, slots.len());
        }
    }
    let np = inputs.point_tokens.len();
    let nl = inputs.label_tokens.len();
    for &q in &batch.queries {
        if q >= np {
            return Err(Error::OutOfRange { what: "batch query", index: q, bound: np });
        }
    }
    let label_set: BTreeSet<usize> = batch.labels.iter().copied().collect();
    for &l in batch.labels.iter().chain(batch.positives.iter().flatten()) {
        if l >= nl {
            return Err(Error::OutOfRange { what: "batch label", index: l, bound: nl });
        }
        if !label_set.contains(&l) {
            return Err(Error::Validation(format!("positive label {l} missing from batch labels")));
        }
    }
    for (s, set) in inputs.anchor_sets.iter().enumerate() {
        let m = set.anchor_tokens.len();
        for slots in batch.query_anchors.iter().chain(&batch.label_anchors) {
            if let Some(a) = slots[s] {
                if a >= m {
                    return Err(Error::OutOfRange { what: "batch anchor", index: a, bound: m });
                }
            }
        }
    }
    Ok(())
}

fn evaluate(batch: &Batch, params: &EncoderParams, cfg: &LossConfig, inputs: &ObjectiveInputs<'_>) -> Result<Evaluation> {
    check_batch(batch, inputs)?;
    let n_sets = inputs.anchor_sets.len();

    let mut keys: BTreeSet<Item> = BTreeSet::new();
    keys.extend(batch.queries.iter().map(|&q| Item::Point(q)));
    keys.extend(batch.labels.iter().map(|&l| Item::Label(l)));
    let set_anchors: Vec<Vec<usize>> = (0..n_sets).map(|t| batch.anchors_in_set(t)).collect();
    for (t, anchors) in set_anchors.iter().enumerate() {
        keys.extend(anchors.iter().map(|&m| Item::Anchor(t, m)));
    }
    let items: Vec<Item> = keys.into_iter().collect();
    let index: BTreeMap<Item, usize> = items.iter().enumerate().map(|(k, &it)| (it, k)).collect();

    let caches: Vec<ForwardCache> = items
        .par_iter()
        .map(|&it| encode_forward(item_tokens(it, inputs), params))
        .collect::<Result<_>>()?;
    let emb = |k: usize| caches[k].output.view();
    let gamma = cfg.margin;
    let count = cfg.num_hard_negatives;

    // Task loss: queries against in-batch labels.
    let label_items: Vec<(usize, usize)> = batch.labels.iter().map(|&l| (l, index[&Item::Label(l)])).collect();
    let per_query: Vec<Scored> = (0..batch.queries.len())
        .into_par_iter()
        .map(|j| {
            let q = batch.queries[j];
            let qk = index[&Item::Point(q)];
            let qe = emb(qk);
            let scored: Vec<(usize, f64)> = label_items.iter().map(|&(l, k)| (l, qe.dot(&emb(k)))).collect();
            let truth = inputs.ground_truth.row(q);
            let negs = rank_hard_negatives(&scored, |l| truth.binary_search(&l).is_ok(), count);
            let mut out = Scored { loss: 0.0, active: Vec::new() };
            for &p in &batch.positives[j] {
                let pk = index[&Item::Label(p)];
                let sp = qe.dot(&emb(pk));
                for &n in &negs {
                    let nk = index[&Item::Label(n)];
                    let h = triplet_hinge(sp, qe.dot(&emb(nk)), gamma);
                    if h > 0.0 {
                        out.loss += h;
                        out.active.push((qk, pk, nk));
                    }
                }
            }
            out
        })
        .collect();
    let task = merge(per_query);

    let mut reg_x = Vec::with_capacity(n_sets);
    let mut reg_z = Vec::with_capacity(n_sets);
    for (t, set) in inputs.anchor_sets.iter().enumerate() {
        let anchor_items: Vec<(usize, usize)> = set_anchors[t].iter().map(|&m| (m, index[&Item::Anchor(t, m)])).collect();
        let regularize = |item: usize, positive: Option<usize>, reference: &[usize]| -> Scored {
            let mut out = Scored { loss: 0.0, active: Vec::new() };
            let Some(p) = positive else { return out };
            let ie = emb(item);
            let pk = index[&Item::Anchor(t, p)];
            let sp = ie.dot(&emb(pk));
            let scored: Vec<(usize, f64)> = anchor_items.iter().map(|&(m, k)| (m, ie.dot(&emb(k)))).collect();
            let negs = rank_hard_negatives(&scored, |m| m == p || reference.binary_search(&m).is_ok(), count);
            for n in negs {
                let nk = index[&Item::Anchor(t, n)];
                let h = triplet_hinge(sp, ie.dot(&emb(nk)), gamma);
                if h > 0.0 {
                    out.loss += h;
                    out.active.push((item, pk, nk));
                }
            }
            out
        };
        let x: Vec<Scored> = (0..batch.queries.len())
            .into_par_iter()
            .map(|j| {
                let q = batch.queries[j];
                regularize(index[&Item::Point(q)], batch.query_anchors[j][t], set.point_reference.row(q))
            })
            .collect();
        let z: Vec<Scored> = (0..batch.labels.len())
            .into_par_iter()
            .map(|j| {
                let l = batch.labels[j];
                regularize(index[&Item::Label(l)], batch.label_anchors[j][t], set.label_reference.row(l))
            })
            .collect();
        reg_x.push(merge(x));
        reg_z.push(merge(z));
    }

    Ok(Evaluation { items, caches, task, reg_x, reg_z })
}

fn merge(parts: Vec<Scored>) -> Scored {
    let mut out = Scored { loss: 0.0, active: Vec::new() };
    for p in parts {
        out.loss += p.loss;
        out.active.extend(p.active);
    }
    out
}

fn backward(eval: &Evaluation, params: &EncoderParams, inputs: &ObjectiveInputs<'_>, weights: &Weights) -> Gradients {
    let d = params.output_dim();
    let mut upstream: Vec<Option<Array1<f64>>> = vec![None; eval.items.len()];
    let mut push = |scored: &Scored, w: f64| {
        if w == 0.0 {
            return;
        }
        for &(a, p, n) in &scored.active {
            let (ua, up, un) = (&eval.caches[a].output, &eval.caches[p].output, &eval.caches[n].output);
            let ga = upstream[a].get_or_insert_with(|| Array1::zeros(d));
            ga.scaled_add(w, un);
            ga.scaled_add(-w, up);
            upstream[n].get_or_insert_with(|| Array1::zeros(d)).scaled_add(w, ua);
            upstream[p].get_or_insert_with(|| Array1::zeros(d)).scaled_add(-w, ua);
        }
    };
    push(&eval.task, weights.task);
    for t in 0..eval.reg_x.len() {
        push(&eval.reg_x[t], weights.reg_x[t]);
        push(&eval.reg_z[t], weights.reg_z[t]);
    }
    let mut grads = Gradients::zeros_like(params);
    for (k, g) in upstream.iter().enumerate() {
        if let Some(g) = g {
            accumulate_backward(item_tokens(eval.items[k], inputs), params, &eval.caches[k], g.view(), &mut grads);
        }
    }
    grads
}

fn value_of(eval: &Evaluation, weights: &Weights) -> ObjectiveValue {
    let mut total = weights.task * eval.task.loss;
    for t in 0..eval.reg_x.len() {
        total += weights.reg_x[t] * eval.reg_x[t].loss + weights.reg_z[t] * eval.reg_z[t].loss;
    }
    ObjectiveValue {
        total,
        task: eval.task.loss,
        reg_x: eval.reg_x.iter().map(|s| s.loss).collect(),
        reg_z: eval.reg_z.iter().map(|s| s.loss).collect(),
    }
}

fn run(
    batch: &Batch,
    params: &EncoderParams,
    cfg: &LossConfig,
    inputs: &ObjectiveInputs<'_>,
    weights: Weights,
) -> Result<(ObjectiveValue, Gradients)> {
    let eval = evaluate(batch, params, cfg, inputs)?;
    let value = value_of(&eval, &weights);
    let grads = backward(&eval, params, inputs, &weights);
    Ok((value, grads))
}

/// Triplet loss over query/label pairs alone; `total` equals `task`.
pub fn task_loss(
    batch: &Batch,
    params: &EncoderParams,
    cfg: &LossConfig,
    inputs: &ObjectiveInputs<'_>,
) -> Result<(f64, Gradients)> {
    let t = inputs.anchor_sets.len();
    let (v, g) = run(batch, params, cfg, inputs, Weights { task: 1.0, reg_x: vec![0.0; t], reg_z: vec![0.0; t] })?;
    Ok((v.task, g))
}

/// One regularizer `R_x^t` (query side) or `R_z^t` (label side), unweighted.
pub fn regularizer_loss(
    batch: &Batch,
    params: &EncoderParams,
    cfg: &LossConfig,
    inputs: &ObjectiveInputs<'_>,
    side: Side,
    set: usize,
) -> Result<(f64, Gradients)> {
    let t = inputs.anchor_sets.len();
    if set >= t {
        return Err(Error::OutOfRange { what: "anchor set", index: set, bound: t });
    }
    let mut w = Weights { task: 0.0, reg_x: vec![0.0; t], reg_z: vec![0.0; t] };
    match side {
        Side::Query => w.reg_x[set] = 1.0,
        Side::Label => w.reg_z[set] = 1.0,
    }
    let (v, g) = run(batch, params, cfg, inputs, w)?;
    let loss = match side {
        Side::Query => v.reg_x[set],
        Side::Label => v.reg_z[set],
    };
    Ok((loss, g))
}

/// `L + Σ_t (λx_t R_x^t + λz_t R_z^t)` and its gradient.
pub fn total_objective(
    batch: &Batch,
    params: &EncoderParams,
    cfg: &LossConfig,
    inputs: &ObjectiveInputs<'_>,
) -> Result<(ObjectiveValue, Gradients)> {
    let weights = Weights {
        task: 1.0,
        reg_x: inputs.anchor_sets.iter().map(|s| cfg.lambda_x_for(s.name)).collect(),
        reg_z: inputs.anchor_sets.iter().map(|s| cfg.lambda_z_for(s.name)).collect(),
    };
    run(batch, params, cfg, inputs, weights)
}
