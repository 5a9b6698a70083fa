//! The training loop: graph densification, batch sampling, optimizer steps
//! and the warmup / prune / refine schedule.
//!
//! Epochs count from 1. Epochs `1..=warmup_epochs` train on the densified
//! but unpruned graphs. After epoch `warmup_epochs` and then after every
//! `refine_epochs_per_cycle` further epochs, every graph is re-pruned from
//! its densified reference with the current encoder. Each such boundary ends
//! a cycle: a checkpoint is emitted and training stops early once the
//! objective changed by less than `convergence_tol` (relative) since the
//! previous boundary.

mod config;
mod optimizer;
mod sampler;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{Ablation, EncoderConfig, OptimizerKind, RunConfig, TrainConfig};
pub use optimizer::Optimizer;
pub use sampler::{assemble_batch, build_clusters, sample_batch_clustered, sample_batch_uniform, SamplingContext};

use crate::corpus::{Corpus, TextRecord};
use crate::encoder::{encode_all, init_params, tokenize, EncoderParams, TokenizerConfig};
use crate::error::{Error, Result};
use crate::graph::{anchor_cooccurrence, label_propagate_augment, prune_edges, rwr_augment, AnchorGraph, WalkConfig};
use crate::objective::{total_objective, AnchorSetInputs, Batch, ObjectiveInputs};

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of batch objectives over the epoch.
    pub objective: f64,
    pub task_loss: f64,
    /// λ-weighted query-side regularizers summed over anchor sets.
    pub reg_x: f64,
    pub reg_z: f64,
    /// Edges removed by the prune that followed this epoch.
    pub edges_pruned: usize,
}

pub const HISTORY_HEADER: &str = "epoch,objective,task_loss,reg_x,reg_z,edges_pruned";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{}",
            r.epoch, r.objective, r.task_loss, r.reg_x, r.reg_z, r.edges_pruned
        );
    }
    s
}

/// State recorded at each cycle boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub epoch: usize,
    /// Objective of that epoch, as `f64` bits so the struct stays `Eq`.
    pub objective_bits: u64,
    pub config_hash: String,
    pub seed: u64,
    /// Word position of the batch-sampling stream.
    pub rng_word_pos: u128,
}

impl CheckpointMeta {
    pub fn objective(&self) -> f64 {
        f64::from_bits(self.objective_bits)
    }

    pub fn to_text(&self) -> String {
        format!(
            "epoch = {}\nobjective = {:?}\nconfig_hash = {}\nseed = {}\nrng_word_pos = {}\n",
            self.epoch,
            self.objective(),
            self.config_hash,
            self.seed,
            self.rng_word_pos
        )
    }
}

/// Hooks called while training runs. Returning an error aborts the run.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _meta: &CheckpointMeta, _params: &EncoderParams) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Densified point and label graph of one anchor set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub point: AnchorGraph,
    pub label: AnchorGraph,
}

impl GraphPair {
    pub fn num_edges(&self) -> usize {
        self.point.num_edges() + self.label.num_edges()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub history: Vec<EpochRecord>,
    pub checkpoints: Vec<CheckpointMeta>,
    /// Post-densification graphs that every prune starts from.
    pub reference_graphs: Vec<GraphPair>,
    /// Graphs in use when training ended.
    pub final_graphs: Vec<GraphPair>,
}

pub fn tokenize_all(records: &[TextRecord], cfg: &TokenizerConfig) -> Vec<Vec<u32>> {
    records.iter().map(|r| tokenize(&r.text, cfg)).collect()
}

/// Densifies every graph of `corpus` with random walks over the anchor
/// co-occurrence graph of its set.
pub fn densify_graphs(corpus: &Corpus, walk: &WalkConfig) -> Result<Vec<GraphPair>> {
    corpus
        .anchor_sets
        .iter()
        .enumerate()
        .map(|(t, set)| {
            let cooc = anchor_cooccurrence(&[&set.point_graph, &set.label_graph])?;
            let seeded = |k: u64| WalkConfig { seed: walk.seed.wrapping_add(2 * t as u64 + k), ..walk.clone() };
            Ok(GraphPair {
                point: rwr_augment(&set.point_graph, &cooc, &seeded(0))?,
                label: rwr_augment(&set.label_graph, &cooc, &seeded(1))?,
            })
        })
        .collect()
}

/// Token ids of one corpus under one tokenizer.
pub struct TokenizedCorpus {
    pub points: Vec<Vec<u32>>,
    pub labels: Vec<Vec<u32>>,
    pub anchors: Vec<Vec<Vec<u32>>>,
}

impl TokenizedCorpus {
    pub fn new(corpus: &Corpus, cfg: &TokenizerConfig) -> Self {
        Self {
            points: tokenize_all(&corpus.points, cfg),
            labels: tokenize_all(&corpus.labels, cfg),
            anchors: corpus.anchor_sets.iter().map(|s| tokenize_all(&s.anchors, cfg)).collect(),
        }
    }
}

/// Prunes every reference graph with the current encoder; returns the pruned
/// graphs and the number of edges removed.
pub fn prune_graphs(
    references: &[GraphPair],
    tokens: &TokenizedCorpus,
    params: &EncoderParams,
    threshold: f64,
) -> Result<(Vec<GraphPair>, usize)> {
    let points = encode_all(&tokens.points, params)?;
    let labels = encode_all(&tokens.labels, params)?;
    let mut removed = 0;
    let mut out = Vec::with_capacity(references.len());
    for (pair, anchor_tokens) in references.iter().zip(&tokens.anchors) {
        let anchors = encode_all(anchor_tokens, params)?;
        let pruned = GraphPair {
            point: prune_edges(&pair.point, &points, &anchors, threshold)?,
            label: prune_edges(&pair.label, &labels, &anchors, threshold)?,
        };
        removed += pair.num_edges() - pruned.num_edges();
        out.push(pruned);
    }
    Ok((out, removed))
}

/// Replaces the ground truth with its label propagation through every
/// anchor set (the AugGT baseline).
pub fn augment_ground_truth(corpus: &Corpus) -> Result<Corpus> {
    let mut out = corpus.clone();
    for set in &corpus.anchor_sets {
        let propagated = label_propagate_augment(&corpus.ground_truth, &set.point_graph, &set.label_graph)?;
        out.ground_truth = out.ground_truth.union(&propagated)?;
    }
    Ok(out)
}

fn is_cycle_end(epoch: usize, cfg: &TrainConfig) -> bool {
    epoch >= cfg.warmup_epochs.max(1) && (epoch - cfg.warmup_epochs) % cfg.refine_epochs_per_cycle == 0
}

fn describe_batch(batch: &Batch) -> String {
    format!(
        "queries {:?}; positives {:?}; labels {:?}; query anchors {:?}; label anchors {:?}",
        batch.queries, batch.positives, batch.labels, batch.query_anchors, batch.label_anchors
    )
}

/// Trains an encoder on `corpus`.
pub fn train(corpus: &Corpus, cfg: &RunConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutput> {
    cfg.validate()?;
    corpus.validate()?;
    let tc = &cfg.train;
    let tokens = TokenizedCorpus::new(corpus, &cfg.encoder.tokenizer);
    let eligible: Vec<usize> = (0..corpus.num_points())
        .filter(|&i| !corpus.ground_truth.row(i).is_empty())
        .collect();
    if eligible.is_empty() {
        return Err(Error::Validation("no training point has a positive label".into()));
    }

    let references = if tc.augment_graphs {
        densify_graphs(corpus, &cfg.walk)?
    } else {
        corpus
            .anchor_sets
            .iter()
            .map(|s| GraphPair { point: s.point_graph.clone(), label: s.label_graph.clone() })
            .collect()
    };
    let mut graphs = references.clone();

    let mut params = init_params(
        cfg.encoder.tokenizer.hash_buckets,
        cfg.encoder.hidden_dim,
        cfg.encoder.output_dim,
        tc.seed,
    )?;
    let mut optimizer = Optimizer::new(tc.optimizer, &params);
    let mut truth_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut anchor_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    anchor_rng.set_stream(1);
    let config_hash = cfg.hash();

    let mut history = Vec::new();
    let mut checkpoints: Vec<CheckpointMeta> = Vec::new();
    let mut clusters: Option<Vec<Vec<usize>>> = None;
    let steps = eligible.len().div_ceil(tc.batch_size);

    for epoch in 1..=tc.total_epochs {
        if let Some(c0) = tc.initial_cluster_size {
            if (epoch - 1) % tc.cluster_refresh_epochs == 0 {
                let doublings = ((epoch - 1) / tc.cluster_size_doubling_epochs).min(63) as u32;
                let size = c0.saturating_mul(1usize << doublings).min(tc.batch_size);
                let emb = encode_all(&tokens.points, &params)?;
                clusters = Some(build_clusters(&emb, &eligible, size, tc.seed.wrapping_add(epoch as u64)));
            }
        }

        let inputs = ObjectiveInputs {
            point_tokens: &tokens.points,
            label_tokens: &tokens.labels,
            ground_truth: &corpus.ground_truth,
            anchor_sets: corpus
                .anchor_sets
                .iter()
                .zip(&tokens.anchors)
                .zip(&references)
                .map(|((set, anchor_tokens), reference)| AnchorSetInputs {
                    name: &set.name,
                    anchor_tokens,
                    point_reference: reference.point.adjacency(),
                    label_reference: reference.label.adjacency(),
                })
                .collect(),
        };
        let ctx = SamplingContext {
            ground_truth: &corpus.ground_truth,
            point_graphs: graphs.iter().map(|g| &g.point).collect(),
            label_graphs: graphs.iter().map(|g| &g.label).collect(),
            num_positives: cfg.loss.num_positives,
        };
        let lx: Vec<f64> = corpus.anchor_sets.iter().map(|s| cfg.loss.lambda_x_for(&s.name)).collect();
        let lz: Vec<f64> = corpus.anchor_sets.iter().map(|s| cfg.loss.lambda_z_for(&s.name)).collect();

        let mut record = EpochRecord { epoch, objective: 0.0, task_loss: 0.0, reg_x: 0.0, reg_z: 0.0, edges_pruned: 0 };
        for step in 0..steps {
            let queries = match &clusters {
                Some(c) => sample_batch_clustered(c, tc.batch_size, &mut truth_rng),
                None => sample_batch_uniform(&eligible, tc.batch_size, &mut truth_rng),
            };
            let batch = assemble_batch(queries, &ctx, &mut truth_rng, &mut anchor_rng);
            let diagnose = |e: Error| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at epoch {epoch}, step {}; last batch: {}", step + 1, describe_batch(&batch)),
                },
                other => other,
            };
            let (value, grads) = total_objective(&batch, &params, &cfg.loss, &inputs).map_err(diagnose)?;
            if !value.total.is_finite() || !grads.is_finite() {
                return Err(diagnose(Error::NonFinite { context: format!("objective (value {})", value.total) }));
            }
            record.objective += value.total;
            record.task_loss += value.task;
            record.reg_x += value.reg_x.iter().zip(&lx).map(|(r, l)| r * l).sum::<f64>();
            record.reg_z += value.reg_z.iter().zip(&lz).map(|(r, l)| r * l).sum::<f64>();
            optimizer.step(&mut params, &grads, tc.learning_rate).map_err(diagnose)?;
        }
        drop(ctx);

        let cycle_end = is_cycle_end(epoch, tc);
        if cycle_end && tc.prune && epoch < tc.total_epochs {
            let (pruned, removed) = prune_graphs(&references, &tokens, &params, tc.prune_threshold)?;
            log::debug!("epoch {epoch}: pruned {removed} edges");
            graphs = pruned;
            record.edges_pruned = removed;
        }
        log::info!("epoch {epoch}: objective {:.6}", record.objective);
        observer.on_epoch(&record)?;
        history.push(record);

        if cycle_end || epoch == tc.total_epochs {
            let objective = history.last().expect("just pushed").objective;
            let meta = CheckpointMeta {
                epoch,
                objective_bits: objective.to_bits(),
                config_hash: config_hash.clone(),
                seed: tc.seed,
                rng_word_pos: truth_rng.get_word_pos(),
            };
            observer.on_checkpoint(&meta, &params)?;
            let converged = checkpoints.last().is_some_and(|prev| {
                let before = prev.objective();
                let change = (before - objective).abs();
                change == 0.0 || change / before.abs().max(f64::MIN_POSITIVE) < tc.convergence_tol
            });
            checkpoints.push(meta);
            if converged && cycle_end {
                log::info!("converged after epoch {epoch}");
                break;
            }
        }
    }

    Ok(TrainOutput {
        params,
        history,
        checkpoints,
        reference_graphs: references,
        final_graphs: graphs,
    })
}
