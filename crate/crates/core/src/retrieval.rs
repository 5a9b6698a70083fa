//! Exact top-k retrieval by cosine similarity over encoded labels.
//!
//! Only texts and encoder parameters are consulted here; anchor graphs play
//! no part at inference time.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::TextRecord;
use crate::encoder::{encode, encode_all, tokenize, EncoderParams, TokenizerConfig};
use crate::error::{Error, Result};
use crate::sparse::format_real_rows;

/// Encoded labels, one unit row per label id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelIndex {
    label_emb: Array2<f64>,
}

impl LabelIndex {
    pub fn len(&self) -> usize {
        self.label_emb.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.label_emb
    }

    /// Wraps precomputed unit rows.
    pub fn from_embeddings(label_emb: Array2<f64>) -> Result<Self> {
        for (r, row) in label_emb.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("label row {r} has norm {n}")));
            }
        }
        Ok(Self { label_emb })
    }
}

/// `(label id, score)` pairs by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub items: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|&(l, _)| l)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn build_index(labels: &[TextRecord], params: &EncoderParams, tokenizer: &TokenizerConfig) -> Result<LabelIndex> {
    let tokens: Vec<Vec<u32>> = labels.iter().map(|l| tokenize(&l.text, tokenizer)).collect();
    Ok(LabelIndex { label_emb: encode_all(&tokens, params)? })
}

/// The `k` best labels for a query embedding by full scan.
pub fn top_k_embedding(query: ndarray::ArrayView1<f64>, index: &LabelIndex, k: usize) -> RankedList {
    let k = k.min(index.len());
    if k == 0 {
        return RankedList::default();
    }
    let mut scored: Vec<(usize, f64)> = index
        .label_emb
        .rows()
        .into_iter()
        .enumerate()
        .map(|(l, row)| (l, row.dot(&query)))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    RankedList { items: scored }
}

pub fn top_k(
    query: &str,
    index: &LabelIndex,
    params: &EncoderParams,
    tokenizer: &TokenizerConfig,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let e = encode(&tokenize(query, tokenizer), params)?;
    Ok(top_k_embedding(e.view(), index, k))
}

/// [`top_k`] for many queries, in parallel and in input order.
pub fn batch_top_k(
    queries: &[&str],
    index: &LabelIndex,
    params: &EncoderParams,
    tokenizer: &TokenizerConfig,
    k: usize,
) -> Result<Vec<RankedList>> {
    queries
        .par_iter()
        .map(|q| top_k(q, index, params, tokenizer, k))
        .collect()
}

/// Predictions in the sparse-matrix text format with real scores.
pub fn format_predictions(num_labels: usize, lists: &[RankedList]) -> String {
    let rows: Vec<Vec<(usize, f64)>> = lists.iter().map(|l| l.items.clone()).collect();
    format_real_rows(num_labels, &rows)
}

/// One line per query: `label:score` pairs, for human inspection.
pub fn format_ranked(lists: &[RankedList]) -> String {
    let mut s = String::new();
    for list in lists {
        let parts: Vec<String> = list.items.iter().map(|(l, v)| format!("{l}:{v:.4}")).collect();
        let _ = writeln!(s, "{}", parts.join(" "));
    }
    s
}
