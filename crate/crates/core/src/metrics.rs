//! Ranking metrics: P@k, nDCG@k, propensity-scored PSP@k, frequency
//! buckets, and the impression-yield / click-through ratios.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::retrieval::RankedList;
use crate::sparse::SparseBinaryMatrix;

pub const DEFAULT_PROPENSITY_A: f64 = 0.55;
pub const DEFAULT_PROPENSITY_B: f64 = 1.5;

fn hit(truth: &[usize], l: usize) -> bool {
    truth.binary_search(&l).is_ok()
}

/// `|top-k ∩ truth| / k`. `truth` must be sorted.
pub fn precision_at_k(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    if k == 0 || truth.is_empty() {
        return 0.0;
    }
    pred.iter().take(k).filter(|&&l| hit(truth, l)).count() as f64 / k as f64
}

/// DCG@k over the ideal DCG of `min(k, |truth|)` leading hits.
pub fn ndcg_at_k(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    if k == 0 || truth.is_empty() {
        return 0.0;
    }
    let gain = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = pred
        .iter()
        .take(k)
        .enumerate()
        .filter(|&(_, &l)| hit(truth, l))
        .map(|(r, _)| gain(r))
        .sum();
    let ideal: f64 = (0..k.min(truth.len())).map(gain).sum();
    dcg / ideal
}

/// Propensity-scored precision normalized by the best ranking of the true
/// labels.
pub fn psp_at_k(pred: &[usize], truth: &[usize], propensities: &[f64], k: usize) -> Result<f64> {
    if k == 0 || truth.is_empty() {
        return Ok(0.0);
    }
    let inv = |l: usize| -> Result<f64> {
        propensities
            .get(l)
            .map(|p| 1.0 / p)
            .ok_or(Error::OutOfRange { what: "propensity table", index: l, bound: propensities.len() })
    };
    let mut achieved = 0.0;
    for &l in pred.iter().take(k) {
        let w = inv(l)?;
        if hit(truth, l) {
            achieved += w;
        }
    }
    let mut best: Vec<f64> = truth.iter().map(|&l| inv(l)).collect::<Result<_>>()?;
    best.sort_by(|a, b| b.total_cmp(a));
    let ideal: f64 = best.iter().take(k).sum();
    Ok(achieved / ideal)
}

/// Per-label propensities `p = 1 / (1 + C (n + B)^-A)` with
/// `C = (ln N - 1)(B + 1)^A`, from training label frequencies `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub propensities: Vec<f64>,
}

impl PropensityModel {
    pub fn propensity_for_count(&self, n: f64) -> f64 {
        1.0 / (1.0 + self.c * (-self.a * (n + self.b).ln()).exp())
    }
}

pub fn compute_propensities(ground_truth: &SparseBinaryMatrix, a: f64, b: f64) -> Result<PropensityModel> {
    let n = ground_truth.rows();
    if n < 2 {
        return Err(Error::Validation(format!("propensities need at least 2 points, found {n}")));
    }
    let c = ((n as f64).ln() - 1.0) * (b + 1.0).powf(a);
    let mut model = PropensityModel { a, b, c, propensities: Vec::new() };
    model.propensities = ground_truth
        .col_counts()
        .into_iter()
        .map(|count| model.propensity_for_count(count as f64))
        .collect();
    Ok(model)
}

/// Relevant impressions per query, in percent.
pub fn impression_yield(relevant_impressions: u64, total_queries: u64) -> Result<f64> {
    if total_queries == 0 {
        return Err(Error::Validation("impression yield needs at least one query".into()));
    }
    Ok(relevant_impressions as f64 / total_queries as f64 * 100.0)
}

/// Clicks per impression, in percent.
pub fn click_through_rate(clicks: u64, impressions: u64) -> Result<f64> {
    if impressions == 0 {
        return Err(Error::Validation("click-through rate needs at least one impression".into()));
    }
    Ok(clicks as f64 / impressions as f64 * 100.0)
}

/// Metric values of one query at every requested k.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub p: Vec<f64>,
    pub n: Vec<f64>,
    pub psp: Vec<f64>,
}

pub fn query_metrics(pred: &[usize], truth: &[usize], propensities: &[f64], ks: &[usize]) -> Result<QueryMetrics> {
    Ok(QueryMetrics {
        p: ks.iter().map(|&k| precision_at_k(pred, truth, k)).collect(),
        n: ks.iter().map(|&k| ndcg_at_k(pred, truth, k)).collect(),
        psp: ks.iter().map(|&k| psp_at_k(pred, truth, propensities, k)).collect::<Result<_>>()?,
    })
}

/// Frequency buckets: cut points as fractions of the query count, and one
/// name per bucket from rarest to most frequent.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSpec {
    pub cuts: Vec<f64>,
    pub names: Vec<String>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        Self {
            cuts: vec![1.0 / 3.0, 2.0 / 3.0],
            names: vec!["tail".into(), "torso".into(), "head".into()],
        }
    }
}

/// Mean metrics over a group of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scope: String,
    pub count: usize,
    pub p: Vec<f64>,
    pub n: Vec<f64>,
    pub psp: Vec<f64>,
}

fn mean_row(scope: &str, rows: &[&QueryMetrics], width: usize) -> MetricRow {
    let mean = |f: &dyn Fn(&QueryMetrics) -> &Vec<f64>| -> Vec<f64> {
        (0..width)
            .map(|j| {
                if rows.is_empty() {
                    0.0
                } else {
                    rows.iter().map(|m| f(m)[j]).sum::<f64>() / rows.len() as f64
                }
            })
            .collect()
    };
    MetricRow {
        scope: scope.to_string(),
        count: rows.len(),
        p: mean(&|m| &m.p),
        n: mean(&|m| &m.n),
        psp: mean(&|m| &m.psp),
    }
}

/// Frequency of a query: the smallest training frequency among its labels
/// (0 for a query without labels).
pub fn query_frequency(truth: &[usize], label_freq: &[usize]) -> usize {
    truth.iter().map(|&l| label_freq.get(l).copied().unwrap_or(0)).min().unwrap_or(0)
}

/// Splits queries into frequency buckets and averages their metrics.
///
/// Queries are ordered by `(frequency, id)` ascending and cut at
/// `floor(n · cut)`.
pub fn decile_report(per_query: &[QueryMetrics], query_freq: &[usize], spec: &BucketSpec, width: usize) -> Result<Vec<MetricRow>> {
    if spec.names.len() != spec.cuts.len() + 1 {
        return Err(Error::Validation("bucket spec needs one more name than cuts".into()));
    }
    if per_query.len() != query_freq.len() {
        return Err(Error::DimensionMismatch { context: "query frequencies", expected: per_query.len(), actual: query_freq.len() });
    }
    if spec.cuts.windows(2).any(|w| w[0] > w[1]) || spec.cuts.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::Validation("bucket cuts must be sorted fractions".into()));
    }
    let n = per_query.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (query_freq[i], i));
    let mut bounds = vec![0];
    bounds.extend(spec.cuts.iter().map(|c| (n as f64 * c).floor() as usize));
    bounds.push(n);
    Ok(spec
        .names
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let members: Vec<&QueryMetrics> = order[bounds[b]..bounds[b + 1]].iter().map(|&i| &per_query[i]).collect();
            mean_row(name, &members, width)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub overall: MetricRow,
    pub buckets: Vec<MetricRow>,
}

/// Scores ranked predictions against `truth` (queries × labels).
pub fn evaluate(
    predictions: &[RankedList],
    truth: &SparseBinaryMatrix,
    propensities: &PropensityModel,
    label_freq: &[usize],
    ks: &[usize],
    buckets: &BucketSpec,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Validation("k list must be non-empty and positive".into()));
    }
    if predictions.len() != truth.rows() {
        return Err(Error::DimensionMismatch { context: "predictions vs truth rows", expected: truth.rows(), actual: predictions.len() });
    }
    let per_query: Vec<QueryMetrics> = predictions
        .par_iter()
        .enumerate()
        .map(|(i, list)| {
            let pred: Vec<usize> = list.ids().collect();
            query_metrics(&pred, truth.row(i), &propensities.propensities, ks)
        })
        .collect::<Result<_>>()?;
    let freq: Vec<usize> = (0..truth.rows()).map(|i| query_frequency(truth.row(i), label_freq)).collect();
    let all: Vec<&QueryMetrics> = per_query.iter().collect();
    Ok(EvalReport {
        ks: ks.to_vec(),
        overall: mean_row("all", &all, ks.len()),
        buckets: decile_report(&per_query, &freq, buckets, ks.len())?,
    })
}

impl EvalReport {
    pub fn columns(&self) -> Vec<String> {
        let mut c = Vec::new();
        for prefix in ["PSP", "P", "N"] {
            c.extend(self.ks.iter().map(|k| format!("{prefix}@{k}")));
        }
        c
    }

    pub fn rows(&self) -> impl Iterator<Item = &MetricRow> {
        std::iter::once(&self.overall).chain(&self.buckets)
    }

    fn values(row: &MetricRow) -> Vec<f64> {
        row.psp.iter().chain(&row.p).chain(&row.n).copied().collect()
    }

    /// Header `scope,count,<columns>`, then the overall row and one row per
    /// bucket. Values are fractions printed with 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut s = format!("scope,count,{}\n", self.columns().join(","));
        for row in self.rows() {
            let vals: Vec<String> = Self::values(row).iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "{},{},{}", row.scope, row.count, vals.join(","));
        }
        s
    }

    /// Aligned plain-text table with values in percent.
    pub fn to_table(&self) -> String {
        let mut header = vec!["scope".to_string(), "count".to_string()];
        header.extend(self.columns());
        let mut lines = vec![header];
        for row in self.rows() {
            let mut cells = vec![row.scope.clone(), row.count.to_string()];
            cells.extend(Self::values(row).iter().map(|v| format!("{:.2}", v * 100.0)));
            lines.push(cells);
        }
        align(&lines)
    }
}

/// Right-aligns every column except the first.
pub fn align(lines: &[Vec<String>]) -> String {
    let cols = lines.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| lines.iter().filter_map(|l| l.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in lines {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = width[c]) } else { format!("{s:>w$}", w = width[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
