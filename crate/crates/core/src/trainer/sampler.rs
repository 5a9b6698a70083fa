//! Query selection and batch assembly.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::AnchorGraph;
use crate::objective::Batch;
use crate::sparse::SparseBinaryMatrix;

/// Up to `size` distinct queries drawn uniformly from `eligible`.
pub fn sample_batch_uniform<R: Rng + ?Sized>(eligible: &[usize], size: usize, rng: &mut R) -> Vec<usize> {
    let k = size.min(eligible.len());
    rand::seq::index::sample(rng, eligible.len(), k)
        .into_iter()
        .map(|j| eligible[j])
        .collect()
}

/// Draws `ceil(size / C)` distinct clusters, where `C` is the largest
/// cluster, and returns their union truncated to `size`.
pub fn sample_batch_clustered<R: Rng + ?Sized>(clusters: &[Vec<usize>], size: usize, rng: &mut R) -> Vec<usize> {
    let c = clusters.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let draws = size.div_ceil(c).min(clusters.len());
    let mut out: Vec<usize> = rand::seq::index::sample(rng, clusters.len(), draws)
        .into_iter()
        .flat_map(|j| clusters[j].iter().copied())
        .collect();
    out.truncate(size);
    out
}

/// Balanced partition of `ids` into clusters of `cluster_size` (the last
/// ones may be smaller) by recursive spherical 2-means on `emb` rows.
///
/// Each split sends the `C·ceil(ceil(n/C)/2)` items that prefer the first
/// centroid most to the left, so every leaf except possibly one is full.
pub fn build_clusters(emb: &Array2<f64>, ids: &[usize], cluster_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let c = cluster_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut stack = vec![ids.to_vec()];
    while let Some(group) = stack.pop() {
        if group.len() <= c {
            if !group.is_empty() {
                out.push(group);
            }
            continue;
        }
        let left = c * group.len().div_ceil(c).div_ceil(2);
        let (a, b) = balanced_two_means(emb, &group, left, &mut rng);
        // Right is pushed first so leaves come out left to right.
        stack.push(b);
        stack.push(a);
    }
    out
}

fn centroid(emb: &Array2<f64>, members: &[usize]) -> Array1<f64> {
    let mut c = Array1::zeros(emb.ncols());
    for &i in members {
        c += &emb.row(i);
    }
    let n = c.dot(&c).sqrt();
    if n > 0.0 {
        c /= n;
    }
    c
}

fn balanced_two_means(emb: &Array2<f64>, group: &[usize], left: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let first = *group.choose(rng).expect("non-empty group");
    // Second seed: the member least similar to the first.
    let second = *group
        .iter()
        .min_by(|&&x, &&y| {
            let sx = emb.row(first).dot(&emb.row(x));
            let sy = emb.row(first).dot(&emb.row(y));
            sx.total_cmp(&sy).then(x.cmp(&y))
        })
        .expect("non-empty group");
    let mut c1 = emb.row(first).to_owned();
    let mut c2 = emb.row(second).to_owned();
    let mut split: Option<(Vec<usize>, Vec<usize>)> = None;
    for _ in 0..20 {
        let mut pref: Vec<(f64, usize)> = group
            .iter()
            .map(|&i| (emb.row(i).dot(&c1) - emb.row(i).dot(&c2), i))
            .collect();
        pref.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut a: Vec<usize> = pref[..left].iter().map(|p| p.1).collect();
        let mut b: Vec<usize> = pref[left..].iter().map(|p| p.1).collect();
        a.sort_unstable();
        b.sort_unstable();
        if split.as_ref() == Some(&(a.clone(), b.clone())) {
            break;
        }
        c1 = centroid(emb, &a);
        c2 = centroid(emb, &b);
        split = Some((a, b));
    }
    split.expect("at least one iteration")
}

/// Graphs and truth consulted while assembling a batch.
pub struct SamplingContext<'a> {
    pub ground_truth: &'a SparseBinaryMatrix,
    pub point_graphs: Vec<&'a AnchorGraph>,
    pub label_graphs: Vec<&'a AnchorGraph>,
    pub num_positives: usize,
}

/// Fills in positives and anchors for the chosen queries.
///
/// Positives come from `truth_rng` so that batches match across runs that
/// differ only in their graphs; anchors come from `anchor_rng`.
pub fn assemble_batch<R: Rng + ?Sized, S: Rng + ?Sized>(
    queries: Vec<usize>,
    ctx: &SamplingContext<'_>,
    truth_rng: &mut R,
    anchor_rng: &mut S,
) -> Batch {
    let positives: Vec<Vec<usize>> = queries
        .iter()
        .map(|&q| {
            let row = ctx.ground_truth.row(q);
            let k = ctx.num_positives.min(row.len());
            let mut p: Vec<usize> = rand::seq::index::sample(truth_rng, row.len(), k)
                .into_iter()
                .map(|j| row[j])
                .collect();
            p.sort_unstable();
            p
        })
        .collect();
    let labels: Vec<usize> = positives.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut pick = |g: &AnchorGraph, r: usize| g.neighbors(r).choose(anchor_rng).copied();
    let query_anchors = queries
        .iter()
        .map(|&q| ctx.point_graphs.iter().map(|g| pick(g, q)).collect())
        .collect();
    let label_anchors = labels
        .iter()
        .map(|&l| ctx.label_graphs.iter().map(|g| pick(g, l)).collect())
        .collect();
    Batch {
        queries,
        positives,
        query_anchors,
        labels,
        label_anchors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn uniform_clamps_and_is_deterministic() {
        let eligible = [4, 7, 9];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = sample_batch_uniform(&eligible, 1024, &mut rng);
        b.sort_unstable();
        assert_eq!(b, vec![4, 7, 9]);
        let draw = |s| sample_batch_uniform(&(0..100).collect::<Vec<_>>(), 10, &mut ChaCha8Rng::seed_from_u64(s));
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn uniform_inclusion_frequency_within_binomial_bounds() {
        let eligible: Vec<usize> = (0..100).collect();
        let (s, trials) = (10usize, 10_000usize);
        let mut counts = [0usize; 100];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..trials {
            let b = sample_batch_uniform(&eligible, s, &mut rng);
            assert_eq!(b.iter().collect::<BTreeSet<_>>().len(), s);
            for q in b {
                counts[q] += 1;
            }
        }
        let p = s as f64 / 100.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{c} outside {mean} +- {}", 3.0 * sd);
        }
    }

    #[test]
    fn clustered_one_cluster_when_c_equals_s() {
        let clusters: Vec<Vec<usize>> = (0..5).map(|k| (4 * k..4 * k + 4).collect()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let b = sample_batch_clustered(&clusters, 4, &mut rng);
            assert!(clusters.contains(&b));
        }
        let b = sample_batch_clustered(&clusters, 10, &mut rng);
        assert_eq!(b.len(), 10);
    }

    #[test]
    fn clustered_inclusion_uniform() {
        let clusters: Vec<Vec<usize>> = (0..10).map(|k| (3 * k..3 * k + 3).collect()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 10_000usize;
        let mut counts = [0usize; 10];
        for _ in 0..trials {
            for q in sample_batch_clustered(&clusters, 6, &mut rng) {
                if q % 3 == 0 {
                    counts[q / 3] += 1;
                }
            }
        }
        let p = 0.2;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * p).abs() < 4.0 * sd, "{c}");
        }
    }

    fn unit_rows(rows: &[[f64; 2]]) -> Array2<f64> {
        let mut a = Array2::zeros((rows.len(), 2));
        for (i, r) in rows.iter().enumerate() {
            let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
            a[(i, 0)] = r[0] / n;
            a[(i, 1)] = r[1] / n;
        }
        a
    }

    /// Spherical 2-means objective: summed norms of the two member sums.
    fn split_score(emb: &Array2<f64>, left: &[usize], right: &[usize]) -> f64 {
        let norm = |m: &[usize]| {
            let mut c = Array1::<f64>::zeros(emb.ncols());
            for &i in m {
                c += &emb.row(i);
            }
            c.dot(&c).sqrt()
        };
        norm(left) + norm(right)
    }

    #[test]
    fn two_clouds_recovered_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        for k in 0..16 {
            let base = if k % 2 == 0 { 0.3 } else { 2.4 };
            let t: f64 = base + rng.random_range(-0.2..0.2);
            pts.push([t.cos(), t.sin()]);
        }
        let emb = unit_rows(&pts);
        let ids: Vec<usize> = (0..16).collect();
        let clusters = build_clusters(&emb, &ids, 8, 4);
        assert_eq!(clusters.len(), 2);
        let even: Vec<usize> = (0..16).step_by(2).collect();
        let odd: Vec<usize> = (1..16).step_by(2).collect();
        assert!(clusters.contains(&even) && clusters.contains(&odd), "{clusters:?}");

        // Exhaustive search over all balanced 2-partitions.
        let mut best = (f64::MIN, 0u32);
        for mask in 0u32..(1 << 16) {
            if mask.count_ones() != 8 || mask & 1 == 0 {
                continue;
            }
            let l: Vec<usize> = (0..16).filter(|i| mask >> i & 1 == 1).collect();
            let r: Vec<usize> = (0..16).filter(|i| mask >> i & 1 == 0).collect();
            let s = split_score(&emb, &l, &r);
            if s > best.0 {
                best = (s, mask);
            }
        }
        let l: Vec<usize> = (0..16).filter(|i| best.1 >> i & 1 == 1).collect();
        assert!(clusters.contains(&l));
    }

    #[test]
    fn single_cluster_when_c_at_least_n() {
        let emb = unit_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        assert_eq!(build_clusters(&emb, &[0, 1, 2], 3, 0), vec![vec![0, 1, 2]]);
        assert_eq!(build_clusters(&emb, &[0, 1, 2], 50, 0), vec![vec![0, 1, 2]]);
    }

    proptest! {
        #[test]
        fn clusters_partition_ids(n in 1usize..60, c in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 2]> = (0..n).map(|_| { let t: f64 = rng.random_range(0.0..6.28); [t.cos(), t.sin()] }).collect();
            let emb = unit_rows(&pts);
            let ids: Vec<usize> = (0..n).collect();
            let clusters = build_clusters(&emb, &ids, c, seed);
            let mut all: Vec<usize> = clusters.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, ids);
            prop_assert!(clusters.iter().all(|k| k.len() <= c));
            prop_assert!(clusters.iter().filter(|k| k.len() < c).count() <= 1);
            prop_assert_eq!(build_clusters(&emb, &(0..n).collect::<Vec<_>>(), c, seed), clusters);
        }
    }
}
