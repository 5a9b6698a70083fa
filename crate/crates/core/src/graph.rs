//! Anchor-graph conditioning.
//!
//! Raw item-to-anchor links miss many true edges and contain wrong ones.
//! [`rwr_augment`] densifies each item's neighborhood with random walks over
//! the anchor co-occurrence graph, [`prune_edges`] drops edges whose
//! endpoints the current encoder places at non-positive cosine, and
//! [`label_propagate_augment`] is the ground-truth expansion baseline that
//! links a point to every label sharing one of its anchors.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::{format_real_rows, parse_real_rows, SparseBinaryMatrix};

/// Item × anchor adjacency with optional positive edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGraph {
    adjacency: SparseBinaryMatrix,
    /// Parallel to `adjacency` rows; `None` means every weight is 1.
    weights: Option<Vec<Vec<f64>>>,
}

impl AnchorGraph {
    pub fn new(adjacency: SparseBinaryMatrix) -> Self {
        Self {
            adjacency,
            weights: None,
        }
    }

    pub fn with_weights(adjacency: SparseBinaryMatrix, weights: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self {
            adjacency,
            weights: Some(weights),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self::new(SparseBinaryMatrix::empty(rows, cols))
    }

    pub fn adjacency(&self) -> &SparseBinaryMatrix {
        &self.adjacency
    }

    pub fn weights(&self) -> Option<&[Vec<f64>]> {
        self.weights.as_deref()
    }

    pub fn rows(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn cols(&self) -> usize {
        self.adjacency.cols()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz()
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        self.adjacency.row(row)
    }

    /// Weight of the `k`-th edge of `row`.
    pub fn edge_weight(&self, row: usize, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[row][k])
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != self.adjacency.rows() {
                return Err(Error::DimensionMismatch {
                    context: "edge weight rows",
                    expected: self.adjacency.rows(),
                    actual: w.len(),
                });
            }
            for (r, row) in w.iter().enumerate() {
                if row.len() != self.adjacency.row(r).len() {
                    return Err(Error::DimensionMismatch {
                        context: "edge weights in row",
                        expected: self.adjacency.row(r).len(),
                        actual: row.len(),
                    });
                }
                if row.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Validation(format!(
                        "row {r} has a non-positive edge weight"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sub-graph of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let adjacency = self.adjacency.select_rows(rows)?;
        let weights = self.weights.as_ref().map(|w| rows.iter().map(|&r| w[r].clone()).collect());
        Ok(Self { adjacency, weights })
    }

    pub(crate) fn clear_row(&mut self, row: usize) {
        let _ = self.adjacency.set_row(row, Vec::new());
        if let Some(w) = &mut self.weights {
            w[row].clear();
        }
    }

    pub(crate) fn remove_columns(&mut self, cols: &HashSet<usize>) {
        self.retain(|_, c| !cols.contains(&c));
    }

    /// Keeps the edges for which `keep(row, col)` holds, weights included.
    fn retain(&mut self, mut keep: impl FnMut(usize, usize) -> bool) {
        let mut rows = Vec::with_capacity(self.rows());
        let mut weights = self.weights.as_ref().map(|_| Vec::with_capacity(self.rows()));
        for r in 0..self.rows() {
            let mut kept = Vec::new();
            let mut kept_w = Vec::new();
            for (k, &c) in self.adjacency.row(r).iter().enumerate() {
                if keep(r, c) {
                    kept.push(c);
                    kept_w.push(self.edge_weight(r, k));
                }
            }
            rows.push(kept);
            if let Some(w) = &mut weights {
                w.push(kept_w);
            }
        }
        self.adjacency = SparseBinaryMatrix::from_rows(self.cols(), rows)
            .expect("retained columns stay in range");
        self.weights = weights;
    }

    /// Writes the adjacency to `path` and, when weighted, the weights to
    /// `path` + `.weights`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.adjacency.save(path)?;
        if let Some(w) = &self.weights {
            let rows: Vec<Vec<(usize, f64)>> = w
                .iter()
                .enumerate()
                .map(|(r, ws)| self.adjacency.row(r).iter().copied().zip(ws.iter().copied()).collect())
                .collect();
            let wpath = weights_path(path);
            std::fs::write(&wpath, format_real_rows(self.cols(), &rows))
                .map_err(|e| Error::io(&wpath, e))?;
        }
        Ok(())
    }

    /// Reads a graph written by [`AnchorGraph::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let adjacency = SparseBinaryMatrix::load(path)?;
        let wpath = weights_path(path);
        if !wpath.exists() {
            return Ok(Self::new(adjacency));
        }
        let text = std::fs::read_to_string(&wpath).map_err(|e| Error::io(&wpath, e))?;
        let (cols, rows) = parse_real_rows(&text, &wpath.display().to_string())?;
        if cols != adjacency.cols() || rows.len() != adjacency.rows() {
            return Err(Error::Validation(format!(
                "{} does not match the shape of its adjacency",
                wpath.display()
            )));
        }
        let mut weights = Vec::with_capacity(rows.len());
        for (r, row) in rows.into_iter().enumerate() {
            let mut row = row;
            row.sort_by_key(|&(c, _)| c);
            let cols: Vec<usize> = row.iter().map(|&(c, _)| c).collect();
            if cols != adjacency.row(r) {
                return Err(Error::Validation(format!(
                    "{}: row {r} lists different columns than the adjacency",
                    wpath.display()
                )));
            }
            weights.push(row.into_iter().map(|(_, w)| w).collect());
        }
        Self::with_weights(adjacency, weights)
    }
}

fn weights_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".weights");
    PathBuf::from(s)
}

/// Random-walk settings for [`rwr_augment`].
#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub hops: usize,
    pub restart_prob: f64,
    /// Cap on new edges per item; `None` caps at the item's original degree.
    pub top_k_keep: Option<usize>,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            hops: 400,
            restart_prob: 0.8,
            top_k_keep: None,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::config("hops", "must be at least 1"));
        }
        if !(self.restart_prob > 0.0 && self.restart_prob <= 1.0) {
            return Err(Error::config("restart_prob", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Anchor × anchor graph: two anchors are adjacent when some item of any of
/// the given graphs links to both.
pub fn anchor_cooccurrence(graphs: &[&AnchorGraph]) -> Result<SparseBinaryMatrix> {
    let m = graphs.first().map_or(0, |g| g.cols());
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); m];
    for g in graphs {
        if g.cols() != m {
            return Err(Error::DimensionMismatch {
                context: "anchor co-occurrence",
                expected: m,
                actual: g.cols(),
            });
        }
        for r in 0..g.rows() {
            let row = g.neighbors(r);
            for &a in row {
                lists[a].extend(row.iter().copied().filter(|&b| b != a));
            }
        }
    }
    SparseBinaryMatrix::from_rows(m, lists)
}

/// Simulates one restart walk and returns how often each anchor was visited.
///
/// The walk starts at a uniformly chosen anchor of `neighbors`. Each hop
/// either restarts (probability `restart_prob`) to a uniformly chosen anchor
/// of `neighbors`, or moves to a uniform neighbor of the current anchor in
/// `anchor_anchor`; an anchor without neighbors holds the walk in place.
/// The position after every hop is counted.
pub fn walk_visit_counts<R: Rng + ?Sized>(
    neighbors: &[usize],
    anchor_anchor: &SparseBinaryMatrix,
    restart_prob: f64,
    hops: usize,
    rng: &mut R,
) -> BTreeMap<usize, u64> {
    let mut counts = BTreeMap::new();
    if neighbors.is_empty() {
        return counts;
    }
    let mut cur = neighbors[rng.random_range(0..neighbors.len())];
    for _ in 0..hops {
        if rng.random::<f64>() < restart_prob {
            cur = neighbors[rng.random_range(0..neighbors.len())];
        } else {
            let next = anchor_anchor.row(cur);
            if !next.is_empty() {
                cur = next[rng.random_range(0..next.len())];
            }
        }
        *counts.entry(cur).or_insert(0) += 1;
    }
    counts
}

/// Per-item deterministic stream, independent of thread scheduling.
pub(crate) fn item_rng(seed: u64, item: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item as u64);
    rng
}

/// Densifies `graph` with random walks with restart.
///
/// For every item with at least one edge, a walk of `cfg.hops` steps runs
/// over `anchor_anchor` with restarts into the item's own neighborhood. The
/// most-visited anchors not already linked (at most `top_k_keep`, ties by
/// anchor id) become new edges weighted by their visit counts. Existing edges
/// are never removed and keep their weights.
pub fn rwr_augment(
    graph: &AnchorGraph,
    anchor_anchor: &SparseBinaryMatrix,
    cfg: &WalkConfig,
) -> Result<AnchorGraph> {
    cfg.validate()?;
    let m = graph.cols();
    if anchor_anchor.rows() != m || anchor_anchor.cols() != m {
        return Err(Error::DimensionMismatch {
            context: "anchor-anchor graph vs anchor count",
            expected: m,
            actual: if anchor_anchor.rows() != m {
                anchor_anchor.rows()
            } else {
                anchor_anchor.cols()
            },
        });
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..graph.rows())
        .into_par_iter()
        .map(|r| {
            let existing = graph.neighbors(r);
            let mut edges: Vec<(usize, f64)> = existing
                .iter()
                .enumerate()
                .map(|(k, &c)| (c, graph.edge_weight(r, k)))
                .collect();
            let keep = cfg.top_k_keep.unwrap_or(existing.len());
            if existing.is_empty() || keep == 0 {
                return edges.into_iter().unzip();
            }
            let mut rng = item_rng(cfg.seed, r);
            let counts = walk_visit_counts(existing, anchor_anchor, cfg.restart_prob, cfg.hops, &mut rng);
            let mut fresh: Vec<(usize, u64)> = counts
                .into_iter()
                .filter(|(a, _)| existing.binary_search(a).is_err())
                .collect();
            fresh.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            fresh.truncate(keep);
            edges.extend(fresh.into_iter().map(|(a, n)| (a, n as f64)));
            edges.sort_by_key(|&(c, _)| c);
            edges.into_iter().unzip()
        })
        .collect();
    let (cols, weights): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let adjacency = SparseBinaryMatrix::from_rows(m, cols)?;
    AnchorGraph::with_weights(adjacency, weights)
}

/// Keeps edge `(i, m)` iff `item_emb[i] · anchor_emb[m] > threshold`.
pub fn prune_edges(
    graph: &AnchorGraph,
    item_emb: &Array2<f64>,
    anchor_emb: &Array2<f64>,
    threshold: f64,
) -> Result<AnchorGraph> {
    if item_emb.nrows() != graph.rows() {
        return Err(Error::DimensionMismatch {
            context: "item embeddings vs graph rows",
            expected: graph.rows(),
            actual: item_emb.nrows(),
        });
    }
    if anchor_emb.nrows() != graph.cols() {
        return Err(Error::DimensionMismatch {
            context: "anchor embeddings vs graph cols",
            expected: graph.cols(),
            actual: anchor_emb.nrows(),
        });
    }
    if item_emb.ncols() != anchor_emb.ncols() {
        return Err(Error::DimensionMismatch {
            context: "embedding width",
            expected: item_emb.ncols(),
            actual: anchor_emb.ncols(),
        });
    }
    check_unit_rows(item_emb, "item embeddings")?;
    check_unit_rows(anchor_emb, "anchor embeddings")?;

    let keep: Vec<Vec<bool>> = (0..graph.rows())
        .into_par_iter()
        .map(|r| {
            let u = item_emb.row(r);
            graph
                .neighbors(r)
                .iter()
                .map(|&c| u.dot(&anchor_emb.row(c)) > threshold)
                .collect()
        })
        .collect();
    let mut out = graph.clone();
    let mut cursor = vec![0usize; graph.rows()];
    out.retain(|r, _| {
        let k = cursor[r];
        cursor[r] += 1;
        keep[r][k]
    });
    Ok(out)
}

fn check_unit_rows(emb: &Array2<f64>, what: &str) -> Result<()> {
    for (r, row) in emb.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(Error::Validation(format!(
                "{what}: row {r} has norm {norm}, expected unit length"
            )));
        }
    }
    Ok(())
}

/// Ground truth plus every `(point, label)` pair sharing an anchor.
pub fn label_propagate_augment(
    ground_truth: &SparseBinaryMatrix,
    point_graph: &AnchorGraph,
    label_graph: &AnchorGraph,
) -> Result<SparseBinaryMatrix> {
    if point_graph.rows() != ground_truth.rows() {
        return Err(Error::DimensionMismatch {
            context: "point graph rows vs ground truth rows",
            expected: ground_truth.rows(),
            actual: point_graph.rows(),
        });
    }
    if label_graph.rows() != ground_truth.cols() {
        return Err(Error::DimensionMismatch {
            context: "label graph rows vs ground truth cols",
            expected: ground_truth.cols(),
            actual: label_graph.rows(),
        });
    }
    if point_graph.cols() != label_graph.cols() {
        return Err(Error::DimensionMismatch {
            context: "anchor count of point vs label graph",
            expected: point_graph.cols(),
            actual: label_graph.cols(),
        });
    }
    let labels_of_anchor = label_graph.adjacency().transpose();
    let rows = (0..ground_truth.rows())
        .map(|i| {
            let mut row: Vec<usize> = ground_truth.row(i).to_vec();
            for &m in point_graph.neighbors(i) {
                row.extend_from_slice(labels_of_anchor.row(m));
            }
            row
        })
        .collect();
    SparseBinaryMatrix::from_rows(ground_truth.cols(), rows)
}

/// Degree summary of an anchor graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub rows: usize,
    pub cols: usize,
    pub edges: usize,
    pub avg_per_row: f64,
    pub avg_per_col: f64,
    pub isolated_rows: usize,
}

pub fn degree_stats(graph: &AnchorGraph) -> DegreeStats {
    let rows = graph.rows();
    let cols = graph.cols();
    let edges = graph.num_edges();
    let mean = |n: usize| if n == 0 { 0.0 } else { edges as f64 / n as f64 };
    DegreeStats {
        rows,
        cols,
        edges,
        avg_per_row: mean(rows),
        avg_per_col: mean(cols),
        isolated_rows: (0..rows).filter(|&r| graph.neighbors(r).is_empty()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn graph(rows: usize, cols: usize, pairs: &[(usize, usize)]) -> AnchorGraph {
        AnchorGraph::new(SparseBinaryMatrix::from_pairs(rows, cols, pairs.iter().copied()).unwrap())
    }

    #[test]
    fn isolated_anchor_absorbs_walk() {
        let g = graph(1, 3, &[(0, 0)]);
        let aa = SparseBinaryMatrix::empty(3, 3);
        let cfg = WalkConfig {
            restart_prob: 0.3,
            ..Default::default()
        };
        let out = rwr_augment(&g, &aa, &cfg).unwrap();
        assert_eq!(out.adjacency(), g.adjacency());
    }

    #[test]
    fn chain_walk_prefers_nearer_anchor() {
        let g = graph(1, 3, &[(0, 0)]);
        let aa = SparseBinaryMatrix::from_pairs(3, 3, [(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = walk_visit_counts(&[0], &aa, 0.8, 200_000, &mut rng);
        assert!(counts[&2] < counts[&1]);
        let out = rwr_augment(
            &g,
            &aa,
            &WalkConfig {
                top_k_keep: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.neighbors(0), &[0, 1]);
        assert!(out.edge_weight(0, 1) > 1.0);
        assert_eq!(out.edge_weight(0, 0), 1.0);
    }

    #[test]
    fn zero_keep_and_empty_rows_unchanged() {
        let g = graph(2, 3, &[(0, 0), (0, 1)]);
        let aa = anchor_cooccurrence(&[&g]).unwrap();
        let cfg = WalkConfig {
            top_k_keep: Some(0),
            ..Default::default()
        };
        assert_eq!(rwr_augment(&g, &aa, &cfg).unwrap().adjacency(), g.adjacency());
        let cfg = WalkConfig::default();
        assert!(rwr_augment(&g, &aa, &cfg).unwrap().neighbors(1).is_empty());
    }

    #[test]
    fn rwr_dimension_mismatch() {
        let g = graph(1, 3, &[(0, 0)]);
        let aa = SparseBinaryMatrix::empty(4, 4);
        assert!(matches!(
            rwr_augment(&g, &aa, &WalkConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cooccurrence_links_shared_items() {
        let a = graph(2, 4, &[(0, 0), (0, 2), (1, 3)]);
        let b = graph(1, 4, &[(0, 2), (0, 3)]);
        let aa = anchor_cooccurrence(&[&a, &b]).unwrap();
        assert_eq!(aa.row(0), &[2]);
        assert_eq!(aa.row(2), &[0, 3]);
        assert_eq!(aa.row(3), &[2]);
        assert!(aa.row(1).is_empty());
    }

    #[test]
    fn prune_by_cosine() {
        let g = graph(1, 3, &[(0, 0), (0, 1), (0, 2)]);
        let s = (1.0f64 - 0.04).sqrt();
        let items = array![[1.0, 0.0]];
        let anchors = array![[-0.2, s], [1.0, 0.0], [0.0, 1.0]];
        let out = prune_edges(&g, &items, &anchors, 0.0).unwrap();
        // cosine -0.2 removed, cosine 1 kept, exact zero removed.
        assert_eq!(out.neighbors(0), &[1]);
        let all = prune_edges(&g, &items, &anchors, -1.0).unwrap();
        assert_eq!(all.adjacency(), g.adjacency());
        let antipodal = prune_edges(&graph(1, 1, &[(0, 0)]), &items, &array![[-1.0, 0.0]], -1.0).unwrap();
        assert_eq!(antipodal.num_edges(), 0);
    }

    #[test]
    fn prune_keeps_weights_and_checks_dims() {
        let adj = SparseBinaryMatrix::from_pairs(1, 2, [(0, 0), (0, 1)]).unwrap();
        let g = AnchorGraph::with_weights(adj, vec![vec![3.0, 7.0]]).unwrap();
        let out = prune_edges(&g, &array![[0.0, 1.0]], &array![[1.0, 0.0], [0.0, 1.0]], 0.0).unwrap();
        assert_eq!(out.neighbors(0), &[1]);
        assert_eq!(out.weights().unwrap()[0], vec![7.0]);
        assert!(prune_edges(&g, &array![[0.0, 1.0], [1.0, 0.0]], &array![[1.0, 0.0], [0.0, 1.0]], 0.0).is_err());
        assert!(prune_edges(&g, &array![[0.0, 2.0]], &array![[1.0, 0.0], [0.0, 1.0]], 0.0).is_err());
    }

    #[test]
    fn propagation_adds_shared_neighbor_pairs() {
        let gt = SparseBinaryMatrix::empty(1, 2);
        let pg = graph(1, 1, &[(0, 0)]);
        let lg = graph(2, 1, &[(1, 0)]);
        let out = label_propagate_augment(&gt, &pg, &lg).unwrap();
        assert_eq!(out.row(0), &[1]);
        let empty = label_propagate_augment(&gt, &graph(1, 1, &[]), &graph(2, 1, &[])).unwrap();
        assert_eq!(empty, gt);
        assert!(label_propagate_augment(&gt, &pg, &graph(2, 2, &[])).is_err());
    }

    #[test]
    fn propagation_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut pairs = |rows: usize, cols: usize, p: f64| -> Vec<(usize, usize)> {
                let mut v = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        if rng.random::<f64>() < p {
                            v.push((r, c));
                        }
                    }
                }
                v
            };
            let gt_pairs = pairs(5, 5, 0.2);
            let pg_pairs = pairs(5, 3, 0.3);
            let lg_pairs = pairs(5, 3, 0.3);
            let gt = SparseBinaryMatrix::from_pairs(5, 5, gt_pairs).unwrap();
            let pg = graph(5, 3, &pg_pairs);
            let lg = graph(5, 3, &lg_pairs);
            let out = label_propagate_augment(&gt, &pg, &lg).unwrap();
            for i in 0..5 {
                for l in 0..5 {
                    let mut expect = gt.contains(i, l);
                    for m in 0..3 {
                        expect |= pg.adjacency().contains(i, m) && lg.adjacency().contains(l, m);
                    }
                    assert_eq!(out.contains(i, l), expect, "({i},{l})");
                }
            }
            let again = label_propagate_augment(&out, &pg, &lg).unwrap();
            assert_eq!(again, out);
        }
    }

    #[test]
    fn degree_summary() {
        let g = graph(2, 4, &[(0, 0), (0, 1), (0, 2), (1, 3)]);
        let s = degree_stats(&g);
        assert_eq!(s.avg_per_row, 2.0);
        assert_eq!(s.avg_per_col, 1.0);
        assert_eq!(s.isolated_rows, 0);
        let e = degree_stats(&AnchorGraph::empty(3, 0));
        assert_eq!(e.avg_per_row, 0.0);
        assert_eq!(e.isolated_rows, 3);
    }

    #[test]
    fn weighted_graph_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let adj = SparseBinaryMatrix::from_pairs(2, 3, [(0, 0), (0, 2), (1, 1)]).unwrap();
        let g = AnchorGraph::with_weights(adj, vec![vec![1.0, 12.0], vec![0.5]]).unwrap();
        g.save(&path).unwrap();
        assert_eq!(AnchorGraph::load(&path).unwrap(), g);
        let plain = graph(1, 2, &[(0, 1)]);
        let p2 = dir.path().join("h.txt");
        plain.save(&p2).unwrap();
        assert_eq!(AnchorGraph::load(&p2).unwrap(), plain);
    }

    fn arb_graph() -> impl Strategy<Value = AnchorGraph> {
        (1usize..6, 2usize..7).prop_flat_map(|(rows, cols)| {
            proptest::collection::vec(proptest::collection::vec(0..cols, 0..4), rows).prop_map(
                move |lists| AnchorGraph::new(SparseBinaryMatrix::from_rows(cols, lists).unwrap()),
            )
        })
    }

    fn unit_rows(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::<f64>::zeros((n, 3));
        for mut row in m.rows_mut() {
            for x in row.iter_mut() {
                *x = rng.random::<f64>() - 0.5;
            }
            let norm = row.dot(&row).sqrt();
            row.mapv_inplace(|x| x / norm);
        }
        m
    }

    proptest! {
        #[test]
        fn rwr_only_adds_edges(g in arb_graph(), seed in 0u64..1000, restart in 0.05f64..1.0) {
            let aa = anchor_cooccurrence(&[&g]).unwrap();
            let cfg = WalkConfig { hops: 50, restart_prob: restart, top_k_keep: Some(2), seed };
            let out = rwr_augment(&g, &aa, &cfg).unwrap();
            prop_assert!(g.adjacency().is_subset_of(out.adjacency()));
            prop_assert_eq!(&rwr_augment(&g, &aa, &cfg).unwrap(), &out);
        }

        #[test]
        fn prune_is_subset_and_idempotent(g in arb_graph(), seed in 0u64..1000) {
            let items = unit_rows(g.rows(), seed);
            let anchors = unit_rows(g.cols(), seed + 1);
            let once = prune_edges(&g, &items, &anchors, 0.0).unwrap();
            prop_assert!(once.adjacency().is_subset_of(g.adjacency()));
            let twice = prune_edges(&once, &items, &anchors, 0.0).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
