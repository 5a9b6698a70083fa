//! Planted-topic corpora for desk-scale experiments.
//!
//! Each topic owns a slice of the vocabulary. Within a topic every label is a
//! *facet* with two private token groups: a query-side group used by point
//! texts and a label-side group used by label texts. Points and labels of the
//! same facet therefore share no tokens, and the association has to be
//! learned. Anchor texts mix both groups of their facet with topic-common
//! tokens, which is what makes the anchor graphs informative.
//!
//! Every point draws an ideal label set from its own topic. Training ground
//! truth keeps that set except for *tail* labels, which keep exactly one
//! training positive; the points that lost them still carry the facet's
//! tokens and anchor edges. Test points keep their full ideal set.
//! Graph edges are rewired to another topic's anchor with probability
//! `graph_noise_rate`.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnchorSet, Corpus, TextRecord};
use crate::error::{Error, Result};
use crate::graph::AnchorGraph;
use crate::sparse::SparseBinaryMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_topics: usize,
    pub points_per_topic: usize,
    /// Held-out points per topic, appended after the training points.
    pub test_points_per_topic: usize,
    pub labels_per_topic: usize,
    pub anchors_per_topic: usize,
    /// Number of independent anchor sets.
    pub anchor_sets: usize,
    /// Maximum ideal labels per point.
    pub labels_per_point: usize,
    /// Anchor edges drawn per point and per label.
    pub edges_per_item: usize,
    /// Fraction of labels left with a single training positive.
    pub tail_fraction: f64,
    pub graph_noise_rate: f64,
    pub vocab_size: usize,
    pub tokens_per_text: usize,
    /// Probability that a token is drawn from the topic-common group.
    pub common_token_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_topics: 10,
            points_per_topic: 20,
            test_points_per_topic: 20,
            labels_per_topic: 5,
            anchors_per_topic: 20,
            anchor_sets: 2,
            labels_per_point: 2,
            edges_per_item: 2,
            tail_fraction: 0.0,
            graph_noise_rate: 0.0,
            vocab_size: 1200,
            tokens_per_text: 16,
            common_token_rate: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_topics", self.num_topics),
            ("points_per_topic", self.points_per_topic),
            ("labels_per_topic", self.labels_per_topic),
            ("anchors_per_topic", self.anchors_per_topic),
            ("labels_per_point", self.labels_per_point),
            ("edges_per_item", self.edges_per_item),
            ("vocab_size", self.vocab_size),
            ("tokens_per_text", self.tokens_per_text),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        for (key, v) in [
            ("tail_fraction", self.tail_fraction),
            ("graph_noise_rate", self.graph_noise_rate),
            ("common_token_rate", self.common_token_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        let slice = self.vocab_size / self.num_topics;
        if slice / (self.labels_per_topic + 1) < 2 {
            return Err(Error::config(
                "vocab_size",
                format!(
                    "needs at least {} tokens per topic for {} labels",
                    2 * (self.labels_per_topic + 1),
                    self.labels_per_topic
                ),
            ));
        }
        if self.tail_fraction < 1.0 && self.points_per_topic < 2 {
            return Err(Error::config("points_per_topic", "head labels need at least 2 points per topic"));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults; unknown keys are errors.
    pub fn parse(text: &str) -> Result<SyntheticSpec> {
        let mut spec = SyntheticSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", i + 1), format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            spec.set(key, value)
                .map_err(|e| Error::config(key, format!("line {}: {}", i + 1, config_message(e))))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| Error::Validation(format!("bad value `{value}`: {e}")))
        }
        match key {
            "num_topics" => self.num_topics = num(value)?,
            "points_per_topic" => self.points_per_topic = num(value)?,
            "test_points_per_topic" => self.test_points_per_topic = num(value)?,
            "labels_per_topic" => self.labels_per_topic = num(value)?,
            "anchors_per_topic" => self.anchors_per_topic = num(value)?,
            "anchor_sets" => self.anchor_sets = num(value)?,
            "labels_per_point" => self.labels_per_point = num(value)?,
            "edges_per_item" => self.edges_per_item = num(value)?,
            "tail_fraction" => self.tail_fraction = num(value)?,
            "graph_noise_rate" => self.graph_noise_rate = num(value)?,
            "vocab_size" => self.vocab_size = num(value)?,
            "tokens_per_text" => self.tokens_per_text = num(value)?,
            "common_token_rate" => self.common_token_rate = num(value)?,
            "seed" => self.seed = num(value)?,
            _ => return Err(Error::Validation("unknown key".into())),
        }
        Ok(())
    }

    /// Every field as `key = value` lines, in declaration order.
    pub fn to_text(&self) -> String {
        format!(
            "num_topics = {}\npoints_per_topic = {}\ntest_points_per_topic = {}\nlabels_per_topic = {}\n\
             anchors_per_topic = {}\nanchor_sets = {}\nlabels_per_point = {}\nedges_per_item = {}\n\
             tail_fraction = {:?}\ngraph_noise_rate = {:?}\nvocab_size = {}\ntokens_per_text = {}\n\
             common_token_rate = {:?}\nseed = {}\n",
            self.num_topics,
            self.points_per_topic,
            self.test_points_per_topic,
            self.labels_per_topic,
            self.anchors_per_topic,
            self.anchor_sets,
            self.labels_per_point,
            self.edges_per_item,
            self.tail_fraction,
            self.graph_noise_rate,
            self.vocab_size,
            self.tokens_per_text,
            self.common_token_rate,
            self.seed,
        )
    }

    /// Name of the `k`-th anchor set.
    pub fn anchor_set_name(k: usize) -> String {
        match k {
            0 => "hyperlink".into(),
            1 => "category".into(),
            _ => format!("set{k}"),
        }
    }
}

fn config_message(e: Error) -> String {
    match e {
        Error::Validation(m) => m,
        other => other.to_string(),
    }
}

/// A generated corpus plus the planted structure behind it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// All points, training first then test. Test rows are already detached
    /// from the anchor graphs.
    pub corpus: Corpus,
    pub test_ids: Vec<usize>,
    pub point_topic: Vec<usize>,
    pub label_topic: Vec<usize>,
    /// `[anchor set][anchor]` topic.
    pub anchor_topic: Vec<Vec<usize>>,
    pub tail_labels: Vec<usize>,
}

struct Vocab {
    slice: usize,
    block: usize,
    labels_per_topic: usize,
}

impl Vocab {
    fn word(id: usize) -> String {
        format!("w{id}")
    }

    fn topic_base(&self, topic: usize) -> usize {
        topic * self.slice
    }

    /// Query-side tokens of facet `f` in `topic`.
    fn query_side(&self, topic: usize, f: usize) -> std::ops::Range<usize> {
        let start = self.topic_base(topic) + f * self.block;
        start..start + self.block / 2
    }

    fn label_side(&self, topic: usize, f: usize) -> std::ops::Range<usize> {
        let start = self.topic_base(topic) + f * self.block + self.block / 2;
        start..self.topic_base(topic) + (f + 1) * self.block
    }

    fn common(&self, topic: usize) -> std::ops::Range<usize> {
        self.topic_base(topic) + self.labels_per_topic * self.block..self.topic_base(topic) + self.slice
    }
}

fn draw(rng: &mut ChaCha8Rng, range: std::ops::Range<usize>) -> String {
    Vocab::word(rng.random_range(range))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t = spec.num_topics;
    let lpt = spec.labels_per_topic;
    let vocab = Vocab {
        slice: spec.vocab_size / t,
        block: (spec.vocab_size / t) / (lpt + 1),
        labels_per_topic: lpt,
    };
    let n_train = t * spec.points_per_topic;
    let n_test = t * spec.test_points_per_topic;
    let n_labels = t * lpt;
    let label_topic: Vec<usize> = (0..n_labels).map(|l| l / lpt).collect();
    let point_topic: Vec<usize> = (0..n_train)
        .map(|i| i / spec.points_per_topic)
        .chain((0..n_test).map(|i| i / spec.test_points_per_topic.max(1)))
        .collect();
    let n_points = n_train + n_test;

    // Ideal label sets.
    let ideal: Vec<Vec<usize>> = point_topic
        .iter()
        .map(|&topic| {
            let k = rng.random_range(1..=spec.labels_per_point.min(lpt));
            let mut facets: Vec<usize> = rand::seq::index::sample(&mut rng, lpt, k).into_vec();
            facets.sort_unstable();
            facets.into_iter().map(|f| topic * lpt + f).collect()
        })
        .collect();

    // Tail labels: an even per-topic quota, randomized within each topic.
    let n_tail = (spec.tail_fraction * n_labels as f64).round() as usize;
    let mut topic_order: Vec<usize> = (0..t).collect();
    topic_order.shuffle(&mut rng);
    let mut tail: BTreeSet<usize> = BTreeSet::new();
    for (rank, &topic) in topic_order.iter().enumerate() {
        let quota = n_tail / t + usize::from(rank < n_tail % t);
        for f in rand::seq::index::sample(&mut rng, lpt, quota.min(lpt)).into_vec() {
            tail.insert(topic * lpt + f);
        }
    }

    // Training ground truth.
    let mut train_rows: Vec<Vec<usize>> = ideal[..n_train]
        .iter()
        .map(|row| row.iter().copied().filter(|l| !tail.contains(l)).collect())
        .collect();
    let topic_points = |topic: usize| topic * spec.points_per_topic..(topic + 1) * spec.points_per_topic;
    for &l in &tail {
        let holders: Vec<usize> = topic_points(label_topic[l]).filter(|&i| ideal[i].contains(&l)).collect();
        let pick = match holders.choose(&mut rng) {
            Some(&i) => i,
            None => rng.random_range(topic_points(label_topic[l])),
        };
        train_rows[pick].push(l);
    }
    let mut counts = vec![0usize; n_labels];
    for row in &train_rows {
        for &l in row {
            counts[l] += 1;
        }
    }
    for l in 0..n_labels {
        if tail.contains(&l) {
            continue;
        }
        let mut candidates: Vec<usize> = topic_points(label_topic[l]).filter(|&i| !train_rows[i].contains(&l)).collect();
        candidates.shuffle(&mut rng);
        while counts[l] < 2 {
            let i = candidates.pop().expect("at least two points per topic");
            train_rows[i].push(l);
            counts[l] += 1;
        }
    }
    let gt_rows: Vec<Vec<usize>> = train_rows.into_iter().chain(ideal[n_train..].iter().cloned()).collect();
    let ground_truth = SparseBinaryMatrix::from_rows(n_labels, gt_rows)?;

    // Texts. Points mix query-side facet tokens with common tokens.
    let points: Vec<TextRecord> = (0..n_points)
        .map(|i| {
            let topic = point_topic[i];
            let words: Vec<String> = (0..spec.tokens_per_text)
                .map(|_| {
                    let common = vocab.common(topic);
                    if !common.is_empty() && rng.random::<f64>() < spec.common_token_rate {
                        draw(&mut rng, common)
                    } else {
                        let &l = ideal[i].choose(&mut rng).expect("non-empty ideal set");
                        draw(&mut rng, vocab.query_side(topic, l % lpt))
                    }
                })
                .collect();
            TextRecord::new(i, words.join(" "))
        })
        .collect();
    let labels: Vec<TextRecord> = (0..n_labels)
        .map(|l| {
            let topic = label_topic[l];
            let words: Vec<String> = (0..spec.tokens_per_text)
                .map(|_| {
                    let common = vocab.common(topic);
                    if !common.is_empty() && rng.random::<f64>() < spec.common_token_rate {
                        draw(&mut rng, common)
                    } else {
                        draw(&mut rng, vocab.label_side(topic, l % lpt))
                    }
                })
                .collect();
            TextRecord::new(l, words.join(" "))
        })
        .collect();

    let m = t * spec.anchors_per_topic;
    let mut anchor_sets = Vec::with_capacity(spec.anchor_sets);
    let mut anchor_topics = Vec::with_capacity(spec.anchor_sets);
    for k in 0..spec.anchor_sets {
        let a_topic: Vec<usize> = (0..m).map(|a| a / spec.anchors_per_topic).collect();
        let a_facet: Vec<usize> = (0..m).map(|a| (a % spec.anchors_per_topic) % lpt).collect();
        let anchors: Vec<TextRecord> = (0..m)
            .map(|a| {
                let (topic, f) = (a_topic[a], a_facet[a]);
                let words: Vec<String> = (0..spec.tokens_per_text)
                    .map(|_| {
                        let u = rng.random::<f64>();
                        let common = vocab.common(topic);
                        let c = spec.common_token_rate;
                        if u < c && !common.is_empty() {
                            draw(&mut rng, common)
                        } else if u < c + (1.0 - c) / 2.0 {
                            draw(&mut rng, vocab.query_side(topic, f))
                        } else {
                            draw(&mut rng, vocab.label_side(topic, f))
                        }
                    })
                    .collect();
                TextRecord::new(a, words.join(" "))
            })
            .collect();

        let facet_anchors = |topic: usize, f: usize| -> Vec<usize> {
            let range = topic * spec.anchors_per_topic..(topic + 1) * spec.anchors_per_topic;
            let own: Vec<usize> = range.clone().filter(|&a| a_facet[a] == f).collect();
            if own.is_empty() {
                range.collect()
            } else {
                own
            }
        };
        let link = |rng: &mut ChaCha8Rng, topic: usize, facets: &[usize]| -> Vec<usize> {
            let pool: BTreeSet<usize> = facets.iter().flat_map(|&f| facet_anchors(topic, f)).collect();
            let pool: Vec<usize> = pool.into_iter().collect();
            let k = spec.edges_per_item.min(pool.len());
            let mut edges: Vec<usize> = rand::seq::index::sample(rng, pool.len(), k).into_iter().map(|j| pool[j]).collect();
            for e in &mut edges {
                if rng.random::<f64>() < spec.graph_noise_rate {
                    *e = if t > 1 {
                        let other = (topic + rng.random_range(1..t)) % t;
                        other * spec.anchors_per_topic + rng.random_range(0..spec.anchors_per_topic)
                    } else {
                        rng.random_range(0..m)
                    };
                }
            }
            edges
        };
        // A point links to the anchors of one of its facets only, so that
        // co-occurrence stays within facets apart from noise.
        let point_rows: Vec<Vec<usize>> = (0..n_points)
            .map(|i| {
                let &l = ideal[i].choose(&mut rng).expect("non-empty ideal set");
                link(&mut rng, point_topic[i], &[l % lpt])
            })
            .collect();
        let label_rows: Vec<Vec<usize>> = (0..n_labels).map(|l| link(&mut rng, label_topic[l], &[l % lpt])).collect();
        anchor_sets.push(AnchorSet {
            name: SyntheticSpec::anchor_set_name(k),
            anchors,
            point_graph: AnchorGraph::new(SparseBinaryMatrix::from_rows(m, point_rows)?),
            label_graph: AnchorGraph::new(SparseBinaryMatrix::from_rows(m, label_rows)?),
        });
        anchor_topics.push(a_topic);
    }

    let corpus = Corpus {
        points,
        labels,
        ground_truth,
        anchor_sets,
    };
    corpus.validate()?;
    let test_ids: Vec<usize> = (n_train..n_points).collect();
    let corpus = corpus.isolate_test_points(&test_ids)?;
    Ok(SyntheticCorpus {
        corpus,
        test_ids,
        point_topic,
        label_topic,
        anchor_topic: anchor_topics,
        tail_labels: tail.into_iter().collect(),
    })
}
