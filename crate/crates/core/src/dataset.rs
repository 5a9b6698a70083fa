//! A train corpus plus a held-out test split, and its on-disk directory
//! layout.
//!
//! ```text
//! train_points.txt  test_points.txt  labels.txt   id<TAB>text
//! train_Y.txt       test_Y.txt                    sparse ground truth
//! anchor_sets.txt                                 one set name per line
//! <set>/anchors.txt <set>/point_graph.txt <set>/label_graph.txt
//! ```

use std::path::{Path, PathBuf};

use crate::corpus::{load_texts, save_texts, AnchorSet, Corpus, TextFormat, TextRecord};
use crate::error::{Error, Result};
use crate::graph::AnchorGraph;
use crate::sparse::SparseBinaryMatrix;
use crate::synthetic::SyntheticCorpus;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Corpus,
    pub test_points: Vec<TextRecord>,
    /// Test points × labels.
    pub test_truth: SparseBinaryMatrix,
}

impl Dataset {
    /// Moves `test_ids` out of `corpus`. Remaining points are renumbered in
    /// order, and test points are detached from the anchor graphs first.
    pub fn split(corpus: &Corpus, test_ids: &[usize]) -> Result<Dataset> {
        corpus.validate()?;
        let isolated = corpus.isolate_test_points(test_ids)?;
        let mut is_test = vec![false; corpus.num_points()];
        for &i in test_ids {
            is_test[i] = true;
        }
        let train_ids: Vec<usize> = (0..corpus.num_points()).filter(|&i| !is_test[i]).collect();
        let renumber = |ids: &[usize]| -> Vec<TextRecord> {
            ids.iter()
                .enumerate()
                .map(|(k, &i)| TextRecord::new(k, corpus.points[i].text.clone()))
                .collect()
        };
        let anchor_sets = isolated
            .anchor_sets
            .iter()
            .map(|set| {
                Ok(AnchorSet {
                    name: set.name.clone(),
                    anchors: set.anchors.clone(),
                    point_graph: set.point_graph.select_rows(&train_ids)?,
                    label_graph: set.label_graph.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let train = Corpus {
            points: renumber(&train_ids),
            labels: corpus.labels.clone(),
            ground_truth: corpus.ground_truth.select_rows(&train_ids)?,
            anchor_sets,
        };
        train.validate()?;
        Ok(Dataset {
            train,
            test_points: renumber(test_ids),
            test_truth: corpus.ground_truth.select_rows(test_ids)?,
        })
    }

    pub fn from_synthetic(s: &SyntheticCorpus) -> Result<Dataset> {
        Self::split(&s.corpus, &s.test_ids)
    }

    /// Writes every file of the layout and returns their paths in write order.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        mkdir(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, weighted_too: bool| {
            let p = dir.join(name);
            written.push(p.clone());
            if weighted_too {
                written.push(weighted(&p));
            }
            p
        };
        save_texts(put("train_points.txt", false), &self.train.points)?;
        save_texts(put("test_points.txt", false), &self.test_points)?;
        save_texts(put("labels.txt", false), &self.train.labels)?;
        self.train.ground_truth.save(put("train_Y.txt", false))?;
        self.test_truth.save(put("test_Y.txt", false))?;
        let mut names = String::new();
        for set in &self.train.anchor_sets {
            check_set_name(&set.name)?;
            names.push_str(&set.name);
            names.push('\n');
        }
        let p = put("anchor_sets.txt", false);
        std::fs::write(&p, names).map_err(|e| Error::io(&p, e))?;
        for set in &self.train.anchor_sets {
            mkdir(&dir.join(&set.name))?;
            save_texts(put(&format!("{}/anchors.txt", set.name), false), &set.anchors)?;
            set.point_graph
                .save(put(&format!("{}/point_graph.txt", set.name), set.point_graph.weights().is_some()))?;
            set.label_graph
                .save(put(&format!("{}/label_graph.txt", set.name), set.label_graph.weights().is_some()))?;
        }
        Ok(written)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let mut ds = Self::load_without_anchors(dir)?;
        let p = dir.join("anchor_sets.txt");
        let names = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        for name in names.lines().filter(|l| !l.trim().is_empty()) {
            check_set_name(name)?;
            let sub = dir.join(name);
            ds.train.anchor_sets.push(AnchorSet {
                name: name.to_string(),
                anchors: load_texts(sub.join("anchors.txt"), TextFormat::Tsv)?,
                point_graph: AnchorGraph::load(sub.join("point_graph.txt"))?,
                label_graph: AnchorGraph::load(sub.join("label_graph.txt"))?,
            });
        }
        ds.train.validate()?;
        Ok(ds)
    }

    /// Reads texts and ground truth only. Inference never touches anchors.
    pub fn load_without_anchors(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let train = Corpus {
            points: load_texts(dir.join("train_points.txt"), TextFormat::Tsv)?,
            labels: load_texts(dir.join("labels.txt"), TextFormat::Tsv)?,
            ground_truth: SparseBinaryMatrix::load(dir.join("train_Y.txt"))?,
            anchor_sets: Vec::new(),
        };
        train.validate()?;
        let test_points = load_texts(dir.join("test_points.txt"), TextFormat::Tsv)?;
        let test_truth = SparseBinaryMatrix::load(dir.join("test_Y.txt"))?;
        if test_truth.rows() != test_points.len() || test_truth.cols() != train.num_labels() {
            return Err(Error::Validation(format!(
                "test_Y.txt is {}x{}, expected {}x{}",
                test_truth.rows(),
                test_truth.cols(),
                test_points.len(),
                train.num_labels()
            )));
        }
        Ok(Dataset { train, test_points, test_truth })
    }
}

fn check_set_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("anchor set name `{name}` is not a safe directory name")))
    }
}

fn weighted(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".weights");
    PathBuf::from(s)
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
