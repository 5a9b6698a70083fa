//! Data model for extreme multi-label corpora: point and label texts, sparse
//! ground truth, and anchor sets with their item-to-anchor graphs.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::AnchorGraph;
use crate::sparse::SparseBinaryMatrix;

/// One text item. Ids are dense positions within their collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub id: usize,
    pub text: String,
}

impl TextRecord {
    pub fn new(id: usize, text: impl Into<String>) -> Self {
        Self {
            id,
            text: text.into(),
        }
    }
}

/// Line layout of a text file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextFormat {
    /// `<id>\t<text>` with ids `0..n` in order.
    #[default]
    Tsv,
    /// One text per line; the line number is the id.
    Raw,
}

/// Parses a text collection from file contents.
pub fn parse_texts(contents: &str, format: TextFormat, source: &str) -> Result<Vec<TextRecord>> {
    let mut out = Vec::new();
    for (i, line) in contents.split_terminator('\n').enumerate() {
        match format {
            TextFormat::Raw => out.push(TextRecord::new(i, line)),
            TextFormat::Tsv => {
                let (id, text) = line.split_once('\t').ok_or_else(|| {
                    Error::parse(format!("{source}:{}", i + 1), "missing tab separator")
                })?;
                let id: usize = id.trim().parse().map_err(|e| {
                    Error::parse(format!("{source}:{}", i + 1), format!("bad id `{id}`: {e}"))
                })?;
                if id != i {
                    return Err(Error::Validation(format!(
                        "{source}:{}: expected id {i}, found {id} (ids must be contiguous from 0)",
                        i + 1
                    )));
                }
                out.push(TextRecord::new(id, text));
            }
        }
    }
    Ok(out)
}

pub fn load_texts(path: impl AsRef<Path>, format: TextFormat) -> Result<Vec<TextRecord>> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_texts(&contents, format, &path.display().to_string())
}

/// Writes records in the TSV layout.
pub fn save_texts(path: impl AsRef<Path>, records: &[TextRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if r.id != i {
            return Err(Error::Validation(format!("record {i} has id {}", r.id)));
        }
        if r.text.contains('\n') {
            return Err(Error::Validation(format!("record {i} contains a newline")));
        }
        out.push_str(&i.to_string());
        out.push('\t');
        out.push_str(&r.text);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// An auxiliary item collection (hyperlinked pages, categories, co-session
/// queries) linked to both points and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub name: String,
    pub anchors: Vec<TextRecord>,
    /// Points × anchors.
    pub point_graph: AnchorGraph,
    /// Labels × anchors.
    pub label_graph: AnchorGraph,
}

impl AnchorSet {
    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }
}

/// A training corpus: point texts, label texts, ground truth and anchor sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub points: Vec<TextRecord>,
    pub labels: Vec<TextRecord>,
    /// Points × labels; only positives are stored.
    pub ground_truth: SparseBinaryMatrix,
    pub anchor_sets: Vec<AnchorSet>,
}

impl Corpus {
    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Checks every cross-field dimension and id invariant.
    pub fn validate(&self) -> Result<()> {
        check_ids(&self.points, "points")?;
        check_ids(&self.labels, "labels")?;
        let n = self.points.len();
        let l = self.labels.len();
        dims(self.ground_truth.rows(), n, "ground truth rows vs points")?;
        dims(self.ground_truth.cols(), l, "ground truth cols vs labels")?;
        let mut names = HashSet::new();
        for set in &self.anchor_sets {
            if set.name.trim().is_empty() {
                return Err(Error::Validation("anchor set with empty name".into()));
            }
            if !names.insert(set.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate anchor set name `{}`",
                    set.name
                )));
            }
            check_ids(&set.anchors, "anchors")?;
            let m = set.anchors.len();
            set.point_graph.validate()?;
            set.label_graph.validate()?;
            dims(set.point_graph.rows(), n, "point graph rows vs points")?;
            dims(set.point_graph.cols(), m, "point graph cols vs anchors")?;
            dims(set.label_graph.rows(), l, "label graph rows vs labels")?;
            dims(set.label_graph.cols(), m, "label graph cols vs anchors")?;
        }
        Ok(())
    }

    /// Detaches the given points from every anchor graph.
    ///
    /// Each test point loses all of its anchor edges, and every anchor whose
    /// text is identical to a test point's text is disconnected from both
    /// graphs of its set. Ground truth is not modified.
    pub fn isolate_test_points(&self, test_ids: &[usize]) -> Result<Corpus> {
        let n = self.points.len();
        if let Some(&bad) = test_ids.iter().find(|&&i| i >= n) {
            return Err(Error::OutOfRange {
                what: "test point",
                index: bad,
                bound: n,
            });
        }
        let mut out = self.clone();
        if test_ids.is_empty() {
            return Ok(out);
        }
        let test_texts: HashSet<&str> = test_ids
            .iter()
            .map(|&i| self.points[i].text.as_str())
            .collect();
        for set in &mut out.anchor_sets {
            for &i in test_ids {
                set.point_graph.clear_row(i);
            }
            let leaked: HashSet<usize> = set
                .anchors
                .iter()
                .filter(|a| test_texts.contains(a.text.as_str()))
                .map(|a| a.id)
                .collect();
            if !leaked.is_empty() {
                set.point_graph.remove_columns(&leaked);
                set.label_graph.remove_columns(&leaked);
            }
        }
        Ok(out)
    }
}

fn check_ids(records: &[TextRecord], what: &str) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.id != i {
            return Err(Error::Validation(format!(
                "{what}: record at position {i} has id {}",
                r.id
            )));
        }
    }
    Ok(())
}

fn dims(actual: usize, expected: usize, context: &'static str) -> Result<()> {
    if actual != expected {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
