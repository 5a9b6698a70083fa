//! Row-compressed binary matrices and the text interchange format used for
//! ground truth, anchor graphs and predictions.
//!
//! The format is the one used by the public extreme-classification
//! repositories: a header line `R C`, then exactly `R` lines of
//! space-separated `col:val` pairs. Binary matrices treat any listed pair as
//! present; real-valued companions (edge weights, prediction scores) keep the
//! value.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A sparse 0/1 matrix stored as sorted column lists per row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseBinaryMatrix {
    rows: usize,
    cols: usize,
    row_index: Vec<Vec<usize>>,
}

impl SparseBinaryMatrix {
    /// An all-zero matrix.
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_index: vec![Vec::new(); rows],
        }
    }

    /// Builds a matrix from per-row column lists. Lists may be unsorted and
    /// contain duplicates; both are normalized away.
    pub fn from_rows(cols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_index = rows;
        for row in &mut row_index {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= cols {
                    return Err(Error::OutOfRange {
                        what: "column",
                        index: last,
                        bound: cols,
                    });
                }
            }
        }
        Ok(Self {
            rows: row_index.len(),
            cols,
            row_index,
        })
    }

    /// Builds a matrix from `(row, col)` pairs.
    pub fn from_pairs(
        rows: usize,
        cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut lists = vec![Vec::new(); rows];
        for (r, c) in pairs {
            if r >= rows {
                return Err(Error::OutOfRange {
                    what: "row",
                    index: r,
                    bound: rows,
                });
            }
            lists[r].push(c);
        }
        Self::from_rows(cols, lists)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sorted column indices of row `r`.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_index[r]
    }

    pub fn row_lists(&self) -> &[Vec<usize>] {
        &self.row_index
    }

    pub fn nnz(&self) -> usize {
        self.row_index.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_index
            .get(r)
            .is_some_and(|row| row.binary_search(&c).is_ok())
    }

    /// Iterates `(row, col)` pairs in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_index
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&c| (r, c)))
    }

    /// Number of entries in each column.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for row in &self.row_index {
            for &c in row {
                counts[c] += 1;
            }
        }
        counts
    }

    pub fn transpose(&self) -> Self {
        let mut lists = vec![Vec::new(); self.cols];
        for (r, c) in self.iter() {
            lists[c].push(r);
        }
        // Row-major iteration already yields sorted lists.
        Self {
            rows: self.cols,
            cols: self.rows,
            row_index: lists,
        }
    }

    /// Element-wise OR of two matrices of equal shape.
    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "union")?;
        let rows = self
            .row_index
            .iter()
            .zip(&other.row_index)
            .map(|(a, b)| merge_sorted(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            row_index: rows,
        })
    }

    /// True when every entry of `self` is also an entry of `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .iter()
                .all(|(r, c)| other.row(r).binary_search(&c).is_ok())
    }

    /// Replaces the columns of row `r`.
    pub fn set_row(&mut self, r: usize, mut cols: Vec<usize>) -> Result<()> {
        if r >= self.rows {
            return Err(Error::OutOfRange {
                what: "row",
                index: r,
                bound: self.rows,
            });
        }
        cols.sort_unstable();
        cols.dedup();
        if let Some(&last) = cols.last() {
            if last >= self.cols {
                return Err(Error::OutOfRange {
                    what: "column",
                    index: last,
                    bound: self.cols,
                });
            }
        }
        self.row_index[r] = cols;
        Ok(())
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.rows {
                return Err(Error::OutOfRange {
                    what: "row",
                    index: r,
                    bound: self.rows,
                });
            }
            out.push(self.row_index[r].clone());
        }
        Ok(Self {
            rows: out.len(),
            cols: self.cols,
            row_index: out,
        })
    }

    fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.rows,
                actual: other.rows,
            });
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.cols,
                actual: other.cols,
            });
        }
        Ok(())
    }

    /// Parses the `R C` + rows text format.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let (header, body) = split_header(text, source)?;
        let (rows, cols) = header;
        let mut lists = Vec::with_capacity(rows);
        for (i, line) in body.iter().enumerate() {
            let mut row = Vec::new();
            for pair in line.split_whitespace() {
                let (col, _val) = parse_pair(pair, source, i + 2)?;
                if col >= cols {
                    return Err(Error::OutOfRange {
                        what: "column",
                        index: col,
                        bound: cols,
                    });
                }
                row.push(col);
            }
            lists.push(row);
        }
        Self::from_rows(cols, lists)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serializes with sorted columns and value `1`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for row in &self.row_index {
            let mut first = true;
            for c in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{c}:1");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Serializes real-valued sparse rows (`col:val`) in the same layout.
///
/// Values are written with Rust's shortest round-tripping float formatting,
/// so the output is a pure function of the input bits.
pub fn format_real_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> String {
    let mut out = format!("{} {}\n", rows.len(), cols);
    for row in rows {
        let mut first = true;
        for (c, v) in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{c}:{v}");
        }
        out.push('\n');
    }
    out
}

/// Parses real-valued sparse rows. Column order is preserved as written.
pub fn parse_real_rows(text: &str, source: &str) -> Result<(usize, Vec<Vec<(usize, f64)>>)> {
    let ((_, cols), body) = split_header(text, source)?;
    let mut rows = Vec::with_capacity(body.len());
    for (i, line) in body.iter().enumerate() {
        let mut row = Vec::new();
        for pair in line.split_whitespace() {
            let (col, val) = parse_pair(pair, source, i + 2)?;
            if col >= cols {
                return Err(Error::OutOfRange {
                    what: "column",
                    index: col,
                    bound: cols,
                });
            }
            row.push((col, val));
        }
        rows.push(row);
    }
    Ok((cols, rows))
}

fn split_header<'a>(text: &'a str, source: &str) -> Result<((usize, usize), Vec<&'a str>)> {
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.trim_end_matches('\r')).collect();
    if lines.is_empty() || lines[0].trim().is_empty() {
        return Err(Error::parse(format!("{source}:1"), "missing `rows cols` header"));
    }
    let header = lines.remove(0);
    let mut parts = header.split_whitespace();
    let parse_dim = |p: Option<&str>| -> Result<usize> {
        p.ok_or_else(|| Error::parse(format!("{source}:1"), "header needs two integers"))?
            .parse::<usize>()
            .map_err(|e| Error::parse(format!("{source}:1"), format!("bad header: {e}")))
    };
    let rows = parse_dim(parts.next())?;
    let cols = parse_dim(parts.next())?;
    if parts.next().is_some() {
        return Err(Error::parse(format!("{source}:1"), "header has extra fields"));
    }
    // A terminating newline yields one trailing empty element.
    if lines.len() == rows + 1 && lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.len() != rows {
        return Err(Error::parse(
            source.to_string(),
            format!("header declares {rows} rows but body has {}", lines.len()),
        ));
    }
    Ok(((rows, cols), lines))
}

fn parse_pair(pair: &str, source: &str, line_no: usize) -> Result<(usize, f64)> {
    let loc = || format!("{source}:{line_no}");
    let (c, v) = pair
        .split_once(':')
        .ok_or_else(|| Error::parse(loc(), format!("expected col:val, got `{pair}`")))?;
    let col = c
        .parse::<usize>()
        .map_err(|e| Error::parse(loc(), format!("bad column `{c}`: {e}")))?;
    let val = v
        .parse::<f64>()
        .map_err(|e| Error::parse(loc(), format!("bad value `{v}`: {e}")))?;
    Ok((col, val))
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
