use std::ops::Range;

use crate::error::{Error, Result};

/// Compressed sparse row layout of a square `n x n` pattern.
///
/// Columns within a row are strictly ascending. Entries are addressed by
/// their position in CSR order, which is also the order of any per-entry
/// value vector used with this pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rows: Vec<usize>,
}

impl SparsePattern {
    /// Builds the pattern from arbitrary `(row, col)` entries. Duplicates are merged.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut entries: Vec<(usize, usize)> = entries.into_iter().collect();
        for &(r, c) in &entries {
            if r >= n || c >= n {
                return Err(Error::NodeOutOfRange { node: r.max(c), n });
            }
        }
        entries.sort_unstable();
        entries.dedup();
        let mut row_ptr = vec![0; n + 1];
        for &(r, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let (rows, cols) = entries.into_iter().unzip();
        Ok(Self {
            n,
            row_ptr,
            cols,
            rows,
        })
    }

    /// Both orientations of every undirected edge, optionally with the diagonal.
    pub fn from_undirected(n: usize, edges: &[(usize, usize)], self_loops: bool) -> Result<Self> {
        let mut entries = Vec::with_capacity(edges.len() * 2 + if self_loops { n } else { 0 });
        for &(u, v) in edges {
            entries.push((u, v));
            entries.push((v, u));
        }
        if self_loops {
            entries.extend((0..n).map(|i| (i, i)));
        }
        Self::from_entries(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    #[inline]
    pub fn row_of(&self, e: usize) -> usize {
        self.rows[e]
    }

    #[inline]
    pub fn col_of(&self, e: usize) -> usize {
        self.cols[e]
    }

    pub fn entry_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn entry_cols(&self) -> &[usize] {
        &self.cols
    }

    /// Position of entry `(r, c)` if present.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row_range(r);
        self.cols[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn has_diagonal_entries(&self) -> bool {
        (0..self.nnz()).any(|e| self.rows[e] == self.cols[e])
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }
}
