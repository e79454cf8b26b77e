//! Compressed sparse row matrices built from triplets.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Triplet buffer that merges duplicates once it grows past a threshold.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    entries: Vec<(usize, usize, f64)>,
    compacted: usize,
}

const COMPACT_AT: usize = 1 << 22;

impl TripletBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
        if self.entries.len() >= COMPACT_AT.max(2 * self.compacted) {
            self.compact();
        }
    }

    fn compact(&mut self) {
        self.entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len() / 2);
        for &(r, c, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        self.compacted = out.len();
        self.entries = out;
    }

    pub fn append(&mut self, mut other: TripletBuilder) {
        self.entries.append(&mut other.entries);
        if self.entries.len() >= COMPACT_AT.max(2 * self.compacted) {
            self.compact();
        }
    }

    pub fn build(mut self, nrows: usize, ncols: usize) -> SparseOperator {
        self.compact();
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &self.entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = self.entries.iter().map(|e| e.1).collect();
        let values = self.entries.iter().map(|e| e.2).collect();
        SparseOperator { nrows, ncols, row_ptr, col_idx, values }
    }
}

/// Sparse matrix in CSR form with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut b = TripletBuilder::new();
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!("entry ({r}, {c}) outside {nrows}×{ncols}")));
            }
            b.push(r, c, v);
        }
        Ok(b.build(nrows, ncols))
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate over (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, c, v) in self.triplets() {
            out[c] += v * x[r];
        }
        out
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut b = TripletBuilder::new();
        for (r, c, v) in self.triplets() {
            b.push(c, r, v);
        }
        b.build(self.ncols, self.nrows)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// x ↦ xᵀ A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// ‖A − Aᵀ‖_F / ‖A‖_F.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        let mut diff = 0.0;
        for (r, c, v) in self.triplets() {
            diff += (v - t.get(r, c)).powi(2);
        }
        // Entries present only in the transpose.
        for (r, c, v) in t.triplets() {
            if self.get(r, c) == 0.0 && v != 0.0 {
                diff += v * v;
            }
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            0.0
        } else {
            diff.sqrt() / norm
        }
    }

    /// Keep rows and columns flagged by the maps (old index → new index).
    pub fn restrict(
        &self,
        rows: &[Option<usize>],
        cols: &[Option<usize>],
        nrows: usize,
        ncols: usize,
    ) -> SparseOperator {
        let mut b = TripletBuilder::new();
        for (r, c, v) in self.triplets() {
            if let (Some(i), Some(j)) = (rows[r], cols[c]) {
                b.push(i, j, v);
            }
        }
        b.build(nrows, ncols)
    }

    pub fn add_scaled(&self, s: f64, other: &SparseOperator) -> SparseOperator {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::new();
        for (r, c, v) in self.triplets() {
            b.push(r, c, v);
        }
        for (r, c, v) in other.triplets() {
            b.push(r, c, s * v);
        }
        b.build(self.nrows, self.ncols)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Debug export: one `row col value` line per stored entry (0-based).
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "% {} {} {}", self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(out, "{r} {c} {v:.17e}");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
