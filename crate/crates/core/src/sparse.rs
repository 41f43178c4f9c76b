//! Compressed-row sparse matrices and a deterministic triplet assembler.

use faer::sparse::{SparseColMat, Triplet};

/// Real matrix in compressed-row storage with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Collects `(row, col, value)` contributions; duplicates are summed in
/// insertion order, so assembly is bit-reproducible.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = (usize, usize, f64)>) {
        self.entries.extend(other);
    }

    /// Append `scale * m` with its top-left corner at `(row0, col0)`.
    pub fn add_block(&mut self, row0: usize, col0: usize, m: &SparseMatrix, scale: f64) {
        assert!(row0 + m.nrows <= self.nrows && col0 + m.ncols <= self.ncols);
        for (i, j, v) in m.triplets() {
            self.entries.push((row0 + i, col0 + j, scale * v));
        }
    }

    pub fn build(self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

impl SparseMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        // stable bucket sort by row keeps insertion order within a row
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in &entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of {nrows}x{ncols}");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); entries.len()];
        for (r, c, v) in entries {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(bucket.len());
        let mut values = Vec::with_capacity(bucket.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(s);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `y += alpha A x`
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi += alpha * s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        b.build()
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `alpha A + beta B` over the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        b.add_block(0, 0, self, alpha);
        b.add_block(0, 0, other, beta);
        b.build()
    }

    /// Keep only entries where `keep(row, col)` holds.
    pub fn filtered(&self, mut keep: impl FnMut(usize, usize) -> bool) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            if keep(i, j) {
                b.push(i, j, v);
            }
        }
        b.build()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.triplets()
            .all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * scale)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("valid triplets")
    }

    /// Order-sensitive fingerprint of pattern and values (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.nrows as u64);
        eat(self.ncols as u64);
        for (&c, &v) in self.col_idx.iter().zip(&self.values) {
            eat(c as u64);
            eat(v.to_bits());
        }
        for &r in &self.row_ptr {
            eat(r as u64);
        }
        h
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
