//! Compressed-row sparse matrices with a two-phase (pattern, then values)
//! assembly scheme.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Zero-valued operator whose pattern couples every pair of DOFs that
    /// appear together in some block. Rows are sorted.
    pub fn from_blocks<'a, I>(n: usize, blocks: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut block_ptr = vec![0usize];
        let mut block_dofs = Vec::new();
        for b in blocks {
            block_dofs.extend_from_slice(b);
            block_ptr.push(block_dofs.len());
        }
        // row -> blocks incidence
        let mut inc_ptr = vec![0usize; n + 1];
        for &d in &block_dofs {
            inc_ptr[d + 1] += 1;
        }
        for i in 0..n {
            inc_ptr[i + 1] += inc_ptr[i];
        }
        let mut fill = inc_ptr.clone();
        let mut inc = vec![0u32; block_dofs.len()];
        for b in 0..block_ptr.len() - 1 {
            for &d in &block_dofs[block_ptr[b]..block_ptr[b + 1]] {
                inc[fill[d]] = b as u32;
                fill[d] += 1;
            }
        }
        drop(fill);

        let mut marker = vec![u32::MAX; n];
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0u32);
        let mut col_idx: Vec<u32> = Vec::new();
        let mut row = Vec::new();
        for i in 0..n {
            row.clear();
            for &b in &inc[inc_ptr[i]..inc_ptr[i + 1]] {
                let b = b as usize;
                for &d in &block_dofs[block_ptr[b]..block_ptr[b + 1]] {
                    if marker[d] != i as u32 {
                        marker[d] = i as u32;
                        row.push(d as u32);
                    }
                }
            }
            row.sort_unstable();
            col_idx.extend_from_slice(&row);
            assert!(col_idx.len() < u32::MAX as usize, "too many nonzeros for 32-bit indices");
            row_ptr.push(col_idx.len() as u32);
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
            symmetric: true,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n as u32).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    /// Builds a matrix from (possibly repeated) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0u32; n + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j as u32);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self {
            n,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        };
        m.symmetric = m.is_structurally_symmetric() && m.symmetry_defect() == 0.0;
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }
    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }
    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let a = self.row_ptr[i] as usize;
        let b = self.row_ptr[i + 1] as usize;
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n)
            .map(|i| (self.row_ptr[i + 1] - self.row_ptr[i]) as usize)
            .max()
            .unwrap_or(0)
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let a = self.row_ptr[i] as usize;
        let b = self.row_ptr[i + 1] as usize;
        self.col_idx[a..b]
            .binary_search(&(j as u32))
            .ok()
            .map(|k| a + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds a dense row-major `dofs.len() x dofs.len()` block. Every entry
    /// must be inside the pattern.
    pub fn add_block(&mut self, dofs: &[usize], local: &[f64]) {
        let k = dofs.len();
        debug_assert_eq!(local.len(), k * k);
        for (a, &i) in dofs.iter().enumerate() {
            let start = self.row_ptr[i] as usize;
            let end = self.row_ptr[i + 1] as usize;
            let cols = &self.col_idx[start..end];
            for (b, &j) in dofs.iter().enumerate() {
                let v = local[a * k + b];
                if v == 0.0 {
                    continue;
                }
                let p = cols
                    .binary_search(&(j as u32))
                    .unwrap_or_else(|_| panic!("entry ({i}, {j}) outside the sparsity pattern"));
                self.values[start + p] += v;
            }
        }
    }

    /// Adds `w * c c^T` over the given DOFs.
    pub fn add_outer(&mut self, dofs: &[usize], c: &[f64], w: f64) {
        for (a, &i) in dofs.iter().enumerate() {
            let start = self.row_ptr[i] as usize;
            let end = self.row_ptr[i + 1] as usize;
            let cols = &self.col_idx[start..end];
            for (b, &j) in dofs.iter().enumerate() {
                let p = cols
                    .binary_search(&(j as u32))
                    .unwrap_or_else(|_| panic!("entry ({i}, {j}) outside the sparsity pattern"));
                // c[a] * c[b] first keeps the result exactly symmetric
                self.values[start + p] += w * (c[a] * c[b]);
            }
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c as usize];
            }
            y[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply(x, &mut y);
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            if x[i] == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            let mut r = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                r += v * x[*c as usize];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, _) = self.row(i);
            cols.iter().all(|&j| self.position(j as usize, i).is_some())
        })
    }

    /// Largest `|a_ij - a_ji|` over the stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d = d.max((v - self.get(j as usize, i)).abs());
            }
        }
        d
    }

    /// `alpha * self + beta * other`, on the union of both patterns.
    pub fn linear_combination(&self, alpha: f64, other: &SparseOperator, beta: f64) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        row_ptr.push(0u32);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(u32::MAX);
                let jb = cb.get(q).copied().unwrap_or(u32::MAX);
                if ja == jb {
                    col_idx.push(ja);
                    values.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                } else if ja < jb {
                    col_idx.push(ja);
                    values.push(alpha * va[p]);
                    p += 1;
                } else {
                    col_idx.push(jb);
                    values.push(beta * vb[q]);
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len() as u32);
        }
        Ok(Self {
            n: self.n,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric && other.symmetric,
        })
    }

    /// Principal submatrix on the given ascending index set.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let mut map = vec![u32::MAX; self.n];
        for (k, &i) in indices.iter().enumerate() {
            map[i] = k as u32;
        }
        let mut row_ptr = Vec::with_capacity(indices.len() + 1);
        row_ptr.push(0u32);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in indices {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let m = map[j as usize];
                if m != u32::MAX {
                    col_idx.push(m);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len() as u32);
        }
        Self {
            n: indices.len(),
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    /// Symmetric elimination of fixed DOFs: rows and columns are zeroed, the
    /// diagonal set to one, and `rhs` adjusted so the solution takes the
    /// prescribed `values` on fixed DOFs.
    pub fn eliminate_dirichlet(&mut self, fixed: &[bool], values: &[f64], rhs: &mut [f64]) {
        for i in 0..self.n {
            if fixed[i] {
                continue;
            }
            let a = self.row_ptr[i] as usize;
            let b = self.row_ptr[i + 1] as usize;
            for k in a..b {
                let j = self.col_idx[k] as usize;
                if fixed[j] {
                    rhs[i] -= self.values[k] * values[j];
                    self.values[k] = 0.0;
                }
            }
        }
        for i in 0..self.n {
            if !fixed[i] {
                continue;
            }
            let a = self.row_ptr[i] as usize;
            let b = self.row_ptr[i + 1] as usize;
            for k in a..b {
                let j = self.col_idx[k] as usize;
                self.values[k] = if j == i { 1.0 } else { 0.0 };
            }
            if self.position(i, i).is_none() {
                panic!("diagonal entry ({i}, {i}) missing from the pattern");
            }
            rhs[i] = values[i];
        }
    }

    /// Dense row-major copy; only for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i * self.n + j as usize] = v;
            }
        }
        d
    }

    /// Matrix Market coordinate format. Symmetric operators store their lower
    /// triangle.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        let sym = self.symmetric;
        let kind = if sym { "symmetric" } else { "general" };
        writeln!(s, "%%MatrixMarket matrix coordinate real {kind}").unwrap();
        let entries: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .map(move |(&j, &v)| (i, j as usize, v))
                    .filter(move |&(i, j, _)| !sym || j <= i)
                    .collect::<Vec<_>>()
            })
            .collect();
        writeln!(s, "{} {} {}", self.n, self.n, entries.len()).unwrap();
        for (i, j, v) in entries {
            writeln!(s, "{} {} {:?}", i + 1, j + 1, v).unwrap();
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
