//! Sparse Cholesky factorization of symmetric positive definite matrices.
//!
//! The symbolic phase (fill-reducing ordering, elimination tree, pattern of
//! `L`) is computed once per sparsity pattern and shared by every numeric
//! factorization with that pattern. Numeric factorization is the up-looking
//! row-by-row algorithm. Marginal variances come from the selected inverse
//! (Takahashi recursions) restricted to the pattern of `L`.

use std::sync::Arc;

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Lower triangle (diagonal included) of a symmetric pattern in compressed
/// columns. Row indices within a column are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl LowerPattern {
    /// Builds the pattern from per-column row lists. Each list must contain
    /// the diagonal and only rows `>= col`.
    pub fn from_columns(columns: Vec<Vec<usize>>) -> Self {
        let n = columns.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for (j, mut rows) in columns.into_iter().enumerate() {
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.first(), Some(&j), "column {j} must start at its diagonal");
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Position of entry `(row, col)` with `row >= col` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.col_ptr[col];
        let rows = &self.row_idx[start..self.col_ptr[col + 1]];
        rows.binary_search(&row).ok().map(|k| start + k)
    }

    pub fn column(&self, col: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[col]..self.col_ptr[col + 1]]
    }

    pub fn col_range(&self, col: usize) -> std::ops::Range<usize> {
        self.col_ptr[col]..self.col_ptr[col + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    Natural,
    MinimumDegree,
}

/// Minimum-degree elimination ordering on the graph of the pattern.
/// Returns `perm` with `perm[new] = old`. Ties are broken by lowest index,
/// so the ordering is deterministic.
pub fn minimum_degree(pattern: &LowerPattern) -> Vec<usize> {
    let n = pattern.n;
    let words = n.div_ceil(64);
    let mut adj = vec![0u64; n * words];
    let set = |adj: &mut [u64], a: usize, b: usize| adj[a * words + b / 64] |= 1u64 << (b % 64);
    for j in 0..n {
        for &i in pattern.column(j) {
            if i != j {
                set(&mut adj, i, j);
                set(&mut adj, j, i);
            }
        }
    }
    let popcount = |adj: &[u64], a: usize| -> usize {
        adj[a * words..(a + 1) * words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    };
    let mut degree: Vec<usize> = (0..n).map(|a| popcount(&adj, a)).collect();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs = Vec::new();
    let mut row_v = vec![0u64; words];
    for _ in 0..n {
        let v = (0..n)
            .filter(|&a| alive[a])
            .min_by_key(|&a| (degree[a], a))
            .expect("alive node");
        alive[v] = false;
        order.push(v);
        row_v.copy_from_slice(&adj[v * words..(v + 1) * words]);
        nbrs.clear();
        for (w, &bits) in row_v.iter().enumerate() {
            let mut b = bits;
            while b != 0 {
                let t = b.trailing_zeros() as usize;
                nbrs.push(w * 64 + t);
                b &= b - 1;
            }
        }
        for &u in &nbrs {
            let row_u = &mut adj[u * words..(u + 1) * words];
            for (dst, src) in row_u.iter_mut().zip(&row_v) {
                *dst |= *src;
            }
            row_u[u / 64] &= !(1u64 << (u % 64));
            row_u[v / 64] &= !(1u64 << (v % 64));
            degree[u] = popcount(&adj, u);
        }
    }
    order
}

/// Ordering, elimination tree and the pattern of `L` for one sparsity pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    // Upper triangle of P A P' by columns; `c_src` maps to input value positions.
    c_ptr: Vec<usize>,
    c_idx: Vec<usize>,
    c_src: Vec<usize>,
    // Row patterns of L (strictly below the diagonal) in topological order.
    r_ptr: Vec<usize>,
    r_idx: Vec<usize>,
    l_ptr: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(pattern: &LowerPattern, ordering: Ordering) -> Self {
        let n = pattern.n;
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::MinimumDegree => minimum_degree(pattern),
        };
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Permuted upper triangle: entry (i, j) of A lands at (min, max) of
        // (iperm[i], iperm[j]) and is stored in column max.
        let mut counts = vec![0usize; n + 1];
        for j in 0..n {
            for &i in pattern.column(j) {
                let (a, b) = (iperm[i], iperm[j]);
                counts[a.max(b) + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let c_ptr = counts.clone();
        let mut next = counts;
        let mut c_idx = vec![0; pattern.nnz()];
        let mut c_src = vec![0; pattern.nnz()];
        for j in 0..n {
            for p in pattern.col_range(j) {
                let i = pattern.row_idx[p];
                let (a, b) = (iperm[i], iperm[j]);
                let col = a.max(b);
                let slot = next[col];
                next[col] += 1;
                c_idx[slot] = a.min(b);
                c_src[slot] = p;
            }
        }

        // Elimination tree.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for p in c_ptr[k]..c_ptr[k + 1] {
                let mut i = c_idx[p];
                while i != NONE && i < k {
                    let inext = ancestor[i];
                    ancestor[i] = k;
                    if inext == NONE {
                        parent[i] = k;
                    }
                    i = inext;
                }
            }
        }

        // Row patterns via elimination-tree reach.
        let mut r_ptr = Vec::with_capacity(n + 1);
        let mut r_idx = Vec::new();
        let mut mark = vec![NONE; n];
        let mut stack = vec![0; n];
        let mut col_count = vec![1usize; n];
        r_ptr.push(0);
        for k in 0..n {
            let mut top = n;
            mark[k] = k;
            for p in c_ptr[k]..c_ptr[k + 1] {
                let mut i = c_idx[p];
                if i > k {
                    continue;
                }
                let mut len = 0;
                while mark[i] != k {
                    stack[len] = i;
                    len += 1;
                    mark[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    stack[top] = stack[len];
                }
            }
            for &i in &stack[top..n] {
                col_count[i] += 1;
            }
            r_idx.extend_from_slice(&stack[top..n]);
            r_ptr.push(r_idx.len());
        }
        let mut l_ptr = vec![0; n + 1];
        for j in 0..n {
            l_ptr[j + 1] = l_ptr[j] + col_count[j];
        }
        Self {
            n,
            perm,
            c_ptr,
            c_idx,
            c_src,
            r_ptr,
            r_idx,
            l_ptr,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Numeric factorization of the matrix whose lower-triangle values are
    /// given in the order of the analyzed [`LowerPattern`].
    pub fn factor(self: &Arc<Self>, values: &[f64]) -> Result<NumericCholesky> {
        let n = self.n;
        let nnz = self.factor_nnz();
        let mut l_idx = vec![0usize; nnz];
        let mut l_x = vec![0.0; nnz];
        let mut next: Vec<usize> = self.l_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        for k in 0..n {
            for p in self.c_ptr[k]..self.c_ptr[k + 1] {
                x[self.c_idx[p]] += values[self.c_src[p]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &self.r_idx[self.r_ptr[k]..self.r_ptr[k + 1]] {
                let lki = x[i] / l_x[self.l_ptr[i]];
                x[i] = 0.0;
                for p in self.l_ptr[i] + 1..next[i] {
                    x[l_idx[p]] -= l_x[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                l_idx[p] = k;
                l_x[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularPrecision {
                    pivot: self.perm[k],
                });
            }
            let p = next[k];
            next[k] += 1;
            l_idx[p] = k;
            l_x[p] = d.sqrt();
        }
        Ok(NumericCholesky {
            sym: Arc::clone(self),
            l_idx,
            l_x,
        })
    }
}

/// `P A P' = L L'` for one set of numeric values.
#[derive(Debug, Clone)]
pub struct NumericCholesky {
    sym: Arc<SymbolicCholesky>,
    l_idx: Vec<usize>,
    l_x: Vec<f64>,
}

impl NumericCholesky {
    pub fn dim(&self) -> usize {
        self.sym.n
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.sym.n)
            .map(|j| self.l_x[self.sym.l_ptr[j]].ln())
            .sum::<f64>()
    }

    fn lsolve(&self, y: &mut [f64]) {
        let lp = &self.sym.l_ptr;
        for j in 0..self.sym.n {
            y[j] /= self.l_x[lp[j]];
            let yj = y[j];
            for p in lp[j] + 1..lp[j + 1] {
                y[self.l_idx[p]] -= self.l_x[p] * yj;
            }
        }
    }

    fn ltsolve(&self, y: &mut [f64]) {
        let lp = &self.sym.l_ptr;
        for j in (0..self.sym.n).rev() {
            let mut acc = y[j];
            for p in lp[j] + 1..lp[j + 1] {
                acc -= self.l_x[p] * y[self.l_idx[p]];
            }
            y[j] = acc / self.l_x[lp[j]];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let perm = &self.sym.perm;
        let mut y: Vec<f64> = perm.iter().map(|&old| b[old]).collect();
        self.lsolve(&mut y);
        self.ltsolve(&mut y);
        let mut x = vec![0.0; b.len()];
        for (new, &old) in perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Maps standard normal `z` to a draw from `N(0, A^{-1})` by solving
    /// `L' P x = z`.
    pub fn correlate(&self, z: &[f64]) -> Vec<f64> {
        let mut y = z.to_vec();
        self.ltsolve(&mut y);
        let mut x = vec![0.0; z.len()];
        for (new, &old) in self.sym.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    fn lookup(&self, row: usize, col: usize) -> usize {
        let lp = &self.sym.l_ptr;
        let rows = &self.l_idx[lp[col]..lp[col + 1]];
        lp[col]
            + rows
                .binary_search(&row)
                .expect("selected inverse entry outside the factor pattern")
    }

    /// Diagonal of `A^{-1}` (original ordering) from the selected inverse on
    /// the pattern of `L`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.sym.n;
        let lp = &self.sym.l_ptr;
        let mut s = vec![0.0; self.l_x.len()];
        for j in (0..n).rev() {
            let range = lp[j] + 1..lp[j + 1];
            let ljj = self.l_x[lp[j]];
            // Off-diagonal entries of column j, highest row first.
            for pi in range.clone().rev() {
                let i = self.l_idx[pi];
                let mut acc = 0.0;
                for pk in range.clone() {
                    let k = self.l_idx[pk];
                    let (r, c) = if i >= k { (i, k) } else { (k, i) };
                    acc += self.l_x[pk] * s[self.lookup(r, c)];
                }
                s[pi] = -acc / ljj;
            }
            let mut acc = 0.0;
            for pk in range {
                acc += self.l_x[pk] * s[pk];
            }
            s[lp[j]] = (1.0 / ljj - acc) / ljj;
        }
        let mut diag = vec![0.0; n];
        for (new, &old) in self.sym.perm.iter().enumerate() {
            diag[old] = s[lp[new]];
        }
        diag
    }
}
