//! Minimal complex CSR matrix support for the vectorized Liouvillian.
//!
//! The superoperator is D^2 x D^2 but carries only a handful of entries per
//! row, and its symmetrized sparsity pattern decomposes into disconnected
//! components (excitation-coherence sectors). Everything the solver and the
//! correlation stepper need is assembly from triplets, matrix-vector products,
//! reachability on the pattern, and dense gathering of a sub-block.

use ndarray::Array2;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets; duplicate entries are summed,
    /// exact zeros after summation are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, C64)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                // close out a zero entry left by cancellation
                if let Some(&tail) = data.last() {
                    if tail == C64::new(0.0, 0.0) {
                        data.pop();
                        indices.pop();
                        let (lr, _) = last.unwrap();
                        indptr[lr + 1] -= 1;
                    }
                }
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        if let Some(&tail) = data.last() {
            if tail == C64::new(0.0, 0.0) {
                data.pop();
                indices.pop();
                let (lr, _) = last.unwrap();
                indptr[lr + 1] -= 1;
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[C64]) {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        (&self.indices[lo..hi], &self.data[lo..hi])
    }

    /// y = A x
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Indices reachable from `seeds` by BFS over the undirected pattern of
    /// A + A^T. Requires a square matrix.
    pub fn reachable_from(&self, seeds: &[usize]) -> Vec<usize> {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        // adjacency of A + A^T in CSR form
        let mut deg = vec![0usize; n];
        for r in 0..n {
            let (cols, _) = self.row(r);
            for &c in cols {
                if c != r {
                    deg[r] += 1;
                    deg[c] += 1;
                }
            }
        }
        let mut adj_ptr = vec![0usize; n + 1];
        for i in 0..n {
            adj_ptr[i + 1] = adj_ptr[i] + deg[i];
        }
        let mut adj = vec![0usize; adj_ptr[n]];
        let mut fill = adj_ptr.clone();
        for r in 0..n {
            let (cols, _) = self.row(r);
            for &c in cols {
                if c != r {
                    adj[fill[r]] = c;
                    fill[r] += 1;
                    adj[fill[c]] = r;
                    fill[c] += 1;
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(v) = stack.pop() {
            for &u in &adj[adj_ptr[v]..adj_ptr[v + 1]] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        (0..n).filter(|&i| seen[i]).collect()
    }

    /// Gather the dense sub-block A[rows, rows] (square selection).
    pub fn gather_dense(&self, rows: &[usize]) -> Array2<C64> {
        let m = rows.len();
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &r) in rows.iter().enumerate() {
            pos[r] = k;
        }
        let mut out = Array2::zeros((m, m));
        for (k, &r) in rows.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if pos[c] != usize::MAX {
                    out[(k, pos[c])] += v;
                }
            }
        }
        out
    }

    /// Gather the sparse sub-block A[rows, rows] as a new CSR matrix.
    pub fn gather_csr(&self, rows: &[usize]) -> CsrMatrix {
        let m = rows.len();
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &r) in rows.iter().enumerate() {
            pos[r] = k;
        }
        let mut triplets = Vec::new();
        for (k, &r) in rows.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if pos[c] != usize::MAX {
                    triplets.push((k, pos[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(m, m, triplets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn assembly_sums_duplicates_and_drops_zeros() {
        let m = CsrMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, c(1.0)), (0, 0, c(2.0)), (1, 1, c(1.0)), (1, 1, c(-1.0))],
        );
        assert_eq!(m.nnz(), 1);
        let (cols, vals) = m.row(0);
        assert_eq!(cols, &[0]);
        assert_eq!(vals[0], c(3.0));
        assert_eq!(m.row(1).0.len(), 0);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 1, C64::new(0.0, 1.0)),
                (1, 0, c(2.0)),
                (2, 2, c(-1.0)),
                (1, 2, c(0.5)),
            ],
        );
        let x = vec![c(1.0), c(2.0), c(3.0)];
        let y = m.matvec(&x);
        assert_eq!(y[0], C64::new(0.0, 2.0));
        assert_eq!(y[1], c(3.5));
        assert_eq!(y[2], c(-3.0));
    }

    #[test]
    fn reachability_splits_components() {
        // two blocks: {0,1} and {2}
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 1, c(1.0)), (2, 2, c(1.0))]);
        assert_eq!(m.reachable_from(&[0]), vec![0, 1]);
        assert_eq!(m.reachable_from(&[2]), vec![2]);
    }

    #[test]
    fn gather_dense_selects_block() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, c(1.0)), (0, 2, c(5.0)), (2, 0, c(6.0)), (2, 2, c(2.0))],
        );
        let d = m.gather_dense(&[0, 2]);
        assert_eq!(d[(0, 0)], c(1.0));
        assert_eq!(d[(0, 1)], c(5.0));
        assert_eq!(d[(1, 0)], c(6.0));
        assert_eq!(d[(1, 1)], c(2.0));
    }
}
