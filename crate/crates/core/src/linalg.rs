//! Sparse symmetric linear algebra: CSR storage, reverse Cuthill–McKee
//! ordering, and a banded Cholesky factorization.
//!
//! FEM operators on 2D meshes have small bandwidth after RCM reordering, so
//! a band solver covers both the shifted factorizations inside the
//! eigensolver and the reference elasticity solves without pulling in a
//! general sparse direct solver.

use crate::error::{Error, Result};

/// Symmetric sparse matrix accumulator. Duplicate entries are summed when
/// converting to CSR; insertion order does not affect the result.
#[derive(Debug, Clone)]
pub struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Triplets {
        Triplets {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    pub fn to_csr(&self) -> Csr {
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for &(i, j, v) in &sorted {
            if indptr[i + 1] > 0 && indices.len() == indptr[i + 1] && *indices.last().unwrap() == j
            {
                // same row, same column as previous entry: accumulate
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] = indices.len();
            }
        }
        // Fill empty-row gaps.
        for i in 1..=self.n {
            if indptr[i] == 0 {
                indptr[i] = indptr[i - 1];
            }
        }
        Csr {
            n: self.n,
            indptr,
            indices,
            data,
        }
    }
}

/// Compressed sparse row matrix (square, assumed structurally symmetric).
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn identity(n: usize) -> Csr {
        Csr {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    /// Entry lookup (zero for entries outside the sparsity pattern).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[(i, j)] += v;
            }
        }
        a
    }

    /// A + s·B, requiring equal dimensions.
    pub fn add_scaled(&self, s: f64, b: &Csr) -> Csr {
        assert_eq!(self.n, b.n);
        let mut t = Triplets::new(self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push(i, j, v);
            }
            let (cols, vals) = b.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push(i, j, s * v);
            }
        }
        t.to_csr()
    }

    /// Extract the submatrix with the given (sorted) kept indices.
    pub fn submatrix(&self, keep: &[usize]) -> Csr {
        let mut renum = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            renum[old] = new;
        }
        let mut t = Triplets::new(keep.len());
        for &old_i in keep {
            let (cols, vals) = self.row(old_i);
            for (&j, &v) in cols.iter().zip(vals) {
                if renum[j] != usize::MAX {
                    t.push(renum[old_i], renum[j], v);
                }
            }
        }
        t.to_csr()
    }

    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n {
            for &j in self.row(i).0 {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    /// Symmetric permutation: result[(i, j)] = self[(perm[i], perm[j])].
    pub fn permute(&self, perm: &[usize]) -> Csr {
        let mut inv = vec![0usize; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut t = Triplets::new(self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push(inv[i], inv[j], v);
            }
        }
        t.to_csr()
    }
}

/// Reverse Cuthill–McKee ordering. Returns `perm` with `perm[new] = old`,
/// chosen to shrink the bandwidth of `a.permute(&perm)`.
pub fn rcm_order(a: &Csr) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // Start each component from its lowest-degree unvisited node.
        let Some(start) = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
        else {
            break;
        };
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a.row(u).0.iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factorization of a symmetric positive definite matrix stored as
/// a lower band: `band[i * (bw + 1) + d]` holds `L[i, i - d]`.
pub struct BandCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &Csr) -> Result<BandCholesky> {
        let n = a.n;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    band[i * w + (i - j)] += v;
                }
            }
        }
        // In-place band Cholesky.
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                // L[i][j] = (A[i][j] - sum_k L[i][k] L[j][k]) / L[j][j]
                let mut s = band[i * w + (i - j)];
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= band[i * w + (i - k)] * band[j * w + (j - k)];
                }
                band[i * w + (i - j)] = s / band[j * w];
            }
            let mut d = band[i * w];
            let kmin = lo;
            for k in kmin..i {
                d -= band[i * w + (i - k)] * band[i * w + (i - k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {d:.3e} at row {i})"
                )));
            }
            band[i * w] = d.sqrt();
        }
        Ok(BandCholesky { n, bw, band })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        let mut x = b.to_vec();
        // Forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.band[i * w + (i - j)] * x[j];
            }
            x[i] = s / self.band[i * w];
        }
        // Backward: L' x = y
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = x[i];
            for j in (i + 1)..=hi {
                s -= self.band[j * w + (j - i)] * x[j];
            }
            x[i] = s / self.band[i * w];
        }
        x
    }
}

/// Factorization of a symmetric positive definite CSR matrix behind an RCM
/// reordering; the public face solves in the original numbering.
pub struct ReorderedCholesky {
    perm: Vec<usize>,
    chol: BandCholesky,
}

impl ReorderedCholesky {
    pub fn factor(a: &Csr) -> Result<ReorderedCholesky> {
        let perm = rcm_order(a);
        let chol = BandCholesky::factor(&a.permute(&perm))?;
        Ok(ReorderedCholesky { perm, chol })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let pb: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        let px = self.chol.solve(&pb);
        let mut x = vec![0.0; b.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = px[new];
        }
        x
    }
}
