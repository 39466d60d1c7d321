//! Up-looking sparse Cholesky factorization of symmetric positive-definite
//! matrices, after the CSparse formulation.

/// Symmetric matrix given by its upper triangle in compressed-column form:
/// column `k` lists rows `i <= k`.
#[derive(Clone, Debug)]
pub struct UpperCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Lower-triangular factor `L` with `A = L L^T`. The diagonal entry is the
/// first one stored in each column.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn elimination_tree(a: &UpperCsc) -> Vec<usize> {
    let n = a.n;
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for p in a.col_ptr[k]..a.col_ptr[k + 1] {
            let mut i = a.row_idx[p];
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `L` (excluding the diagonal), written to
/// `stack[top..]` in topological order; returns `top`.
fn row_pattern(
    a: &UpperCsc,
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = a.n;
    let mut top = n;
    mark[k] = k;
    for p in a.col_ptr[k]..a.col_ptr[k + 1] {
        let mut i = a.row_idx[p];
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
    top
}

impl CholeskyFactor {
    /// Returns `None` if the matrix is not numerically positive definite.
    pub fn factor(a: &UpperCsc) -> Option<Self> {
        let n = a.n;
        let parent = elimination_tree(a);
        let mut stack = vec![0; n];
        let mut mark = vec![usize::MAX; n];

        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = row_pattern(a, k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut col_ptr = vec![0; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();

        mark.fill(usize::MAX);
        let mut x = vec![0.0; n];
        for k in 0..n {
            let top = row_pattern(a, k, &parent, &mut stack, &mut mark);
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let i = a.row_idx[p];
                if i <= k {
                    x[i] += a.values[p];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }
        Some(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Overwrites `b` with `A^-1 b`.
    /// Solves for `K` right-hand sides at once, stored node-major; each
    /// factor entry is read once for all of them.
    pub fn solve_block_in_place<const K: usize>(&self, b: &mut [[f64; K]]) {
        for j in 0..self.n {
            let start = self.col_ptr[j];
            let d = self.values[start];
            let mut bj = b[j];
            for v in bj.iter_mut() {
                *v /= d;
            }
            b[j] = bj;
            for p in start + 1..self.col_ptr[j + 1] {
                let l = self.values[p];
                let row = &mut b[self.row_idx[p]];
                for c in 0..K {
                    row[c] -= l * bj[c];
                }
            }
        }
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut s = b[j];
            for p in start + 1..self.col_ptr[j + 1] {
                let l = self.values[p];
                let row = &b[self.row_idx[p]];
                for c in 0..K {
                    s[c] -= l * row[c];
                }
            }
            let d = self.values[start];
            for v in s.iter_mut() {
                *v /= d;
            }
            b[j] = s;
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        for j in 0..self.n {
            let start = self.col_ptr[j];
            b[j] /= self.values[start];
            let bj = b[j];
            for p in start + 1..self.col_ptr[j + 1] {
                b[self.row_idx[p]] -= self.values[p] * bj;
            }
        }
        for j in (0..self.n).rev() {
            let start = self.col_ptr[j];
            let mut s = b[j];
            for p in start + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * b[self.row_idx[p]];
            }
            b[j] = s / self.values[start];
        }
    }
}
