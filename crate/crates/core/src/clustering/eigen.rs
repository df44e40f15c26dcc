//! Smallest eigenpairs of a symmetric matrix.
//!
//! Dense path: full `SymmetricEigen` decomposition. Iterative path: Lanczos
//! with full reorthogonalization on a sparse operator, restarted against the
//! converged vectors so repeated eigenvalues are not missed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Eigenvalues in ascending order and the matching unit eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn dense_smallest(matrix: &DMatrix<f64>, k: usize) -> EigenPairs {
    let n = matrix.nrows();
    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let k = k.min(n);
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    EigenPairs { values, vectors }
}

/// Symmetric matrix in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    /// From `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymmetric { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |r, _| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(|i| self.vals[i] * x[self.cols[i]]).sum()
        })
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.n)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|i| self.vals[i].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[i])] += self.vals[i];
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { tol: 1e-8, max_iter: 5000, seed: 0 }
    }
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let proj = q.dot(v);
            v.axpy(-proj, q, 1.0);
        }
    }
}

fn random_unit(n: usize, rng: &mut impl Rng, against: &[DVector<f64>]) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        orthogonalize(&mut v, against);
        let norm = v.norm();
        if norm > 1e-10 {
            return Some(v / norm);
        }
    }
    None
}

struct LanczosRun {
    values: Vec<f64>,
    vectors: Vec<DVector<f64>>,
    iterations: usize,
}

/// One Lanczos pass on the operator restricted to the complement of `locked`.
fn lanczos_pass(
    op: &SparseSymmetric,
    k: usize,
    locked: &[DVector<f64>],
    options: &LanczosOptions,
    pass: u64,
    budget: usize,
) -> Result<LanczosRun> {
    let n = op.dim();
    let available = n - locked.len();
    let mut rng = rng_for(options.seed, "lanczos", pass);
    let scale = op.norm_bound().max(1.0);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let Some(start) = random_unit(n, &mut rng, locked) else {
        return Ok(LanczosRun { values: vec![], vectors: vec![], iterations: 0 });
    };
    let mut q = start;
    let mut check_at = available.min((2 * k + 10).max(k + 20));
    let mut worst = f64::INFINITY;
    for iter in 0..budget {
        let mut w = op.mul(&q);
        let a = q.dot(&w);
        w.axpy(-a, &q, 1.0);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            w.axpy(-b, prev, 1.0);
        }
        basis.push(q.clone());
        alpha.push(a);
        let mut against: Vec<DVector<f64>> = Vec::with_capacity(locked.len() + basis.len());
        against.extend_from_slice(locked);
        against.extend_from_slice(&basis);
        orthogonalize(&mut w, &against);
        let mut b = w.norm();
        let m = basis.len();
        let exhausted = m >= available;
        let next = if exhausted {
            None
        } else if b > 1e-10 * scale {
            Some(w / b)
        } else {
            // invariant subspace found: continue from a fresh orthogonal direction
            b = 0.0;
            random_unit(n, &mut rng, &against)
        };
        if m >= check_at || exhausted || next.is_none() {
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let ritz = dense_smallest(&t, k);
            worst = (0..ritz.values.len()).map(|i| (b * ritz.vectors[(m - 1, i)]).abs()).fold(0.0, f64::max);
            if worst <= options.tol * scale || exhausted || next.is_none() {
                let vectors = (0..ritz.values.len())
                    .map(|i| {
                        let mut v = DVector::zeros(n);
                        for (j, qj) in basis.iter().enumerate() {
                            v.axpy(ritz.vectors[(j, i)], qj, 1.0);
                        }
                        let norm = v.norm();
                        v / norm
                    })
                    .collect();
                return Ok(LanczosRun { values: ritz.values, vectors, iterations: iter + 1 });
            }
            check_at = available.min(check_at + check_at / 2);
        }
        beta.push(b);
        q = next.expect("checked above");
    }
    Err(Error::NoConvergence { iterations: budget, residual: worst })
}

/// The `k` smallest eigenpairs of `op` by restarted Lanczos.
pub fn lanczos_smallest(op: &SparseSymmetric, k: usize, options: &LanczosOptions) -> Result<EigenPairs> {
    let n = op.dim();
    let k = k.min(n);
    let mut found: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut used = 0usize;
    let mut pass = 0u64;
    loop {
        let locked: Vec<DVector<f64>> = found.iter().map(|(_, v)| v.clone()).collect();
        if locked.len() >= n {
            break;
        }
        let run = lanczos_pass(op, k, &locked, options, pass, options.max_iter - used)?;
        used += run.iterations;
        pass += 1;
        let threshold = if found.len() >= k { found[k - 1].0 } else { f64::INFINITY };
        let improved = run.values.iter().any(|&v| v < threshold - options.tol * op.norm_bound().max(1.0));
        found.extend(run.values.into_iter().zip(run.vectors));
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        found.truncate(k);
        if !improved || used >= options.max_iter {
            if !improved || found.len() >= k {
                break;
            }
            return Err(Error::NoConvergence { iterations: used, residual: f64::NAN });
        }
    }
    let values = found.iter().map(|(v, _)| *v).collect();
    let vectors = DMatrix::from_fn(n, found.len(), |r, c| found[c].1[r]);
    Ok(EigenPairs { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_laplacian(leaves: usize) -> SparseSymmetric {
        let n = leaves + 1;
        let mut t = Vec::new();
        for leaf in 1..n {
            t.push((0, leaf, -1.0));
            t.push((leaf, 0, -1.0));
            t.push((leaf, leaf, 1.0));
            t.push((0, 0, 1.0));
        }
        SparseSymmetric::from_triplets(n, t)
    }

    fn check_orthonormal(v: &DMatrix<f64>) {
        let gram = v.transpose() * v;
        for r in 0..gram.nrows() {
            for c in 0..gram.ncols() {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert!((gram[(r, c)] - expected).abs() < 1e-6, "gram[{r},{c}] = {}", gram[(r, c)]);
            }
        }
    }

    #[test]
    fn lanczos_matches_dense_with_repeated_eigenvalues() {
        let op = star_laplacian(12);
        let dense = dense_smallest(&op.to_dense(), 5);
        let it = lanczos_smallest(&op, 5, &LanczosOptions::default()).unwrap();
        for (a, b) in dense.values.iter().zip(&it.values) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        check_orthonormal(&it.vectors);
        check_orthonormal(&dense.vectors);
    }

    #[test]
    fn lanczos_on_random_sparse_matrix() {
        let mut rng = rng_for(3, "test", 0);
        let n = 120;
        let mut t = Vec::new();
        for _ in 0..400 {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                t.extend([(a, b, -1.0), (b, a, -1.0), (a, a, 1.0), (b, b, 1.0)]);
            }
        }
        let op = SparseSymmetric::from_triplets(n, t);
        let dense = dense_smallest(&op.to_dense(), 8);
        let it = lanczos_smallest(&op, 8, &LanczosOptions { seed: 9, ..Default::default() }).unwrap();
        for (a, b) in dense.values.iter().zip(&it.values) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        check_orthonormal(&it.vectors);
        let residual = &op.to_dense() * &it.vectors - &it.vectors * DMatrix::from_diagonal(&DVector::from_vec(it.values.clone()));
        assert!(residual.amax() < 1e-5);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let op = star_laplacian(40);
        let err = lanczos_smallest(&op, 5, &LanczosOptions { max_iter: 3, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }), "{err}");
    }
}
