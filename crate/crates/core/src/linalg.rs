//! Internal linear-algebra support: a CSR sparse symmetric matrix, a Lanczos
//! eigensolver for its leading eigenpairs, and small graph utilities.
//!
//! Dense solves go through nalgebra. Lanczos is used where only a handful of
//! extremal eigenpairs of a large kernel matrix are needed; it runs with full
//! reorthogonalization and a deterministic start vector, so results are
//! reproducible bit-for-bit across runs.

use crate::dynamics::splitmix64;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Row-compressed sparse symmetric matrix.
#[derive(Debug, Clone)]
pub(crate) struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row (column, value) lists.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            out[i] = acc;
        }
    }

    /// Scales to `D^a M D^a` for a diagonal `d` (entrywise `d_i^a m_ij d_j^a`).
    pub fn scale_sym(&mut self, d_pow: &[f64]) {
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            for k in lo..hi {
                self.values[k] *= d_pow[i] * d_pow[self.col_idx[k]];
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).1.iter().sum::<f64>())
            .collect()
    }

    /// Connected components of the nonzero pattern (assumed symmetric).
    /// Returns a component label per node.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (cols, _) = self.row(i);
                for &c in cols {
                    if label[c] == usize::MAX {
                        label[c] = next;
                        stack.push(c);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Leading `k` eigenpairs (descending by eigenvalue) of a symmetric operator
/// given through its matvec. Deterministic start vector; full
/// reorthogonalization; restarts until the Ritz residuals converge.
pub(crate) fn lanczos_top_k<F>(
    n: usize,
    k: usize,
    matvec: F,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    assert!(k >= 1);
    if k >= n {
        return Err(Error::Numeric(format!(
            "lanczos requested {k} pairs of an {n}-dim operator; use a dense solver"
        )));
    }
    // Deterministic pseudo-random start vector.
    let mut q: Vec<f64> = (0..n)
        .map(|i| {
            let bits = splitmix64(0x51ED_5EED ^ (i as u64));
            (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    normalize(&mut q);

    let max_dim = n.min((6 * k + 60).max(160));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // betas[j] couples basis[j] and basis[j+1]
    let mut w = vec![0.0; n];

    loop {
        // One Lanczos step.
        let j = basis.len();
        basis.push(q.clone());
        matvec(&basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        alphas.push(alpha);
        for (wi, qi) in w.iter_mut().zip(&basis[j]) {
            *wi -= alpha * qi;
        }
        if j > 0 {
            let beta_prev = betas[j - 1];
            for (wi, qi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= beta_prev * qi;
            }
        }
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = norm(&w);
        let dim = basis.len();
        let breakdown = beta < 1e-14;
        let out_of_room = dim == max_dim || dim == n;
        if !breakdown && !out_of_room {
            betas.push(beta);
            q = w.iter().map(|&v| v / beta).collect();
            if dim < k + 2 {
                continue; // not enough Ritz pairs yet
            }
        }

        // Ritz pairs from the tridiagonal matrix.
        let mut t = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            t[(i, i)] = alphas[i];
            if i + 1 < dim {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        let beta_last = if breakdown || out_of_room { 0.0 } else { beta };
        let converged = dim >= k
            && order
                .iter()
                .take(k)
                .all(|&jj| beta_last * eig.eigenvectors[(dim - 1, jj)].abs() <= tol);
        if converged || breakdown || out_of_room {
            if dim < k {
                return Err(Error::Numeric(
                    "lanczos broke down before finding enough pairs".into(),
                ));
            }
            if !converged && !breakdown && dim < n {
                return Err(Error::Numeric(format!(
                    "lanczos did not converge within {max_dim} iterations"
                )));
            }
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            for &jj in order.iter().take(k) {
                values.push(eig.eigenvalues[jj]);
                let mut v = vec![0.0; n];
                for (b, row) in basis.iter().enumerate() {
                    let c = eig.eigenvectors[(b, jj)];
                    for (vi, ri) in v.iter_mut().zip(row) {
                        *vi += c * ri;
                    }
                }
                normalize(&mut v);
                vectors.push(v);
            }
            return Ok((values, vectors));
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        for v in a.iter_mut() {
            *v /= n;
        }
    }
}

/// All eigenpairs of a dense symmetric matrix, descending. Returns
/// `(values, vectors)` with vectors as columns of the second matrix.
pub(crate) fn dense_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (out_col, &src_col) in order.iter().enumerate() {
        vectors.set_column(out_col, &eig.eigenvectors.column(src_col));
    }
    (values, vectors)
}

/// Fixes eigenvector sign: first entry with magnitude above `1e-12 * max`
/// becomes positive. Makes output reproducible across solvers.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max == 0.0 {
        return;
    }
    for &x in v.iter() {
        if x.abs() > 1e-12 * max {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Real parts of all eigenvalues of a dense square matrix, descending by
/// real part.
pub(crate) fn dense_eigenvalues_real_parts(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let schur = m.try_schur(1e-12, 100_000).ok_or_else(|| {
        Error::Numeric("Schur decomposition did not converge".into())
    })?;
    let complex = schur.complex_eigenvalues();
    let mut re: Vec<f64> = complex.iter().map(|c| c.re).collect();
    re.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(re)
}

/// Orthonormal basis completion: given unit `u`, returns `count` vectors
/// orthonormal to `u` and each other, generated from a seeded stream.
pub(crate) fn random_orthonormal_complement(
    u: &[f64],
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    let mut out = Vec::with_capacity(count);
    let mut ctr = 0u64;
    while out.len() < count {
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let bits = splitmix64(seed ^ ctr.wrapping_mul(0x9E37).wrapping_add(i as u64));
                (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        ctr += 1;
        for b in &basis {
            let c = dot(b, &v);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            for x in v.iter_mut() {
                *x /= nv;
            }
            basis.push(v.clone());
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn lanczos_matches_dense_on_random_symmetric() {
        for seed in 0..5 {
            let n = 40;
            let m = random_symmetric(n, seed);
            let (dense_vals, _) = dense_symmetric_eigen(m.clone());
            let (lz_vals, lz_vecs) =
                lanczos_top_k(n, 5, |x, out| {
                    let xv = DVector::from_column_slice(x);
                    let y = &m * xv;
                    out.copy_from_slice(y.as_slice());
                }, 1e-10)
                .unwrap();
            for i in 0..5 {
                assert!(
                    (dense_vals[i] - lz_vals[i]).abs() < 1e-8,
                    "seed {seed} pair {i}: {} vs {}",
                    dense_vals[i],
                    lz_vals[i]
                );
            }
            // Residual check ‖Av - λv‖ small.
            for (lam, v) in lz_vals.iter().zip(&lz_vecs) {
                let xv = DVector::from_column_slice(v);
                let r = &m * &xv - xv.clone() * *lam;
                assert!(r.norm() < 1e-7);
            }
        }
    }

    #[test]
    fn csr_matvec_and_components() {
        // Two blocks: {0,1} and {2}.
        let m = CsrMatrix::from_rows(vec![
            vec![(0, 1.0), (1, 2.0)],
            vec![(0, 2.0), (1, 1.0)],
            vec![(2, 3.0)],
        ]);
        let mut out = vec![0.0; 3];
        m.matvec(&[1.0, 1.0, 1.0], &mut out);
        assert_eq!(out, vec![3.0, 3.0, 3.0]);
        let labels = m.components();
        assert_eq!(labels[0], labels[1]);
        assert_ne!(labels[0], labels[2]);
    }

    #[test]
    fn sign_fix_is_idempotent() {
        let mut v = vec![-0.3, 0.9, -0.1];
        fix_sign(&mut v);
        assert!(v[0] > 0.0);
        let w = v.clone();
        fix_sign(&mut v);
        assert_eq!(v, w);
    }

    #[test]
    fn schur_eigenvalues_of_stochastic_two_state() {
        let m = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let vals = dense_eigenvalues_real_parts(m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-10);
        assert!((vals[1] - 0.8).abs() < 1e-10);
    }

    #[test]
    fn complement_is_orthonormal_to_u() {
        let u = {
            let mut u = vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
            let n = norm(&u);
            for x in u.iter_mut() {
                *x /= n;
            }
            u
        };
        let basis = random_orthonormal_complement(&u, 3, 11);
        for (i, b) in basis.iter().enumerate() {
            assert!(dot(b, &u).abs() < 1e-10);
            assert!((norm(b) - 1.0).abs() < 1e-10);
            for c in basis.iter().skip(i + 1) {
                assert!(dot(b, c).abs() < 1e-10);
            }
        }
    }
}
