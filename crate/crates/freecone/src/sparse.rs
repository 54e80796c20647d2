//! Minimal sparse linear algebra: CSR matrices, signed permutations, and an
//! LSQR least-squares solver.
//!
//! The crate deals almost exclusively with very sparse, highly structured
//! matrices (signed permutations, inclusions, Kronecker products of those),
//! so a small special-purpose CSR type is used throughout; dense
//! factorizations are delegated to `nalgebra` when a problem is small enough
//! to densify.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpMat {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SpMat {
    /// Builds a matrix from triplets, summing duplicates and dropping exact
    /// zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.retain(|&(_, _, v)| v != 0.0);
        trips.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut col_idx: Vec<usize> = Vec::with_capacity(trips.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trips.len());
        let mut rows: Vec<usize> = Vec::with_capacity(trips.len());
        for (r, c, v) in trips {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            if let (Some(&lr), Some(&lc)) = (rows.last(), col_idx.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            col_idx.push(c);
            vals.push(v);
        }
        // Drop entries that cancelled to exactly zero during merging.
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for i in 0..rows.len() {
            if vals[i] != 0.0 {
                keep_rows.push(rows[i]);
                keep_cols.push(col_idx[i]);
                keep_vals.push(vals[i]);
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SpMat { nrows, ncols, row_ptr, col_idx: keep_cols, vals: keep_vals }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SpMat { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_triplets(n, n, d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.vals[k]))
        })
    }

    /// `y += alpha * A x`.
    pub fn mul_vec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] += alpha * acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_acc(x, 1.0, &mut y);
        y
    }

    /// `x += alpha * A^T y`.
    pub fn tr_mul_vec_acc(&self, y: &[f64], alpha: f64, x: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        debug_assert_eq!(x.len(), self.ncols);
        for r in 0..self.nrows {
            let yr = alpha * y[r];
            if yr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                x[self.col_idx[k]] += self.vals[k] * yr;
            }
        }
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols];
        self.tr_mul_vec_acc(y, 1.0, &mut x);
        x
    }

    pub fn transpose(&self) -> SpMat {
        let trips = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        SpMat::from_triplets(self.ncols, self.nrows, trips)
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &SpMat) -> SpMat {
        assert_eq!(self.ncols, rhs.nrows, "matmul shape mismatch");
        let mut trips = Vec::new();
        let mut acc: Vec<f64> = vec![0.0; rhs.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let v = self.vals[k];
                for k2 in rhs.row_ptr[mid]..rhs.row_ptr[mid + 1] {
                    let c = rhs.col_idx[k2];
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += v * rhs.vals[k2];
                }
            }
            for &c in &touched {
                if acc[c] != 0.0 {
                    trips.push((r, c, acc[c]));
                }
                acc[c] = 0.0;
            }
            touched.clear();
        }
        SpMat::from_triplets(self.nrows, rhs.ncols, trips)
    }

    /// `self + alpha * rhs`.
    pub fn add_scaled(&self, rhs: &SpMat, alpha: f64) -> SpMat {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        let mut trips: Vec<(usize, usize, f64)> = self.iter().collect();
        trips.extend(rhs.iter().map(|(r, c, v)| (r, c, alpha * v)));
        SpMat::from_triplets(self.nrows, self.ncols, trips)
    }

    pub fn scale(&self, alpha: f64) -> SpMat {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= alpha;
        }
        out
    }

    /// Left-multiplies by a diagonal matrix: `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> SpMat {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.vals[k] *= d[r];
            }
        }
        out
    }

    /// Right-multiplies by a diagonal matrix: `self * diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> SpMat {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for k in 0..out.vals.len() {
            out.vals[k] *= d[out.col_idx[k]];
        }
        out
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &SpMat) -> SpMat {
        let mut trips = Vec::with_capacity(self.nnz() * rhs.nnz());
        for (r1, c1, v1) in self.iter() {
            for (r2, c2, v2) in rhs.iter() {
                trips.push((r1 * rhs.nrows + r2, c1 * rhs.ncols + c2, v1 * v2));
            }
        }
        SpMat::from_triplets(self.nrows * rhs.nrows, self.ncols * rhs.ncols, trips)
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[&SpMat]) -> SpMat {
        let nrows = blocks.iter().map(|b| b.nrows).sum();
        let ncols = blocks.iter().map(|b| b.ncols).sum();
        let mut trips = Vec::new();
        let (mut ro, mut co) = (0, 0);
        for b in blocks {
            trips.extend(b.iter().map(|(r, c, v)| (r + ro, c + co, v)));
            ro += b.nrows;
            co += b.ncols;
        }
        SpMat::from_triplets(nrows, ncols, trips)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<f64>) -> SpMat {
        let mut trips = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    trips.push((r, c, m[(r, c)]));
                }
            }
        }
        SpMat::from_triplets(m.nrows(), m.ncols(), trips)
    }

    pub fn norm_fro(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Drops entries with absolute value below `tol`.
    pub fn prune(&self, tol: f64) -> SpMat {
        SpMat::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().filter(|&(_, _, v)| v.abs() > tol).collect(),
        )
    }

    /// Flattens entries into a sorted coordinate list keyed by `r * ncols + c`,
    /// for fast sparse dot products between matrices of equal shape.
    pub fn flat_entries(&self) -> Vec<(usize, f64)> {
        self.iter().map(|(r, c, v)| (r * self.ncols + c, v)).collect()
    }
}

/// Dot product of two sorted coordinate lists (as from [`SpMat::flat_entries`]).
pub fn sorted_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// A signed permutation acting on coordinates: `e_j ↦ sign[j] · e_{to[j]}`.
///
/// Signed permutations represent group generators exactly (entries in
/// {−1, 0, 1}), so equality tests and orbit computations on them are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPerm {
    pub to: Vec<usize>,
    pub sign: Vec<f64>,
}

impl SignedPerm {
    pub fn identity(n: usize) -> Self {
        SignedPerm { to: (0..n).collect(), sign: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.to.len()
    }

    pub fn is_identity(&self) -> bool {
        self.to.iter().enumerate().all(|(i, &t)| i == t) && self.sign.iter().all(|&s| s == 1.0)
    }

    /// Applies the permutation to a coordinate vector.
    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (j, &t) in self.to.iter().enumerate() {
            y[t] = self.sign[j] * x[j];
        }
        y
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &SignedPerm) -> SignedPerm {
        assert_eq!(self.dim(), other.dim());
        let n = self.dim();
        let mut to = vec![0usize; n];
        let mut sign = vec![1.0; n];
        for j in 0..n {
            to[j] = self.to[other.to[j]];
            sign[j] = self.sign[other.to[j]] * other.sign[j];
        }
        SignedPerm { to, sign }
    }

    pub fn inverse(&self) -> SignedPerm {
        let n = self.dim();
        let mut to = vec![0usize; n];
        let mut sign = vec![1.0; n];
        for j in 0..n {
            to[self.to[j]] = j;
            sign[self.to[j]] = self.sign[j];
        }
        SignedPerm { to, sign }
    }

    pub fn to_spmat(&self) -> SpMat {
        SpMat::from_triplets(
            self.dim(),
            self.dim(),
            self.to.iter().enumerate().map(|(j, &t)| (t, j, self.sign[j])).collect(),
        )
    }
}

/// A generator action on a space: either an exact signed permutation of the
/// canonical basis, or a general sparse matrix (continuous families,
/// Lie-algebra elements pushed through combinators).
#[derive(Debug, Clone)]
pub enum Action {
    Signed(SignedPerm),
    Dense(SpMat),
}

impl Action {
    pub fn dim(&self) -> usize {
        match self {
            Action::Signed(p) => p.dim(),
            Action::Dense(m) => m.nrows(),
        }
    }

    pub fn to_spmat(&self) -> SpMat {
        match self {
            Action::Signed(p) => p.to_spmat(),
            Action::Dense(m) => m.clone(),
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Action::Signed(p) => p.apply_vec(x),
            Action::Dense(m) => m.mul_vec(x),
        }
    }

    pub fn as_signed(&self) -> Option<&SignedPerm> {
        match self {
            Action::Signed(p) => Some(p),
            Action::Dense(_) => None,
        }
    }
}

/// Abstract linear operator interface for the iterative least-squares solver.
pub trait LinOp {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y += A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x += A^T y`.
    fn apply_t(&self, y: &[f64], x: &mut [f64]);
}

impl LinOp for SpMat {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_acc(x, 1.0, y);
    }
    fn apply_t(&self, y: &[f64], x: &mut [f64]) {
        self.tr_mul_vec_acc(y, 1.0, x);
    }
}

/// Result of an [`lsqr`] solve.
#[derive(Debug, Clone)]
pub struct LsqrResult {
    pub x: Vec<f64>,
    /// Relative residual ‖Ax − b‖ / ‖b‖ (1.0 if b = 0).
    pub rel_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// LSQR (Paige–Saunders) for `min ‖Ax − b‖₂`, starting from `x0` when given.
///
/// Stops when the relative residual estimate drops below `tol` or after
/// `max_iter` iterations.
pub fn lsqr(op: &dyn LinOp, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> LsqrResult {
    let m = op.nrows();
    let n = op.ncols();
    assert_eq!(b.len(), m);

    // Shift by the initial guess: solve A dx = b − A x0.
    let mut u: Vec<f64> = b.to_vec();
    let mut x = vec![0.0; n];
    let base = x0.map(|x0| {
        let mut ax0 = vec![0.0; m];
        op.apply(x0, &mut ax0);
        for i in 0..m {
            u[i] -= ax0[i];
        }
        x0.to_vec()
    });

    let norm_b = norm2(&u);
    if norm_b == 0.0 {
        let x_final = base.unwrap_or(x);
        return LsqrResult { x: x_final, rel_residual: 0.0, iterations: 0, converged: true };
    }

    let mut beta = norm_b;
    scale_in_place(&mut u, 1.0 / beta);
    let mut v = vec![0.0; n];
    op.apply_t(&u, &mut v);
    let mut alpha = norm2(&v);
    if alpha > 0.0 {
        scale_in_place(&mut v, 1.0 / alpha);
    }
    let mut w = v.clone();
    let mut phi_bar = beta;
    let mut rho_bar = alpha;
    let mut iterations = 0;
    let mut converged = alpha == 0.0;

    for it in 0..max_iter {
        iterations = it + 1;
        // Bidiagonalization step.
        let mut u_next = vec![0.0; m];
        op.apply(&v, &mut u_next);
        for i in 0..m {
            u_next[i] -= alpha * u[i];
        }
        beta = norm2(&u_next);
        if beta > 0.0 {
            scale_in_place(&mut u_next, 1.0 / beta);
        }
        u = u_next;

        let mut v_next = vec![0.0; n];
        op.apply_t(&u, &mut v_next);
        for i in 0..n {
            v_next[i] -= beta * v[i];
        }
        let alpha_next = norm2(&v_next);
        if alpha_next > 0.0 {
            scale_in_place(&mut v_next, 1.0 / alpha_next);
        }

        // Givens rotation.
        let rho = (rho_bar * rho_bar + beta * beta).sqrt();
        let c = rho_bar / rho;
        let s = beta / rho;
        let theta = s * alpha_next;
        rho_bar = -c * alpha_next;
        let phi = c * phi_bar;
        phi_bar *= s;

        for i in 0..n {
            x[i] += (phi / rho) * w[i];
            w[i] = v_next[i] - (theta / rho) * w[i];
        }
        v = v_next;
        alpha = alpha_next;

        if phi_bar / norm_b <= tol {
            converged = true;
            break;
        }
        if alpha == 0.0 {
            converged = true;
            break;
        }
    }

    if let Some(base) = base {
        for i in 0..n {
            x[i] += base[i];
        }
    }
    // Exact residual for reporting.
    let mut r = b.to_vec();
    let mut ax = vec![0.0; m];
    op.apply(&x, &mut ax);
    for i in 0..m {
        r[i] -= ax[i];
    }
    let bn = norm2(b);
    let rel = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    LsqrResult { x, rel_residual: rel, iterations, converged }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn scale_in_place(x: &mut [f64], a: f64) {
    for v in x {
        *v *= a;
    }
}

/// Orthonormal basis of the kernel of a symmetric positive semidefinite Gram
/// matrix, using a relative eigenvalue threshold.
pub fn gram_nullspace(g: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    assert_eq!(g.nrows(), g.ncols());
    // The symmetric eigendecomposition occasionally mispairs eigenvectors on
    // matrices with clustered spectra, so use the SVD and verify each
    // candidate kernel vector against the matrix itself.
    let n = g.nrows();
    let svd = nalgebra::SVD::new(g.clone(), false, true);
    let v_t = match svd.v_t {
        Some(v) => v,
        None => return DMatrix::zeros(n, 0),
    };
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
    let thr = rel_tol * smax.max(1.0);
    let mut cols = Vec::new();
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] <= thr {
            let q = v_t.row(i).transpose();
            if (g * &q).norm() <= 10.0 * thr.max(1e-12) {
                cols.push(q);
            }
        }
    }
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, q) in cols.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

/// Orthonormal basis of the kernel of a general dense matrix via SVD.
pub fn dense_nullspace(c: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = c.ncols();
    if c.nrows() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let svd = nalgebra::SVD::new(c.clone(), false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverDiverged("SVD failed to produce V^T".into()))?;
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
    let thr = rel_tol * smax.max(1.0);
    let mut cols = Vec::new();
    for i in 0..n {
        let s = if i < svd.singular_values.len() { svd.singular_values[i] } else { 0.0 };
        if s <= thr {
            cols.push(i);
        }
    }
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        out.set_column(j, &v_t.row(i).transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_roundtrip_and_products() {
        let a = SpMat::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -3.0), (0, 2, 1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![4.0, -3.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, 2.0]), vec![1.0, -6.0, 3.0]);
        let at = a.transpose();
        assert_eq!(at.mul_vec(&[1.0, 2.0]), vec![1.0, -6.0, 3.0]);
        let prod = a.matmul(&at); // 2x2
        let d = prod.to_dense();
        assert_eq!(d[(0, 0)], 10.0);
        assert_eq!(d[(1, 1)], 9.0);
    }

    #[test]
    fn signed_perm_compose_inverse() {
        let p = SignedPerm { to: vec![1, 0, 2], sign: vec![1.0, -1.0, 1.0] };
        let q = p.compose(&p.inverse());
        assert!(q.is_identity());
        let x = p.apply_vec(&[3.0, 4.0, 5.0]);
        assert_eq!(x, vec![-4.0, 3.0, 5.0]);
    }

    #[test]
    fn lsqr_solves_small_system() {
        let a = SpMat::from_triplets(
            3,
            2,
            vec![(0, 0, 3.0), (1, 0, 4.0), (2, 1, 1.0), (0, 1, -6.0), (1, 1, -8.0)],
        );
        // Consistent system: b = A [1, 0.5]
        let b = a.mul_vec(&[1.0, 0.5]);
        let res = lsqr(&a, &b, None, 1e-12, 100);
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-8 && (res.x[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn gram_nullspace_finds_kernel() {
        // G = M^T M with M = [1 1 0; 0 0 1] has kernel span{(1,-1,0)/sqrt2}.
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let g = m.transpose() * &m;
        let ns = gram_nullspace(&g, 1e-10);
        assert_eq!(ns.ncols(), 1);
        let v = ns.column(0);
        assert!((v[0] + v[1]).abs() < 1e-10 && v[2].abs() < 1e-10);
    }
}
