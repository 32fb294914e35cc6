//! Dense helpers for agent-stacked vectors.
//!
//! A stacked vector `x ∈ R^{nm}` stores agent blocks contiguously, so its
//! memory is exactly a column-major `m × n` matrix whose column `i` is `x_i`.

use nalgebra::{Complex, DMatrix, DVector, DVectorView};

/// Views a stacked vector as the `m × n` matrix of agent columns.
pub fn as_blocks(x: &DVector<f64>, m: usize) -> nalgebra::DMatrixView<'_, f64> {
    let n = x.len() / m;
    nalgebra::DMatrixView::from_slice(x.as_slice(), m, n)
}

/// Computes `(W ⊗ I_m) x`.
pub fn mix(w: &DMatrix<f64>, x: &DVector<f64>, m: usize) -> DVector<f64> {
    let y = as_blocks(x, m) * w.transpose();
    DVector::from_vec(y.as_slice().to_vec())
}

/// Dense `W ⊗ I_m`.
pub fn kron_identity(w: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    w.kronecker(&DMatrix::<f64>::identity(m, m))
}

/// Block `i` of a stacked vector.
pub fn block(x: &DVector<f64>, i: usize, m: usize) -> DVectorView<'_, f64> {
    x.rows(i * m, m)
}

/// `Σ_i w_i x_i` over agent blocks.
pub fn weighted_block_sum(x: &DVector<f64>, w: &DVector<f64>, m: usize) -> DVector<f64> {
    as_blocks(x, m) * w
}

/// Arithmetic block mean `(1/n) Σ_i x_i`.
pub fn block_mean(x: &DVector<f64>, m: usize) -> DVector<f64> {
    let n = x.len() / m;
    weighted_block_sum(x, &DVector::from_element(n, 1.0 / n as f64), m)
}

/// `Σ_i x_i`.
pub fn block_sum(x: &DVector<f64>, m: usize) -> DVector<f64> {
    let n = x.len() / m;
    weighted_block_sum(x, &DVector::from_element(n, 1.0), m)
}

/// `v ⊗ θ`: agent `i` block is `v_i θ`.
pub fn outer_stack(v: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let mat = theta * v.transpose();
    DVector::from_vec(mat.as_slice().to_vec())
}

/// `1 ⊗ θ`.
pub fn replicate(theta: &DVector<f64>, n: usize) -> DVector<f64> {
    outer_stack(&DVector::from_element(n, 1.0), theta)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Smallest singular value.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().min()
}

/// Singular values sorted in decreasing order.
pub fn singular_values_desc(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Eigenvalues of a general real matrix (LAPACK `dgeev`).
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if a.is_empty() {
        return Vec::new();
    }
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigenvalues of a non-square matrix");
    let ni = n as i32;
    let mut buf = a.as_slice().to_vec();
    let (mut wr, mut wi) = (vec![0.0; n], vec![0.0; n]);
    let (mut vl, mut vr) = ([0.0; 1], [0.0; 1]);
    let mut info = 0;
    let mut query = [0.0];
    unsafe {
        lapack::dgeev(b'N', b'N', ni, &mut buf, ni, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1, &mut query, -1, &mut info);
    }
    let lwork = (query[0] as usize).max(4 * n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dgeev(b'N', b'N', ni, &mut buf, ni, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1, &mut work, lwork as i32, &mut info);
    }
    assert!(info == 0, "dgeev failed on a {n}×{n} matrix (info = {info})");
    wr.into_iter().zip(wi).map(|(re, im)| Complex::new(re, im)).collect()
}

/// Spectral radius of a general real matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Symmetric eigendecomposition sorted by ascending eigenvalue.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Unit vector spanning the (numerical) null space of `a`, taken as the right
/// singular vector of the smallest singular value. Returns it with that value.
pub fn null_vector(a: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .map(|(k, s)| (k, *s))
        .expect("non-empty matrix");
    (v_t.row(k).transpose(), s)
}

/// Orthonormal basis of the column space, rank decided by `tol · σ_max`.
pub fn range_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > tol * smax.max(f64::MIN_POSITIVE))
        .collect();
    let mut basis = DMatrix::zeros(a.nrows(), cols.len());
    for (j, &k) in cols.iter().enumerate() {
        basis.set_column(j, &u.column(k));
    }
    basis
}

/// Sup-norm.
pub fn norm_inf(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, total);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_matches_dense_kronecker() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.0, 0.5, 0.5, 0.3, 0.3, 0.4]);
        let x = DVector::from_iterator(6, (0..6).map(|k| (k as f64).sin()));
        let dense = kron_identity(&w, 2) * &x;
        assert!((mix(&w, &x, 2) - dense).norm() < 1e-15);
    }

    #[test]
    fn replicate_and_mean_roundtrip() {
        let t = DVector::from_vec(vec![1.0, -2.0]);
        let x = replicate(&t, 4);
        assert_eq!(x.len(), 8);
        assert!((block_mean(&x, 2) - &t).norm() < 1e-15);
        assert!((block_sum(&x, 2) - &t * 4.0).norm() < 1e-15);
    }

    #[test]
    fn null_vector_of_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let (v, s) = null_vector(&a);
        assert!(s < 1e-14);
        assert!((&a * &v).norm() < 1e-14);
    }
}
