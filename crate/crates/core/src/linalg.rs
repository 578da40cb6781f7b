//! Dense complex matrix helpers used by the GSVD construction.
//!
//! Only a handful of primitives are needed: a thin SVD with a fixed
//! (descending) ordering, completion of a partial orthonormal basis, and a
//! tolerance-based rank count. The SVD itself is delegated to `nalgebra`.

use std::fs;
use std::path::Path;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Dense complex matrix. Storage order is nalgebra's; the row-major order
/// of the on-disk format is handled by [`MatrixFile`].
pub type ComplexMatrix = DMatrix<Complex64>;

/// Default relative tolerance for factorization residual checks.
pub const DEFAULT_FACTOR_TOL: f64 = 1e-10;
/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Thin singular value decomposition `M = U diag(s) V^H`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: ComplexMatrix,
    /// Singular values, descending.
    pub s: Vec<f64>,
    /// `cols x k` with orthonormal columns.
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.adjoint()
    }
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Thin SVD with singular values sorted in descending order.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd {
            u: ComplexMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: ComplexMatrix::zeros(cols, 0),
        });
    }
    let fm = faer::Mat::<Complex64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = fm.thin_svd().map_err(|_| Error::NoConvergence { rows, cols })?;
    let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| fs[j].re.total_cmp(&fs[i].re));

    let s = order.iter().map(|&i| fs[i].re).collect();
    let u = ComplexMatrix::from_fn(rows, k, |r, c| fu[(r, order[c])]);
    let v = ComplexMatrix::from_fn(cols, k, |r, c| fv[(r, order[c])]);
    Ok(Svd { u, s, v })
}

/// Frobenius norm of `M^H M - I`.
pub fn orthonormality_residual(m: &ComplexMatrix) -> f64 {
    let n = m.ncols();
    let gram = m.adjoint() * m;
    (gram - ComplexMatrix::identity(n, n)).norm()
}

/// Completes the first `k` columns of `q` (assumed orthonormal) to a full set
/// of `q.ncols()` orthonormal columns. Columns past `k` are overwritten.
pub fn orthonormal_completion(q: &ComplexMatrix, k: usize) -> Result<ComplexMatrix> {
    let (n, m) = q.shape();
    if m > n {
        return Err(Error::DimensionMismatch(format!(
            "cannot place {m} orthonormal columns in dimension {n}"
        )));
    }
    if k > m {
        return Err(Error::DimensionMismatch(format!(
            "{k} designated columns but only {m} columns"
        )));
    }
    let residual = orthonormality_residual(&q.columns(0, k).into_owned());
    if residual > 1e-8 {
        return Err(Error::NotOrthonormal { residual });
    }

    let mut out = q.clone();
    for j in k..m {
        // Pick the standard basis vector with the largest component outside
        // the span built so far; ties resolve to the lowest index.
        let mut best: Option<(f64, nalgebra::DVector<Complex64>)> = None;
        for l in 0..n {
            let mut cand = nalgebra::DVector::<Complex64>::zeros(n);
            cand[l] = Complex64::new(1.0, 0.0);
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for i in 0..j {
                    let col = out.column(i);
                    let proj = col.dotc(&cand);
                    cand.axpy(-proj, &col, Complex64::new(1.0, 0.0));
                }
            }
            let norm = cand.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("n >= 1 when m > k");
        out.set_column(j, &(cand / Complex64::new(norm, 0.0)));
    }
    Ok(out)
}

/// Number of entries of `s` strictly greater than `tol * max(s, 1e-300)`.
/// `s` must be sorted descending.
pub fn rank_with_tol(s: &[f64], tol: f64) -> usize {
    let largest = s.first().copied().unwrap_or(0.0).max(1e-300);
    s.iter().filter(|&&v| v > tol * largest).count()
}

/// `log2 det(M)` for a Hermitian positive definite `M`.
pub fn log2_det_hpd(m: &ComplexMatrix) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    Ok((0..m.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() * 2.0 / std::f64::consts::LN_2)
}

/// On-disk JSON representation: `{"rows", "cols", "re", "im"}` with row-major
/// real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                re.push(m[(r, c)].re);
                im.push(m[(r, c)].im);
            }
        }
        MatrixFile { rows, cols, re, im }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let len = self.rows * self.cols;
        if self.re.len() != len || self.im.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix needs {len} entries, got re={} im={}",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        let m = ComplexMatrix::from_fn(self.rows, self.cols, |r, c| {
            let k = r * self.cols + c;
            Complex64::new(self.re[k], self.im[k])
        });
        if !is_finite(&m) {
            return Err(Error::NonFinite);
        }
        Ok(m)
    }
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: MatrixFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.to_matrix()
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<()> {
    let text = serde_json::to_string(&MatrixFile::from_matrix(m)).expect("finite matrix serializes");
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uni = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        ComplexMatrix::from_fn(rows, cols, |_, _| Complex64::new(uni(), uni()))
    }

    #[test]
    fn svd_of_block_with_repeated_unit_singular_values() {
        // rows of a 6x6 unitary: singular values are exactly {1, 1, 1}
        let full = svd(&random_matrix(6, 6, 11)).unwrap().u;
        let mut block = full.rows(0, 3).into_owned();
        // mix in a contraction on the last row so the values are {1, 1, 0.5}
        block.row_mut(2).scale_mut(0.5);
        let dec = svd(&block).unwrap();
        assert!((dec.s[0] - 1.0).abs() < 1e-13 && (dec.s[1] - 1.0).abs() < 1e-13);
        assert!((dec.s[2] - 0.5).abs() < 1e-13);
        assert!((dec.reconstruct() - &block).norm() < 1e-13);
    }

    #[test]
    fn svd_identity() {
        let d = svd(&ComplexMatrix::identity(2, 2)).unwrap();
        assert!((d.s[0] - 1.0).abs() < 1e-14 && (d.s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_zero() {
        let d = svd(&ComplexMatrix::zeros(3, 2)).unwrap();
        assert_eq!(d.s, vec![0.0, 0.0]);
    }

    #[test]
    fn svd_random_reconstructs() {
        for (rows, cols, seed) in [(4, 3, 1), (3, 4, 2), (6, 6, 3), (1, 5, 4)] {
            let m = random_matrix(rows, cols, seed);
            let d = svd(&m).unwrap();
            let scale = m.norm().max(1.0);
            assert!((d.reconstruct() - &m).norm() <= 1e-10 * scale);
            assert!(orthonormality_residual(&d.u) < 1e-10);
            assert!(orthonormality_residual(&d.v) < 1e-10);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            assert!(d.s.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = ComplexMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(svd(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn completion_of_first_basis_vector() {
        let mut q = ComplexMatrix::zeros(2, 2);
        q[(0, 0)] = Complex64::new(1.0, 0.0);
        let out = orthonormal_completion(&q, 1).unwrap();
        assert_eq!(out.column(0), q.column(0));
        assert!(out[(0, 1)].norm() < 1e-15);
        assert!((out[(1, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn completion_leaves_unitary_alone() {
        let u = svd(&random_matrix(3, 3, 9)).unwrap().u;
        let out = orthonormal_completion(&u, 3).unwrap();
        assert_eq!(out, u);
    }

    #[test]
    fn completion_random_five_by_three() {
        let u = svd(&random_matrix(5, 1, 11)).unwrap().u;
        let mut q = ComplexMatrix::zeros(5, 3);
        q.set_column(0, &u.column(0));
        let out = orthonormal_completion(&q, 1).unwrap();
        assert!(orthonormality_residual(&out) < 1e-10);
        assert_eq!(out.column(0), q.column(0));
    }

    #[test]
    fn completion_rejects_non_orthonormal() {
        let mut q = ComplexMatrix::zeros(3, 2);
        q[(0, 0)] = Complex64::new(2.0, 0.0);
        assert!(matches!(
            orthonormal_completion(&q, 1),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn rank_counts() {
        assert_eq!(rank_with_tol(&[1.0, 1.0], 1e-12), 2);
        assert_eq!(rank_with_tol(&[1.0, 0.0], 1e-12), 1);
        assert_eq!(rank_with_tol(&[1.0, 1e-13], 1e-12), 1);
        assert_eq!(rank_with_tol(&[0.0, 0.0], 1e-12), 0);
    }

    #[test]
    fn log_det_of_diagonal() {
        let mut m = ComplexMatrix::identity(3, 3);
        m[(1, 1)] = Complex64::new(4.0, 0.0);
        m[(2, 2)] = Complex64::new(2.0, 0.0);
        assert!((log2_det_hpd(&m).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_file_round_trip() {
        let m = random_matrix(2, 3, 5);
        let file = MatrixFile::from_matrix(&m);
        assert_eq!(file.re[1], m[(0, 1)].re);
        assert_eq!(file.to_matrix().unwrap(), m);
        let bad = MatrixFile { rows: 2, cols: 2, re: vec![0.0; 4], im: vec![0.0; 3] };
        assert!(bad.to_matrix().is_err());
    }

    proptest::proptest! {
        #[test]
        fn svd_factors_orthonormal(rows in 1usize..7, cols in 1usize..7, seed in 0u64..1000) {
            let m = random_matrix(rows, cols, seed);
            let d = svd(&m).unwrap();
            proptest::prop_assert!(orthonormality_residual(&d.u) < 1e-10);
            proptest::prop_assert!(orthonormality_residual(&d.v) < 1e-10);
            proptest::prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            proptest::prop_assert!((d.reconstruct() - &m).norm() <= 1e-10 * m.norm().max(1.0));
        }

        #[test]
        fn completion_is_orthonormal(n in 1usize..7, k_frac in 0.0f64..1.0, seed in 0u64..1000) {
            let k = ((n as f64) * k_frac) as usize;
            let base = svd(&random_matrix(n, n, seed)).unwrap().u;
            let mut q = ComplexMatrix::zeros(n, n);
            for j in 0..k {
                q.set_column(j, &base.column(j));
            }
            let out = orthonormal_completion(&q, k).unwrap();
            proptest::prop_assert!(orthonormality_residual(&out) < 1e-10);
        }
    }
}
