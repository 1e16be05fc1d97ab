//! Dense real linear algebra on a finite-valued matrix newtype.

mod svd;
pub mod text;

use std::ops::{Add, Deref, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use svd::{singular_values, svd, SvdFactorization};

/// Relative cutoff below which a singular value counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Dense real matrix whose entries are all finite.
///
/// Dereferences to [`nalgebra::DMatrix`] for read-only access. Zero-sized
/// shapes are allowed so that empty blocks of a partition are representable.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                rows,
                cols,
                len: entries.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        for (j, col) in m.column_iter().enumerate() {
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        Ok(Matrix(m))
    }

    /// Wraps a matrix produced by arithmetic on finite matrices.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|x| x.is_finite()), "non-finite result");
        Matrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Matrix::wrap(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `rows x cols` matrix with `diag` on its main diagonal.
    pub fn rect_diagonal(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = DMatrix::zeros(rows, cols);
        for (i, d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = *d;
        }
        Matrix::wrap(m)
    }

    /// `u · vᵀ`.
    pub fn outer(u: &DVector<f64>, v: &DVector<f64>) -> Self {
        Matrix::wrap(u * v.transpose())
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn t(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix::wrap(&self.0 * c)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "vector of length {} against {}x{} matrix",
                x.len(),
                self.rows(),
                self.cols()
            )));
        }
        Ok(&self.0 * x)
    }

    /// Row `i` as a column vector.
    pub fn row_vector(&self, i: usize) -> DVector<f64> {
        self.0.row(i).transpose()
    }

    /// Stacks vectors as the rows of a matrix.
    pub fn from_rows(rows: &[DVector<f64>], cols: usize) -> Result<Self> {
        let mut m = DMatrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            m.set_row(i, &r.transpose());
        }
        Matrix::from_dmatrix(m)
    }

    pub fn sub_block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Matrix {
        Matrix(self.0.view((r0, c0), (nr, nc)).into_owned())
    }

    /// Relative spectral-norm distance `‖self − other‖ / max(‖other‖, tiny)`.
    pub fn rel_dist(&self, other: &Matrix) -> Result<f64> {
        let d = spectral_norm(&(self - other))?;
        let n = spectral_norm(other)?;
        Ok(if n > 0.0 { d / n } else { d })
    }
}

impl Deref for Matrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<DMatrix<f64>> for Matrix {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        Matrix::from_dmatrix(m)
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        Matrix::wrap(&self.0 + &rhs.0)
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        Matrix::wrap(&self.0 - &rhs.0)
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix::wrap(&self.0 * &rhs.0)
    }
}

/// Largest singular value; 0 for empty matrices.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Moore-Penrose pseudo-inverse, treating `σ_i <= rank_tol · σ_max` as zero.
pub fn pseudo_inverse(a: &Matrix, rank_tol: f64) -> Result<Matrix> {
    if !(rank_tol >= 0.0) {
        return Err(Error::Domain(format!(
            "rank_tol must be >= 0, got {rank_tol}"
        )));
    }
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return Ok(Matrix::zeros(q, p));
    }
    let f = svd(a)?;
    Ok(pinv_from_svd(&f, rank_tol))
}

pub(crate) fn pinv_from_svd(f: &SvdFactorization, rank_tol: f64) -> Matrix {
    let r = f.numerical_rank(rank_tol);
    let mut vs = f.v.columns(0, r).into_owned();
    for j in 0..r {
        vs.column_mut(j).scale_mut(1.0 / f.singular_values[j]);
    }
    Matrix::wrap(vs * f.u.columns(0, r).transpose())
}

/// `σ_max / σ_min` over all `min(p, q)` singular values.
pub fn condition_number(a: &Matrix, rank_tol: f64) -> Result<f64> {
    let s = singular_values(a)?;
    let (Some(&smax), Some(&smin)) = (s.first(), s.last()) else {
        return Err(Error::Dimension("condition number of empty matrix".into()));
    };
    if smax == 0.0 || smin <= rank_tol * smax {
        return Err(Error::Singular { sigma_min: smin });
    }
    Ok(smax / smin)
}

/// Minimum-norm least-squares solution `A†b`.
pub fn min_norm_solve(a: &Matrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "rhs of length {} against {}x{} matrix",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    let f = svd(a)?;
    let r = f.numerical_rank(DEFAULT_RANK_TOL);
    let mut x = DVector::zeros(a.cols());
    for j in 0..r {
        let coef = f.u.column(j).dot(b) / f.singular_values[j];
        x.axpy(coef, &f.v.column(j), 1.0);
    }
    Ok(x)
}

/// `x / sqrt(1 + x²)`, evaluated on a spectral norm `x >= 0`.
pub fn psi2(norm_f: f64) -> Result<f64> {
    if !(norm_f >= 0.0) || !norm_f.is_finite() {
        return Err(Error::Domain(format!(
            "psi2 needs a finite norm >= 0, got {norm_f}"
        )));
    }
    Ok(norm_f / 1f64.hypot(norm_f))
}

/// `v / ‖v‖`; zero vectors are returned unchanged.
pub fn normalized(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_row_slice(rows, cols, &data).unwrap()
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(matches!(
            Matrix::from_row_slice(1, 2, &[1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            Matrix::from_row_slice(2, 2, &[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pinv_examples() {
        let d = pseudo_inverse(&Matrix::from_diagonal(&[2.0, 4.0]), DEFAULT_RANK_TOL).unwrap();
        assert!((d.as_dmatrix() - Matrix::from_diagonal(&[0.5, 0.25]).as_dmatrix()).norm() < 1e-15);

        let z = pseudo_inverse(&Matrix::zeros(2, 2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(z, Matrix::zeros(2, 2));

        let c = Matrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        let ci = pseudo_inverse(&c, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ci.shape(), (1, 2));
        assert!((ci[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((ci[(0, 1)] - 0.5).abs() < 1e-15);

        assert!(pseudo_inverse(&c, -1.0).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&Matrix::identity(5)).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            (spectral_norm(&Matrix::from_diagonal(&[10.0, 2.0])).unwrap() - 10.0).abs() < 1e-15
        );
        let u = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 3.0 / 2f64.sqrt(), 3.0 / 2f64.sqrt()]);
        let r1 = Matrix::outer(&u, &v);
        assert!((spectral_norm(&r1).unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn condition_number_examples() {
        assert_eq!(
            condition_number(&Matrix::identity(3), DEFAULT_RANK_TOL).unwrap(),
            1.0
        );
        let d = Matrix::from_diagonal(&[10.0, 2.0, 1.0]);
        assert!((condition_number(&d, DEFAULT_RANK_TOL).unwrap() - 10.0).abs() < 1e-14);
        let s = Matrix::from_diagonal(&[1.0, 0.0]);
        match condition_number(&s, DEFAULT_RANK_TOL) {
            Err(Error::Singular { sigma_min }) => assert_eq!(sigma_min, 0.0),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn condition_number_matches_svd_extremes() {
        let a = random(8, 16, 3);
        let f = svd(&a).unwrap();
        let k = condition_number(&a, DEFAULT_RANK_TOL).unwrap();
        let expect = f.sigma_max() / f.sigma_min();
        assert!((k - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn min_norm_solve_examples() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let x = min_norm_solve(&a, &DVector::from_vec(vec![2.0, 0.0])).unwrap();
        assert!((x - DVector::from_vec(vec![2.0, 0.0])).norm() < 1e-15);

        let v = DVector::from_vec(vec![0.3, -1.2, 4.0]);
        let x = min_norm_solve(&Matrix::identity(3), &v).unwrap();
        assert!((x - &v).norm() < 1e-15);

        let a = Matrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        let x = min_norm_solve(&a, &DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);

        assert!(matches!(
            min_norm_solve(&a, &DVector::from_vec(vec![1.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn psi2_examples() {
        assert_eq!(psi2(0.0).unwrap(), 0.0);
        assert!((psi2(1.0).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let big = psi2(1000.0).unwrap();
        assert!(big < 1.0 && 1.0 - big < 1e-6);
        assert!(psi2(1e200).unwrap() <= 1.0);
        assert!(matches!(psi2(-0.1), Err(Error::Domain(_))));
        assert!(psi2(f64::NAN).is_err());
    }
}
