//! One-sided Jacobi SVD (Hestenes) with full orthogonal factors.
//!
//! The working matrix is the tall orientation of the input (`A` when
//! `p >= q`, otherwise `Aᵀ`). Column pairs are rotated until every pair is
//! orthogonal to within [`ORTHOGONALITY_TOL`] relative to the product of
//! their norms. Singular values are the final column norms; the rotations
//! accumulate the right factor of the tall orientation. The remaining factor
//! comes from normalizing the columns and, when it is not square, completing
//! it to a full orthonormal basis.

use nalgebra::{DMatrix, DVector};

use super::Matrix;
use crate::error::{Error, Result};

const ORTHOGONALITY_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// `A = U · diag(σ) · Vᵀ` with `U` p×p, `V` q×q and `σ` of length `min(p, q)`.
#[derive(Clone, Debug)]
pub struct SvdFactorization {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactorization {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rank_tol · σ_max`.
    pub fn numerical_rank(&self, rank_tol: f64) -> usize {
        let cutoff = rank_tol * self.sigma_max();
        self.singular_values
            .iter()
            .take_while(|&&s| s > cutoff && s > 0.0)
            .count()
    }

    /// `U · Σ · Vᵀ` using the first `min(p, q)` columns of each factor.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let mut us = self.u.columns(0, k).into_owned();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        Matrix::wrap(us * self.v.columns(0, k).transpose())
    }
}

/// Full singular value decomposition.
///
/// Deterministic: for each singular triplet the first entry of `u_i` whose
/// magnitude exceeds `1e-12` is non-negative.
pub fn svd(a: &Matrix) -> Result<SvdFactorization> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return Err(Error::Dimension(format!("svd of empty {p}x{q} matrix")));
    }
    let tall = p >= q;
    let mut work = if tall {
        a.as_dmatrix().clone()
    } else {
        a.transpose()
    };
    let n = work.ncols();
    let mut rot = DMatrix::<f64>::identity(n, n);
    jacobi_sweeps(&mut work, Some(&mut rot))?;

    let order = descending_order(&work);
    let sigmas: Vec<f64> = order.iter().map(|&j| work.column(j).norm()).collect();
    let rot = permute_columns(&rot, &order);

    let tiny = f64::MIN_POSITIVE * 1e10;
    let mut left_cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for (&j, &s) in order.iter().zip(&sigmas) {
        if s > tiny {
            left_cols.push(work.column(j) / s);
        } else {
            break;
        }
    }
    let left = complete_basis(&left_cols, work.nrows());

    // Rank-deficient inputs leave zero columns to be filled by the
    // completion; they are still paired with the rotation columns in order.
    let (mut u, mut v) = if tall { (left, rot) } else { (rot, left) };
    let k = sigmas.len();
    for j in 0..k {
        if leading_sign(&u.column(j)) < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    for j in k..u.ncols() {
        if leading_sign(&u.column(j)) < 0.0 {
            u.column_mut(j).neg_mut();
        }
    }
    for j in k..v.ncols() {
        if leading_sign(&v.column(j)) < 0.0 {
            v.column_mut(j).neg_mut();
        }
    }

    Ok(SvdFactorization {
        u: Matrix::wrap(u),
        singular_values: sigmas,
        v: Matrix::wrap(v),
    })
}

/// Singular values only, in descending order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return Ok(Vec::new());
    }
    let mut work = if p >= q {
        a.as_dmatrix().clone()
    } else {
        a.transpose()
    };
    jacobi_sweeps(&mut work, None)?;
    let order = descending_order(&work);
    Ok(order.iter().map(|&j| work.column(j).norm()).collect())
}

fn jacobi_sweeps(g: &mut DMatrix<f64>, mut rot: Option<&mut DMatrix<f64>>) -> Result<()> {
    let m = g.nrows();
    let n = g.ncols();
    if n < 2 {
        return Ok(());
    }
    let mut worst = 0.0;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        worst = 0.0f64;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let (alpha, beta, gamma) = {
                    let data = g.as_slice();
                    let ci = &data[i * m..(i + 1) * m];
                    let cj = &data[j * m..(j + 1) * m];
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut c = 0.0;
                    for (x, y) in ci.iter().zip(cj) {
                        a += x * x;
                        b += y * y;
                        c += x * y;
                    }
                    (a, b, c)
                };
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let ratio = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                worst = worst.max(ratio);
                if ratio <= ORTHOGONALITY_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(g.as_mut_slice(), m, i, j, c, s);
                if let Some(r) = rot.as_deref_mut() {
                    let rn = r.nrows();
                    rotate_columns(r.as_mut_slice(), rn, i, j, c, s);
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual: worst,
    })
}

fn rotate_columns(data: &mut [f64], m: usize, i: usize, j: usize, c: f64, s: f64) {
    debug_assert!(i < j);
    let (head, tail) = data.split_at_mut(j * m);
    let ci = &mut head[i * m..(i + 1) * m];
    let cj = &mut tail[..m];
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

fn descending_order(g: &DMatrix<f64>) -> Vec<usize> {
    let norms: Vec<f64> = (0..g.ncols()).map(|j| g.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..g.ncols()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    order
}

fn permute_columns(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        out.set_column(dst, &m.column(src));
    }
    out
}

fn leading_sign<S>(col: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S>) -> f64
where
    S: nalgebra::RawStorage<f64, nalgebra::Dyn, nalgebra::U1>,
{
    col.iter()
        .find(|x| x.abs() > 1e-12)
        .map(|x| x.signum())
        .unwrap_or(1.0)
}

/// Extends orthonormal `cols` to an orthonormal basis of `R^dim`.
///
/// Each new vector starts from the standard basis vector least represented
/// in the current span and is orthogonalized twice.
pub(crate) fn complete_basis(cols: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    for (j, c) in cols.iter().enumerate().take(dim) {
        q.set_column(j, c);
    }
    let mut filled = cols.len().min(dim);
    let mut row_weight: Vec<f64> = (0..dim)
        .map(|i| (0..filled).map(|j| q[(i, j)] * q[(i, j)]).sum())
        .collect();
    while filled < dim {
        let pick = (0..dim)
            .min_by(|&a, &b| row_weight[a].total_cmp(&row_weight[b]))
            .expect("dim > 0");
        let mut r = DVector::<f64>::zeros(dim);
        r[pick] = 1.0;
        for _ in 0..2 {
            for j in 0..filled {
                let c = q.column(j);
                let d = c.dot(&r);
                r.axpy(-d, &c, 1.0);
            }
        }
        let nr = r.norm();
        r /= nr;
        for (i, w) in row_weight.iter_mut().enumerate() {
            *w += r[i] * r[i];
        }
        q.set_column(filled, &r);
        filled += 1;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orth_err(m: &Matrix) -> f64 {
        let n = m.ncols();
        let g = m.transpose() * m.as_dmatrix() - DMatrix::<f64>::identity(n, n);
        g.abs().max()
    }

    #[test]
    fn identity_and_diagonal() {
        let s = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0]);
        let d = Matrix::from_diagonal(&[1.0, 3.0]);
        let s = svd(&d).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 1.0]);
    }

    #[test]
    fn wide_rank_deficient_has_full_factors() {
        // rank 1, 3x5
        let a = Matrix::from_row_slice(
            3,
            5,
            &[
                1.0, 2.0, 0.0, -1.0, 3.0, //
                2.0, 4.0, 0.0, -2.0, 6.0, //
                -1.0, -2.0, 0.0, 1.0, -3.0,
            ],
        )
        .unwrap();
        let s = svd(&a).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (5, 5));
        assert!(orth_err(&s.u) < 1e-12);
        assert!(orth_err(&s.v) < 1e-12);
        assert!(s.singular_values[1] < 1e-12);
        let err = (s.reconstruct().as_dmatrix() - a.as_dmatrix()).norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let s = svd(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        assert!(orth_err(&s.u) < 1e-14);
        assert!(orth_err(&s.v) < 1e-14);
    }

    #[test]
    fn sign_convention() {
        let a = Matrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -1.0]).unwrap();
        let s = svd(&a).unwrap();
        assert!(s.u[(0, 0)] > 0.0);
        assert!(s.u[(1, 1)] > 0.0);
        assert!((s.reconstruct().as_dmatrix() - a.as_dmatrix()).norm() < 1e-15);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(
            svd(&Matrix::zeros(0, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn completion_of_nothing_is_orthonormal() {
        let q = complete_basis(&[], 4);
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(4, 4))
            .abs()
            .max();
        assert!(err < 1e-15);
    }
}
