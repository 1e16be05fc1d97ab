//! Perturbation of the minimum-norm key `k = W†v` under an acute update
//! `W̃ = W + ΔW`.
//!
//! Everything is computed in the reduced frame of `W`: with `W = UΣVᵀ` and
//! `r` its numerical rank,
//!
//! ```text
//! Uᵀ W V  = [A11 0; 0 0]          A11 = diag(σ_1..σ_r)
//! Uᵀ ΔW V = [E11 E12; E21 E22]    Ã11 = A11 + E11
//! ```
//!
//! `ΔW` is acute iff `Ã11` is nonsingular and `E22 = E21 Ã11⁻¹ E12`. For a
//! full-row-rank wide `W` the `E21`/`E22` blocks are empty and every
//! perturbation that keeps `Ã11` nonsingular is acute.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, psi2, spectral_norm, svd, Matrix, DEFAULT_RANK_TOL};

/// Default acuteness tolerance, relative to `max(‖W‖, 1)`.
pub const DEFAULT_ACUTE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ReducedForm {
    pub a11: Matrix,
    pub e11: Matrix,
    pub e12: Matrix,
    pub e21: Matrix,
    pub e22: Matrix,
    pub u1: Matrix,
    pub u2: Matrix,
    pub v1: Matrix,
    pub v2: Matrix,
    pub rank: usize,
    /// Leading `rank` singular values of `W`.
    pub sigmas: Vec<f64>,
}

impl ReducedForm {
    /// `‖W‖ = σ_1`.
    pub fn w_norm(&self) -> f64 {
        self.sigmas[0]
    }

    /// `‖W†‖ = 1 / σ_r`.
    pub fn w_pinv_norm(&self) -> f64 {
        1.0 / self.sigmas[self.rank - 1]
    }

    /// `κ = ‖W‖‖W†‖`.
    pub fn kappa(&self) -> f64 {
        self.w_norm() * self.w_pinv_norm()
    }

    pub fn a11_tilde(&self) -> Matrix {
        &self.a11 + &self.e11
    }

    /// `U [A11 + E11, E12; E21, E22] Vᵀ`, i.e. `W + ΔW` rebuilt from the blocks.
    pub fn reassemble_perturbed(&self) -> Matrix {
        let e = assemble(&self.a11_tilde(), &self.e12, &self.e21, &self.e22);
        let u = hcat(&self.u1, &self.u2);
        let v = hcat(&self.v1, &self.v2);
        &(&u * &e) * &v.t()
    }
}

/// Rotates `ΔW` into the reduced frame of `W`.
pub fn reduced_form(w: &Matrix, dw: &Matrix) -> Result<ReducedForm> {
    if w.shape() != dw.shape() {
        return Err(Error::Dimension(format!(
            "W is {:?} but ΔW is {:?}",
            w.shape(),
            dw.shape()
        )));
    }
    let (p, q) = w.shape();
    let f = svd(w)?;
    let r = f.numerical_rank(DEFAULT_RANK_TOL);
    if r == 0 {
        return Err(Error::DegenerateRank);
    }
    let e = &(&f.u.t() * dw) * &f.v;
    Ok(ReducedForm {
        a11: Matrix::from_diagonal(&f.singular_values[..r]),
        e11: e.sub_block(0, 0, r, r),
        e12: e.sub_block(0, r, r, q - r),
        e21: e.sub_block(r, 0, p - r, r),
        e22: e.sub_block(r, r, p - r, q - r),
        u1: f.u.sub_block(0, 0, p, r),
        u2: f.u.sub_block(0, r, p, p - r),
        v1: f.v.sub_block(0, 0, q, r),
        v2: f.v.sub_block(0, r, q, q - r),
        rank: r,
        sigmas: f.singular_values[..r].to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Acuteness {
    Acute {
        residual: f64,
    },
    NotAcute {
        residual: f64,
    },
    /// `Ã11` is numerically singular, so the perturbation cannot be acute.
    SingularA11 {
        sigma_min: f64,
    },
}

impl Acuteness {
    pub fn is_acute(&self) -> bool {
        matches!(self, Acuteness::Acute { .. })
    }
}

/// Tests `‖E22 − E21 Ã11⁻¹ E12‖ <= tol · max(‖W‖, 1)`.
pub fn check_acute(rf: &ReducedForm, tol: f64) -> Result<Acuteness> {
    let inv = match inverse(&rf.a11_tilde()) {
        Ok((inv, _)) => inv,
        Err(Error::Singular { sigma_min }) => return Ok(Acuteness::SingularA11 { sigma_min }),
        Err(e) => return Err(e),
    };
    let predicted = &(&rf.e21 * &inv) * &rf.e12;
    let residual = spectral_norm(&(&rf.e22 - &predicted))?;
    if residual <= tol * rf.w_norm().max(1.0) {
        Ok(Acuteness::Acute { residual })
    } else {
        Ok(Acuteness::NotAcute { residual })
    }
}

/// `κ̂ = ‖W‖ ‖Ã11⁻¹‖`.
pub fn kappa_hat(rf: &ReducedForm, w_norm: f64) -> Result<f64> {
    let (_, inv_norm) = inverse(&rf.a11_tilde())?;
    Ok(w_norm * inv_norm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaHatBound {
    /// `1 − κ‖E11‖/‖W‖`.
    pub gamma: f64,
    /// `‖W†‖ / γ`, an upper bound on `‖W̃†‖` and on `‖Ã11⁻¹‖`.
    pub bound: f64,
    pub kappa: f64,
    pub w_pinv_norm: f64,
}

/// Pseudo-inverse growth bound `‖W̃†‖ <= ‖W†‖/γ`, valid when `γ > 0`.
pub fn kappa_hat_bound(w: &Matrix, dw: &Matrix) -> Result<KappaHatBound> {
    let rf = reduced_form(w, dw)?;
    kappa_hat_bound_from(&rf)
}

pub(crate) fn kappa_hat_bound_from(rf: &ReducedForm) -> Result<KappaHatBound> {
    let kappa = rf.kappa();
    let gamma = 1.0 - kappa * spectral_norm(&rf.e11)? / rf.w_norm();
    if !(gamma > 0.0) {
        return Err(Error::BoundInapplicable { gamma });
    }
    Ok(KappaHatBound {
        gamma,
        bound: rf.w_pinv_norm() / gamma,
        kappa,
        w_pinv_norm: rf.w_pinv_norm(),
    })
}

/// Every quantity entering the key-drift bound.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationBound {
    pub kappa_hat: f64,
    /// `1 − κ‖E11‖/‖W‖`; informational here, may be `<= 0`.
    pub gamma: f64,
    pub eta: f64,
    pub e11_norm: f64,
    pub e12_norm: f64,
    pub e21_norm: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub rhs_total: f64,
    pub b1_norm: f64,
    pub b2_norm: f64,
}

/// Upper bound on `‖W†v − W̃†v‖ / ‖W†v‖` for an acute `ΔW`:
///
/// ```text
/// κ̂‖E11‖/‖W‖ + Ψ₂(κ̂‖E12‖/‖W‖) + κ̂²(‖E21‖/‖W‖)(η⁻¹‖b2‖/‖b1‖ + ‖E21‖/‖W‖)
/// ```
///
/// with `b = Uᵀv` split as `(b1, b2)` and `η = ‖W‖‖W†v‖/‖v‖`. The third
/// term bounds the contribution of `(I; F21)†` with `F21 = E21 Ã11⁻¹`, so its
/// leading factor is `‖E21‖`; it vanishes for full-row-rank `W`.
pub fn key_drift_bound(w: &Matrix, dw: &Matrix, v: &DVector<f64>) -> Result<PerturbationBound> {
    if v.len() != w.rows() {
        return Err(Error::Dimension(format!(
            "v has length {}, W has {} rows",
            v.len(),
            w.rows()
        )));
    }
    let rf = reduced_form(w, dw)?;
    match check_acute(&rf, DEFAULT_ACUTE_TOL)? {
        Acuteness::Acute { .. } => {}
        Acuteness::NotAcute { residual } => return Err(Error::NotAcute { residual }),
        Acuteness::SingularA11 { sigma_min } => return Err(Error::Singular { sigma_min }),
    }
    let b1 = rf.u1.t().mul_vec(v)?;
    let b2 = rf.u2.t().mul_vec(v)?;
    let (b1_norm, b2_norm) = (b1.norm(), b2.norm());
    if b1_norm == 0.0 {
        return Err(Error::DegenerateRhs);
    }

    let w_norm = rf.w_norm();
    // ‖W†v‖ = ‖A11⁻¹ b1‖ since V1 has orthonormal columns.
    let x_norm = b1
        .iter()
        .zip(&rf.sigmas)
        .map(|(b, s)| (b / s) * (b / s))
        .sum::<f64>()
        .sqrt();
    let eta = w_norm * x_norm / v.norm();

    let kh = kappa_hat(&rf, w_norm)?;
    let e11_norm = spectral_norm(&rf.e11)?;
    let e12_norm = spectral_norm(&rf.e12)?;
    let e21_norm = spectral_norm(&rf.e21)?;
    let gamma = 1.0 - rf.kappa() * e11_norm / w_norm;

    let term1 = kh * e11_norm / w_norm;
    let term2 = psi2(kh * e12_norm / w_norm)?;
    let term3 = kh * kh * (e21_norm / w_norm) * (b2_norm / (b1_norm * eta) + e21_norm / w_norm);

    Ok(PerturbationBound {
        kappa_hat: kh,
        gamma,
        eta,
        e11_norm,
        e12_norm,
        e21_norm,
        term1,
        term2,
        term3,
        rhs_total: term1 + term2 + term3,
        b1_norm,
        b2_norm,
    })
}

/// Measured relative key drift `‖W†v − (W+ΔW)†v‖ / ‖W†v‖`.
pub fn actual_key_drift(w: &Matrix, dw: &Matrix, v: &DVector<f64>) -> Result<f64> {
    if w.shape() != dw.shape() {
        return Err(Error::Dimension("W and ΔW differ in shape".into()));
    }
    let k = pseudo_inverse(w, DEFAULT_RANK_TOL)?.mul_vec(v)?;
    let k_norm = k.norm();
    if k_norm == 0.0 {
        return Err(Error::UndefinedDrift);
    }
    let k_tilde = pseudo_inverse(&(w + dw), DEFAULT_RANK_TOL)?.mul_vec(v)?;
    Ok((k - k_tilde).norm() / k_norm)
}

/// Builds the acute perturbation with the given `E11`, `E12`, `E21` blocks
/// in the reduced frame of `w`, completing `E22 = E21 Ã11⁻¹ E12`.
pub fn acute_perturbation(w: &Matrix, e11: &Matrix, e12: &Matrix, e21: &Matrix) -> Result<Matrix> {
    let (p, q) = w.shape();
    let f = svd(w)?;
    let r = f.numerical_rank(DEFAULT_RANK_TOL);
    if r == 0 {
        return Err(Error::DegenerateRank);
    }
    if e11.shape() != (r, r) || e12.shape() != (r, q - r) || e21.shape() != (p - r, r) {
        return Err(Error::Dimension(format!(
            "blocks must be {r}x{r}, {r}x{}, {}x{r} for rank {r}",
            q - r,
            p - r
        )));
    }
    let a11_tilde = &Matrix::from_diagonal(&f.singular_values[..r]) + e11;
    let (inv, _) = inverse(&a11_tilde)?;
    let e22 = &(e21 * &inv) * e12;
    let e = assemble(e11, e12, e21, &e22);
    Ok(&(&f.u * &e) * &f.v.t())
}

/// Inverse of a square nonsingular matrix together with `‖M⁻¹‖ = 1/σ_min`.
fn inverse(m: &Matrix) -> Result<(Matrix, f64)> {
    let f = svd(m)?;
    let smin = f.sigma_min();
    if smin == 0.0 || smin <= DEFAULT_RANK_TOL * f.sigma_max() {
        return Err(Error::Singular { sigma_min: smin });
    }
    Ok((crate::linalg::pinv_from_svd(&f, 0.0), 1.0 / smin))
}

fn hcat(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = nalgebra::DMatrix::zeros(a.rows(), a.cols() + b.cols());
    out.view_mut((0, 0), a.shape()).copy_from(a.as_dmatrix());
    out.view_mut((0, a.cols()), b.shape())
        .copy_from(b.as_dmatrix());
    Matrix::wrap(out)
}

fn assemble(e11: &Matrix, e12: &Matrix, e21: &Matrix, e22: &Matrix) -> Matrix {
    let r = e11.rows();
    let mut out = nalgebra::DMatrix::zeros(r + e21.rows(), r + e12.cols());
    out.view_mut((0, 0), e11.shape())
        .copy_from(e11.as_dmatrix());
    out.view_mut((0, r), e12.shape())
        .copy_from(e12.as_dmatrix());
    out.view_mut((r, 0), e21.shape())
        .copy_from(e21.as_dmatrix());
    out.view_mut((r, r), e22.shape())
        .copy_from(e22.as_dmatrix());
    Matrix::wrap(out)
}
