//! Singular-value restraint of an accumulated update sum.
//!
//! The update sum `ΣΔW` is decomposed as `Σ σ̂_i û_i v̂_iᵀ`. Every `σ̂_i` above
//! the largest singular value of the unedited matrix is replaced by `F(σ̂_i)`
//! and the sum is rebuilt from the same singular vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, spectral_norm, svd, Matrix, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RestraintFunction {
    /// `log_α(σ̂) − log_α(σ_max) + σ_max`.
    Log { alpha: f64 },
    /// `σ̂/β + (β − 1)/β · σ_max`.
    Linear { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    #[serde(alias = "once")]
    OnceAtEnd,
    /// After every edit whose 1-based index is a multiple of `k`.
    EveryK { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestraintConfig {
    pub function: RestraintFunction,
    pub schedule: Schedule,
}

impl RestraintFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RestraintFunction::Log { alpha } if !(alpha > 1.0 && alpha.is_finite()) => Err(
                Error::config("alpha", format!("must be a finite number > 1, got {alpha}")),
            ),
            RestraintFunction::Linear { beta } if !(beta > 1.0 && beta.is_finite()) => Err(
                Error::config("beta", format!("must be a finite number > 1, got {beta}")),
            ),
            _ => Ok(()),
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::EveryK { k: 0 } => Err(Error::config("k", "must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Whether the restraint fires right after edit `n` (1-based) of `total`.
    pub fn fires_after(&self, n: usize, total: usize) -> bool {
        match *self {
            Schedule::OnceAtEnd => n == total,
            Schedule::EveryK { k } => n.is_multiple_of(k),
        }
    }
}

impl RestraintConfig {
    pub fn validate(&self) -> Result<()> {
        self.function.validate()?;
        self.schedule.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestraintReport {
    /// Number of update singular values above the threshold.
    pub restrained_count: usize,
    /// `σ_max` of the update sum before and after restraint.
    pub sigma_max_before: f64,
    pub sigma_max_after: f64,
    /// Condition number of the edited matrix before and after restraint.
    pub cond_before: f64,
    pub cond_after: f64,
}

/// Maps one update singular value; values at or below `sigma_max_w` pass
/// through unchanged.
pub fn restraint_f(sigma_hat: f64, sigma_max_w: f64, f: RestraintFunction) -> Result<f64> {
    if !(sigma_max_w > 0.0 && sigma_max_w.is_finite()) {
        return Err(Error::Domain(format!(
            "threshold must be a positive finite number, got {sigma_max_w}"
        )));
    }
    if !(sigma_hat >= 0.0 && sigma_hat.is_finite()) {
        return Err(Error::Domain(format!(
            "singular value must be >= 0, got {sigma_hat}"
        )));
    }
    f.validate()?;
    if sigma_hat <= sigma_max_w {
        return Ok(sigma_hat);
    }
    Ok(match f {
        RestraintFunction::Log { alpha } => {
            (sigma_hat / sigma_max_w).ln() / alpha.ln() + sigma_max_w
        }
        RestraintFunction::Linear { beta } => sigma_hat / beta + (beta - 1.0) / beta * sigma_max_w,
    })
}

/// Restrains `dw_sum` against the largest singular value of `w` and returns
/// `w + restrained sum`.
pub fn restrain_update_sum(
    w: &Matrix,
    dw_sum: &Matrix,
    f: RestraintFunction,
) -> Result<(Matrix, RestraintReport)> {
    let threshold = spectral_norm(w)?;
    if threshold == 0.0 {
        return Err(Error::Domain(
            "threshold undefined for a zero matrix".into(),
        ));
    }
    restrain_with_threshold(w, dw_sum, threshold, f)
}

/// Like [`restrain_update_sum`] but with an explicit threshold, so that
/// repeated restraints during one run can keep the original matrix's `σ_max`
/// while `base` moves.
pub fn restrain_with_threshold(
    base: &Matrix,
    dw_sum: &Matrix,
    threshold: f64,
    f: RestraintFunction,
) -> Result<(Matrix, RestraintReport)> {
    if base.shape() != dw_sum.shape() {
        return Err(Error::Dimension(format!(
            "base is {:?}, update sum is {:?}",
            base.shape(),
            dw_sum.shape()
        )));
    }
    let edited = base + dw_sum;
    let cond_before = condition_number(&edited, DEFAULT_RANK_TOL)?;
    let fac = svd(dw_sum)?;
    let sigma_max_before = fac.sigma_max();

    let mapped = fac
        .singular_values
        .iter()
        .map(|&s| restraint_f(s, threshold, f))
        .collect::<Result<Vec<_>>>()?;
    let restrained_count = fac
        .singular_values
        .iter()
        .filter(|&&s| s > threshold)
        .count();
    if restrained_count == 0 {
        let report = RestraintReport {
            restrained_count,
            sigma_max_before,
            sigma_max_after: sigma_max_before,
            cond_before,
            cond_after: cond_before,
        };
        return Ok((edited, report));
    }

    let restrained_sum = crate::linalg::SvdFactorization {
        singular_values: mapped.clone(),
        ..fac
    }
    .reconstruct();
    let restrained = base + &restrained_sum;
    let report = RestraintReport {
        restrained_count,
        sigma_max_before,
        sigma_max_after: mapped.iter().copied().fold(0.0, f64::max),
        cond_before,
        cond_after: condition_number(&restrained, DEFAULT_RANK_TOL)?,
    };
    Ok((restrained, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use std::f64::consts::E;

    const LOG_E: RestraintFunction = RestraintFunction::Log { alpha: E };

    #[test]
    fn f_values() {
        assert!((restraint_f(2.0, 2.0, LOG_E).unwrap() - 2.0).abs() <= 1e-12);
        assert!((restraint_f(2.0 * E * E, 2.0, LOG_E).unwrap() - 4.0).abs() <= 1e-12);
        let f = restraint_f(
            5.0 * 1.2f64.powi(3),
            5.0,
            RestraintFunction::Log { alpha: 1.2 },
        )
        .unwrap();
        assert!((f - 8.0).abs() <= 1e-12, "{f}");
        let f = restraint_f(9.0, 5.0, RestraintFunction::Linear { beta: 2.0 }).unwrap();
        assert!((f - 7.0).abs() <= 1e-12);
    }

    #[test]
    fn f_errors() {
        assert!(matches!(
            restraint_f(1.0, 0.0, LOG_E),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            restraint_f(-1.0, 1.0, LOG_E),
            Err(Error::Domain(_))
        ));
        assert!(restraint_f(3.0, 1.0, RestraintFunction::Log { alpha: 1.0 }).is_err());
        assert!(restraint_f(3.0, 1.0, RestraintFunction::Linear { beta: 0.5 }).is_err());
        assert_eq!(restraint_f(0.0, 1.0, LOG_E).unwrap(), 0.0);
    }

    #[test]
    fn schedule_firing() {
        assert!(Schedule::OnceAtEnd.fires_after(7, 7));
        assert!(!Schedule::OnceAtEnd.fires_after(6, 7));
        let s = Schedule::EveryK { k: 3 };
        let fired: Vec<_> = (1..=10).filter(|&n| s.fires_after(n, 10)).collect();
        assert_eq!(fired, [3, 6, 9]);
        assert!(Schedule::EveryK { k: 0 }.validate().is_err());
    }

    #[test]
    fn config_json() {
        let cfg: RestraintConfig = serde_json::from_str(
            r#"{"function":{"kind":"log","alpha":1.2},"schedule":{"kind":"every_k","k":50}}"#,
        )
        .unwrap();
        assert_eq!(cfg.function, RestraintFunction::Log { alpha: 1.2 });
        assert_eq!(cfg.schedule, Schedule::EveryK { k: 50 });
        let cfg: RestraintConfig = serde_json::from_str(
            r#"{"function":{"kind":"linear","beta":2},"schedule":{"kind":"once"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.schedule, Schedule::OnceAtEnd);
        assert!(serde_json::from_str::<RestraintConfig>(
            r#"{"function":{"kind":"log","alpha":1.2,"beta":3},"schedule":{"kind":"once"}}"#
        )
        .is_err());
    }

    fn padded_w() -> Matrix {
        Matrix::rect_diagonal(2, 3, &[2.0, 1.0])
    }

    #[test]
    fn zero_sum_is_untouched() {
        let w = padded_w();
        let (r, rep) = restrain_update_sum(&w, &Matrix::zeros(2, 3), LOG_E).unwrap();
        assert_eq!(r, w);
        assert_eq!(rep.restrained_count, 0);
    }

    #[test]
    fn small_sum_passes_through_exactly() {
        let w = padded_w();
        let dw = Matrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, -0.4, 0.0, 0.5]).unwrap();
        let (r, rep) = restrain_update_sum(&w, &dw, LOG_E).unwrap();
        assert_eq!(r, &w + &dw);
        assert_eq!(rep.restrained_count, 0);
    }

    #[test]
    fn rank_one_sum_is_capped() {
        let w = padded_w();
        let u = DVector::from_vec(vec![0.6, 0.8]);
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let dw = Matrix::outer(&u, &v).scaled(2.0 * E * E);
        let (r, rep) = restrain_update_sum(&w, &dw, LOG_E).unwrap();
        let expect = &w + &Matrix::outer(&u, &v).scaled(4.0);
        assert!(r.rel_dist(&expect).unwrap() < 1e-12);
        assert_eq!(rep.restrained_count, 1);
        assert!((rep.sigma_max_after - 4.0).abs() < 1e-12);
        assert!(rep.sigma_max_after <= rep.sigma_max_before);
    }

    #[test]
    fn zero_w_is_rejected() {
        let dw = Matrix::identity(2);
        assert!(matches!(
            restrain_update_sum(&Matrix::zeros(2, 2), &dw, LOG_E),
            Err(Error::Domain(_))
        ));
        assert!(restrain_update_sum(&padded_w(), &dw, LOG_E).is_err());
    }
}
