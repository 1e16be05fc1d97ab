//! Recall metrics, update spectra and the 2D value-drift projection.
//!
//! A recall counts as a hit when `‖W k − v‖ / ‖v‖ <= tol`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::editor::EditRequest;
use crate::error::{Error, Result};
use crate::linalg::{singular_values, svd, Matrix};
use crate::memory::AssociativeMemory;
use crate::rng::{jitter_unit, stream, Stream};

pub const DEFAULT_TOL: f64 = 0.1;

/// Parameters shared by every checkpoint of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSettings {
    pub tol: f64,
    pub noise: f64,
    pub gen_samples: usize,
    pub seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            tol: DEFAULT_TOL,
            noise: 0.05,
            gen_samples: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub edit_index: usize,
    pub cond: f64,
    pub sigma_max_w: f64,
    pub sigma_min_w: f64,
    pub sigma_max_sum: f64,
    pub efficacy: f64,
    pub generalization: f64,
    pub locality: f64,
    pub mean_recall_err: f64,
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("tol must be > 0, got {tol}")))
    }
}

fn hits(w: &Matrix, k: &DVector<f64>, v: &DVector<f64>, tol: f64) -> Result<bool> {
    Ok((w.mul_vec(k)? - v).norm() <= tol * v.norm())
}

/// Fraction of edits whose key recalls its new value.
pub fn efficacy(w_final: &Matrix, edits: &[EditRequest], tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if edits.is_empty() {
        return Err(Error::UndefinedMetric(
            "efficacy of an empty edit list".into(),
        ));
    }
    let mut n = 0usize;
    for e in edits {
        n += hits(w_final, &e.key, &e.new_value, tol)? as usize;
    }
    Ok(n as f64 / edits.len() as f64)
}

/// Like [`efficacy`] but each key is replaced by `samples` noisy copies
/// `unit(k + noise · g / sqrt(q))`.
pub fn generalization(
    w_final: &Matrix,
    edits: &[EditRequest],
    noise: f64,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Domain(format!("noise must be >= 0, got {noise}")));
    }
    if samples == 0 {
        return Err(Error::Domain("samples must be >= 1".into()));
    }
    if noise == 0.0 {
        return efficacy(w_final, edits, tol);
    }
    check_tol(tol)?;
    if edits.is_empty() {
        return Err(Error::UndefinedMetric(
            "generalization of an empty edit list".into(),
        ));
    }
    let mut rng = stream(seed, Stream::Generalization);
    let mut n = 0usize;
    for e in edits {
        for _ in 0..samples {
            let k = jitter_unit(&mut rng, &e.key, noise);
            n += hits(w_final, &k, &e.new_value, tol)? as usize;
        }
    }
    Ok(n as f64 / (edits.len() * samples) as f64)
}

/// Fraction of stored pairs outside `edited` that are still recalled.
pub fn locality(
    w_final: &Matrix,
    mem: &AssociativeMemory,
    edited: &BTreeSet<usize>,
    tol: f64,
) -> Result<f64> {
    check_tol(tol)?;
    let errs = mem.recall_error(w_final)?;
    let kept: Vec<f64> = errs
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !edited.contains(i))
        .map(|(_, e)| e)
        .collect();
    if kept.is_empty() {
        return Err(Error::UndefinedMetric(
            "every stored pair was edited".into(),
        ));
    }
    Ok(kept.iter().filter(|&&e| e <= tol).count() as f64 / kept.len() as f64)
}

/// `(σ_max, all singular values)` of an update sum.
pub fn update_sum_spectrum(dw_sum: &Matrix) -> Result<(f64, Vec<f64>)> {
    let s = singular_values(dw_sum)?;
    Ok((s.first().copied().unwrap_or(0.0), s))
}

/// Snapshot of a matrix in the middle of a run. `applied` are the edits made
/// so far; with none applied the edit-based fractions are 1.
pub fn diagnostics(
    edit_index: usize,
    w: &Matrix,
    sum: &Matrix,
    mem: &AssociativeMemory,
    applied: &[EditRequest],
    edited_pairs: &BTreeSet<usize>,
    settings: &MetricSettings,
) -> Result<DiagnosticsRecord> {
    let s = singular_values(w)?;
    let (sigma_max_w, sigma_min_w) = (s[0], *s.last().expect("non-empty"));
    if !(sigma_min_w > 0.0) {
        return Err(Error::Singular {
            sigma_min: sigma_min_w,
        });
    }
    let (efficacy, generalization) = if applied.is_empty() {
        (1.0, 1.0)
    } else {
        (
            efficacy(w, applied, settings.tol)?,
            generalization(
                w,
                applied,
                settings.noise,
                settings.gen_samples,
                settings.tol,
                settings.seed,
            )?,
        )
    };
    let errs = mem.recall_error(w)?;
    Ok(DiagnosticsRecord {
        edit_index,
        cond: sigma_max_w / sigma_min_w,
        sigma_max_w,
        sigma_min_w,
        sigma_max_sum: update_sum_spectrum(sum)?.0,
        efficacy,
        generalization,
        locality: locality(w, mem, edited_pairs, settings.tol)?,
        mean_recall_err: errs.iter().sum::<f64>() / errs.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca2 {
    /// 2×p, rows are the leading principal directions.
    pub basis: Matrix,
    pub coords: Vec<[f64; 2]>,
    /// Leading two eigenvalues of the sample covariance.
    pub explained_variance: [f64; 2],
}

/// Projects mean-centred vectors onto their top two principal directions.
///
/// Identical inputs have no principal directions; the basis is then the first
/// two coordinate axes and every coordinate is zero.
pub fn pca_project_2d(vectors: &[DVector<f64>]) -> Result<Pca2> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 vectors, got {n}")));
    }
    let p = vectors[0].len();
    if p < 2 {
        return Err(Error::Dimension("need vectors of length >= 2".into()));
    }
    let x = Matrix::from_rows(vectors, p)?;
    let mean = x.row_mean();
    let centred = Matrix::wrap(DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]));

    let f = svd(&centred)?;
    if f.sigma_max() == 0.0 {
        return Ok(Pca2 {
            basis: Matrix::rect_diagonal(2, p, &[1.0, 1.0]),
            coords: vec![[0.0, 0.0]; n],
            explained_variance: [0.0, 0.0],
        });
    }
    let mut basis = DMatrix::zeros(2, p);
    for r in 0..2 {
        let mut dir = f.v.column(r).into_owned();
        let lead = dir.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            dir.neg_mut();
        }
        basis.set_row(r, &dir.transpose());
    }
    let proj = centred.as_dmatrix() * basis.transpose();
    let sigma = |i: usize| f.singular_values.get(i).copied().unwrap_or(0.0);
    let var = |s: f64| s * s / (n - 1) as f64;
    Ok(Pca2 {
        basis: Matrix::wrap(basis),
        coords: (0..n).map(|i| [proj[(i, 0)], proj[(i, 1)]]).collect(),
        explained_variance: [var(sigma(0)), var(sigma(1))],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftLabel {
    Current,
    Editing,
    Prune,
}

impl DriftLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DriftLabel::Current => "current",
            DriftLabel::Editing => "editing",
            DriftLabel::Prune => "prune",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftSeries {
    pub label: DriftLabel,
    pub projected: Vec<[f64; 2]>,
    /// Mean planar distance to the matching `current` point.
    pub mean_discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueDriftReport {
    pub series: Vec<DriftSeries>,
    pub pca: Pca2,
}

impl ValueDriftReport {
    pub fn get(&self, label: DriftLabel) -> Option<&DriftSeries> {
        self.series.iter().find(|s| s.label == label)
    }
}

/// Compares the targets of the first `first_m` edits with what the edited
/// (and optionally the restrained) matrix returns for the same keys, in one
/// shared PCA plane.
pub fn value_drift(
    edits: &[EditRequest],
    w_edited: &Matrix,
    w_prune: Option<&Matrix>,
    first_m: usize,
) -> Result<ValueDriftReport> {
    if first_m == 0 || first_m > edits.len() {
        return Err(Error::Domain(format!(
            "first_m must be in 1..={}, got {first_m}",
            edits.len()
        )));
    }
    let head = &edits[..first_m];
    let mut labels = vec![
        (DriftLabel::Current, None),
        (DriftLabel::Editing, Some(w_edited)),
    ];
    if let Some(w) = w_prune {
        labels.push((DriftLabel::Prune, Some(w)));
    }
    let mut pooled = Vec::with_capacity(labels.len() * first_m);
    for (_, w) in &labels {
        for e in head {
            pooled.push(match w {
                None => e.new_value.clone(),
                Some(w) => w.mul_vec(&e.key)?,
            });
        }
    }
    let pca = pca_project_2d(&pooled)?;
    let current = &pca.coords[..first_m];
    let series = labels
        .iter()
        .enumerate()
        .map(|(l, (label, _))| {
            let projected = pca.coords[l * first_m..(l + 1) * first_m].to_vec();
            let total: f64 = projected
                .iter()
                .zip(current)
                .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                .sum();
            DriftSeries {
                label: *label,
                projected,
                mean_discrepancy: total / first_m as f64,
            }
        })
        .collect();
    Ok(ValueDriftReport { series, pca })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editor::{generate_edits, rank_one_edit, EditStreamOptions};
    use crate::memory::synthesize_memory;

    fn setup() -> (AssociativeMemory, Vec<EditRequest>) {
        let mem = synthesize_memory(6, 12, 8, 21).unwrap();
        let edits = generate_edits(&mem, 6, EditStreamOptions::default(), 21).unwrap();
        (mem, edits)
    }

    #[test]
    fn single_edit_is_recalled() {
        let (mem, edits) = setup();
        let w = mem.w() + &rank_one_edit(mem.w(), &edits[0]).unwrap();
        assert_eq!(efficacy(&w, &edits[..1], 0.1).unwrap(), 1.0);
        assert_eq!(efficacy(&Matrix::zeros(6, 12), &edits, 0.1).unwrap(), 0.0);
        assert!(matches!(
            efficacy(&w, &[], 0.1),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(efficacy(&w, &edits, 0.0).is_err());
    }

    #[test]
    fn generalization_without_noise_is_efficacy() {
        let (mem, edits) = setup();
        let mut w = mem.w().clone();
        for e in &edits[..3] {
            w = &w + &rank_one_edit(&w, e).unwrap();
        }
        let eff = efficacy(&w, &edits, 0.1).unwrap();
        assert_eq!(generalization(&w, &edits, 0.0, 4, 0.1, 1).unwrap(), eff);
        let g = generalization(&w, &edits, 0.05, 8, 0.1, 1).unwrap();
        assert!((0.0..=1.0).contains(&g));
        assert_eq!(
            generalization(&Matrix::zeros(6, 12), &edits, 0.05, 8, 0.1, 1).unwrap(),
            0.0
        );
        assert!(generalization(&w, &edits, -1.0, 8, 0.1, 1).is_err());
        assert!(generalization(&w, &edits, 0.1, 0, 0.1, 1).is_err());
    }

    #[test]
    fn locality_examples() {
        let (mem, _) = setup();
        let none = BTreeSet::new();
        assert_eq!(locality(mem.w(), &mem, &none, 0.1).unwrap(), 1.0);
        assert_eq!(
            locality(&Matrix::zeros(6, 12), &mem, &none, 0.1).unwrap(),
            0.0
        );
        let all: BTreeSet<_> = (0..mem.m()).collect();
        assert!(matches!(
            locality(mem.w(), &mem, &all, 0.1),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn spectrum_of_zero_and_repeats() {
        assert_eq!(update_sum_spectrum(&Matrix::zeros(3, 5)).unwrap().0, 0.0);
        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = DVector::from_vec(vec![0.0, 3.0, 4.0, 0.0]);
        let d = Matrix::outer(&u, &v);
        let (s1, _) = update_sum_spectrum(&d).unwrap();
        let (s7, all) = update_sum_spectrum(&d.scaled(7.0)).unwrap();
        assert!((s7 - 7.0 * s1).abs() <= 1e-12 * s7);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn pca_collinear_and_identical() {
        let d = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let pts: Vec<_> = (0..6).map(|t| &d * (t as f64 - 1.5)).collect();
        let pca = pca_project_2d(&pts).unwrap();
        assert!(pca.explained_variance[0] > 0.0);
        assert!(pca.explained_variance[1] <= 1e-12 * pca.explained_variance[0]);

        let same = vec![d.clone(); 4];
        let pca = pca_project_2d(&same).unwrap();
        assert!(pca.coords.iter().all(|c| *c == [0.0, 0.0]));
        assert_eq!(pca.basis[(0, 0)], 1.0);
        assert_eq!(pca.basis[(1, 1)], 1.0);

        assert!(pca_project_2d(&same[..1]).is_err());
    }

    #[test]
    fn drift_of_single_exact_edit_is_zero() {
        let (mem, edits) = setup();
        let w = mem.w() + &rank_one_edit(mem.w(), &edits[0]).unwrap();
        let rep = value_drift(&edits[..1], &w, None, 1);
        // one point per label cannot define a plane beyond a line; still defined
        let rep = rep.unwrap();
        assert_eq!(rep.series.len(), 2);
        assert_eq!(rep.get(DriftLabel::Current).unwrap().mean_discrepancy, 0.0);
        assert!(rep.get(DriftLabel::Editing).unwrap().mean_discrepancy <= 1e-10);
    }

    #[test]
    fn drift_prune_duplicate_of_editing() {
        let (mem, edits) = setup();
        let mut w = mem.w().clone();
        for e in &edits {
            w = &w + &rank_one_edit(&w, e).unwrap();
        }
        let rep = value_drift(&edits, &w, Some(&w), 4).unwrap();
        let ed = rep.get(DriftLabel::Editing).unwrap();
        let pr = rep.get(DriftLabel::Prune).unwrap();
        assert_eq!(ed.projected, pr.projected);
        assert_eq!(ed.mean_discrepancy, pr.mean_discrepancy);
        assert!(value_drift(&edits, &w, None, 7).is_err());
    }
}
