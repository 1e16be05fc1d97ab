//! Closed-form edits and the sequential editing loop.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Matrix};
use crate::memory::AssociativeMemory;
use crate::metrics::{diagnostics, DiagnosticsRecord, MetricSettings};
use crate::prune::{restrain_with_threshold, RestraintConfig, RestraintReport};
use crate::rng::{jitter_unit, stream, unit_vector, Stream};

/// Traces longer than this keep only the running sum, not every update.
pub const MAX_STORED_UPDATES: usize = 1000;

/// Request to make the memory map `key` to `new_value`.
#[derive(Clone, Debug, PartialEq)]
pub struct EditRequest {
    pub key: DVector<f64>,
    pub new_value: DVector<f64>,
}

impl EditRequest {
    pub fn new(key: DVector<f64>, new_value: DVector<f64>) -> Result<Self> {
        for (what, x) in [("key", &key), ("new_value", &new_value)] {
            if x.iter().any(|e| !e.is_finite()) {
                return Err(Error::Domain(format!("{what} has a non-finite entry")));
            }
            if x.norm() == 0.0 {
                return Err(Error::Domain(format!("{what} is zero")));
            }
        }
        Ok(EditRequest { key, new_value })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EditRule {
    RankOne,
    /// Weights the update by `(KKᵀ/m + ridge·I)⁻¹` of the stored keys.
    Covariance {
        ridge: f64,
    },
}

/// `ΔW = (v* − W k*) k*ᵀ / (k*ᵀ k*)`.
pub fn rank_one_edit(w_current: &Matrix, req: &EditRequest) -> Result<Matrix> {
    let k = &req.key;
    let kk = k.dot(k);
    if kk == 0.0 {
        return Err(Error::Domain("edit key is zero".into()));
    }
    let residual = residual(w_current, req)?;
    Ok(Matrix::outer(&residual, k).scaled(1.0 / kk))
}

fn residual(w_current: &Matrix, req: &EditRequest) -> Result<DVector<f64>> {
    if req.new_value.len() != w_current.rows() {
        return Err(Error::Dimension(format!(
            "new value has length {}, W has {} rows",
            req.new_value.len(),
            w_current.rows()
        )));
    }
    Ok(&req.new_value - w_current.mul_vec(&req.key)?)
}

/// Cholesky factor of a symmetric positive definite key covariance.
#[derive(Clone, Debug)]
pub struct KeyCovariance {
    chol: Cholesky<f64, Dyn>,
}

impl KeyCovariance {
    /// `C = KKᵀ/m + ridge·I` for keys stored as the rows of `keys`.
    pub fn from_keys(keys: &Matrix, ridge: f64) -> Result<Self> {
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(Error::Domain(format!("ridge must be > 0, got {ridge}")));
        }
        let m = keys.rows().max(1) as f64;
        let mut c = keys.transpose() * keys.as_dmatrix() / m;
        for i in 0..c.nrows() {
            c[(i, i)] += ridge;
        }
        Self::from_matrix(&Matrix::wrap(c))
    }

    pub fn from_matrix(c: &Matrix) -> Result<Self> {
        if c.rows() != c.cols() {
            return Err(Error::Dimension(format!("covariance is {:?}", c.shape())));
        }
        let chol =
            Cholesky::new(c.as_dmatrix().clone()).ok_or(Error::Singular { sigma_min: 0.0 })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
        // κ(C) >= (max L_ii / min L_ii)², so this rejects only hopeless cases.
        if !(lo > hi * 1e-8) {
            return Err(Error::Singular { sigma_min: lo * lo });
        }
        Ok(KeyCovariance { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, k: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(k)
    }
}

/// `ΔW = (v* − W k*)(C⁻¹k*)ᵀ / (k*ᵀ C⁻¹ k*)`.
pub fn covariance_weighted_edit(
    w_current: &Matrix,
    req: &EditRequest,
    cov: &KeyCovariance,
) -> Result<Matrix> {
    if cov.dim() != req.key.len() {
        return Err(Error::Dimension(format!(
            "covariance is {0}x{0}, key has length {1}",
            cov.dim(),
            req.key.len()
        )));
    }
    let c_inv_k = cov.solve(&req.key);
    let denom = req.key.dot(&c_inv_k);
    if !(denom > 0.0) {
        return Err(Error::Domain("edit key is zero".into()));
    }
    let residual = residual(w_current, req)?;
    Ok(Matrix::outer(&residual, &c_inv_k).scaled(1.0 / denom))
}

/// How the synthetic edit stream is drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EditStreamOptions {
    /// Relative noise added to stored keys for the near-key half of edits.
    pub near_noise: f64,
    /// Number of shared target directions; 0 draws every target independently.
    pub target_pool: usize,
    /// Relative noise around a pooled target.
    pub target_noise: f64,
}

impl Default for EditStreamOptions {
    fn default() -> Self {
        EditStreamOptions {
            near_noise: 0.1,
            target_pool: 0,
            target_noise: 0.1,
        }
    }
}

/// Draws `n` edits. Even positions perturb a random stored key, odd positions
/// use a fresh random key. All keys and targets are unit-norm.
pub fn generate_edits(
    mem: &AssociativeMemory,
    n: usize,
    opts: EditStreamOptions,
    seed: u64,
) -> Result<Vec<EditRequest>> {
    let (p, q, m) = (mem.p(), mem.q(), mem.m());
    let mut rng = stream(seed, Stream::EditStream);
    let pool: Vec<_> = (0..opts.target_pool)
        .map(|_| unit_vector(&mut rng, p))
        .collect();
    (0..n)
        .map(|j| {
            let key = if j % 2 == 0 {
                let i = rng.random_range(0..m);
                jitter_unit(&mut rng, &mem.key(i), opts.near_noise)
            } else {
                unit_vector(&mut rng, q)
            };
            let value = if pool.is_empty() {
                unit_vector(&mut rng, p)
            } else {
                let c = rng.random_range(0..pool.len());
                jitter_unit(&mut rng, &pool[c], opts.target_noise)
            };
            EditRequest::new(key, value)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SequentialOptions {
    pub rule: EditRule,
    pub restraint: Option<RestraintConfig>,
    pub checkpoint_every: usize,
    pub metrics: MetricSettings,
}

/// A restraint firing and the change it made to the edited matrix.
#[derive(Clone, Debug)]
pub struct RestraintEvent {
    /// Number of edits applied when the restraint fired.
    pub edit_index: usize,
    pub report: RestraintReport,
    pub correction: Matrix,
}

#[derive(Clone, Debug)]
pub struct EditTrace {
    pub base_w: Matrix,
    pub final_w: Matrix,
    /// `final_w − base_w`, accumulated in step order.
    pub update_sum: Matrix,
    /// Every `ΔW_j`, kept only for traces of at most [`MAX_STORED_UPDATES`] edits.
    pub updates: Option<Vec<Matrix>>,
    pub edits: Vec<EditRequest>,
    pub restraints: Vec<RestraintEvent>,
    pub checkpoints: Vec<DiagnosticsRecord>,
}

impl EditTrace {
    /// The final matrix rebuilt from the base, the stored updates and the
    /// restraint corrections.
    pub fn replay(&self) -> Option<Matrix> {
        let updates = self.updates.as_ref()?;
        let mut w = self.base_w.as_dmatrix().clone();
        for u in updates {
            w += u.as_dmatrix();
        }
        for r in &self.restraints {
            w += r.correction.as_dmatrix();
        }
        Some(Matrix::wrap(w))
    }
}

/// Final matrix of an unrestrained sequential run, without diagnostics.
pub fn apply_sequentially(
    mem: &AssociativeMemory,
    edits: &[EditRequest],
    rule: EditRule,
) -> Result<Matrix> {
    let cov = match rule {
        EditRule::RankOne => None,
        EditRule::Covariance { ridge } => Some(KeyCovariance::from_keys(mem.keys(), ridge)?),
    };
    let mut w = mem.w().clone();
    for req in edits {
        let dw = match &cov {
            None => rank_one_edit(&w, req)?,
            Some(c) => covariance_weighted_edit(&w, req, c)?,
        };
        w = &w + &dw;
    }
    Ok(w)
}

/// Stored pair indices whose key is one of the edit keys.
pub fn edited_pair_indices(mem: &AssociativeMemory, edits: &[EditRequest]) -> BTreeSet<usize> {
    (0..mem.m())
        .filter(|&i| {
            let k = mem.key(i);
            edits
                .iter()
                .any(|e| (&e.key - &k).norm() <= 1e-12 * k.norm())
        })
        .collect()
}

/// Applies `edits` one after another, each computed from the matrix left by
/// the previous one. Restraints fire on the configured schedule with the
/// original matrix's `σ_max` as threshold and restart the update sum.
pub fn sequential_edit(
    mem: &AssociativeMemory,
    edits: &[EditRequest],
    opts: &SequentialOptions,
) -> Result<EditTrace> {
    let n = edits.len();
    if n == 0 {
        return Err(Error::Domain("no edits to apply".into()));
    }
    if opts.checkpoint_every == 0 {
        return Err(Error::config("checkpoint_every", "must be >= 1"));
    }
    if let Some(r) = &opts.restraint {
        r.validate()?;
    }
    let cov = match opts.rule {
        EditRule::RankOne => None,
        EditRule::Covariance { ridge } => Some(KeyCovariance::from_keys(mem.keys(), ridge)?),
    };
    let threshold = spectral_norm(mem.w())?;
    let edited_pairs = edited_pair_indices(mem, edits);
    let (p, q) = mem.w().shape();

    let mut current = mem.w().as_dmatrix().clone();
    let mut total = DMatrix::zeros(p, q);
    let mut segment_base = mem.w().clone();
    let mut segment_sum = DMatrix::zeros(p, q);
    let mut updates = (n <= MAX_STORED_UPDATES).then(|| Vec::with_capacity(n));
    let mut restraints = Vec::new();
    let mut checkpoints = vec![diagnostics(
        0,
        mem.w(),
        &Matrix::zeros(p, q),
        mem,
        &[],
        &edited_pairs,
        &opts.metrics,
    )?];

    for (j, req) in edits.iter().enumerate() {
        let step = j + 1;
        let w_cur = Matrix::wrap(current);
        let dw = match &cov {
            None => rank_one_edit(&w_cur, req)?,
            Some(c) => covariance_weighted_edit(&w_cur, req, c)?,
        };
        current = w_cur.into_dmatrix() + dw.as_dmatrix();
        total += dw.as_dmatrix();
        segment_sum += dw.as_dmatrix();
        if let Some(u) = updates.as_mut() {
            u.push(dw);
        }

        if let Some(cfg) = opts.restraint.filter(|c| c.schedule.fires_after(step, n)) {
            let (restrained, report) = restrain_with_threshold(
                &segment_base,
                &Matrix::wrap(segment_sum.clone()),
                threshold,
                cfg.function,
            )?;
            let correction = restrained.as_dmatrix() - &current;
            total += &correction;
            current = restrained.as_dmatrix().clone();
            segment_base = restrained;
            segment_sum.fill(0.0);
            restraints.push(RestraintEvent {
                edit_index: step,
                report,
                correction: Matrix::wrap(correction),
            });
        }

        if step % opts.checkpoint_every == 0 || step == n {
            checkpoints.push(diagnostics(
                step,
                &Matrix::wrap(current.clone()),
                &Matrix::wrap(total.clone()),
                mem,
                &edits[..step],
                &edited_pairs,
                &opts.metrics,
            )?);
        }
    }

    Ok(EditTrace {
        base_w: mem.w().clone(),
        final_w: Matrix::wrap(current),
        update_sum: Matrix::wrap(total),
        updates,
        edits: edits.to_vec(),
        restraints,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;
    use crate::memory::synthesize_memory;
    use crate::prune::{RestraintFunction, Schedule};

    fn req(k: &[f64], v: &[f64]) -> EditRequest {
        EditRequest::new(DVector::from_row_slice(k), DVector::from_row_slice(v)).unwrap()
    }

    fn opts(rule: EditRule, restraint: Option<RestraintConfig>) -> SequentialOptions {
        SequentialOptions {
            rule,
            restraint,
            checkpoint_every: 10,
            metrics: MetricSettings::default(),
        }
    }

    #[test]
    fn rank_one_example() {
        let dw = rank_one_edit(&Matrix::zeros(2, 2), &req(&[1.0, 0.0], &[3.0, 4.0])).unwrap();
        assert_eq!(
            dw,
            Matrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn no_op_edit_is_zero() {
        let w = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let v = w.mul_vec(&k).unwrap();
        let dw = rank_one_edit(&w, &EditRequest::new(k, v).unwrap()).unwrap();
        assert!(dw.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edits_are_exact_and_rank_one() {
        let mem = synthesize_memory(6, 10, 8, 5).unwrap();
        let edits = generate_edits(&mem, 10, EditStreamOptions::default(), 5).unwrap();
        let cov = KeyCovariance::from_keys(mem.keys(), 1e-2).unwrap();
        for e in &edits {
            for dw in [
                rank_one_edit(mem.w(), e).unwrap(),
                covariance_weighted_edit(mem.w(), e, &cov).unwrap(),
            ] {
                let after = mem.w() + &dw;
                assert!((after.mul_vec(&e.key).unwrap() - &e.new_value).norm() <= 1e-10);
                let s = singular_values(&dw).unwrap();
                assert!(s[1] <= 1e-12 * s[0]);
            }
        }
    }

    #[test]
    fn identity_covariance_matches_rank_one() {
        let mem = synthesize_memory(4, 8, 5, 1).unwrap();
        let e = &generate_edits(&mem, 1, EditStreamOptions::default(), 1).unwrap()[0];
        let cov = KeyCovariance::from_matrix(&Matrix::identity(8)).unwrap();
        let a = covariance_weighted_edit(mem.w(), e, &cov).unwrap();
        let b = rank_one_edit(mem.w(), e).unwrap();
        assert!(a.rel_dist(&b).unwrap() < 1e-14);
    }

    #[test]
    fn covariance_edit_on_orthogonal_key_preserves_pairs() {
        // stored keys span the first four coordinates
        let keys: Vec<_> = (0..4)
            .map(|i| {
                let mut k = DVector::zeros(8);
                k[i] = 0.8;
                k[(i + 1) % 4] = 0.6;
                k
            })
            .collect();
        let values: Vec<_> = (0..4)
            .map(|i| {
                crate::linalg::normalized(DVector::from_fn(3, |r, _| {
                    ((r * 7 + i * 3) % 5) as f64 - 2.0
                }))
            })
            .collect();
        let mem = AssociativeMemory::from_pairs(
            Matrix::from_rows(&keys, 8).unwrap(),
            Matrix::from_rows(&values, 3).unwrap(),
            0,
        )
        .unwrap();
        let cov = KeyCovariance::from_keys(mem.keys(), 1e-6).unwrap();
        let mut k = DVector::zeros(8);
        k[5] = 0.6;
        k[7] = 0.8;
        let e = EditRequest::new(k, DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let edited = mem.w() + &covariance_weighted_edit(mem.w(), &e, &cov).unwrap();
        let before = mem.recall_error(mem.w()).unwrap();
        let after = mem.recall_error(&edited).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(EditRequest::new(DVector::zeros(2), DVector::from_element(2, 1.0)).is_err());
        assert!(EditRequest::new(DVector::from_element(2, 1.0), DVector::zeros(2)).is_err());
        assert!(KeyCovariance::from_keys(&Matrix::identity(3), 0.0).is_err());
        assert!(KeyCovariance::from_matrix(&Matrix::from_diagonal(&[1.0, 0.0])).is_err());
        let mem = synthesize_memory(2, 4, 2, 0).unwrap();
        assert!(sequential_edit(&mem, &[], &opts(EditRule::RankOne, None)).is_err());
    }

    #[test]
    fn single_edit_trace() {
        let mem = synthesize_memory(4, 8, 5, 2).unwrap();
        let edits = generate_edits(&mem, 1, EditStreamOptions::default(), 2).unwrap();
        let trace = sequential_edit(&mem, &edits, &opts(EditRule::RankOne, None)).unwrap();
        assert_eq!(trace.updates.as_ref().unwrap().len(), 1);
        let got = trace.final_w.mul_vec(&edits[0].key).unwrap();
        assert!((got - &edits[0].new_value).norm() <= 1e-12);
        let idx: Vec<_> = trace.checkpoints.iter().map(|c| c.edit_index).collect();
        assert_eq!(idx, [0, 1]);
    }

    #[test]
    fn repeated_edit_is_idempotent() {
        let mem = synthesize_memory(4, 8, 5, 3).unwrap();
        let e = generate_edits(&mem, 1, EditStreamOptions::default(), 3)
            .unwrap()
            .remove(0);
        let trace = sequential_edit(&mem, &[e.clone(), e], &opts(EditRule::RankOne, None)).unwrap();
        let ups = trace.updates.unwrap();
        assert!(spectral_norm(&ups[1]).unwrap() <= 1e-12);
        assert!(trace.final_w.rel_dist(&(mem.w() + &ups[0])).unwrap() <= 1e-12);
    }

    #[test]
    fn trace_is_consistent_with_restraint() {
        let mem = synthesize_memory(8, 16, 12, 4).unwrap();
        let so = EditStreamOptions {
            target_pool: 1,
            ..Default::default()
        };
        let edits = generate_edits(&mem, 40, so, 4).unwrap();
        let cfg = RestraintConfig {
            function: RestraintFunction::Log { alpha: 1.2 },
            schedule: Schedule::EveryK { k: 7 },
        };
        let trace = sequential_edit(&mem, &edits, &opts(EditRule::RankOne, Some(cfg))).unwrap();
        assert_eq!(trace.restraints.len(), 5);
        let replayed = trace.replay().unwrap();
        assert!(replayed.rel_dist(&trace.final_w).unwrap() <= 1e-10);
        assert!(
            (&trace.base_w + &trace.update_sum)
                .rel_dist(&trace.final_w)
                .unwrap()
                <= 1e-10
        );
        let idx: Vec<_> = trace.checkpoints.iter().map(|c| c.edit_index).collect();
        assert_eq!(idx, [0, 10, 20, 30, 40]);
    }

    #[test]
    fn every_k_equal_to_n_matches_once_at_end() {
        let mem = synthesize_memory(8, 16, 12, 6).unwrap();
        let so = EditStreamOptions {
            target_pool: 1,
            ..Default::default()
        };
        let edits = generate_edits(&mem, 30, so, 6).unwrap();
        let run = |schedule| {
            let cfg = RestraintConfig {
                function: RestraintFunction::Log { alpha: 1.2 },
                schedule,
            };
            sequential_edit(&mem, &edits, &opts(EditRule::RankOne, Some(cfg))).unwrap()
        };
        let a = run(Schedule::OnceAtEnd);
        let b = run(Schedule::EveryK { k: 30 });
        assert_eq!(a.final_w, b.final_w);
        assert_eq!(a.restraints.len(), 1);
    }

    #[test]
    fn edit_stream_is_deterministic_and_mixed() {
        let mem = synthesize_memory(4, 8, 5, 9).unwrap();
        let a = generate_edits(&mem, 6, EditStreamOptions::default(), 9).unwrap();
        let b = generate_edits(&mem, 6, EditStreamOptions::default(), 9).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert!((e.key.norm() - 1.0).abs() < 1e-14);
            assert!((e.new_value.norm() - 1.0).abs() < 1e-14);
        }
        // near keys stay close to some stored key
        let near = |k: &DVector<f64>| {
            (0..mem.m())
                .map(|i| mem.key(i).dot(k))
                .fold(f64::MIN, f64::max)
        };
        assert!(near(&a[0].key) > 0.9);
    }
}
