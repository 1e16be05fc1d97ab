//! Linear associative memory `W` storing pairs with `W k_i = v_i`.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::text::{read_mat, write_mat};
use crate::linalg::{pseudo_inverse, singular_values, Matrix, DEFAULT_RANK_TOL};
use crate::rng::{stream, unit_vector, Stream};

/// Largest relative recall residual accepted at construction.
pub const EXACTNESS_TOL: f64 = 1e-8;
const MAX_SYNTH_ATTEMPTS: u32 = 3;

#[derive(Clone, Debug)]
pub struct AssociativeMemory {
    w: Matrix,
    /// m×q, one key per row.
    keys: Matrix,
    /// m×p, one value per row.
    values: Matrix,
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryMeta {
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub seed: u64,
}

/// Samples `m` unit keys in `R^q` and unit values in `R^p` and stores them in
/// the minimum-Frobenius-norm interpolant `W = V K†`.
pub fn synthesize_memory(p: usize, q: usize, m: usize, seed: u64) -> Result<AssociativeMemory> {
    check_shape(p, q, m)?;
    for attempt in 0..MAX_SYNTH_ATTEMPTS {
        let mut rng = stream(seed, Stream::Memory(attempt));
        let keys: Vec<_> = (0..m).map(|_| unit_vector(&mut rng, q)).collect();
        let values: Vec<_> = (0..m).map(|_| unit_vector(&mut rng, p)).collect();
        let keys = Matrix::from_rows(&keys, q)?;
        let values = Matrix::from_rows(&values, p)?;
        match AssociativeMemory::from_pairs(keys, values, seed) {
            Ok(mem) => return Ok(mem),
            Err(Error::Singular { .. }) | Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible(format!(
        "sampled keys were rank deficient in {MAX_SYNTH_ATTEMPTS} attempts"
    )))
}

fn check_shape(p: usize, q: usize, m: usize) -> Result<()> {
    if p == 0 || p >= q {
        return Err(Error::Infeasible(format!(
            "need 1 <= p < q, got p={p}, q={q}"
        )));
    }
    if m == 0 || m > q {
        return Err(Error::Infeasible(format!(
            "need 1 <= m <= q for exact storage, got m={m}, q={q}"
        )));
    }
    Ok(())
}

impl AssociativeMemory {
    /// Builds `W = V K†` from explicit pairs (rows of `keys` and `values`).
    pub fn from_pairs(keys: Matrix, values: Matrix, seed: u64) -> Result<Self> {
        let (m, q) = keys.shape();
        let p = values.cols();
        if values.rows() != m {
            return Err(Error::Dimension(format!(
                "{m} keys but {} values",
                values.rows()
            )));
        }
        check_shape(p, q, m)?;
        check_unit_keys(&keys)?;
        let s = singular_values(&keys)?;
        let smin = *s.last().expect("m >= 1");
        if smin <= DEFAULT_RANK_TOL * s[0] {
            return Err(Error::Singular { sigma_min: smin });
        }
        // keys is K^T, so K† = (keys^T)† = (keys†)^T.
        let w = &values.t() * &pseudo_inverse(&keys, DEFAULT_RANK_TOL)?.t();
        Self::from_parts(w, keys, values, seed)
    }

    /// Assembles a memory from a stored `W`, checking the recall invariant.
    pub fn from_parts(w: Matrix, keys: Matrix, values: Matrix, seed: u64) -> Result<Self> {
        let (p, q) = w.shape();
        let m = keys.rows();
        if keys.cols() != q || values.cols() != p || values.rows() != m {
            return Err(Error::Dimension(format!(
                "W is {p}x{q}, keys {:?}, values {:?}",
                keys.shape(),
                values.shape()
            )));
        }
        check_shape(p, q, m)?;
        check_unit_keys(&keys)?;
        let mem = AssociativeMemory {
            w,
            keys,
            values,
            seed,
        };
        let worst = mem.recall_error(&mem.w)?.into_iter().fold(0.0f64, f64::max);
        if !(worst <= EXACTNESS_TOL) {
            return Err(Error::Infeasible(format!(
                "stored pairs recalled with relative error {worst:e}"
            )));
        }
        Ok(mem)
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p(&self) -> usize {
        self.w.rows()
    }

    pub fn q(&self) -> usize {
        self.w.cols()
    }

    pub fn m(&self) -> usize {
        self.keys.rows()
    }

    pub fn key(&self, i: usize) -> DVector<f64> {
        self.keys.row_vector(i)
    }

    pub fn value(&self, i: usize) -> DVector<f64> {
        self.values.row_vector(i)
    }

    pub fn meta(&self) -> MemoryMeta {
        MemoryMeta {
            p: self.p(),
            q: self.q(),
            m: self.m(),
            seed: self.seed,
        }
    }

    /// `W k`.
    pub fn recall(&self, k: &DVector<f64>) -> Result<DVector<f64>> {
        self.w.mul_vec(k)
    }

    /// Per stored pair, `‖W_current k_i − v_i‖ / ‖v_i‖`.
    pub fn recall_error(&self, w_current: &Matrix) -> Result<Vec<f64>> {
        if w_current.shape() != self.w.shape() {
            return Err(Error::Dimension(format!(
                "expected a {:?} matrix, got {:?}",
                self.w.shape(),
                w_current.shape()
            )));
        }
        // columns of W_current · keysᵀ are the recalls
        let recalled = w_current * &self.keys.t();
        Ok((0..self.m())
            .map(|i| {
                let v = self.values.row(i).transpose();
                (recalled.column(i) - &v).norm() / v.norm()
            })
            .collect())
    }

    /// Writes `w.mat`, `keys.mat`, `values.mat` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        write_mat(&dir.join("w.mat"), &self.w)?;
        write_mat(&dir.join("keys.mat"), &self.keys)?;
        write_mat(&dir.join("values.mat"), &self.values)?;
        let meta = serde_json::to_string_pretty(&self.meta()).expect("plain struct");
        let path = dir.join("meta.json");
        std::fs::write(&path, meta + "\n").map_err(|e| Error::file(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("meta.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        let meta: MemoryMeta = serde_json::from_str(&text).map_err(|e| Error::file(&path, e))?;
        let w = read_mat(&dir.join("w.mat"))?;
        let keys = read_mat(&dir.join("keys.mat"))?;
        let values = read_mat(&dir.join("values.mat"))?;
        let mem = Self::from_parts(w, keys, values, meta.seed).map_err(|e| Error::file(dir, e))?;
        if mem.meta() != meta {
            return Err(Error::file(&path, "shape does not match stored matrices"));
        }
        Ok(mem)
    }
}

fn check_unit_keys(keys: &Matrix) -> Result<()> {
    for i in 0..keys.rows() {
        let n = keys.row(i).norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("key {i} has norm {n}, expected 1")));
        }
    }
    Ok(())
}
