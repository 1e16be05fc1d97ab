//! `bound-check`: random acute perturbations tested against the pseudo-inverse
//! and key-drift bounds.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::write_csv;
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, spectral_norm, svd, Matrix, DEFAULT_RANK_TOL};
use crate::perturbation::{actual_key_drift, acute_perturbation, key_drift_bound};
use crate::rng::{gaussian_vector, stream, Rng, Stream};

/// Slack allowed on both bounds, relative to the bound.
pub const BOUND_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheckArgs {
    pub trials: usize,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    /// Multiplies every sampled perturbation; 0 forces `ΔW = 0`.
    pub scale: f64,
}

/// One trial. Rows with `gamma <= 0` are flagged and carry no bound fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub trial: usize,
    pub p: usize,
    pub q: usize,
    pub gamma: f64,
    pub flagged: bool,
    pub kappa_hat: Option<f64>,
    pub eta: Option<f64>,
    pub e11_norm: f64,
    pub e12_norm: f64,
    pub e21_norm: f64,
    pub b1_norm: Option<f64>,
    pub b2_norm: Option<f64>,
    pub term1: Option<f64>,
    pub term2: Option<f64>,
    pub term3: Option<f64>,
    pub rhs_total: Option<f64>,
    pub actual_drift: f64,
    pub bound_holds: Option<bool>,
    pub w_pinv_norm: f64,
    pub w_tilde_pinv_norm: f64,
    pub pinv_bound: Option<f64>,
    pub pinv_bound_holds: Option<bool>,
}

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let g = gaussian_vector(rng, rows * cols);
    Matrix::from_row_slice(rows, cols, g.as_slice()).expect("finite samples")
}

/// Samples `W`, an acute `ΔW` in the reduced frame of `W` and a right-hand
/// side, then evaluates both bounds.
///
/// `‖E11‖` is drawn as a fraction in `[0.01, 1.2)` of `σ_min(W)`, so some
/// trials land at `γ <= 0`. `E12` and `E21` get entries of size up to
/// `0.5 ‖W‖ / sqrt(dim)`.
pub fn bound_trial(args: &BoundCheckArgs, trial: usize) -> Result<BoundRow> {
    let (p, q) = (args.p, args.q);
    let mut rng = stream(args.seed, Stream::BoundTrial(trial as u32));
    let w = gaussian(&mut rng, p, q);
    let f = svd(&w)?;
    let r = f.numerical_rank(DEFAULT_RANK_TOL);
    let (w_norm, s_min) = (f.sigma_max(), f.singular_values[r - 1]);

    let mut e11 = gaussian(&mut rng, r, r);
    let e11_scale = s_min * rng.random_range(0.01..1.2) / spectral_norm(&e11)?;
    e11 = e11.scaled(e11_scale * args.scale);
    let e12 = gaussian(&mut rng, r, q - r)
        .scaled(rng.random_range(0.0..0.5) * w_norm / (q as f64).sqrt() * args.scale);
    let e21 = gaussian(&mut rng, p - r, r)
        .scaled(rng.random_range(0.0..0.5) * w_norm / (p as f64).sqrt() * args.scale);
    let dw = if args.scale == 0.0 {
        Matrix::zeros(p, q)
    } else {
        acute_perturbation(&w, &e11, &e12, &e21)?
    };
    let v = gaussian_vector(&mut rng, p);

    let w_pinv_norm = spectral_norm(&pseudo_inverse(&w, DEFAULT_RANK_TOL)?)?;
    let w_tilde_pinv_norm = spectral_norm(&pseudo_inverse(&(&w + &dw), DEFAULT_RANK_TOL)?)?;
    let actual_drift = actual_key_drift(&w, &dw, &v)?;
    let b = key_drift_bound(&w, &dw, &v)?;

    let mut row = BoundRow {
        trial,
        p,
        q,
        gamma: b.gamma,
        flagged: b.gamma <= 0.0,
        kappa_hat: None,
        eta: None,
        e11_norm: b.e11_norm,
        e12_norm: b.e12_norm,
        e21_norm: b.e21_norm,
        b1_norm: None,
        b2_norm: None,
        term1: None,
        term2: None,
        term3: None,
        rhs_total: None,
        actual_drift,
        bound_holds: None,
        w_pinv_norm,
        w_tilde_pinv_norm,
        pinv_bound: None,
        pinv_bound_holds: None,
    };
    if !row.flagged {
        let pinv_bound = w_pinv_norm / b.gamma;
        row.kappa_hat = Some(b.kappa_hat);
        row.eta = Some(b.eta);
        row.b1_norm = Some(b.b1_norm);
        row.b2_norm = Some(b.b2_norm);
        row.term1 = Some(b.term1);
        row.term2 = Some(b.term2);
        row.term3 = Some(b.term3);
        row.rhs_total = Some(b.rhs_total);
        row.bound_holds = Some(actual_drift <= b.rhs_total + BOUND_SLACK);
        row.pinv_bound = Some(pinv_bound);
        row.pinv_bound_holds = Some(w_tilde_pinv_norm <= pinv_bound * (1.0 + BOUND_SLACK));
    }
    Ok(row)
}

/// Thread count from `SEQEDIT_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("SEQEDIT_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(
                "SEQEDIT_THREADS",
                format!("expected a positive integer, got `{s}`"),
            )),
        },
    }
}

/// Runs every trial, in parallel, and returns the rows in trial order.
pub fn run_trials(args: &BoundCheckArgs) -> Result<Vec<BoundRow>> {
    if args.trials == 0 {
        return Err(Error::config("trials", "must be >= 1"));
    }
    if args.p == 0 || args.q == 0 {
        return Err(Error::config("p", "dimensions must be >= 1"));
    }
    if !(args.scale >= 0.0 && args.scale.is_finite()) {
        return Err(Error::config("scale", "must be a finite number >= 0"));
    }
    let work = || {
        (0..args.trials)
            .into_par_iter()
            .map(|t| bound_trial(args, t))
            .collect::<Result<Vec<_>>>()
    };
    match thread_cap()? {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("SEQEDIT_THREADS", e.to_string()))?
            .install(work),
    }
}

pub fn cmd_bound_check(args: &BoundCheckArgs, out: &Path) -> Result<Vec<BoundRow>> {
    let rows = run_trials(args)?;
    write_csv(out, &rows)?;
    Ok(rows)
}
