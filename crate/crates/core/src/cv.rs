//! Leave-one-out cross-validation over the sparsity level.
//!
//! For every row `mu`, the row is removed, GMC selects a support on the
//! remaining `M-1` rows, the support is refit there, and the held-out
//! response is predicted. The CV error is `sum_mu (y_mu - a_mu . x^mu)^2 / 2M`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};
use crate::gmc::{multi_restart, GmcConfig};
use crate::instance::{Instance, SparseWeight};
use crate::linalg::fit_active;
use crate::seed::{derive_seed, Stream};

/// Default restarts per fold: a single GMC run.
pub const DEFAULT_N_INIT_PER_FOLD: usize = 1;

/// The system with row `mu` of `A` and entry `mu` of `y` removed.
pub fn loo_system(inst: &Instance, mu: usize) -> Result<Instance> {
    let m = inst.m();
    if m < 2 {
        return Err(GmcError::InvalidParams(
            "leave-one-out needs at least two rows".into(),
        ));
    }
    if mu >= m {
        return Err(GmcError::IndexOutOfRange { index: mu, len: m });
    }
    let n = inst.n();
    let mut a = Vec::with_capacity((m - 1) * n);
    for j in 0..n {
        let col = inst.column(j);
        a.extend_from_slice(&col[..mu]);
        a.extend_from_slice(&col[mu + 1..]);
    }
    let mut y = inst.y().to_vec();
    y.remove(mu);
    Instance::from_col_major(m - 1, n, a, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooFold {
    pub mu: usize,
    /// Selected columns, ascending.
    pub support: Vec<usize>,
    /// Output MSE of the selected support on the reduced system.
    pub energy: f64,
    pub prediction: f64,
    pub held_out: f64,
    pub seed: u64,
}

impl LooFold {
    pub fn sq_error(&self) -> f64 {
        let d = self.held_out - self.prediction;
        d * d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub n_init_per_fold: usize,
    pub eps_cv: f64,
    pub folds: Vec<LooFold>,
    /// How many folds selected each column.
    pub counts: Vec<usize>,
    pub seed: u64,
}

fn fold_seed(master: u64, mu: usize) -> u64 {
    derive_seed(master, Stream::Fold, mu as u64)
}

fn held_out_prediction(inst: &Instance, reduced: &Instance, mu: usize, support: &[usize]) -> (f64, f64) {
    let fit = fit_active(reduced, support);
    (fit.predict_row(&inst.row(mu)), fit.energy)
}

fn assemble(inst: &Instance, k: usize, n_init: usize, seed: u64, folds: Vec<LooFold>) -> LooReport {
    let m = inst.m();
    let mut counts = vec![0; inst.n()];
    for f in &folds {
        for &i in &f.support {
            counts[i] += 1;
        }
    }
    let eps_cv = folds.iter().map(LooFold::sq_error).sum::<f64>() / (2.0 * m as f64);
    LooReport {
        k,
        m,
        n: inst.n(),
        n_init_per_fold: n_init,
        eps_cv,
        folds,
        counts,
        seed,
    }
}

/// LOO CV error at sparsity `k` with `n_init_per_fold` GMC restarts per fold.
pub fn loo_cv_error(inst: &Instance, k: usize, n_init_per_fold: usize, cfg: &GmcConfig) -> Result<LooReport> {
    let m = inst.m();
    if k == 0 || k >= m || k > inst.n() {
        return Err(GmcError::InvalidParams(format!(
            "K = {k} must satisfy 1 <= K <= M - 1 = {} and K <= N = {}",
            m.saturating_sub(1),
            inst.n()
        )));
    }
    if n_init_per_fold == 0 {
        return Err(GmcError::InvalidParams("n_init_per_fold must be at least 1".into()));
    }
    let folds = (0..m)
        .into_par_iter()
        .map(|mu| {
            let reduced = loo_system(inst, mu)?;
            let seed = fold_seed(cfg.seed, mu);
            let runs = multi_restart(&reduced, k, n_init_per_fold, &GmcConfig { seed, ..cfg.clone() })?;
            let support = runs.best.c_final.ones();
            let (prediction, energy) = held_out_prediction(inst, &reduced, mu, &support);
            Ok(LooFold {
                mu,
                support,
                energy,
                prediction,
                held_out: inst.y()[mu],
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(inst, k, n_init_per_fold, cfg.seed, folds))
}

/// LOO error of least squares on one fixed support, refit per fold.
pub fn loo_error_fixed_support(inst: &Instance, c: &SparseWeight) -> Result<LooReport> {
    if c.len() != inst.n() {
        return Err(GmcError::DimensionMismatch(format!(
            "sparse weight has length {}, instance has N = {}",
            c.len(),
            inst.n()
        )));
    }
    let support = c.ones();
    let folds = (0..inst.m())
        .map(|mu| {
            let reduced = loo_system(inst, mu)?;
            let (prediction, energy) = held_out_prediction(inst, &reduced, mu, &support);
            Ok(LooFold {
                mu,
                support: support.clone(),
                energy,
                prediction,
                held_out: inst.y()[mu],
                seed: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(inst, c.k(), 0, 0, folds))
}

/// `(column, count)` sorted by count descending then column ascending,
/// truncated to `top` entries when given.
pub fn selection_counts(report: &LooReport, top: Option<usize>) -> Vec<(usize, usize)> {
    let mut table: Vec<(usize, usize)> = report.counts.iter().copied().enumerate().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    if let Some(t) = top {
        table.truncate(t);
    }
    table
}
