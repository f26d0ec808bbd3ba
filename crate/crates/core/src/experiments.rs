//! Experiment harness on planted instances: success rates, phase sweeps over
//! `(alpha, rho0)`, convergence-time scaling and noisy-case MSE curves.
//!
//! Every instance and restart seed is derived from the master seed and the
//! task coordinates, so results do not depend on thread count or scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_planted, scaled_count, EnsembleParams, PlantedInstance};
use crate::error::{GmcError, Result};
use crate::gmc::{multi_restart, single_restart, GmcConfig, GmcResult};
use crate::instance::SparseWeight;
use crate::linalg::{fit_least_squares, LeastSquaresFit};
use crate::seed::{derive_seed, Stream};

/// A run counts as a perfect reconstruction when `eps_x` is at most this.
pub const PERFECT_RECONSTRUCTION_TOL: f64 = 1e-10;

/// Input MSE `||x0 - x_hat||^2 / 2N`, with `x_hat` the fit embedded at the
/// active positions of `c`.
pub fn input_mse(x0: &[f64], c: &SparseWeight, fit: &LeastSquaresFit) -> Result<f64> {
    if x0.len() != c.len() {
        return Err(GmcError::DimensionMismatch(format!(
            "signal has length {}, sparse weight has length {}",
            x0.len(),
            c.len()
        )));
    }
    if fit.active != c.ones() {
        return Err(GmcError::DimensionMismatch(
            "fit does not belong to the given sparse weight".into(),
        ));
    }
    let x_hat = fit.full_coefficients(c.len());
    let sq: f64 = x0.iter().zip(&x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / (2.0 * x0.len() as f64))
}

/// Sample mean and standard error (sample stddev over `sqrt(n)`); the
/// standard error is zero for fewer than two values.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Scores of one finished GMC run against the planted signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub energy: f64,
    pub eps_x: f64,
    pub converged: bool,
    pub n_conv: u64,
}

impl RunScore {
    /// Perfect reconstruction; runs stopped by the sweep cap never count.
    pub fn success(&self) -> bool {
        self.converged && self.eps_x <= PERFECT_RECONSTRUCTION_TOL
    }
}

pub fn score_run(pi: &PlantedInstance, run: &GmcResult) -> Result<RunScore> {
    let fit = fit_least_squares(&pi.inst, &run.c_final)?;
    Ok(RunScore {
        energy: run.energy,
        eps_x: input_mse(&pi.x0, &run.c_final, &fit)?,
        converged: run.converged(),
        n_conv: run.n_conv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub p_suc: f64,
    pub successes: usize,
    pub n_init: usize,
    /// Runs stopped by the sweep cap (counted as failures).
    pub capped: usize,
}

/// Fraction of `n_init` restarts with `K = K0` that reconstruct the planted
/// signal. Meant for noiseless instances.
pub fn success_rate(pi: &PlantedInstance, n_init: usize, cfg: &GmcConfig) -> Result<SuccessRate> {
    if n_init == 0 {
        return Err(GmcError::InvalidParams("n_init must be at least 1".into()));
    }
    let runs = multi_restart(&pi.inst, pi.k0(), n_init, cfg)?;
    let scores = runs
        .all
        .iter()
        .map(|r| score_run(pi, r))
        .collect::<Result<Vec<_>>>()?;
    let successes = scores.iter().filter(|s| s.success()).count();
    Ok(SuccessRate {
        p_suc: successes as f64 / n_init as f64,
        successes,
        n_init,
        capped: scores.iter().filter(|s| !s.converged).count(),
    })
}

/// Seed of sample `index` in an experiment with master seed `master`.
pub fn instance_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, Stream::Instance, index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub n: usize,
    pub alpha: f64,
    pub rho0: f64,
    pub n_init: usize,
    pub n_samp: usize,
    pub p_suc: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub capped: usize,
    pub seed: u64,
}

/// `P_suc` over `n_samp` fresh noiseless instances.
pub fn success_report(
    n: usize,
    alpha: f64,
    rho0: f64,
    n_samp: usize,
    n_init: usize,
    cfg: &GmcConfig,
) -> Result<SuccessReport> {
    if n_samp == 0 {
        return Err(GmcError::InvalidParams("n_samp must be at least 1".into()));
    }
    EnsembleParams::noiseless(n, alpha, rho0, 0).validate()?;
    let rates = (0..n_samp)
        .into_par_iter()
        .map(|s| {
            let seed = instance_seed(cfg.seed, s);
            let pi = gen_planted(&EnsembleParams::noiseless(n, alpha, rho0, seed))?;
            success_rate(&pi, n_init, &GmcConfig { seed, ..cfg.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let p_suc: Vec<f64> = rates.iter().map(|r| r.p_suc).collect();
    let (mean, stderr) = mean_stderr(&p_suc);
    Ok(SuccessReport {
        n,
        alpha,
        rho0,
        n_init,
        n_samp,
        mean,
        stderr,
        capped: rates.iter().map(|r| r.capped).sum(),
        p_suc,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub alpha: f64,
    pub rho0: f64,
    pub n_samp: usize,
    pub p_samp: f64,
}

/// `alpha, rho0 in {0.05, 0.10, ..., 0.95}` with infeasible cells
/// (`K0 > M` at size `n`) left out.
pub fn default_phase_grid(n: usize) -> Vec<(f64, f64)> {
    let ticks: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
    let mut cells = Vec::new();
    for &alpha in &ticks {
        for &rho0 in &ticks {
            if EnsembleParams::noiseless(n, alpha, rho0, 0).validate().is_ok() {
                cells.push((alpha, rho0));
            }
        }
    }
    cells
}

fn cell_seed(master: u64, alpha: f64, rho0: f64) -> u64 {
    let a = derive_seed(master, Stream::Cell, alpha.to_bits());
    derive_seed(a, Stream::Cell, rho0.to_bits())
}

/// Whether any of `n_init` restarts reconstructs the planted signal. The
/// answer does not depend on evaluation order, so the scan stops early.
fn any_success(pi: &PlantedInstance, n_init: usize, cfg: &GmcConfig) -> Result<bool> {
    (0..n_init)
        .into_par_iter()
        .map(|r| {
            let run = single_restart(&pi.inst, pi.k0(), r, cfg)?;
            score_run(pi, &run).map(|s| s.success())
        })
        .find_any(|res| !matches!(res, Ok(false)))
        .unwrap_or(Ok(false))
}

/// `P_samp` (fraction of instances with `P_suc > 0`) for each grid cell.
/// Instances of a cell are seeded from the cell coordinates, so a cell gives
/// the same value whatever grid it is part of.
pub fn phase_sweep(
    cells: &[(f64, f64)],
    n: usize,
    n_samp: usize,
    n_init: usize,
    cfg: &GmcConfig,
) -> Result<Vec<PhaseCell>> {
    if n_samp == 0 || n_init == 0 {
        return Err(GmcError::InvalidParams("n_samp and n_init must be at least 1".into()));
    }
    for &(alpha, rho0) in cells {
        EnsembleParams::noiseless(n, alpha, rho0, 0)
            .validate()
            .map_err(|e| match e {
                GmcError::InvalidParams(msg) => {
                    GmcError::InvalidParams(format!("cell (alpha={alpha}, rho0={rho0}): {msg}"))
                }
                other => other,
            })?;
    }
    cells
        .iter()
        .map(|&(alpha, rho0)| {
            let master = cell_seed(cfg.seed, alpha, rho0);
            let hits = (0..n_samp)
                .into_par_iter()
                .map(|s| {
                    let seed = instance_seed(master, s);
                    let pi = gen_planted(&EnsembleParams::noiseless(n, alpha, rho0, seed))?;
                    any_success(&pi, n_init, &GmcConfig { seed, ..cfg.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PhaseCell {
                alpha,
                rho0,
                n_samp,
                p_samp: hits.iter().filter(|&&h| h).count() as f64 / n_samp as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub n: usize,
    /// Mean over instances of the per-instance mean `N_conv` of converged runs.
    pub nconv_mean: f64,
    pub nconv_stderr: f64,
    pub instances: usize,
    /// Runs excluded because they hit the sweep cap.
    pub capped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub records: Vec<ScalingRecord>,
    /// Least-squares slope of `ln(mean N_conv)` against `ln N`; absent for
    /// fewer than two sizes.
    pub slope: Option<f64>,
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let (mx, _) = mean_stderr(xs);
    let (my, _) = mean_stderr(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mean sweeps to convergence per system size, `n_samp` instances per size
/// and `n_init` restarts per instance, with `K = round(rho N)`.
pub fn nconv_scaling(
    sizes: &[usize],
    alpha: f64,
    rho: f64,
    rho0: f64,
    n_samp: usize,
    n_init: usize,
    cfg: &GmcConfig,
) -> Result<ScalingReport> {
    if n_samp == 0 || n_init == 0 {
        return Err(GmcError::InvalidParams("n_samp and n_init must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(sizes.len());
    for &n in sizes {
        EnsembleParams::noiseless(n, alpha, rho0, 0).validate()?;
        let k = scaled_count(rho, n);
        let master = derive_seed(cfg.seed, Stream::Cell, n as u64);
        let per_instance = (0..n_samp)
            .into_par_iter()
            .map(|s| {
                let seed = instance_seed(master, s);
                let pi = gen_planted(&EnsembleParams::noiseless(n, alpha, rho0, seed))?;
                let runs = multi_restart(&pi.inst, k, n_init, &GmcConfig { seed, ..cfg.clone() })?;
                let conv: Vec<f64> = runs
                    .all
                    .iter()
                    .filter(|r| r.converged())
                    .map(|r| r.n_conv as f64)
                    .collect();
                Ok((conv.len(), n_init - conv.len(), mean_stderr(&conv).0))
            })
            .collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = per_instance
            .iter()
            .filter(|(c, _, _)| *c > 0)
            .map(|&(_, _, m)| m)
            .collect();
        let (nconv_mean, nconv_stderr) = mean_stderr(&means);
        records.push(ScalingRecord {
            n,
            nconv_mean,
            nconv_stderr,
            instances: n_samp,
            capped: per_instance.iter().map(|&(_, c, _)| c).sum(),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.nconv_mean.is_finite() && r.nconv_mean > 0.0)
        .map(|r| ((r.n as f64).ln(), r.nconv_mean.ln()))
        .unzip();
    let slope = if xs.len() == records.len() { fit_slope(&xs, &ys) } else { None };
    Ok(ScalingReport { records, slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub rho: f64,
    pub k: usize,
    pub eps_y_mean: f64,
    pub eps_y_stderr: f64,
    pub eps_x_mean: f64,
    pub eps_x_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub n: usize,
    pub alpha: f64,
    pub rho0: f64,
    pub noise_var: f64,
    pub n_samp: usize,
    pub n_init: usize,
    pub rows: Vec<MseRow>,
}

/// Output and input MSE of the best-of-`n_init` estimator against the
/// assumed density `rho`. The same `n_samp` instances are used at every
/// grid point.
pub fn noisy_mse_curve(
    base: &EnsembleParams,
    rho_grid: &[f64],
    n_samp: usize,
    n_init: usize,
    cfg: &GmcConfig,
) -> Result<MseReport> {
    if n_samp == 0 || n_init == 0 {
        return Err(GmcError::InvalidParams("n_samp and n_init must be at least 1".into()));
    }
    base.validate()?;
    let (n, m) = (base.n, base.m());
    let ks = rho_grid
        .iter()
        .map(|&rho| {
            let k = scaled_count(rho, n);
            if k == 0 || k > m {
                Err(GmcError::InvalidParams(format!(
                    "rho = {rho} gives K = {k}, outside 1..={m}"
                )))
            } else {
                Ok(k)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let instances = (0..n_samp)
        .into_par_iter()
        .map(|s| {
            gen_planted(&EnsembleParams {
                seed: instance_seed(cfg.seed, s),
                ..*base
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(ks.len());
    for (&rho, &k) in rho_grid.iter().zip(&ks) {
        let scores = instances
            .par_iter()
            .enumerate()
            .map(|(s, pi)| {
                let seed = derive_seed(instance_seed(cfg.seed, s), Stream::Restart, k as u64);
                let runs = multi_restart(&pi.inst, k, n_init, &GmcConfig { seed, ..cfg.clone() })?;
                score_run(pi, &runs.best)
            })
            .collect::<Result<Vec<_>>>()?;
        let ey: Vec<f64> = scores.iter().map(|s| s.energy).collect();
        let ex: Vec<f64> = scores.iter().map(|s| s.eps_x).collect();
        let (eps_y_mean, eps_y_stderr) = mean_stderr(&ey);
        let (eps_x_mean, eps_x_stderr) = mean_stderr(&ex);
        rows.push(MseRow {
            rho,
            k,
            eps_y_mean,
            eps_y_stderr,
            eps_x_mean,
            eps_x_stderr,
        });
    }
    Ok(MseReport {
        n,
        alpha: base.alpha,
        rho0: base.rho0,
        noise_var: base.noise_var,
        n_samp,
        n_init,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_for(active: Vec<usize>, coefficients: Vec<f64>) -> LeastSquaresFit {
        LeastSquaresFit {
            active,
            coefficients,
            energy: 0.0,
            residual: vec![],
            rank: 0,
            rank_deficient: false,
        }
    }

    #[test]
    fn input_mse_hand_case() {
        let c = SparseWeight::from_indices(4, &[2]).unwrap();
        let fit = fit_for(vec![2], vec![0.0]);
        let e = input_mse(&[1.0, 0.0, 0.0, 0.0], &c, &fit).unwrap();
        assert!((e - 0.125).abs() < 1e-16);
    }

    #[test]
    fn input_mse_exact_estimate_is_zero() {
        let c = SparseWeight::from_indices(3, &[0, 2]).unwrap();
        let fit = fit_for(vec![0, 2], vec![1.5, -2.0]);
        assert_eq!(input_mse(&[1.5, 0.0, -2.0], &c, &fit).unwrap(), 0.0);
    }

    #[test]
    fn input_mse_checks_lengths() {
        let c = SparseWeight::from_indices(3, &[0]).unwrap();
        let fit = fit_for(vec![0], vec![1.0]);
        assert!(input_mse(&[1.0, 0.0], &c, &fit).is_err());
        let other = SparseWeight::from_indices(3, &[1]).unwrap();
        assert!(input_mse(&[1.0, 0.0, 0.0], &other, &fit).is_err());
    }

    #[test]
    fn mean_stderr_basic() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
    }

    #[test]
    fn slope_needs_two_points() {
        assert_eq!(fit_slope(&[1.0], &[2.0]), None);
        let s = fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_restarts_rejected() {
        let pi = gen_planted(&EnsembleParams::noiseless(20, 0.5, 0.2, 1)).unwrap();
        assert!(success_rate(&pi, 0, &GmcConfig::default()).is_err());
    }

    #[test]
    fn default_grid_skips_infeasible_cells() {
        let grid = default_phase_grid(100);
        assert!(grid.iter().all(|&(a, r)| r <= a + 1e-12));
        assert!(grid.contains(&(0.5, 0.2)) && grid.contains(&(0.3, 0.3)));
        assert_eq!(grid.len(), 19 * 20 / 2);
    }

    #[test]
    fn phase_sweep_names_infeasible_cell() {
        let err = phase_sweep(&[(0.1, 0.2)], 100, 1, 1, &GmcConfig::default()).unwrap_err();
        assert!(err.to_string().contains("alpha=0.1"));
    }

    #[test]
    fn square_boundary_cell_runs() {
        let cells = phase_sweep(&[(0.2, 0.2)], 30, 2, 2, &GmcConfig::with_seed(4)).unwrap();
        assert!((0.0..=1.0).contains(&cells[0].p_samp));
    }

    #[test]
    fn single_size_has_no_slope() {
        let rep = nconv_scaling(&[30], 0.5, 0.2, 0.2, 2, 1, &GmcConfig::with_seed(1)).unwrap();
        assert_eq!(rep.slope, None);
        assert!(rep.records[0].nconv_mean.is_finite() && rep.records[0].nconv_mean > 0.0);
    }

    #[test]
    fn noiseless_curve_at_true_density_recovers() {
        let base = EnsembleParams::noiseless(40, 0.5, 0.2, 0);
        let rep = noisy_mse_curve(&base, &[0.2], 3, 20, &GmcConfig::with_seed(2)).unwrap();
        assert!(rep.rows[0].eps_x_mean <= 1e-10);
    }

    #[test]
    fn interpolation_regime_has_zero_output_mse() {
        let base = EnsembleParams {
            n: 40,
            alpha: 0.5,
            rho0: 0.2,
            noise_var: 0.1,
            seed: 0,
        };
        let rep = noisy_mse_curve(&base, &[0.5], 3, 2, &GmcConfig::with_seed(2)).unwrap();
        assert!(rep.rows[0].eps_y_mean < 1e-20);
        assert!(noisy_mse_curve(&base, &[0.6], 1, 1, &GmcConfig::default()).is_err());
    }

    #[test]
    fn fully_determined_system_always_succeeds() {
        // alpha = 1 with K0 = K: every support of size K0 other than the
        // planted one leaves a residual, and the planted one is reached.
        let pi = gen_planted(&EnsembleParams::noiseless(20, 1.0, 0.2, 3)).unwrap();
        let rate = success_rate(&pi, 20, &GmcConfig::with_seed(3)).unwrap();
        assert!(rate.p_suc >= 0.95, "p_suc = {}", rate.p_suc);
    }
}
