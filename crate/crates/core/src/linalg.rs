//! Least squares restricted to an active column set.
//!
//! The fit uses Householder QR with column pivoting. When the active columns
//! are numerically dependent (pivot below `RANK_TOL` times the largest pivot)
//! the minimum-norm solution is returned through a second orthogonal
//! factorisation of the trapezoidal factor, and the fit is flagged.

use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};
use crate::instance::{Instance, SparseWeight};

/// Relative pivot threshold for rank detection.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresFit {
    /// Active column indices, ascending; `coefficients[i]` belongs to `active[i]`.
    pub active: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Output MSE `||residual||^2 / 2M`.
    pub energy: f64,
    pub residual: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl LeastSquaresFit {
    /// Embeds the active coefficients into a length-`n` vector, zeros elsewhere.
    pub fn full_coefficients(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (&i, &v) in self.active.iter().zip(&self.coefficients) {
            x[i] = v;
        }
        x
    }

    /// Prediction `sum_i row_i * x_i` for one row of a design matrix.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.active
            .iter()
            .zip(&self.coefficients)
            .map(|(&i, &v)| row[i] * v)
            .sum()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Half mean square of a residual vector.
#[inline]
pub(crate) fn half_mse(residual: &[f64]) -> f64 {
    sq_norm(residual) / (2.0 * residual.len() as f64)
}

/// Householder reflectors stored LAPACK-style: the essential part of each
/// vector below the diagonal of `qr`, scalars in `tau`.
struct HouseholderQr {
    rows: usize,
    cols: usize,
    qr: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl HouseholderQr {
    /// Factorises a column-major `rows x cols` matrix. With `pivot` set, the
    /// remaining column of largest norm is moved forward at every step and the
    /// factorisation stops once the pivot falls below `RANK_TOL * |R_00|`.
    fn new(rows: usize, cols: usize, mut qr: Vec<f64>, pivot: bool) -> Self {
        let steps = rows.min(cols);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut rank = steps;
        let mut first_pivot = 0.0;
        for p in 0..steps {
            if pivot {
                let mut best = p;
                let mut best_norm = -1.0;
                for j in p..cols {
                    let norm = sq_norm(&qr[j * rows + p..(j + 1) * rows]);
                    if norm > best_norm {
                        best_norm = norm;
                        best = j;
                    }
                }
                if best != p {
                    for i in 0..rows {
                        qr.swap(p * rows + i, best * rows + i);
                    }
                    perm.swap(p, best);
                }
            }
            let col = &mut qr[p * rows..(p + 1) * rows];
            let alpha = col[p];
            let xnorm = sq_norm(&col[p + 1..]).sqrt();
            let norm = alpha.hypot(xnorm);
            if p == 0 {
                first_pivot = norm;
            }
            if pivot && (norm == 0.0 || norm <= RANK_TOL * first_pivot) {
                rank = p;
                break;
            }
            if xnorm == 0.0 {
                tau[p] = 0.0;
                continue;
            }
            let beta = if alpha >= 0.0 { -norm } else { norm };
            tau[p] = (beta - alpha) / beta;
            let scale = 1.0 / (alpha - beta);
            for v in &mut col[p + 1..] {
                *v *= scale;
            }
            col[p] = beta;
            // apply H = I - tau v v^T to the trailing columns
            for j in p + 1..cols {
                let (head, tail) = qr.split_at_mut(j * rows);
                let v = &head[p * rows..(p + 1) * rows];
                let target = &mut tail[..rows];
                let mut s = target[p];
                s += dot(&v[p + 1..], &target[p + 1..]);
                s *= tau[p];
                target[p] -= s;
                for i in p + 1..rows {
                    target[i] -= s * v[i];
                }
            }
        }
        Self {
            rows,
            cols,
            qr,
            tau,
            perm,
            rank,
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[j * self.rows + i]
    }

    /// Computes `Q^T b` in place, using the first `steps` reflectors.
    fn apply_qt(&self, b: &mut [f64], steps: usize) {
        for p in 0..steps {
            self.reflect(p, b);
        }
    }

    /// Computes `Q b` in place.
    fn apply_q(&self, b: &mut [f64], steps: usize) {
        for p in (0..steps).rev() {
            self.reflect(p, b);
        }
    }

    fn reflect(&self, p: usize, b: &mut [f64]) {
        if self.tau[p] == 0.0 {
            return;
        }
        let v = &self.qr[p * self.rows..(p + 1) * self.rows];
        let s = self.tau[p] * (b[p] + dot(&v[p + 1..], &b[p + 1..]));
        b[p] -= s;
        for i in p + 1..self.rows {
            b[i] -= s * v[i];
        }
    }
}

/// Minimum-norm least squares of a column-major `rows x cols` matrix against
/// `rhs`. Returns the solution and the numerical rank.
pub(crate) fn min_norm_lstsq(rows: usize, cols: usize, mat: Vec<f64>, rhs: &[f64]) -> (Vec<f64>, usize) {
    let qr = HouseholderQr::new(rows, cols, mat, true);
    let rank = qr.rank;
    let mut x = vec![0.0; cols];
    if rank == 0 {
        return (x, 0);
    }
    let mut qty = rhs.to_vec();
    qr.apply_qt(&mut qty, rank);

    let mut v = vec![0.0; cols];
    if rank == cols {
        for i in (0..rank).rev() {
            let mut s = qty[i];
            for j in i + 1..rank {
                s -= qr.r(i, j) * v[j];
            }
            v[i] = s / qr.r(i, i);
        }
    } else {
        // T = [R11 R12] is rank x cols; factor T^T = W S, then v = W S^{-T} c.
        let mut tt = vec![0.0; cols * rank];
        for i in 0..rank {
            for j in i..cols {
                tt[i * cols + j] = qr.r(i, j);
            }
        }
        let second = HouseholderQr::new(cols, rank, tt, false);
        let mut z = vec![0.0; cols];
        for i in 0..rank {
            let mut s = qty[i];
            for j in 0..i {
                s -= second.r(j, i) * z[j];
            }
            z[i] = s / second.r(i, i);
        }
        second.apply_q(&mut z, rank);
        v = z;
    }
    for (pos, &orig) in qr.perm.iter().enumerate().take(qr.cols) {
        x[orig] = v[pos];
    }
    (x, rank)
}

fn check_len(inst: &Instance, c: &SparseWeight) -> Result<()> {
    if c.len() != inst.n() {
        return Err(GmcError::DimensionMismatch(format!(
            "sparse weight has length {}, instance has N = {}",
            c.len(),
            inst.n()
        )));
    }
    Ok(())
}

/// Least-squares fit of `y` on the columns listed in `active`.
pub fn fit_active(inst: &Instance, active: &[usize]) -> LeastSquaresFit {
    let m = inst.m();
    let k = active.len();
    let mut mat = Vec::with_capacity(m * k);
    for &j in active {
        mat.extend_from_slice(inst.column(j));
    }
    let (coefficients, rank) = min_norm_lstsq(m, k, mat, inst.y());
    let mut residual = inst.y().to_vec();
    for (&j, &x) in active.iter().zip(&coefficients) {
        axpy(-x, inst.column(j), &mut residual);
    }
    LeastSquaresFit {
        active: active.to_vec(),
        coefficients,
        energy: half_mse(&residual),
        residual,
        rank,
        rank_deficient: rank < k,
    }
}

/// Minimum-norm least-squares fit over the active columns of `c`.
pub fn fit_least_squares(inst: &Instance, c: &SparseWeight) -> Result<LeastSquaresFit> {
    check_len(inst, c)?;
    Ok(fit_active(inst, &c.ones()))
}

/// Output MSE `epsilon_y(c | y, A)`.
pub fn energy(inst: &Instance, c: &SparseWeight) -> Result<f64> {
    fit_least_squares(inst, c).map(|f| f.energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(rows: &[Vec<f64>], y: Vec<f64>) -> Instance {
        Instance::from_rows(rows, y).unwrap()
    }

    #[test]
    fn exact_single_column_representation() {
        let a = inst(
            &[vec![1.0, 3.0], vec![-2.0, 0.5], vec![0.5, 1.0]],
            vec![6.0, 1.0, 2.0],
        );
        let c = SparseWeight::from_indices(2, &[1]).unwrap();
        let fit = fit_least_squares(&a, &c).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(fit.energy < 1e-28);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn orthogonal_response_gives_zero_coefficients() {
        let a = inst(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]], vec![0.0, 0.0, 3.0]);
        let c = SparseWeight::from_indices(2, &[0, 1]).unwrap();
        let fit = fit_least_squares(&a, &c).unwrap();
        assert_eq!(fit.coefficients, vec![0.0, 0.0]);
        assert!((fit.energy - 9.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn square_system_has_zero_energy() {
        let a = inst(&[vec![2.0, 1.0], vec![1.0, 3.0]], vec![1.0, -1.0]);
        let c = SparseWeight::from_indices(2, &[0, 1]).unwrap();
        assert!(energy(&a, &c).unwrap() < 1e-30);
    }

    #[test]
    fn duplicate_columns_give_minimum_norm_split() {
        // columns 0 and 1 identical: min-norm solution splits the weight evenly
        let a = inst(&[vec![1.0, 1.0], vec![1.0, 1.0]], vec![2.0, 2.0]);
        let c = SparseWeight::from_indices(2, &[0, 1]).unwrap();
        let fit = fit_least_squares(&a, &c).unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.rank, 1);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-14);
        assert!(fit.energy < 1e-28);
    }

    #[test]
    fn zero_columns_are_rank_zero() {
        let a = inst(&[vec![0.0, 1.0], vec![0.0, 1.0]], vec![1.0, 2.0]);
        let c = SparseWeight::from_indices(2, &[0]).unwrap();
        let fit = fit_least_squares(&a, &c).unwrap();
        assert_eq!(fit.rank, 0);
        assert_eq!(fit.coefficients, vec![0.0]);
        assert!((fit.energy - 5.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = inst(&[vec![1.0, 2.0]], vec![1.0]);
        let c = SparseWeight::from_indices(3, &[0]).unwrap();
        assert!(matches!(
            fit_least_squares(&a, &c),
            Err(GmcError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn full_coefficients_embed_at_active_positions() {
        let a = inst(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]], vec![3.0, 4.0]);
        let c = SparseWeight::from_indices(3, &[0, 2]).unwrap();
        let fit = fit_least_squares(&a, &c).unwrap();
        let x = fit.full_coefficients(3);
        assert!((x[0] - 3.0).abs() < 1e-14 && x[1] == 0.0 && (x[2] - 4.0).abs() < 1e-14);
        assert!((fit.predict_row(&[1.0, 5.0, 1.0]) - 7.0).abs() < 1e-13);
    }
}
