//! Reference implementations shared by the integration tests. They avoid the
//! library's factorisation code on purpose.
#![allow(dead_code)]

use gmc_core::datagen::{gen_planted, EnsembleParams, PlantedInstance};
use gmc_core::{Instance, SparseWeight};

/// Least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Returns `(coefficients, energy)`.
pub fn normal_equations(inst: &Instance, support: &[usize]) -> (Vec<f64>, f64) {
    let m = inst.m();
    let k = support.len();
    let mut g = vec![vec![0.0; k + 1]; k];
    for (p, &i) in support.iter().enumerate() {
        let ci = inst.column(i);
        for (q, &j) in support.iter().enumerate() {
            let cj = inst.column(j);
            g[p][q] = (0..m).map(|r| ci[r] * cj[r]).sum();
        }
        g[p][k] = (0..m).map(|r| ci[r] * inst.y()[r]).sum();
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&a, &b| g[a][col].abs().total_cmp(&g[b][col].abs()))
            .unwrap();
        g.swap(col, piv);
        for row in col + 1..k {
            let f = g[row][col] / g[col][col];
            for c in col..=k {
                g[row][c] -= f * g[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut s = g[row][k];
        for c in row + 1..k {
            s -= g[row][c] * x[c];
        }
        x[row] = s / g[row][row];
    }
    (x.clone(), residual_energy(inst, support, &x))
}

/// `||y - A_S x||^2 / 2M` evaluated directly.
pub fn residual_energy(inst: &Instance, support: &[usize], x: &[f64]) -> f64 {
    let m = inst.m();
    let mut r = inst.y().to_vec();
    for (&j, &b) in support.iter().zip(x) {
        for (ri, a) in r.iter_mut().zip(inst.column(j)) {
            *ri -= b * a;
        }
    }
    r.iter().map(|v| v * v).sum::<f64>() / (2.0 * m as f64)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Every pair-flip neighbour of `c` as `(i_out, j_in, neighbour)`.
pub fn neighbours(c: &SparseWeight) -> Vec<(usize, usize, SparseWeight)> {
    let mut out = Vec::new();
    for i in c.ones() {
        for j in c.zeros() {
            let mut nb = c.clone();
            nb.pair_flip(i, j).unwrap();
            out.push((i, j, nb));
        }
    }
    out
}

pub fn planted(n: usize, alpha: f64, rho0: f64, seed: u64) -> PlantedInstance {
    gen_planted(&EnsembleParams::noiseless(n, alpha, rho0, seed)).unwrap()
}

/// Dense Gaussian instance with unit-variance entries, for tests that need
/// no planted structure.
pub fn gaussian_instance(m: usize, n: usize, seed: u64) -> Instance {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    Instance::from_col_major(m, n, a, y).unwrap()
}
