//! Planted Gaussian instances.
//!
//! `A_ij ~ N(0, 1/N)`, a uniform random support of size `K0`, nonzero signal
//! entries `~ N(0, N/K0)` so that `||x0||^2 / N` has unit mean, and
//! `y = A x0 + xi` with `xi_mu ~ N(0, noise_var)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};
use crate::instance::{Instance, SparseWeight};
use crate::seed::{rng_from_seed, NORMAL_NAME, RNG_NAME};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n: usize,
    /// Measurement ratio `M / N`.
    pub alpha: f64,
    /// True density `K0 / N`.
    pub rho0: f64,
    pub noise_var: f64,
    pub seed: u64,
}

/// Nearest-integer rounding of `ratio * n`, halves rounded up.
pub fn scaled_count(ratio: f64, n: usize) -> usize {
    let v = ratio * n as f64;
    (v + 0.5).floor().max(0.0) as usize
}

impl EnsembleParams {
    pub fn noiseless(n: usize, alpha: f64, rho0: f64, seed: u64) -> Self {
        Self {
            n,
            alpha,
            rho0,
            noise_var: 0.0,
            seed,
        }
    }

    pub fn m(&self) -> usize {
        scaled_count(self.alpha, self.n)
    }

    pub fn k0(&self) -> usize {
        scaled_count(self.rho0, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GmcError::InvalidParams(msg));
        if self.n == 0 {
            return bad("N must be positive".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.rho0.is_finite() && self.rho0 > 0.0 && self.rho0 <= 1.0) {
            return bad(format!("rho0 = {} must lie in (0, 1]", self.rho0));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return bad(format!("noise variance {} must be >= 0", self.noise_var));
        }
        let (m, k0) = (self.m(), self.k0());
        if m == 0 {
            return bad(format!("alpha = {} gives M = 0 at N = {}", self.alpha, self.n));
        }
        if k0 == 0 {
            return bad(format!("rho0 = {} gives K0 = 0 at N = {}", self.rho0, self.n));
        }
        if k0 > m {
            return bad(format!(
                "K0 = {k0} exceeds M = {m} (alpha = {}, rho0 = {})",
                self.alpha, self.rho0
            ));
        }
        Ok(())
    }
}

/// Provenance stored with generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub params: EnsembleParams,
    pub rng: String,
    pub normal: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub inst: Instance,
    pub x0: Vec<f64>,
    pub support0: SparseWeight,
    pub noise_var: f64,
    pub generator: Option<GeneratorMeta>,
}

impl PlantedInstance {
    pub fn k0(&self) -> usize {
        self.support0.k()
    }
}

/// Uniform random `k`-subset of `0..n`.
pub fn random_support<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<SparseWeight> {
    if k == 0 || k > n {
        return Err(GmcError::InvalidParams(format!(
            "support size {k} must satisfy 1 <= K <= N = {n}"
        )));
    }
    let picked = index::sample(rng, n, k);
    SparseWeight::from_indices(n, &picked.into_vec())
}

pub fn gen_planted(params: &EnsembleParams) -> Result<PlantedInstance> {
    params.validate()?;
    let (n, m, k0) = (params.n, params.m(), params.k0());
    let mut rng = rng_from_seed(params.seed);

    let a_scale = (1.0 / n as f64).sqrt();
    let a: Vec<f64> = (0..m * n)
        .map(|_| a_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let support0 = random_support(n, k0, &mut rng)?;
    let x_scale = (n as f64 / k0 as f64).sqrt();
    let mut x0 = vec![0.0; n];
    for i in support0.ones() {
        x0[i] = x_scale * rng.sample::<f64, _>(StandardNormal);
    }

    let mut y = vec![0.0; m];
    for (j, &xj) in x0.iter().enumerate() {
        if xj != 0.0 {
            for (yi, aij) in y.iter_mut().zip(&a[j * m..(j + 1) * m]) {
                *yi += aij * xj;
            }
        }
    }
    if params.noise_var > 0.0 {
        let sd = params.noise_var.sqrt();
        for yi in &mut y {
            *yi += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    Ok(PlantedInstance {
        inst: Instance::from_col_major(m, n, a, y)?,
        x0,
        support0,
        noise_var: params.noise_var,
        generator: Some(GeneratorMeta {
            params: *params,
            rng: RNG_NAME.into(),
            normal: NORMAL_NAME.into(),
        }),
    })
}
