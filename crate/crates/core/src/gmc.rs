//! Greedy Monte-Carlo search over sparse weights of fixed popcount.
//!
//! One Monte-Carlo step (MCS) is `N` pair-flip proposals, each drawing an
//! active index and an inactive index uniformly and accepting the flip only
//! if it strictly lowers the energy. When the weight has not changed for
//! `t_wait` consecutive sweeps, every one of the `K(N-K)` flip neighbours is
//! evaluated; the search stops if none is strictly lower, otherwise it moves
//! to a lowest neighbour (uniform among exact ties) and resumes sweeping.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::random_support;
use crate::error::{GmcError, Result};
use crate::factor::{FactorState, Insertion, Removal};
use crate::instance::{Instance, SparseWeight};
use crate::seed::{derive_seed, rng_from_seed, ChainRng, Stream};

pub const DEFAULT_T_WAIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmcConfig {
    /// Consecutive unchanged sweeps before the exhaustive neighbour scan.
    pub t_wait: usize,
    /// Hard cap on sweeps; `None` means `100 * t_wait * N`.
    pub max_mcs: Option<u64>,
    pub seed: u64,
    /// Keep the energy after every accepted move.
    pub record_trajectory: bool,
}

impl Default for GmcConfig {
    fn default() -> Self {
        Self {
            t_wait: DEFAULT_T_WAIT,
            max_mcs: None,
            seed: 0,
            record_trajectory: false,
        }
    }
}

impl GmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn max_mcs_for(&self, n: usize) -> u64 {
        self.max_mcs
            .unwrap_or(100 * self.t_wait as u64 * n as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    LocalOptimum,
    MaxMcs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmcResult {
    pub c_final: SparseWeight,
    pub energy: f64,
    /// Completed MCS sweeps.
    pub n_conv: u64,
    pub exhaustive_invocations: u64,
    pub accepted_flips: u64,
    pub terminated_by: Termination,
    pub seed: u64,
    /// Initial energy followed by the energy after each accepted move.
    pub trajectory: Option<Vec<f64>>,
}

impl GmcResult {
    pub fn converged(&self) -> bool {
        self.terminated_by == Termination::LocalOptimum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOutcome {
    pub proposals: usize,
    pub accepted: usize,
    /// Whether the weight differs from the one at the start of the sweep.
    pub changed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExhaustiveOutcome {
    NoImprovement,
    MovedTo { i_out: usize, j_in: usize, energy: f64 },
}

/// Memoised flip pieces for the current factorisation, keyed by column.
struct ProposalCache {
    removals: Vec<Option<Removal>>,
    insertions: Vec<Option<Insertion>>,
    filled: Vec<usize>,
}

impl ProposalCache {
    fn new(n: usize) -> Self {
        Self {
            removals: vec![None; n],
            insertions: vec![None; n],
            filled: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &i in &self.filled {
            self.removals[i] = None;
            self.insertions[i] = None;
        }
        self.filled.clear();
    }

    fn energy(&mut self, fs: &FactorState<'_>, i_out: usize, j_in: usize) -> f64 {
        if self.removals[i_out].is_none() {
            self.removals[i_out] = Some(fs.removal(i_out));
            self.filled.push(i_out);
        }
        if self.insertions[j_in].is_none() {
            self.insertions[j_in] = Some(fs.insertion(j_in));
            self.filled.push(j_in);
        }
        fs.flip_energy(
            self.removals[i_out].as_ref().unwrap(),
            self.insertions[j_in].as_ref().unwrap(),
            None,
        )
    }
}

/// One search chain: factorised state, inactive-index bookkeeping and its
/// private random stream.
pub struct SearchState<'a> {
    fs: FactorState<'a>,
    zeros: Vec<usize>,
    zero_pos: Vec<usize>,
    rng: ChainRng,
    cache: ProposalCache,
    accepted: u64,
    trajectory: Option<Vec<f64>>,
}

impl<'a> SearchState<'a> {
    pub fn new(inst: &'a Instance, c: &SparseWeight, seed: u64, record_trajectory: bool) -> Result<Self> {
        let fs = FactorState::new(inst, c)?;
        let n = inst.n();
        let zeros = c.zeros();
        let mut zero_pos = vec![usize::MAX; n];
        for (p, &z) in zeros.iter().enumerate() {
            zero_pos[z] = p;
        }
        let trajectory = record_trajectory.then(|| vec![fs.energy()]);
        Ok(Self {
            fs,
            zeros,
            zero_pos,
            rng: rng_from_seed(seed),
            cache: ProposalCache::new(n),
            accepted: 0,
            trajectory,
        })
    }

    pub fn energy(&self) -> f64 {
        self.fs.energy()
    }

    pub fn factor(&self) -> &FactorState<'a> {
        &self.fs
    }

    pub fn sparse_weight(&self) -> SparseWeight {
        self.fs.sparse_weight()
    }

    pub fn trajectory(&self) -> Option<&[f64]> {
        self.trajectory.as_deref()
    }

    fn flip_energy(&mut self, i_out: usize, j_in: usize) -> Result<f64> {
        if self.fs.is_rank_deficient() {
            self.fs.energy_after_pair_flip(i_out, j_in)
        } else {
            Ok(self.cache.energy(&self.fs, i_out, j_in))
        }
    }

    fn commit(&mut self, i_out: usize, j_in: usize) -> Result<f64> {
        let e = self.fs.commit_pair_flip(i_out, j_in)?;
        let p = self.zero_pos[j_in];
        self.zeros[p] = i_out;
        self.zero_pos[i_out] = p;
        self.zero_pos[j_in] = usize::MAX;
        self.cache.clear();
        self.accepted += 1;
        if let Some(t) = self.trajectory.as_mut() {
            t.push(e);
        }
        Ok(e)
    }

    /// One pair-flip trial. Returns whether the flip was accepted.
    pub fn mc_pair_flip(&mut self) -> Result<bool> {
        if self.zeros.is_empty() {
            return Err(GmcError::DegenerateState(
                "no inactive index to flip in (K = N)".into(),
            ));
        }
        let k = self.fs.k();
        let i_out = self.fs.active()[self.rng.random_range(0..k)];
        let j_in = self.zeros[self.rng.random_range(0..self.zeros.len())];
        let proposed = self.flip_energy(i_out, j_in)?;
        if proposed < self.fs.energy() {
            self.commit(i_out, j_in)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn snapshot(&self) -> Vec<usize> {
        let mut s = self.fs.active().to_vec();
        s.sort_unstable();
        s
    }

    /// One MCS: `N` pair-flip trials.
    pub fn run_one_mcs(&mut self) -> Result<SweepOutcome> {
        let before = self.snapshot();
        let n = self.fs.instance().n();
        let mut accepted = 0;
        for _ in 0..n {
            if self.mc_pair_flip()? {
                accepted += 1;
            }
        }
        Ok(SweepOutcome {
            proposals: n,
            accepted,
            changed: self.snapshot() != before,
        })
    }

    /// Evaluates all `K(N-K)` flip neighbours and moves to the lowest one if
    /// it is strictly below the current energy.
    pub fn exhaustive_local_search(&mut self) -> Result<ExhaustiveOutcome> {
        let current = self.fs.energy();
        let active = self.fs.active().to_vec();
        let zeros = self.zeros.clone();
        let mut best = f64::INFINITY;
        let mut ties: Vec<(usize, usize)> = Vec::new();
        for &i in &active {
            for &j in &zeros {
                let e = self.flip_energy(i, j)?;
                if e < best {
                    best = e;
                    ties.clear();
                    ties.push((i, j));
                } else if e == best {
                    ties.push((i, j));
                }
            }
        }
        if best >= current {
            return Ok(ExhaustiveOutcome::NoImprovement);
        }
        let (i_out, j_in) = if ties.len() == 1 {
            ties[0]
        } else {
            ties[self.rng.random_range(0..ties.len())]
        };
        let energy = self.commit(i_out, j_in)?;
        Ok(ExhaustiveOutcome::MovedTo { i_out, j_in, energy })
    }
}

/// Runs GMC from `c_init`. Deterministic given `(inst, c_init, cfg.seed)`.
pub fn gmc(inst: &Instance, c_init: &SparseWeight, cfg: &GmcConfig) -> Result<GmcResult> {
    if cfg.t_wait == 0 {
        return Err(GmcError::InvalidParams("t_wait must be at least 1".into()));
    }
    let mut state = SearchState::new(inst, c_init, cfg.seed, cfg.record_trajectory)?;
    let max_mcs = cfg.max_mcs_for(inst.n());
    let mut n_conv = 0u64;
    let mut exhaustive = 0u64;
    let mut stall = 0usize;

    let terminated_by = if c_init.k() == inst.n() {
        // no flip neighbours exist
        Termination::LocalOptimum
    } else {
        loop {
            let sweep = state.run_one_mcs()?;
            n_conv += 1;
            if sweep.changed {
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= cfg.t_wait {
                exhaustive += 1;
                match state.exhaustive_local_search()? {
                    ExhaustiveOutcome::NoImprovement => break Termination::LocalOptimum,
                    ExhaustiveOutcome::MovedTo { .. } => stall = 0,
                }
            }
            if n_conv >= max_mcs {
                break Termination::MaxMcs;
            }
        }
    };

    Ok(GmcResult {
        c_final: state.sparse_weight(),
        energy: state.energy(),
        n_conv,
        exhaustive_invocations: exhaustive,
        accepted_flips: state.accepted,
        terminated_by,
        seed: cfg.seed,
        trajectory: state.trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRestart {
    pub best: GmcResult,
    /// All runs, ordered by restart index.
    pub all: Vec<GmcResult>,
    pub best_index: usize,
}

/// Seed of restart `index` under master seed `master`.
pub fn restart_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, Stream::Restart, index as u64)
}

/// One restart: a uniform random `K`-subset drawn from the restart's own
/// stream, then GMC with the restart seed.
pub fn single_restart(inst: &Instance, k: usize, index: usize, cfg: &GmcConfig) -> Result<GmcResult> {
    let seed = restart_seed(cfg.seed, index);
    let mut init_rng = rng_from_seed(derive_seed(seed, Stream::InitialState, 0));
    let c_init = random_support(inst.n(), k, &mut init_rng)?;
    let run_cfg = GmcConfig {
        seed,
        ..cfg.clone()
    };
    gmc(inst, &c_init, &run_cfg)
}

fn check_k(inst: &Instance, k: usize) -> Result<()> {
    if k == 0 || k > inst.m() || k > inst.n() {
        return Err(GmcError::InvalidParams(format!(
            "K = {k} must satisfy 1 <= K <= min(M, N) = {}",
            inst.m().min(inst.n())
        )));
    }
    Ok(())
}

/// `n_init` independent restarts; the best is the lowest energy, ties going
/// to the lowest restart index.
pub fn multi_restart(inst: &Instance, k: usize, n_init: usize, cfg: &GmcConfig) -> Result<MultiRestart> {
    if n_init == 0 {
        return Err(GmcError::InvalidParams("n_init must be at least 1".into()));
    }
    check_k(inst, k)?;
    let all = (0..n_init)
        .into_par_iter()
        .map(|r| single_restart(inst, k, r, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut best_index = 0;
    for (i, run) in all.iter().enumerate() {
        if run.energy < all[best_index].energy {
            best_index = i;
        }
    }
    Ok(MultiRestart {
        best: all[best_index].clone(),
        all,
        best_index,
    })
}
