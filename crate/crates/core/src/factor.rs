//! Updatable orthogonal factorisation of the active columns.
//!
//! The state keeps `A_c = Q R` with `Q` (M x K) orthonormal, `R` upper
//! triangular, `h = Q^T y` and the explicit residual `r = y - Q h`. A pair
//! flip `(i_out, j_in)` is evaluated in `O(K^2 + MK)` without touching the
//! state:
//!
//! - removing column `p` strips the direction `Q g` from the span, where
//!   `g` is `R^{-T} e_p` normalised; the residual grows to
//!   `r_rem = r + (g . h) Q g`;
//! - the incoming column contributes `w = (a_j - Q Q^T a_j) + (g . Q^T a_j) Q g`,
//!   its component orthogonal to the remaining span, and the flipped
//!   residual is `r_rem - (w . r_rem / w . w) w`.
//!
//! Committing applies Givens rotations to drop column `p` from `R` and
//! appends the new column by classical Gram-Schmidt with one
//! re-orthogonalisation pass. The residual after a commit is the very vector
//! the prediction produced, so the committed energy equals the predicted
//! one bit for bit.
//!
//! The factors are rebuilt from scratch every [`REBUILD_INTERVAL`] commits,
//! or as soon as the tracked energy and a fresh `y - Q Q^T y` recomputation
//! disagree by more than [`DRIFT_TOL`] (relative). Sets whose columns are
//! numerically dependent fall back to a full minimum-norm refit per
//! evaluation.

use crate::error::{GmcError, Result};
use crate::instance::{Instance, SparseWeight};
use crate::linalg::{axpy, dot, fit_active, half_mse, sq_norm, RANK_TOL};

/// Commits between unconditional rebuilds.
pub const REBUILD_INTERVAL: usize = 256;
/// Relative mismatch between tracked and recomputed energy that forces a rebuild.
pub const DRIFT_TOL: f64 = 1e-9;

const NOT_ACTIVE: usize = usize::MAX;

/// Cached data for taking one active column out.
#[derive(Debug, Clone)]
pub(crate) struct Removal {
    g: Vec<f64>,
    qg: Vec<f64>,
    r_rem: Vec<f64>,
}

/// Cached projection of one inactive column onto the current span.
#[derive(Debug, Clone)]
pub(crate) struct Insertion {
    s: Vec<f64>,
    u: Vec<f64>,
    a_sq_norm: f64,
}

#[derive(Debug, Clone)]
pub struct FactorState<'a> {
    inst: &'a Instance,
    active: Vec<usize>,
    position: Vec<usize>,
    kcap: usize,
    q: Vec<f64>,
    r: Vec<f64>,
    h: Vec<f64>,
    resid: Vec<f64>,
    energy: f64,
    deficient: bool,
    commits_since_rebuild: usize,
    rebuilds: usize,
    energy_floor: f64,
}

impl<'a> FactorState<'a> {
    /// Factorises the active columns of `c`, in ascending index order.
    pub fn new(inst: &'a Instance, c: &SparseWeight) -> Result<Self> {
        if c.len() != inst.n() {
            return Err(GmcError::DimensionMismatch(format!(
                "sparse weight has length {}, instance has N = {}",
                c.len(),
                inst.n()
            )));
        }
        Self::with_order(inst, &c.ones())
    }

    /// Factorises the given columns, inserted in the given order.
    pub fn with_order(inst: &'a Instance, order: &[usize]) -> Result<Self> {
        let (m, n) = (inst.m(), inst.n());
        let k = order.len();
        if k == 0 {
            return Err(GmcError::InvalidParams("active set is empty".into()));
        }
        if k > m {
            return Err(GmcError::InvalidParams(format!(
                "K = {k} exceeds the number of rows M = {m}"
            )));
        }
        let mut position = vec![NOT_ACTIVE; n];
        for (p, &j) in order.iter().enumerate() {
            if j >= n {
                return Err(GmcError::IndexOutOfRange { index: j, len: n });
            }
            if position[j] != NOT_ACTIVE {
                return Err(GmcError::InvalidParams(format!("duplicate active index {j}")));
            }
            position[j] = p;
        }
        let mut fs = Self {
            inst,
            active: order.to_vec(),
            position,
            kcap: k,
            q: vec![0.0; m * k],
            r: vec![0.0; k * k],
            h: vec![0.0; k],
            resid: vec![0.0; m],
            energy: 0.0,
            deficient: false,
            commits_since_rebuild: 0,
            rebuilds: 0,
            energy_floor: 1e-12 * half_mse(inst.y()),
        };
        fs.refactor();
        Ok(fs)
    }

    /// Rebuilds `Q`, `R`, `h` and the residual from the current active list.
    fn refactor(&mut self) {
        let m = self.inst.m();
        self.deficient = false;
        self.commits_since_rebuild = 0;
        for (slot, &j) in self.active.clone().iter().enumerate() {
            if !self.append_column(slot, j) {
                self.deficient = true;
                break;
            }
        }
        if self.deficient {
            let fit = fit_active(self.inst, &self.active);
            self.resid = fit.residual;
            self.energy = fit.energy;
            return;
        }
        let k = self.active.len();
        let y = self.inst.y();
        let mut resid = y.to_vec();
        for l in 0..k {
            self.h[l] = dot(self.q_col(l), y);
        }
        for l in 0..k {
            axpy(-self.h[l], &self.q[l * m..(l + 1) * m], &mut resid);
        }
        for l in 0..k {
            let c = dot(self.q_col(l), &resid);
            self.h[l] += c;
            axpy(-c, &self.q[l * m..(l + 1) * m], &mut resid);
        }
        self.energy = half_mse(&resid);
        self.resid = resid;
    }

    fn q_col(&self, l: usize) -> &[f64] {
        let m = self.inst.m();
        &self.q[l * m..(l + 1) * m]
    }

    fn r_at(&self, i: usize, j: usize) -> f64 {
        self.r[j * self.kcap + i]
    }

    /// Orthogonalises column `j` against `Q[:, ..slot]` and stores it at
    /// `slot`. Returns `false` when the column is numerically dependent.
    fn append_column(&mut self, slot: usize, j: usize) -> bool {
        let m = self.inst.m();
        let a = self.inst.column(j);
        let (s, u) = project_out(&self.q[..slot * m], m, a);
        let d = sq_norm(&u).sqrt();
        if d == 0.0 || d <= RANK_TOL * sq_norm(a).sqrt() {
            return false;
        }
        for (i, &si) in s.iter().enumerate() {
            self.r[slot * self.kcap + i] = si;
        }
        self.r[slot * self.kcap + slot] = d;
        let dst = &mut self.q[slot * m..(slot + 1) * m];
        for (qi, ui) in dst.iter_mut().zip(&u) {
            *qi = ui / d;
        }
        true
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    /// Current output MSE.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn k(&self) -> usize {
        self.active.len()
    }

    /// Active columns in factor (insertion) order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.position.get(i).is_some_and(|&p| p != NOT_ACTIVE)
    }

    /// True when the active columns are numerically dependent and every
    /// evaluation goes through a full refit.
    pub fn is_rank_deficient(&self) -> bool {
        self.deficient
    }

    /// Number of from-scratch rebuilds triggered by commits so far.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub fn sparse_weight(&self) -> SparseWeight {
        SparseWeight::from_indices(self.inst.n(), &self.active)
            .expect("active set is non-empty and duplicate free")
    }

    /// Diagonal-inclusive upper-triangular factor, row-major `K x K`.
    pub fn r_factor(&self) -> Vec<Vec<f64>> {
        let k = self.k();
        (0..k)
            .map(|i| (0..k).map(|j| if j >= i { self.r_at(i, j) } else { 0.0 }).collect())
            .collect()
    }

    fn check_flip(&self, i_out: usize, j_in: usize) -> Result<()> {
        if !self.is_active(i_out) {
            return Err(GmcError::IndexNotActive(i_out));
        }
        if j_in >= self.inst.n() || self.is_active(j_in) {
            return Err(GmcError::IndexNotInactive(j_in));
        }
        Ok(())
    }

    fn flipped_order(&self, i_out: usize, j_in: usize) -> Vec<usize> {
        let mut order: Vec<usize> = self.active.iter().copied().filter(|&a| a != i_out).collect();
        order.push(j_in);
        order
    }

    pub(crate) fn removal(&self, i_out: usize) -> Removal {
        debug_assert!(!self.deficient);
        let m = self.inst.m();
        let k = self.k();
        let p = self.position[i_out];
        // forward substitution R^T v = e_p; v[..p] = 0
        let mut v = vec![0.0; k];
        v[p] = 1.0 / self.r_at(p, p);
        for i in p + 1..k {
            let mut s = 0.0;
            for l in p..i {
                s += self.r_at(l, i) * v[l];
            }
            v[i] = -s / self.r_at(i, i);
        }
        let norm = sq_norm(&v).sqrt();
        for vi in &mut v {
            *vi /= norm;
        }
        let mut qg = vec![0.0; m];
        for (l, &gl) in v.iter().enumerate().skip(p) {
            axpy(gl, &self.q[l * m..(l + 1) * m], &mut qg);
        }
        let gh = dot(&v, &self.h[..k]);
        let mut r_rem = self.resid.clone();
        axpy(gh, &qg, &mut r_rem);
        Removal {
            g: v,
            qg,
            r_rem,
        }
    }

    pub(crate) fn insertion(&self, j_in: usize) -> Insertion {
        debug_assert!(!self.deficient);
        let m = self.inst.m();
        let a = self.inst.column(j_in);
        let (s, u) = project_out(&self.q[..self.k() * m], m, a);
        Insertion {
            s,
            u,
            a_sq_norm: sq_norm(a),
        }
    }

    /// Energy of the flipped state from cached pieces; optionally writes the
    /// flipped residual into `out`. Both paths run identical arithmetic.
    pub(crate) fn flip_energy(&self, rem: &Removal, ins: &Insertion, out: Option<&mut [f64]>) -> f64 {
        let m = self.inst.m();
        let gs = dot(&rem.g, &ins.s);
        let mut ww = 0.0;
        let mut wr = 0.0;
        for mu in 0..m {
            let w = ins.u[mu] + gs * rem.qg[mu];
            ww += w * w;
            wr += w * rem.r_rem[mu];
        }
        if ww == 0.0 || ww <= RANK_TOL * RANK_TOL * ins.a_sq_norm {
            if let Some(out) = out {
                out.copy_from_slice(&rem.r_rem);
            }
            return half_mse(&rem.r_rem);
        }
        let coef = wr / ww;
        let mut acc = 0.0;
        match out {
            Some(out) => {
                for mu in 0..m {
                    let w = ins.u[mu] + gs * rem.qg[mu];
                    let v = rem.r_rem[mu] - coef * w;
                    out[mu] = v;
                    acc += v * v;
                }
            }
            None => {
                for mu in 0..m {
                    let w = ins.u[mu] + gs * rem.qg[mu];
                    let v = rem.r_rem[mu] - coef * w;
                    acc += v * v;
                }
            }
        }
        acc / (2.0 * m as f64)
    }

    /// Whether the flip with these cached pieces leaves the columns
    /// numerically independent.
    fn flip_keeps_rank(&self, rem: &Removal, ins: &Insertion) -> bool {
        let gs = dot(&rem.g, &ins.s);
        let ww: f64 = (0..self.inst.m())
            .map(|mu| {
                let w = ins.u[mu] + gs * rem.qg[mu];
                w * w
            })
            .sum();
        !(ww == 0.0 || ww <= RANK_TOL * RANK_TOL * ins.a_sq_norm)
    }

    /// Energy after deactivating `i_out` and activating `j_in`, leaving the
    /// state untouched.
    pub fn energy_after_pair_flip(&self, i_out: usize, j_in: usize) -> Result<f64> {
        self.check_flip(i_out, j_in)?;
        if self.deficient {
            return Ok(fit_active(self.inst, &self.flipped_order(i_out, j_in)).energy);
        }
        let rem = self.removal(i_out);
        let ins = self.insertion(j_in);
        Ok(self.flip_energy(&rem, &ins, None))
    }

    /// Applies the flip. Returns the new energy, which equals what
    /// [`energy_after_pair_flip`](Self::energy_after_pair_flip) predicted.
    pub fn commit_pair_flip(&mut self, i_out: usize, j_in: usize) -> Result<f64> {
        self.check_flip(i_out, j_in)?;
        if self.deficient {
            let order = self.flipped_order(i_out, j_in);
            let predicted = fit_active(self.inst, &order).energy;
            self.replace_active(order);
            self.rebuild_keeping(predicted);
            return Ok(self.energy);
        }
        let rem = self.removal(i_out);
        let ins = self.insertion(j_in);
        let mut new_resid = vec![0.0; self.inst.m()];
        let predicted = self.flip_energy(&rem, &ins, Some(&mut new_resid));
        if !self.flip_keeps_rank(&rem, &ins) {
            let order = self.flipped_order(i_out, j_in);
            self.replace_active(order);
            self.rebuild_keeping(predicted);
            return Ok(self.energy);
        }

        self.drop_position(self.position[i_out]);
        let slot = self.active.len();
        if !self.append_column(slot, j_in) {
            // the rank test above and the fresh projection disagree; refit
            self.active.push(j_in);
            self.position[j_in] = slot;
            self.rebuild_keeping(predicted);
            return Ok(self.energy);
        }
        self.active.push(j_in);
        self.position[j_in] = slot;
        self.h[slot] = dot(self.q_col(slot), self.inst.y());
        self.resid = new_resid;
        self.energy = predicted;
        self.commits_since_rebuild += 1;

        if self.commits_since_rebuild >= REBUILD_INTERVAL || self.drifted() {
            self.rebuild_keeping(predicted);
        }
        Ok(self.energy)
    }

    fn replace_active(&mut self, order: Vec<usize>) {
        for &a in &self.active {
            self.position[a] = NOT_ACTIVE;
        }
        for (p, &a) in order.iter().enumerate() {
            self.position[a] = p;
        }
        self.active = order;
    }

    /// Removes column `p` from the factorisation with Givens rotations.
    fn drop_position(&mut self, p: usize) {
        let m = self.inst.m();
        let k = self.k();
        let kc = self.kcap;
        for j in p..k - 1 {
            for i in 0..=j + 1 {
                self.r[j * kc + i] = self.r[(j + 1) * kc + i];
            }
        }
        for j in p..k - 1 {
            let a = self.r[j * kc + j];
            let b = self.r[j * kc + j + 1];
            let rho = a.hypot(b);
            if rho == 0.0 {
                continue;
            }
            let (c, s) = (a / rho, b / rho);
            for col in j..k - 1 {
                let x = self.r[col * kc + j];
                let y = self.r[col * kc + j + 1];
                self.r[col * kc + j] = c * x + s * y;
                self.r[col * kc + j + 1] = -s * x + c * y;
            }
            self.r[j * kc + j + 1] = 0.0;
            let (left, right) = self.q.split_at_mut((j + 1) * m);
            let qj = &mut left[j * m..];
            let qj1 = &mut right[..m];
            for (x, y) in qj.iter_mut().zip(qj1.iter_mut()) {
                let (xv, yv) = (*x, *y);
                *x = c * xv + s * yv;
                *y = -s * xv + c * yv;
            }
            let (hx, hy) = (self.h[j], self.h[j + 1]);
            self.h[j] = c * hx + s * hy;
            self.h[j + 1] = -s * hx + c * hy;
        }
        // clear the vacated last column of R
        for i in 0..kc {
            self.r[(k - 1) * kc + i] = 0.0;
        }
        let removed = self.active.remove(p);
        self.position[removed] = NOT_ACTIVE;
        for (l, &a) in self.active.iter().enumerate().skip(p) {
            self.position[a] = l;
        }
    }

    /// Energy recomputed from the factors, `||y - Q Q^T y||^2 / 2M`.
    pub fn recomputed_energy(&self) -> f64 {
        if self.deficient {
            return fit_active(self.inst, &self.active).energy;
        }
        let m = self.inst.m();
        let y = self.inst.y();
        let mut resid = y.to_vec();
        for l in 0..self.k() {
            let c = dot(self.q_col(l), y);
            axpy(-c, &self.q[l * m..(l + 1) * m], &mut resid);
        }
        half_mse(&resid)
    }

    fn mismatch(&self, a: f64, b: f64) -> bool {
        (a - b).abs() > DRIFT_TOL * a.max(b).max(self.energy_floor)
    }

    fn drifted(&self) -> bool {
        self.mismatch(self.energy, self.recomputed_energy())
    }

    /// Rebuilds from scratch. The tracked energy stays at `predicted` unless
    /// the fresh value disagrees beyond `DRIFT_TOL`.
    fn rebuild_keeping(&mut self, predicted: f64) {
        self.refactor();
        self.rebuilds += 1;
        if !self.mismatch(predicted, self.energy) {
            self.energy = predicted;
        }
    }
}

/// Projects `a` off the span of the orthonormal columns in `q` (column-major,
/// `m` rows) with two Gram-Schmidt passes. Returns `(Q^T a, a - Q Q^T a)`.
fn project_out(q: &[f64], m: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = q.len() / m;
    let mut s: Vec<f64> = q.chunks_exact(m).map(|col| dot(col, a)).collect();
    let mut u = a.to_vec();
    for (col, &sl) in q.chunks_exact(m).zip(&s) {
        axpy(-sl, col, &mut u);
    }
    for (l, col) in q.chunks_exact(m).enumerate() {
        let c = dot(col, &u);
        s[l] += c;
        axpy(-c, col, &mut u);
    }
    debug_assert_eq!(s.len(), k);
    (s, u)
}
