use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};

/// A regression problem: design matrix `A` (M x N) and response `y` (M).
///
/// `A` is stored column-major since every hot path walks columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    m: usize,
    n: usize,
    a: Vec<f64>,
    y: Vec<f64>,
}

impl Instance {
    /// Builds an instance from column-major data.
    pub fn from_col_major(m: usize, n: usize, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(GmcError::ShapeMismatch(format!(
                "instance needs M >= 1 and N >= 1, got M={m}, N={n}"
            )));
        }
        if a.len() != m * n {
            return Err(GmcError::ShapeMismatch(format!(
                "matrix has {} entries, expected {m}x{n}",
                a.len()
            )));
        }
        if y.len() != m {
            return Err(GmcError::ShapeMismatch(format!(
                "response has {} entries, expected {m}",
                y.len()
            )));
        }
        if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
            return Err(GmcError::InvalidParams(format!(
                "non-finite matrix entry at row {}, column {}",
                pos % m,
                pos / m
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(GmcError::InvalidParams(format!(
                "non-finite response entry at row {pos}"
            )));
        }
        Ok(Self { m, n, a, y })
    }

    /// Builds an instance from a list of rows.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(GmcError::ShapeMismatch(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        let mut a = vec![0.0; m * n];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a[j * m + i] = v;
            }
        }
        Self::from_col_major(m, n, a, y)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.a[col * self.m + row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(row, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|i| self.row(i)).collect()
    }
}

/// The search state: which columns are active. Popcount `K >= 1` is fixed at
/// construction and conserved by pair flips.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparseWeight {
    bits: Vec<bool>,
    k: usize,
}

impl SparseWeight {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        let k = bits.iter().filter(|&&b| b).count();
        if k == 0 {
            return Err(GmcError::InvalidParams(
                "sparse weight must have at least one active component".into(),
            ));
        }
        Ok(Self { bits, k })
    }

    /// Builds the weight with the given active indices set. Duplicates and
    /// out-of-range indices are rejected.
    pub fn from_indices(n: usize, active: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in active {
            if i >= n {
                return Err(GmcError::IndexOutOfRange { index: i, len: n });
            }
            if bits[i] {
                return Err(GmcError::InvalidParams(format!("duplicate active index {i}")));
            }
            bits[i] = true;
        }
        Self::from_bits(bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    /// Active indices in ascending order.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Inactive indices in ascending order.
    pub fn zeros(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
            .collect()
    }

    /// Deactivates `i_out` and activates `j_in`.
    pub fn pair_flip(&mut self, i_out: usize, j_in: usize) -> Result<()> {
        if !self.is_active(i_out) {
            return Err(GmcError::IndexNotActive(i_out));
        }
        if j_in >= self.len() || self.bits[j_in] {
            return Err(GmcError::IndexNotInactive(j_in));
        }
        self.bits[i_out] = false;
        self.bits[j_in] = true;
        Ok(())
    }
}
