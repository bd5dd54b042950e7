use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Box of retained wavenumbers `k ∈ ℤⁿ` with `|k|_∞ ≤ K`.
///
/// Coefficients are stored row-major with each axis running `-K..=K`, so the
/// index of `-k` is `len - 1 - index(k)` and `k = 0` sits in the middle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modes {
    dim: usize,
    cutoff: usize,
}

impl Modes {
    pub fn new(dim: usize, cutoff: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidModes(format!(
                "spatial dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if cutoff == 0 {
            return Err(Error::InvalidModes("cutoff K must be at least 1".into()));
        }
        Ok(Self { dim, cutoff })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zero_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn conj_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let cut = self.cutoff as i64;
        let mut idx = 0usize;
        for &kd in k {
            if kd.abs() > cut {
                return None;
            }
            idx = idx * self.side() + (kd + cut) as usize;
        }
        Some(idx)
    }

    /// Wavevector at a storage index; entries past `dim` are zero.
    pub fn wavevector(&self, idx: usize) -> [i64; MAX_DIM] {
        let mut k = [0i64; MAX_DIM];
        let side = self.side();
        let mut rest = idx;
        for d in (0..self.dim).rev() {
            k[d] = (rest % side) as i64 - self.cutoff as i64;
            rest /= side;
        }
        k
    }

    pub fn norm_sq(&self, idx: usize) -> f64 {
        self.wavevector(idx)[..self.dim]
            .iter()
            .map(|&v| (v * v) as f64)
            .sum()
    }

    /// Euclidean `|k|`.
    pub fn norm(&self, idx: usize) -> f64 {
        self.norm_sq(idx).sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, [i64; MAX_DIM])> + '_ {
        (0..self.len()).map(move |i| (i, self.wavevector(i)))
    }
}
