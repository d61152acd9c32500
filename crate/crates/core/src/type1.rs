//! Rank-1 Type I codebook: one grid beam per polarization with a QPSK
//! co-phasing factor.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::beams::{ArrayConfig, BeamGrid};
use crate::error::{ensure, Result};
use crate::linalg::{inner, norm, C64};

/// Co-phasing factors `{1, j, -1, -j}` indexed by `phi_index`.
pub fn cophase(phi_index: usize) -> C64 {
    C64::from_polar(1.0, FRAC_PI_2 * phi_index as f64)
}

/// `ceil(log2(n))` for `n >= 1`.
pub fn ceil_log2(n: u128) -> u32 {
    assert!(n >= 1);
    if n == 1 {
        0
    } else {
        128 - (n - 1).leading_zeros()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Type1Pmi {
    pub theta1: usize,
    pub theta2: usize,
    pub phi_index: usize,
    pub flat_index: usize,
}

impl Type1Pmi {
    pub fn from_flat(cfg: &ArrayConfig, flat_index: usize) -> Result<Self> {
        ensure!(
            flat_index < 4 * cfg.grid_size(),
            Contract,
            "Type I index {flat_index} outside [0, {})",
            4 * cfg.grid_size()
        );
        let (theta1, theta2) = cfg.beam_coords(flat_index / 4);
        Ok(Self {
            theta1,
            theta2,
            phi_index: flat_index % 4,
            flat_index,
        })
    }

    pub fn new(cfg: &ArrayConfig, theta1: usize, theta2: usize, phi_index: usize) -> Result<Self> {
        ensure!(
            theta1 < cfg.n1 * cfg.o1 && theta2 < cfg.n2 * cfg.o2 && phi_index < 4,
            Contract,
            "Type I coordinates ({theta1}, {theta2}, {phi_index}) out of range"
        );
        Ok(Self {
            theta1,
            theta2,
            phi_index,
            flat_index: cfg.beam_index(theta1, theta2) * 4 + phi_index,
        })
    }
}

/// Codeword for beam `b` and co-phase `phi`: `[b; phi b] / sqrt(2 n1 n2)`.
fn codeword(b: &[C64], phi: C64) -> Vec<C64> {
    let s = 1.0 / ((2 * b.len()) as f64).sqrt();
    b.iter()
        .map(|x| x * s)
        .chain(b.iter().map(|x| x * phi * s))
        .collect()
}

/// Beam grid plus exhaustive PMI search.
#[derive(Clone, Debug)]
pub struct Type1Codebook {
    grid: BeamGrid,
}

impl Type1Codebook {
    pub fn new(cfg: ArrayConfig) -> Result<Self> {
        Ok(Self {
            grid: BeamGrid::new(cfg)?,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        self.grid.config()
    }

    pub fn len(&self) -> usize {
        4 * self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// All codewords in `flat_index` order.
    pub fn enumerate(&self) -> Vec<Vec<C64>> {
        self.grid
            .iter()
            .flat_map(|b| (0..4).map(move |p| codeword(b, cophase(p))))
            .collect()
    }

    /// Index of the codeword most similar to `v`; lowest index wins ties.
    pub fn encode(&self, v: &[C64]) -> Result<(Type1Pmi, f64)> {
        let cfg = self.config();
        let half = cfg.ports_per_pol();
        ensure!(
            v.len() == 2 * half,
            Contract,
            "eigenvector length {} does not match 2*n1*n2 = {}",
            v.len(),
            2 * half
        );
        let vn = norm(v);
        ensure!(vn > 0.0, Degenerate, "cannot encode a zero vector");
        let (top, bottom) = v.split_at(half);
        let scale = 1.0 / (((2 * half) as f64).sqrt() * vn);
        let mut best = (0usize, f64::NEG_INFINITY);
        for (bi, b) in self.grid.iter().enumerate() {
            // w^H v = (b^H v_top + conj(phi) b^H v_bottom) / sqrt(2N)
            let x = inner(b, top);
            let y = inner(b, bottom);
            for p in 0..4 {
                let s = (x + cophase(p).conj() * y).norm();
                if s > best.1 {
                    best = (bi * 4 + p, s);
                }
            }
        }
        let pmi = Type1Pmi::from_flat(cfg, best.0)?;
        Ok((pmi, (best.1 * scale).min(1.0)))
    }

    pub fn decode(&self, pmi: &Type1Pmi) -> Result<Vec<C64>> {
        let p = Type1Pmi::from_flat(self.config(), pmi.flat_index)?;
        Ok(codeword(self.grid.get(p.theta1, p.theta2), cophase(p.phi_index)))
    }
}

/// Convenience wrapper building the codebook for one call.
pub fn enumerate_type1(cfg: &ArrayConfig) -> Result<Vec<Vec<C64>>> {
    Ok(Type1Codebook::new(*cfg)?.enumerate())
}

/// PMI bits: `ceil(log2(4 n1 o1 n2 o2))`.
pub fn overhead_type1(cfg: &ArrayConfig) -> u32 {
    ceil_log2(4 * cfg.grid_size() as u128)
}
