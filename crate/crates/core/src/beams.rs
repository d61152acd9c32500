//! Antenna-panel geometry, oversampled 2D DFT beams and steering vectors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::linalg::{kron, C64};

/// Cross-polarized single-panel array: `n1 x n2` ports per polarization,
/// oversampled by `(o1, o2)`, and `nr` receive antennas at the UE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n1: usize,
    pub n2: usize,
    pub o1: usize,
    pub o2: usize,
    pub nr: usize,
}

impl ArrayConfig {
    pub fn new(n1: usize, n2: usize, o1: usize, o2: usize, nr: usize) -> Result<Self> {
        let cfg = Self { n1, n2, o1, o2, nr };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n1 >= 1 && self.n2 >= 1 && self.o1 >= 1 && self.o2 >= 1 && self.nr >= 1,
            Config,
            "array fields must be positive: {self:?}"
        );
        Ok(())
    }

    /// Transmit ports, `2 * n1 * n2`.
    pub fn nt(&self) -> usize {
        2 * self.n1 * self.n2
    }

    /// Ports per polarization, `n1 * n2`.
    pub fn ports_per_pol(&self) -> usize {
        self.n1 * self.n2
    }

    /// Number of beams in the oversampled grid.
    pub fn grid_size(&self) -> usize {
        self.n1 * self.o1 * self.n2 * self.o2
    }

    /// Flat grid position of beam `(theta1, theta2)`; `theta2` runs fastest.
    pub fn beam_index(&self, theta1: usize, theta2: usize) -> usize {
        theta1 * (self.n2 * self.o2) + theta2
    }

    pub fn beam_coords(&self, index: usize) -> (usize, usize) {
        let w = self.n2 * self.o2;
        (index / w, index % w)
    }
}

/// One-dimensional oversampled DFT beam: entry `k` is `exp(j 2π θ k / (n o))`.
pub fn dft_vector(n: usize, o: usize, theta: usize) -> Result<Vec<C64>> {
    ensure!(n >= 1 && o >= 1, Domain, "dft_vector needs n, o >= 1 (got {n}, {o})");
    ensure!(
        theta < n * o,
        Domain,
        "beam index {theta} outside [0, {})",
        n * o
    );
    let step = 2.0 * PI * theta as f64 / (n * o) as f64;
    Ok((0..n).map(|k| C64::from_polar(1.0, step * k as f64)).collect())
}

/// 2D beam `mu_h(theta1) ⊗ mu_v(theta2)`.
pub fn beam(cfg: &ArrayConfig, theta1: usize, theta2: usize) -> Result<Vec<C64>> {
    let h = dft_vector(cfg.n1, cfg.o1, theta1)?;
    let v = dft_vector(cfg.n2, cfg.o2, theta2)?;
    Ok(kron(&h, &v))
}

/// The full oversampled grid of 2D DFT beams.
#[derive(Clone, Debug)]
pub struct BeamGrid {
    config: ArrayConfig,
    beams: Vec<Vec<C64>>,
}

impl BeamGrid {
    pub fn new(config: ArrayConfig) -> Result<Self> {
        config.validate()?;
        let horizontal: Vec<_> = (0..config.n1 * config.o1)
            .map(|t| dft_vector(config.n1, config.o1, t))
            .collect::<Result<_>>()?;
        let vertical: Vec<_> = (0..config.n2 * config.o2)
            .map(|t| dft_vector(config.n2, config.o2, t))
            .collect::<Result<_>>()?;
        let beams = horizontal
            .iter()
            .flat_map(|h| vertical.iter().map(move |v| kron(h, v)))
            .collect();
        Ok(Self { config, beams })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn get(&self, theta1: usize, theta2: usize) -> &[C64] {
        &self.beams[self.config.beam_index(theta1, theta2)]
    }

    pub fn by_index(&self, index: usize) -> &[C64] {
        &self.beams[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[C64]> {
        self.beams.iter().map(Vec::as_slice)
    }

    /// Grid indices of the `n1 * n2` mutually orthogonal beams under rotation
    /// `(q1, q2)`, ordered by basis position `a * n2 + b`.
    pub fn orthogonal_set(&self, q1: usize, q2: usize) -> Vec<usize> {
        let c = &self.config;
        let mut out = Vec::with_capacity(c.ports_per_pol());
        for a in 0..c.n1 {
            for b in 0..c.n2 {
                out.push(c.beam_index(q1 + c.o1 * a, q2 + c.o2 * b));
            }
        }
        out
    }
}

/// Gain applied to a polarization: `+1` for the +45° slant, `-1` for -45°.
pub fn polarization_sign(polarization: usize) -> f64 {
    if polarization == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Planar-array response toward `(azimuth, zenith)` for one polarization,
/// half-wavelength spacing, ordered like the beam grid (vertical index fastest).
pub fn steering_vector(
    cfg: &ArrayConfig,
    azimuth: f64,
    zenith: f64,
    polarization: usize,
) -> Result<Vec<C64>> {
    ensure!(
        azimuth.is_finite() && zenith.is_finite(),
        Domain,
        "steering angles must be finite"
    );
    ensure!(polarization < 2, Domain, "polarization must be 0 or 1");
    let u = zenith.sin() * azimuth.sin();
    let w = zenith.cos();
    let sign = polarization_sign(polarization);
    let mut out = Vec::with_capacity(cfg.ports_per_pol());
    for p1 in 0..cfg.n1 {
        for p2 in 0..cfg.n2 {
            let phase = PI * (p1 as f64 * u + p2 as f64 * w);
            out.push(C64::from_polar(sign, phase));
        }
    }
    Ok(out)
}

/// Uniform linear receive array response at the UE.
pub fn rx_steering(nr: usize, angle: f64) -> Vec<C64> {
    let u = angle.sin();
    (0..nr)
        .map(|k| C64::from_polar(1.0, PI * k as f64 * u))
        .collect()
}
