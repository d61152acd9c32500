//! Synthetic frequency-selective MIMO channels.
//!
//! A single scattering cluster per drop: `n_paths` rays whose departure and
//! arrival angles are Laplacian-spread around a random cluster center, with an
//! exponential power-delay profile. Every RB slice is
//!
//! ```text
//! H_rb = Σ_p g_p · exp(-j 2π f_rb τ_p) · a_rx(φ_p) · a_tx(az_p, zen_p)^H
//! ```
//!
//! with `f_rb = rb · 180 kHz`. The transmit response stacks both polarizations,
//! the second one rotated by a per-ray cross-polarization phase.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beams::{rx_steering, steering_vector, ArrayConfig};
use crate::error::{ensure, Result};
use crate::linalg::{CMatrix, C64};
use crate::rng::{purpose, Stream};

/// Width of one resource block in Hz.
pub const RB_BANDWIDTH_HZ: f64 = 180e3;

fn default_paths() -> usize {
    20
}

fn default_delay_spread() -> f64 {
    300e-9
}

fn default_carrier() -> f64 {
    4e9
}

fn default_angle_spread() -> f64 {
    0.15
}

fn default_name() -> String {
    "scene".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub array: ArrayConfig,
    pub n_rb: usize,
    pub n_subbands: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Seconds.
    #[serde(default = "default_delay_spread")]
    pub delay_spread: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    /// Laplacian scale of per-ray angles around the cluster center, radians.
    #[serde(default = "default_angle_spread")]
    pub angle_spread: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// Scene with default propagation parameters.
    pub fn new(array: ArrayConfig, n_rb: usize, n_subbands: usize, seed: u64) -> Self {
        Self {
            name: default_name(),
            array,
            n_rb,
            n_subbands,
            n_paths: default_paths(),
            delay_spread: default_delay_spread(),
            carrier_hz: default_carrier(),
            angle_spread: default_angle_spread(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        ensure!(self.n_rb >= 1, Config, "n_rb must be at least 1");
        ensure!(self.n_subbands >= 1, Config, "n_subbands must be at least 1");
        ensure!(
            self.n_rb % self.n_subbands == 0,
            Config,
            "n_rb = {} is not divisible by n_subbands = {}",
            self.n_rb,
            self.n_subbands
        );
        ensure!(self.n_paths >= 1, Config, "n_paths must be at least 1");
        ensure!(
            self.delay_spread > 0.0 && self.delay_spread.is_finite(),
            Config,
            "delay_spread must be positive"
        );
        ensure!(
            self.angle_spread >= 0.0 && self.angle_spread.is_finite(),
            Config,
            "angle_spread must be non-negative"
        );
        ensure!(
            self.carrier_hz > 0.0 && self.carrier_hz.is_finite(),
            Config,
            "carrier_hz must be positive"
        );
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding of the scene.
    pub fn digest(&self) -> [u8; 32] {
        let text = serde_json::to_string(self).expect("scene serializes");
        Sha256::digest(text.as_bytes()).into()
    }

    pub fn scene_id(&self) -> String {
        format!("{}-{}", self.name, &hex::encode(self.digest())[..12])
    }

    /// True when the scene produces one eigenvector per sample.
    pub fn is_single_rb(&self) -> bool {
        self.n_subbands == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    /// One `nr x nt` matrix per RB.
    pub h: Vec<CMatrix>,
    pub seed_used: u64,
    pub scene_id: String,
}

impl ChannelSample {
    pub fn n_rb(&self) -> usize {
        self.h.len()
    }

    pub fn mean_power(&self) -> f64 {
        let (sum, count) = self.h.iter().fold((0.0, 0usize), |(s, n), m| {
            (
                s + m.as_slice().iter().map(|x| x.norm_sqr()).sum::<f64>(),
                n + m.as_slice().len(),
            )
        });
        sum / count as f64
    }
}

struct Ray {
    gain: C64,
    delay: f64,
    rx: Vec<C64>,
    tx: Vec<C64>,
}

/// One channel drop, deterministic in `(scene.seed, drop_index)`.
pub fn synth_channel(scene: &SceneConfig, drop_index: u64) -> Result<ChannelSample> {
    scene.validate()?;
    let cfg = &scene.array;
    let seed_used = crate::rng::derive_seed(crate::rng::derive_seed(scene.seed, purpose::CHANNEL), drop_index);
    let mut rng = Stream::new(seed_used);

    let az_center = rng.uniform_range(-PI / 3.0, PI / 3.0);
    let zen_center = rng.uniform_range(PI / 2.0 - PI / 8.0, PI / 2.0 + PI / 8.0);
    let rx_center = rng.uniform_range(-PI, PI);

    let mut rays = Vec::with_capacity(scene.n_paths);
    for _ in 0..scene.n_paths {
        let delay = rng.exponential(scene.delay_spread);
        let power = (-delay / scene.delay_spread).exp();
        let gain = C64::new(rng.normal(), rng.normal()) * (power / 2.0).sqrt();
        let az = az_center + rng.laplacian(scene.angle_spread);
        let zen = zen_center + rng.laplacian(scene.angle_spread);
        let rx_angle = rx_center + rng.laplacian(scene.angle_spread);
        let xpol = C64::from_polar(1.0, rng.uniform_range(-PI, PI));
        let mut tx = steering_vector(cfg, az, zen, 0)?;
        tx.extend(steering_vector(cfg, az, zen, 1)?.into_iter().map(|x| x * xpol));
        rays.push(Ray {
            gain,
            delay,
            rx: rx_steering(cfg.nr, rx_angle),
            tx,
        });
    }

    let nt = cfg.nt();
    let mut h: Vec<CMatrix> = (0..scene.n_rb)
        .map(|rb| {
            let f = rb as f64 * RB_BANDWIDTH_HZ;
            let mut m = CMatrix::zeros(cfg.nr, nt);
            for ray in &rays {
                let coef = ray.gain * C64::from_polar(1.0, -2.0 * PI * f * ray.delay);
                for (r, a) in ray.rx.iter().enumerate() {
                    let ra = coef * a;
                    for (c, t) in ray.tx.iter().enumerate() {
                        m[(r, c)] += ra * t.conj();
                    }
                }
            }
            m
        })
        .collect();

    let sample = ChannelSample {
        h: Vec::new(),
        seed_used,
        scene_id: scene.scene_id(),
    };
    let total: f64 = h.iter().map(|m| m.frobenius_norm().powi(2)).sum();
    let entries = (scene.n_rb * cfg.nr * nt) as f64;
    ensure!(total > 0.0, Degenerate, "drop {drop_index} produced an all-zero channel");
    let s = (entries / total).sqrt();
    for m in &mut h {
        m.scale_assign(s);
    }
    Ok(ChannelSample { h, ..sample })
}

/// Drops `0..count` generated in parallel, in index order.
pub fn synth_channels(scene: &SceneConfig, count: usize) -> Result<Vec<ChannelSample>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| synth_channel(scene, i))
        .collect()
}
