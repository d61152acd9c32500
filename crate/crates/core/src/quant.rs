//! Feedback quantizers and bit accounting.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Slack allowed on `|x| <= 1` before a binarizer input is rejected.
pub const BINARIZE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuantizerSpec {
    /// Stochastic ±1 quantization, one bit per element.
    Binarize,
    /// `bits`-bit uniform grid on `[-1, 1]`.
    Uniform { bits: u32 },
}

impl QuantizerSpec {
    pub fn bits_per_element(&self) -> u32 {
        match *self {
            QuantizerSpec::Binarize => 1,
            QuantizerSpec::Uniform { bits } => bits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let QuantizerSpec::Uniform { bits } = *self {
            ensure!(bits >= 1, Contract, "uniform quantizer needs at least one bit");
            ensure!(bits <= 24, Contract, "uniform quantizer limited to 24 bits");
        }
        Ok(())
    }
}

fn uniform01(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Returns `1` with probability `(1 + x) / 2`, else `-1`. Consumes exactly
/// one uniform variate.
pub fn binarize(x: f64, rng: &mut dyn RngCore) -> Result<f64> {
    ensure!(
        x.abs() <= 1.0 + BINARIZE_SLACK,
        Contract,
        "binarize input {x} outside [-1, 1]"
    );
    let x = x.clamp(-1.0, 1.0);
    let u = uniform01(rng);
    Ok(if u < (1.0 + x) / 2.0 { 1.0 } else { -1.0 })
}

/// Deterministic inference-time binarization: sign with ties to `+1`.
pub fn binarize_deterministic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `round(x * 2^(B-1)) / 2^(B-1)` with halves rounded away from zero.
pub fn uniform_quantize(x: f64, bits: u32) -> Result<f64> {
    ensure!(bits >= 1, Contract, "uniform quantizer needs at least one bit");
    let scale = (1u64 << (bits - 1)) as f64;
    Ok((x * scale).round() / scale)
}

/// `N_bits = L * B`.
pub fn feedback_bits(codeword_dim: usize, spec: &QuantizerSpec) -> Result<usize> {
    ensure!(codeword_dim >= 1, Contract, "codeword dimension must be positive");
    spec.validate()?;
    Ok(codeword_dim * spec.bits_per_element() as usize)
}

/// Straight-through estimator: the quantizer's gradient is the identity.
pub fn straight_through_backward<T: Copy>(upstream: &[T]) -> Vec<T> {
    upstream.to_vec()
}
