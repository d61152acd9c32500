//! Model descriptions: architecture, codeword size, quantizer and the layer
//! plan derived from them, plus the real-valued sample layouts.

use serde::{Deserialize, Serialize};

use crate::eigen::EigenTarget;
use crate::error::{ensure, Result};
use crate::linalg::{CMatrix, C64};
use crate::quant::QuantizerSpec;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Single-RB fully connected autoencoder with a binarizing bottleneck.
    ImcsinetS,
    /// Multi-RB fully connected autoencoder with a uniform quantizer.
    ImcsinetM,
    /// Three bi-LSTM layers over the subbands, ImCsiNet-m decoder.
    BiImcsinet,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::ImcsinetS => "imcsinet_s",
            Architecture::ImcsinetM => "imcsinet_m",
            Architecture::BiImcsinet => "bi_imcsinet",
        }
    }

    pub fn is_multi(self) -> bool {
        !matches!(self, Architecture::ImcsinetS)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imcsinet_s" => Ok(Architecture::ImcsinetS),
            "imcsinet_m" => Ok(Architecture::ImcsinetM),
            "bi_imcsinet" => Ok(Architecture::BiImcsinet),
            other => Err(crate::error::Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "slope", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerShape {
    /// Fully connected layer followed by batch normalization and an
    /// activation.
    Dense {
        input: usize,
        output: usize,
        activation: Activation,
    },
    /// Bidirectional LSTM over `steps` time steps; the two directions are
    /// averaged, so the output per step has `hidden` entries.
    BiLstm {
        input: usize,
        hidden: usize,
        steps: usize,
    },
}

impl LayerShape {
    pub fn input_width(&self) -> usize {
        match *self {
            LayerShape::Dense { input, .. } => input,
            LayerShape::BiLstm { input, steps, .. } => input * steps,
        }
    }

    pub fn output_width(&self) -> usize {
        match *self {
            LayerShape::Dense { output, .. } => output,
            LayerShape::BiLstm { hidden, steps, .. } => hidden * steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerDesc {
    pub name: String,
    pub shape: LayerShape,
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

fn default_divisor() -> usize {
    1
}

/// Scaling applied to the encoder output before quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodewordNorm {
    /// The encoder's own output range is used as is.
    None,
    /// Each codeword is divided by its largest magnitude, so its extreme
    /// entry lands on ±1. Parameter free.
    MaxAbs,
}

impl CodewordNorm {
    /// The fully connected encoders end in BN + Tanh, which already spreads
    /// the codeword over (−1, 1). The LSTM encoder has no such stage and its
    /// outputs stay far inside the first quantization step without one.
    pub fn default_for(architecture: Architecture) -> Self {
        match architecture {
            Architecture::BiImcsinet => CodewordNorm::MaxAbs,
            _ => CodewordNorm::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub nt: usize,
    /// Subbands per sample; 1 for `imcsinet_s`.
    pub ns: usize,
    /// Codeword length `L`.
    pub compressed_dim: usize,
    pub quantizer: QuantizerSpec,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    /// Hidden widths are divided by this factor. 1 gives the reference
    /// network; larger values are only for quick runs.
    #[serde(default = "default_divisor")]
    pub width_divisor: usize,
    pub codeword_norm: CodewordNorm,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

impl ModelSpec {
    pub fn new(
        architecture: Architecture,
        nt: usize,
        ns: usize,
        compressed_dim: usize,
        quantizer: QuantizerSpec,
    ) -> Result<Self> {
        let spec = Self {
            architecture,
            nt,
            ns,
            compressed_dim,
            quantizer,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            width_divisor: 1,
            codeword_norm: CodewordNorm::default_for(architecture),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Codeword length from a compression ratio: `round(α·2nt)` for the
    /// single-RB model, `round(α·2nt·ns)` for `imcsinet_m`, and
    /// `ns·round(α·2nt)` for `bi_imcsinet` so that every subband gets the
    /// same share.
    pub fn with_ratio(
        architecture: Architecture,
        nt: usize,
        ns: usize,
        alpha: f64,
        quantizer: QuantizerSpec,
    ) -> Result<Self> {
        ensure!(alpha > 0.0 && alpha.is_finite(), Config, "compression ratio must be positive");
        let l = match architecture {
            Architecture::ImcsinetS => round_half_up(alpha * 2.0 * nt as f64),
            Architecture::ImcsinetM => round_half_up(alpha * 2.0 * (nt * ns) as f64),
            Architecture::BiImcsinet => ns * round_half_up(alpha * 2.0 * nt as f64),
        };
        Self::new(architecture, nt, ns, l, quantizer)
    }

    /// Largest codeword whose feedback fits in `n_bits`. For `bi_imcsinet`
    /// the per-subband size is rounded down first.
    pub fn with_feedback_bits(
        architecture: Architecture,
        nt: usize,
        ns: usize,
        n_bits: usize,
        quantizer: QuantizerSpec,
    ) -> Result<Self> {
        quantizer.validate()?;
        let b = quantizer.bits_per_element() as usize;
        let l = match architecture {
            Architecture::BiImcsinet => ns * (n_bits / (b * ns.max(1))),
            _ => n_bits / b,
        };
        ensure!(l >= 1, Config, "{n_bits} bits cannot carry one {b}-bit element per codeword slot");
        Self::new(architecture, nt, ns, l, quantizer)
    }

    pub fn with_width_divisor(mut self, divisor: usize) -> Result<Self> {
        self.width_divisor = divisor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.nt >= 1 && self.nt % 2 == 0, Config, "nt = {} must be a positive even number", self.nt);
        ensure!(self.ns >= 1, Config, "ns must be positive");
        ensure!(self.compressed_dim >= 1, Config, "codeword length must be positive");
        ensure!(self.width_divisor >= 1, Config, "width divisor must be positive");
        ensure!(
            self.leaky_slope.is_finite() && self.leaky_slope >= 0.0 && self.leaky_slope < 1.0,
            Config,
            "LeakyReLU slope {} outside [0, 1)",
            self.leaky_slope
        );
        self.quantizer
            .validate()
            .map_err(|e| crate::error::Error::Config(e.to_string()))?;
        match self.architecture {
            Architecture::ImcsinetS => {
                ensure!(self.ns == 1, Config, "imcsinet_s works on one subband, got ns = {}", self.ns);
                ensure!(
                    self.quantizer == QuantizerSpec::Binarize,
                    Config,
                    "imcsinet_s uses the binarizing quantizer"
                );
            }
            Architecture::ImcsinetM | Architecture::BiImcsinet => {
                ensure!(
                    matches!(self.quantizer, QuantizerSpec::Uniform { .. }),
                    Config,
                    "{} uses a uniform quantizer",
                    self.architecture
                );
            }
        }
        if self.architecture == Architecture::BiImcsinet {
            ensure!(
                self.compressed_dim % self.ns == 0,
                Config,
                "bi_imcsinet needs ns = {} to divide L = {}",
                self.ns,
                self.compressed_dim
            );
        }
        for (label, w) in self.hidden_bases() {
            ensure!(
                w % self.width_divisor == 0,
                Config,
                "width divisor {} does not divide the {label} width {w}",
                self.width_divisor
            );
        }
        Ok(())
    }

    fn hidden_bases(&self) -> Vec<(&'static str, usize)> {
        match self.architecture {
            Architecture::ImcsinetS => vec![("hidden", 16 * self.nt)],
            Architecture::ImcsinetM => vec![("hidden", 8 * self.nt * self.ns)],
            // the second LSTM (nt wide) is never divided: shrinking it below
            // the per-subband codeword would add a bottleneck
            Architecture::BiImcsinet => vec![("hidden", 8 * self.nt * self.ns), ("first LSTM", 8 * self.nt)],
        }
    }

    /// Per-subband codeword length `M = L / ns` (`L` for single-RB).
    pub fn per_subband_dim(&self) -> usize {
        self.compressed_dim / self.ns
    }

    pub fn feedback_bits(&self) -> usize {
        self.compressed_dim * self.quantizer.bits_per_element() as usize
    }

    pub fn input_dim(&self) -> usize {
        2 * self.nt * self.ns
    }

    pub fn output_dim(&self) -> usize {
        2 * self.nt * self.ns
    }

    pub fn encoder_layers(&self) -> Vec<LayerDesc> {
        let d = self.width_divisor;
        let leaky = Activation::LeakyRelu(self.leaky_slope);
        let dense = |name: &str, input, output, activation| LayerDesc {
            name: name.to_string(),
            shape: LayerShape::Dense {
                input,
                output,
                activation,
            },
        };
        let l = self.compressed_dim;
        match self.architecture {
            Architecture::ImcsinetS | Architecture::ImcsinetM => {
                let w = self.hidden_bases()[0].1 / d;
                let i = self.input_dim();
                vec![
                    dense("enc.fc1", i, w, leaky),
                    dense("enc.fc2", w, w, leaky),
                    dense("enc.fc3", w, l, Activation::Tanh),
                ]
            }
            Architecture::BiImcsinet => {
                let lstm = |name: &str, input, hidden| LayerDesc {
                    name: name.to_string(),
                    shape: LayerShape::BiLstm {
                        input,
                        hidden,
                        steps: self.ns,
                    },
                };
                let (h1, h2) = (8 * self.nt / d, self.nt);
                vec![
                    lstm("enc.lstm1", 2 * self.nt, h1),
                    lstm("enc.lstm2", h1, h2),
                    lstm("enc.lstm3", h2, self.per_subband_dim()),
                ]
            }
        }
    }

    pub fn decoder_layers(&self) -> Vec<LayerDesc> {
        let w = self.hidden_bases()[0].1 / self.width_divisor;
        let leaky = Activation::LeakyRelu(self.leaky_slope);
        let dense = |name: &str, input, output, activation| LayerDesc {
            name: name.to_string(),
            shape: LayerShape::Dense {
                input,
                output,
                activation,
            },
        };
        vec![
            dense("dec.fc4", self.compressed_dim, w, leaky),
            dense("dec.fc5", w, w, leaky),
            dense("dec.fc6", w, self.output_dim(), Activation::Tanh),
        ]
    }
}

/// `[Re vec(V); Im vec(V)]` with `vec` stacking columns. This is the decoder
/// output layout for every architecture and the encoder input layout of the
/// fully connected ones.
pub fn stacked_row(v: &CMatrix) -> Vec<f64> {
    let cm = v.to_column_major();
    cm.iter().map(|z| z.re).chain(cm.iter().map(|z| z.im)).collect()
}

/// Row `s` of the `ns x 2nt` bi-LSTM input is `[Re v_s; Im v_s]`; rows are
/// concatenated.
pub fn sequence_row(v: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.rows() * v.cols());
    for s in 0..v.cols() {
        let col = v.column(s);
        out.extend(col.iter().map(|z| z.re));
        out.extend(col.iter().map(|z| z.im));
    }
    out
}

/// Encoder input row for `target` under `architecture`.
pub fn input_row(architecture: Architecture, target: &EigenTarget) -> Vec<f64> {
    match architecture {
        Architecture::BiImcsinet => sequence_row(&target.v),
        _ => stacked_row(&target.v),
    }
}

/// Inverse of [`stacked_row`].
pub fn matrix_from_row(row: &[f64], nt: usize, ns: usize) -> Result<CMatrix> {
    ensure!(
        row.len() == 2 * nt * ns,
        Contract,
        "row of length {} does not hold a {nt}x{ns} complex matrix",
        row.len()
    );
    let half = nt * ns;
    let data: Vec<C64> = (0..half).map(|k| C64::new(row[k], row[half + k])).collect();
    CMatrix::from_column_major(nt, ns, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_and_bit_constructors() {
        let s = ModelSpec::with_ratio(Architecture::ImcsinetS, 8, 1, 0.5, QuantizerSpec::Binarize).unwrap();
        assert_eq!(s.compressed_dim, 8);
        let u2 = QuantizerSpec::Uniform { bits: 2 };
        let m = ModelSpec::with_ratio(Architecture::ImcsinetM, 8, 3, 0.25, u2).unwrap();
        assert_eq!(m.compressed_dim, 12);
        let b = ModelSpec::with_feedback_bits(Architecture::BiImcsinet, 32, 13, 208, u2).unwrap();
        assert_eq!((b.compressed_dim, b.per_subband_dim(), b.feedback_bits()), (104, 8, 208));
        let u6 = QuantizerSpec::Uniform { bits: 6 };
        let b6 = ModelSpec::with_feedback_bits(Architecture::BiImcsinet, 32, 13, 208, u6).unwrap();
        assert_eq!((b6.per_subband_dim(), b6.feedback_bits()), (2, 156));
        let m6 = ModelSpec::with_feedback_bits(Architecture::ImcsinetM, 32, 13, 208, u6).unwrap();
        assert_eq!((m6.compressed_dim, m6.feedback_bits()), (34, 204));
    }

    #[test]
    fn inconsistent_specs_are_config_errors() {
        let u2 = QuantizerSpec::Uniform { bits: 2 };
        let bad = [
            ModelSpec::new(Architecture::ImcsinetS, 8, 2, 8, QuantizerSpec::Binarize),
            ModelSpec::new(Architecture::ImcsinetS, 8, 1, 8, u2),
            ModelSpec::new(Architecture::ImcsinetM, 8, 3, 12, QuantizerSpec::Binarize),
            ModelSpec::new(Architecture::BiImcsinet, 8, 3, 10, u2),
            ModelSpec::new(Architecture::ImcsinetS, 7, 1, 8, QuantizerSpec::Binarize),
            ModelSpec::new(Architecture::ImcsinetS, 8, 1, 0, QuantizerSpec::Binarize),
        ];
        for r in bad {
            assert_eq!(r.unwrap_err().class(), "config");
        }
        let s = ModelSpec::new(Architecture::ImcsinetS, 8, 1, 8, QuantizerSpec::Binarize).unwrap();
        assert!(s.clone().with_width_divisor(4).is_ok());
        assert!(s.with_width_divisor(3).is_err());
    }

    #[test]
    fn layer_plans_follow_the_tables() {
        let s = ModelSpec::new(Architecture::ImcsinetS, 8, 1, 8, QuantizerSpec::Binarize).unwrap();
        let widths: Vec<_> = s
            .encoder_layers()
            .iter()
            .chain(&s.decoder_layers())
            .map(|l| (l.shape.input_width(), l.shape.output_width()))
            .collect();
        assert_eq!(widths, vec![(16, 128), (128, 128), (128, 8), (8, 128), (128, 128), (128, 16)]);

        let b = ModelSpec::new(Architecture::BiImcsinet, 8, 3, 6, QuantizerSpec::Uniform { bits: 2 }).unwrap();
        let enc = b.encoder_layers();
        assert_eq!(
            enc.iter().map(|l| l.shape).collect::<Vec<_>>(),
            vec![
                LayerShape::BiLstm { input: 16, hidden: 64, steps: 3 },
                LayerShape::BiLstm { input: 64, hidden: 8, steps: 3 },
                LayerShape::BiLstm { input: 8, hidden: 2, steps: 3 },
            ]
        );
        assert_eq!(enc[2].shape.output_width(), 6);
        assert_eq!(b.decoder_layers()[0].shape.input_width(), 6);
        assert_eq!(b.decoder_layers()[2].shape.output_width(), 48);
    }

    #[test]
    fn layouts_round_trip() {
        let v = CMatrix::from_fn(4, 3, |r, c| C64::new(r as f64 + 10.0 * c as f64, -(r as f64)));
        let row = stacked_row(&v);
        assert_eq!(row[1], 1.0);
        assert_eq!(row[4], 10.0);
        assert_eq!(row[12 + 1], -1.0);
        assert_eq!(matrix_from_row(&row, 4, 3).unwrap(), v);
        let seq = sequence_row(&v);
        assert_eq!(&seq[8..12], &[10.0, 11.0, 12.0, 13.0]);
        assert_eq!(&seq[12..16], &[0.0, -1.0, -2.0, -3.0]);
        assert!(matrix_from_row(&row[1..], 4, 3).is_err());
    }
}
