//! Parameter and FLOP accounting, enumerated per layer and in closed form.
//!
//! FLOPs follow the usual multiply-accumulate convention for matrix
//! products and ignore activations and normalization: an FC layer costs
//! `O(2I - 1)`. A bi-LSTM layer is charged `4O(2(I + O) - 1)` per direction
//! and time step, i.e. its two gate products treated as one FC layer on the
//! concatenated `[x; h]`.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::spec::{Architecture, LayerShape, ModelSpec};
use crate::error::Result;

pub type Rational = Ratio<i64>;

pub fn fc_params(input: u64, output: u64) -> u64 {
    output * (input + 1)
}

pub fn fc_flops(input: u64, output: u64) -> u64 {
    output * (2 * input - 1)
}

/// Gain, bias, running mean and running variance.
pub fn bn_params(output: u64) -> u64 {
    4 * output
}

/// One LSTM direction: `4(OI + O² + O)`.
pub fn lstm_params(input: u64, output: u64) -> u64 {
    4 * (output * input + output * output + output)
}

pub fn lstm_step_flops(input: u64, output: u64) -> u64 {
    4 * output * (2 * (input + output) - 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerComplexity {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub params: u64,
    pub flops: u64,
    pub encoder_params: u64,
    pub encoder_flops: u64,
    pub layers: Vec<LayerComplexity>,
}

fn layer_cost(shape: &LayerShape) -> (u64, u64) {
    match *shape {
        LayerShape::Dense { input, output, .. } => {
            let (i, o) = (input as u64, output as u64);
            (fc_params(i, o) + bn_params(o), fc_flops(i, o))
        }
        LayerShape::BiLstm { input, hidden, steps } => {
            let (i, o) = (input as u64, hidden as u64);
            (2 * lstm_params(i, o), 2 * steps as u64 * lstm_step_flops(i, o))
        }
    }
}

/// Per-layer enumeration of the network `spec` describes.
pub fn count_params_flops(spec: &ModelSpec) -> Result<Complexity> {
    spec.validate()?;
    let enc: Vec<_> = spec.encoder_layers();
    let dec: Vec<_> = spec.decoder_layers();
    let mut layers = Vec::new();
    let (mut ep, mut ef) = (0, 0);
    for l in &enc {
        let (p, f) = layer_cost(&l.shape);
        ep += p;
        ef += f;
        layers.push(LayerComplexity {
            name: l.name.clone(),
            params: p,
            flops: f,
        });
    }
    let (mut p_tot, mut f_tot) = (ep, ef);
    for l in &dec {
        let (p, f) = layer_cost(&l.shape);
        p_tot += p;
        f_tot += f;
        layers.push(LayerComplexity {
            name: l.name.clone(),
            params: p,
            flops: f,
        });
    }
    Ok(Complexity {
        params: p_tot,
        flops: f_tot,
        encoder_params: ep,
        encoder_flops: ef,
        layers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClosedForm {
    pub params: Rational,
    pub flops: Rational,
    pub encoder_params: Rational,
}

/// Totals as polynomials in `nt`, `ns` and the compression ratio `α`, where
/// `L = α·2nt` for `imcsinet_s`, `L = α·2nt·ns` for `imcsinet_m` and
/// `M = α·2nt` for `bi_imcsinet`. Exact in rational arithmetic, so `α` may
/// give a non-integral codeword length.
pub fn closed_form(architecture: Architecture, nt: i64, ns: i64, alpha: Rational) -> ClosedForm {
    let r = |x: i64| Rational::from_integer(x);
    let a = alpha;
    let (t, s) = (r(nt), r(ns));
    match architecture {
        Architecture::ImcsinetS => ClosedForm {
            params: (r(576) + r(64) * a) * t * t + (r(330) + r(10) * a) * t,
            flops: (r(1152) + r(128) * a) * t * t - (r(66) + r(2) * a) * t,
            encoder_params: (r(288) + r(32) * a) * t * t + (r(160) + r(10) * a) * t,
        },
        Architecture::ImcsinetM => {
            let n = t * s;
            ClosedForm {
                params: (r(160) + r(32) * a) * n * n + (r(170) + r(10) * a) * n,
                flops: (r(320) + r(64) * a) * n * n - (r(34) + r(2) * a) * n,
                encoder_params: (r(80) + r(16) * a) * n * n + (r(80) + r(10) * a) * n,
            }
        }
        Architecture::BiImcsinet => {
            let n = t * s;
            let enc_p = r(8) * t * t * (r(89) + r(2) * a + r(4) * a * a) + r(8) * t * (r(9) + r(2) * a);
            // decoder of imcsinet_m with L = ns·M = α·2n
            let dec_p = (r(80) + r(16) * a) * n * n + r(90) * n;
            let enc_f = s * t * t * (r(1424) + r(32) * a + r(64) * a * a) - s * t * (r(72) + r(16) * a);
            let dec_f = (r(160) + r(32) * a) * n * n - r(18) * n;
            ClosedForm {
                params: enc_p + dec_p,
                flops: enc_f + dec_f,
                encoder_params: enc_p,
            }
        }
    }
}

/// The `α` that reproduces `spec.compressed_dim` exactly.
pub fn effective_ratio(spec: &ModelSpec) -> Rational {
    let (nt, ns, l) = (spec.nt as i64, spec.ns as i64, spec.compressed_dim as i64);
    match spec.architecture {
        Architecture::ImcsinetS => Rational::new(l, 2 * nt),
        Architecture::ImcsinetM => Rational::new(l, 2 * nt * ns),
        Architecture::BiImcsinet => Rational::new(l / ns, 2 * nt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::build_model;
    use crate::quant::QuantizerSpec;

    #[test]
    fn primitive_counts() {
        assert_eq!((fc_params(16, 8), fc_flops(16, 8)), (136, 248));
        assert_eq!(lstm_params(16, 8), 800);
        assert_eq!(fc_params(16, 8) + bn_params(8), 8 * (16 + 5));
    }

    #[test]
    fn reference_totals() {
        let s = ModelSpec::with_ratio(Architecture::ImcsinetS, 8, 1, 0.5, QuantizerSpec::Binarize).unwrap();
        let c = count_params_flops(&s).unwrap();
        assert_eq!(c.params, 41592);
        let cf = closed_form(Architecture::ImcsinetS, 8, 1, Rational::new(1, 2));
        assert_eq!(cf.params, Rational::from_integer(41592));
        assert_eq!(cf.flops, Rational::from_integer(c.flops as i64));

        let b = ModelSpec::new(Architecture::BiImcsinet, 8, 3, 6, QuantizerSpec::Uniform { bits: 2 }).unwrap();
        let cb = count_params_flops(&b).unwrap();
        assert_eq!(cb.layers[0].params, 41472);
    }

    #[test]
    fn enumeration_agrees_with_store_and_closed_forms() {
        let u = QuantizerSpec::Uniform { bits: 2 };
        for (arch, q) in [
            (Architecture::ImcsinetS, QuantizerSpec::Binarize),
            (Architecture::ImcsinetM, u),
            (Architecture::BiImcsinet, u),
        ] {
            let ns = if arch == Architecture::ImcsinetS { 1 } else { 3 };
            let spec = ModelSpec::with_ratio(arch, 4, ns, 0.25, q).unwrap();
            let c = count_params_flops(&spec).unwrap();
            let model = build_model::<f32>(&spec, 0).unwrap();
            assert_eq!(model.params().total_elements() as u64, c.params);
            let cf = closed_form(arch, 4, ns as i64, effective_ratio(&spec));
            assert_eq!(cf.params, Rational::from_integer(c.params as i64), "{arch}");
            assert_eq!(cf.flops, Rational::from_integer(c.flops as i64), "{arch}");
            assert_eq!(cf.encoder_params, Rational::from_integer(c.encoder_params as i64), "{arch}");
        }
    }
}
