//! Parameterized encoder/quantizer/decoder networks.

use rand::RngCore;

use super::layers::{
    activation_backward, activation_forward, affine_backward, affine_forward, batchnorm_backward,
    batchnorm_eval, batchnorm_train, join_steps, lstm_backward, lstm_forward, split_steps, update_running,
    BnCache, LstmCache, LstmWeights,
};
use super::params::{Gradients, ParamStore};
use super::spec::{Activation, CodewordNorm, LayerDesc, LayerShape, ModelSpec};
use super::tensor::{Mat, Scalar};
use crate::error::{ensure, Result};
use crate::quant::{binarize, binarize_deterministic, uniform_quantize, QuantizerSpec};
use crate::rng::{purpose, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in BN (running statistics are updated), stochastic
    /// binarization.
    Train,
    /// Running statistics, deterministic quantization.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantBehavior {
    Stochastic,
    Deterministic,
    /// Identity bottleneck; used for gradient checks.
    Bypass,
}

impl Mode {
    pub fn default_quant(self) -> QuantBehavior {
        match self {
            Mode::Train => QuantBehavior::Stochastic,
            Mode::Eval => QuantBehavior::Deterministic,
        }
    }
}

#[derive(Clone, Debug)]
struct Layer {
    desc: LayerDesc,
    /// Store indices: dense `[W, b, gamma, beta, mean, var]`, bi-LSTM
    /// `[w_in, w_rec, bias]` for the forward then the backward direction.
    params: Vec<usize>,
}

#[derive(Clone, Debug)]
enum LayerCache<T> {
    Dense {
        x: Mat<T>,
        bn: BnCache<T>,
        y: Mat<T>,
        a: Mat<T>,
    },
    BiLstm {
        xs: Vec<Mat<T>>,
        fwd: LstmCache<T>,
        bwd: LstmCache<T>,
    },
}

/// Intermediates of a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct Cache<T> {
    encoder: Vec<LayerCache<T>>,
    norm: Option<NormCache<T>>,
    decoder: Vec<LayerCache<T>>,
}

/// Per-row scale and the position of the entry that set it.
#[derive(Clone, Debug)]
struct NormCache<T> {
    x: Mat<T>,
    scale: Vec<T>,
    argmax: Vec<usize>,
}

/// Rows at or below this magnitude are passed through unscaled.
const NORM_FLOOR: f64 = 1e-12;

fn max_abs_forward<T: Scalar>(x: &Mat<T>) -> (Mat<T>, NormCache<T>) {
    let mut y = x.clone();
    let mut scale = Vec::with_capacity(x.rows());
    let mut argmax = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let (k, m) = row
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bk, bm), (k, v)| if v.f64().abs() > bm { (k, v.f64().abs()) } else { (bk, bm) });
        let m = if m > NORM_FLOOR { m } else { 1.0 };
        for v in y.row_mut(r) {
            *v = T::of(v.f64() / m);
        }
        scale.push(T::of(m));
        argmax.push(k);
    }
    (
        y,
        NormCache {
            x: x.clone(),
            scale,
            argmax,
        },
    )
}

/// `y = x / m` with `m = |x_k*|`: `dx = g / m`, and the entry `k*` also
/// receives `-sign(x_k*) (g · x) / m²`.
fn max_abs_backward<T: Scalar>(c: &NormCache<T>, g: &Mat<T>) -> Mat<T> {
    let mut dx = g.clone();
    for r in 0..g.rows() {
        let m = c.scale[r].f64();
        let x = c.x.row(r);
        let gr = g.row(r);
        let dot: f64 = gr.iter().zip(x).map(|(a, b)| a.f64() * b.f64()).sum();
        let k = c.argmax[r];
        let unscaled = x[k].f64().abs() <= NORM_FLOOR;
        let row = dx.row_mut(r);
        for v in row.iter_mut() {
            *v = T::of(v.f64() / m);
        }
        if !unscaled {
            row[k] = T::of(row[k].f64() - x[k].f64().signum() * dot / (m * m));
        }
    }
    dx
}

#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    pub output: Mat<T>,
    /// Quantized codewords, `batch x L`.
    pub codes: Mat<T>,
    /// Present only for train-mode passes.
    pub cache: Option<Cache<T>>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    spec: ModelSpec,
    init_seed: u64,
    store: ParamStore<T>,
    encoder: Vec<Layer>,
    decoder: Vec<Layer>,
}

fn uniform_block<T: Scalar>(n: usize, limit: f64, rng: &mut Stream) -> Vec<T> {
    (0..n).map(|_| T::of(rng.uniform_range(-limit, limit))).collect()
}

fn register<T: Scalar>(store: &mut ParamStore<T>, desc: &LayerDesc, seed: u64) -> Vec<usize> {
    let rng = |store: &ParamStore<T>| Stream::derived(seed, purpose::INIT, store.len() as u64);
    match desc.shape {
        LayerShape::Dense { input, output, .. } => {
            let limit = (6.0 / (input + output) as f64).sqrt();
            let w = uniform_block(input * output, limit, &mut rng(store));
            let n = &desc.name;
            vec![
                store.push(format!("{n}.weight"), vec![input, output], true, w),
                store.push(format!("{n}.bias"), vec![output], true, vec![T::zero(); output]),
                store.push(format!("{n}.bn.gamma"), vec![output], true, vec![T::one(); output]),
                store.push(format!("{n}.bn.beta"), vec![output], true, vec![T::zero(); output]),
                store.push(format!("{n}.bn.running_mean"), vec![output], false, vec![T::zero(); output]),
                store.push(format!("{n}.bn.running_var"), vec![output], false, vec![T::one(); output]),
            ]
        }
        LayerShape::BiLstm { input, hidden, .. } => {
            let mut idx = Vec::with_capacity(6);
            for dir in ["fwd", "bwd"] {
                let n = format!("{}.{dir}", desc.name);
                let w_in = uniform_block(input * 4 * hidden, (6.0 / (input + hidden) as f64).sqrt(), &mut rng(store));
                idx.push(store.push(format!("{n}.w_in"), vec![input, 4 * hidden], true, w_in));
                let w_rec = uniform_block(hidden * 4 * hidden, (3.0 / hidden as f64).sqrt(), &mut rng(store));
                idx.push(store.push(format!("{n}.w_rec"), vec![hidden, 4 * hidden], true, w_rec));
                let mut bias = vec![T::zero(); 4 * hidden];
                bias[hidden..2 * hidden].fill(T::one());
                idx.push(store.push(format!("{n}.bias"), vec![4 * hidden], true, bias));
            }
            idx
        }
    }
}

/// Builds the network for `spec` with parameters drawn from `seed`.
pub fn build_model<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Model<T>> {
    spec.validate()?;
    let mut store = ParamStore::new();
    let mut layers = |descs: Vec<LayerDesc>| {
        descs
            .into_iter()
            .map(|desc| {
                let params = register(&mut store, &desc, seed);
                Layer { desc, params }
            })
            .collect::<Vec<_>>()
    };
    let encoder = layers(spec.encoder_layers());
    let decoder = layers(spec.decoder_layers());
    Ok(Model {
        spec: spec.clone(),
        init_seed: seed,
        store,
        encoder,
        decoder,
    })
}

type StatUpdate<T> = (usize, Vec<T>, Vec<T>);

impl<T: Scalar> Model<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Replaces the parameters; block names and shapes must match.
    pub fn set_params(&mut self, store: ParamStore<T>) -> Result<()> {
        ensure!(store.len() == self.store.len(), Contract, "parameter block count differs");
        for (a, b) in store.blocks().iter().zip(self.store.blocks()) {
            ensure!(
                a.name == b.name && a.shape == b.shape,
                Contract,
                "parameter block {} {:?} does not match {} {:?}",
                a.name,
                a.shape,
                b.name,
                b.shape
            );
        }
        self.store = store;
        Ok(())
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            init_seed: self.init_seed,
            store: self.store.cast(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
        }
    }

    pub fn layer_descs(&self) -> impl Iterator<Item = &LayerDesc> {
        self.encoder.iter().chain(&self.decoder).map(|l| &l.desc)
    }

    /// Forward pass; train mode updates the BN running statistics.
    pub fn forward(&mut self, x: &Mat<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<ForwardPass<T>> {
        self.forward_with(x, mode, mode.default_quant(), rng)
    }

    pub fn forward_with(
        &mut self,
        x: &Mat<T>,
        mode: Mode,
        quant: QuantBehavior,
        rng: &mut dyn RngCore,
    ) -> Result<ForwardPass<T>> {
        let (pass, updates) = self.run(x, mode, quant, rng)?;
        for (idx, mean, var) in updates {
            update_running(&mut self.store.block_mut(idx).data, &mean);
            update_running(&mut self.store.block_mut(idx + 1).data, &var);
        }
        Ok(pass)
    }

    /// Eval-mode reconstruction with deterministic quantization.
    pub fn predict(&self, x: &Mat<T>) -> Result<Mat<T>> {
        let mut unused = Stream::new(0);
        self.predict_with(x, QuantBehavior::Deterministic, &mut unused)
    }

    /// Eval-mode reconstruction with an explicit quantizer behavior.
    pub fn predict_with(&self, x: &Mat<T>, quant: QuantBehavior, rng: &mut dyn RngCore) -> Result<Mat<T>> {
        Ok(self.run(x, Mode::Eval, quant, rng)?.0.output)
    }

    /// Eval-mode codewords as they enter the quantizer, and after it.
    pub fn encode(&self, x: &Mat<T>) -> Result<(Mat<T>, Mat<T>)> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.encoder {
            h = self.layer_forward(layer, &h, Mode::Eval, None, &mut Vec::new());
        }
        let (h, _) = self.normalize(h);
        let mut unused = Stream::new(0);
        let q = self.quantize(&h, QuantBehavior::Deterministic, &mut unused)?;
        Ok((h, q))
    }

    fn check_input(&self, x: &Mat<T>) -> Result<()> {
        ensure!(
            x.cols() == self.spec.input_dim(),
            Contract,
            "input width {} does not match {}",
            x.cols(),
            self.spec.input_dim()
        );
        ensure!(x.rows() > 0, Contract, "empty batch");
        Ok(())
    }

    fn run(
        &self,
        x: &Mat<T>,
        mode: Mode,
        quant: QuantBehavior,
        rng: &mut dyn RngCore,
    ) -> Result<(ForwardPass<T>, Vec<StatUpdate<T>>)> {
        self.check_input(x)?;
        let train = mode == Mode::Train;
        let mut updates = Vec::new();
        let mut enc_cache = Vec::new();
        let mut dec_cache = Vec::new();
        let mut h = x.clone();
        for layer in &self.encoder {
            let slot = if train { Some(&mut enc_cache) } else { None };
            h = self.layer_forward(layer, &h, mode, slot, &mut updates);
        }
        let (h, norm) = self.normalize(h);
        let codes = self.quantize(&h, quant, rng)?;
        let mut h = codes.clone();
        for layer in &self.decoder {
            let slot = if train { Some(&mut dec_cache) } else { None };
            h = self.layer_forward(layer, &h, mode, slot, &mut updates);
        }
        let cache = train.then_some(Cache {
            encoder: enc_cache,
            norm,
            decoder: dec_cache,
        });
        Ok((
            ForwardPass {
                output: h,
                codes,
                cache,
            },
            updates,
        ))
    }

    fn normalize(&self, h: Mat<T>) -> (Mat<T>, Option<NormCache<T>>) {
        match self.spec.codeword_norm {
            CodewordNorm::None => (h, None),
            CodewordNorm::MaxAbs => {
                let (y, c) = max_abs_forward(&h);
                (y, Some(c))
            }
        }
    }

    fn quantize(&self, h: &Mat<T>, quant: QuantBehavior, rng: &mut dyn RngCore) -> Result<Mat<T>> {
        if quant == QuantBehavior::Bypass {
            return Ok(h.clone());
        }
        let mut out = Vec::with_capacity(h.as_slice().len());
        for &v in h.as_slice() {
            let x = v.f64();
            let q = match (self.spec.quantizer, quant) {
                (QuantizerSpec::Binarize, QuantBehavior::Stochastic) => binarize(x, rng)?,
                (QuantizerSpec::Binarize, _) => binarize_deterministic(x),
                (QuantizerSpec::Uniform { bits }, _) => uniform_quantize(x, bits)?,
            };
            out.push(T::of(q));
        }
        Ok(Mat::from_vec(h.rows(), h.cols(), out))
    }

    fn block(&self, idx: usize) -> &[T] {
        &self.store.block(idx).data
    }

    fn lstm_weights(&self, p: &[usize], input: usize, hidden: usize) -> LstmWeights<'_, T> {
        LstmWeights {
            w_in: self.block(p[0]),
            w_rec: self.block(p[1]),
            bias: self.block(p[2]),
            input,
            hidden,
        }
    }

    fn layer_forward(
        &self,
        layer: &Layer,
        x: &Mat<T>,
        mode: Mode,
        cache: Option<&mut Vec<LayerCache<T>>>,
        updates: &mut Vec<StatUpdate<T>>,
    ) -> Mat<T> {
        let p = &layer.params;
        match layer.desc.shape {
            LayerShape::Dense { activation, .. } => {
                let z = affine_forward(x, self.block(p[0]), self.block(p[1]));
                let (gamma, beta) = (self.block(p[2]), self.block(p[3]));
                let (y, bn) = match mode {
                    Mode::Train => {
                        let out = batchnorm_train(&z, gamma, beta);
                        updates.push((p[4], out.mean, out.var));
                        (out.y, Some(out.cache))
                    }
                    Mode::Eval => (batchnorm_eval(&z, gamma, beta, self.block(p[4]), self.block(p[5])), None),
                };
                let a = activation_forward(activation, &y);
                if let (Some(c), Some(bn)) = (cache, bn) {
                    c.push(LayerCache::Dense {
                        x: x.clone(),
                        bn,
                        y,
                        a: a.clone(),
                    });
                }
                a
            }
            LayerShape::BiLstm { input, hidden, steps } => {
                let xs = split_steps(x, steps);
                let (hf, fwd) = lstm_forward(&xs, &self.lstm_weights(&p[..3], input, hidden), false);
                let (hb, bwd) = lstm_forward(&xs, &self.lstm_weights(&p[3..], input, hidden), true);
                let half = T::of(0.5);
                let avg: Vec<Mat<T>> = hf.iter().zip(&hb).map(|(f, b)| f.zip_map(b, |u, v| (u + v) * half)).collect();
                if let Some(c) = cache {
                    c.push(LayerCache::BiLstm { xs, fwd, bwd });
                }
                join_steps(&avg)
            }
        }
    }

    fn layer_backward(&self, layer: &Layer, cache: &LayerCache<T>, da: &Mat<T>, grads: &mut Gradients<T>) -> Mat<T> {
        let p = &layer.params;
        match (&layer.desc.shape, cache) {
            (LayerShape::Dense { activation, .. }, LayerCache::Dense { x, bn, y, a }) => {
                let act: Activation = *activation;
                let dy = activation_backward(act, y, a, da);
                let (dz, dgamma, dbeta) = batchnorm_backward(bn, self.block(p[2]), &dy);
                let (dx, dw, db) = affine_backward(x, self.block(p[0]), &dz);
                accumulate(&mut grads[p[0]], &dw);
                accumulate(&mut grads[p[1]], &db);
                accumulate(&mut grads[p[2]], &dgamma);
                accumulate(&mut grads[p[3]], &dbeta);
                dx
            }
            (&LayerShape::BiLstm { input, hidden, steps }, LayerCache::BiLstm { xs, fwd, bwd }) => {
                let half = T::of(0.5);
                let mut dh = split_steps(da, steps);
                for m in &mut dh {
                    m.scale(half);
                }
                let gf = lstm_backward(xs, &self.lstm_weights(&p[..3], input, hidden), fwd, &dh);
                let gb = lstm_backward(xs, &self.lstm_weights(&p[3..], input, hidden), bwd, &dh);
                for (k, g) in [(0, &gf), (3, &gb)] {
                    accumulate(&mut grads[p[k]], &g.dw_in);
                    accumulate(&mut grads[p[k + 1]], &g.dw_rec);
                    accumulate(&mut grads[p[k + 2]], &g.dbias);
                }
                let dxs: Vec<Mat<T>> = gf.dxs.iter().zip(&gb.dxs).map(|(a, b)| a.zip_map(b, |u, v| u + v)).collect();
                join_steps(&dxs)
            }
            _ => unreachable!("cache kind always follows the layer kind"),
        }
    }

    /// Gradients of the loss with respect to every parameter block, given
    /// the gradient with respect to the output. The quantizer passes
    /// gradients through unchanged.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_output: &Mat<T>) -> Result<Gradients<T>> {
        let cache = pass
            .cache
            .as_ref()
            .ok_or_else(|| crate::error::Error::Contract("backward needs the cache of a train-mode forward".into()))?;
        ensure!(
            grad_output.rows() == pass.output.rows() && grad_output.cols() == pass.output.cols(),
            Contract,
            "upstream gradient shape {}x{} does not match output {}x{}",
            grad_output.rows(),
            grad_output.cols(),
            pass.output.rows(),
            pass.output.cols()
        );
        let mut grads = self.store.zero_gradients();
        let mut d = grad_output.clone();
        for (layer, c) in self.decoder.iter().zip(&cache.decoder).rev() {
            d = self.layer_backward(layer, c, &d, &mut grads);
        }
        if let Some(n) = &cache.norm {
            d = max_abs_backward(n, &d);
        }
        for (layer, c) in self.encoder.iter().zip(&cache.encoder).rev() {
            d = self.layer_backward(layer, c, &d, &mut grads);
        }
        Ok(grads)
    }
}

fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
