//! Layer primitives with hand-written backward passes: affine maps, batch
//! normalization, activations and a single LSTM direction.

use super::spec::Activation;
use super::tensor::{gemm, matmul, Mat, Scalar, View};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.99;

/// `z = x W + b` with `W` stored `input x output`.
pub fn affine_forward<T: Scalar>(x: &Mat<T>, w: &[T], b: &[T]) -> Mat<T> {
    let (i, o) = (x.cols(), b.len());
    let mut z = Mat::zeros(x.rows(), o);
    gemm(T::one(), x.view(), false, View::new(w, i, o), false, T::zero(), &mut z);
    z.add_row_vector(b);
    z
}

/// Returns `(dx, dW, db)`.
pub fn affine_backward<T: Scalar>(x: &Mat<T>, w: &[T], dz: &Mat<T>) -> (Mat<T>, Vec<T>, Vec<T>) {
    let (i, o) = (x.cols(), dz.cols());
    let dw = matmul(x.view(), true, dz.view(), false).into_vec();
    let db = dz.column_sums();
    let dx = matmul(dz.view(), false, View::new(w, i, o), true);
    (dx, dw, db)
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Mat<T>,
    pub inv_std: Vec<T>,
}

pub struct BnTrainOutput<T> {
    pub y: Mat<T>,
    pub cache: BnCache<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

pub fn batchnorm_train<T: Scalar>(z: &Mat<T>, gamma: &[T], beta: &[T]) -> BnTrainOutput<T> {
    let (n, c) = (z.rows(), z.cols());
    let inv_n = T::one() / T::of(n as f64);
    let mean: Vec<T> = z.column_sums().into_iter().map(|s| s * inv_n).collect();
    let mut var = vec![T::zero(); c];
    for r in 0..n {
        for ((v, &x), &m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
            *v = *v + (x - m) * (x - m);
        }
    }
    for v in &mut var {
        *v = *v * inv_n;
    }
    let eps = T::of(BN_EPS);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let xhat = Mat::from_fn(n, c, |r, j| (z.get(r, j) - mean[j]) * inv_std[j]);
    let y = Mat::from_fn(n, c, |r, j| gamma[j] * xhat.get(r, j) + beta[j]);
    BnTrainOutput {
        y,
        cache: BnCache { xhat, inv_std },
        mean,
        var,
    }
}

pub fn batchnorm_eval<T: Scalar>(z: &Mat<T>, gamma: &[T], beta: &[T], mean: &[T], var: &[T]) -> Mat<T> {
    let eps = T::of(BN_EPS);
    let scale: Vec<T> = gamma.iter().zip(var).map(|(&g, &v)| g / (v + eps).sqrt()).collect();
    Mat::from_fn(z.rows(), z.cols(), |r, j| (z.get(r, j) - mean[j]) * scale[j] + beta[j])
}

/// Exponential moving average of the batch statistics.
pub fn update_running<T: Scalar>(running: &mut [T], batch: &[T]) {
    let m = T::of(BN_MOMENTUM);
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = m * *r + (T::one() - m) * b;
    }
}

/// Returns `(dz, dgamma, dbeta)`.
pub fn batchnorm_backward<T: Scalar>(cache: &BnCache<T>, gamma: &[T], dy: &Mat<T>) -> (Mat<T>, Vec<T>, Vec<T>) {
    let (n, c) = (dy.rows(), dy.cols());
    let dbeta = dy.column_sums();
    let mut dgamma = vec![T::zero(); c];
    let mut sum_dxhat = vec![T::zero(); c];
    let mut sum_dxhat_xhat = vec![T::zero(); c];
    for r in 0..n {
        for j in 0..c {
            let g = dy.get(r, j);
            let xh = cache.xhat.get(r, j);
            dgamma[j] = dgamma[j] + g * xh;
            let dxh = g * gamma[j];
            sum_dxhat[j] = sum_dxhat[j] + dxh;
            sum_dxhat_xhat[j] = sum_dxhat_xhat[j] + dxh * xh;
        }
    }
    let nf = T::of(n as f64);
    let dz = Mat::from_fn(n, c, |r, j| {
        let dxh = dy.get(r, j) * gamma[j];
        cache.inv_std[j] / nf * (nf * dxh - sum_dxhat[j] - cache.xhat.get(r, j) * sum_dxhat_xhat[j])
    });
    (dz, dgamma, dbeta)
}

pub fn activation_forward<T: Scalar>(act: Activation, y: &Mat<T>) -> Mat<T> {
    match act {
        Activation::LeakyRelu(slope) => {
            let s = T::of(slope);
            y.map(|x| if x > T::zero() { x } else { s * x })
        }
        Activation::Tanh => y.map(T::tanh),
    }
}

/// `dy` from the pre-activation `y`, the output `a` and `da`.
pub fn activation_backward<T: Scalar>(act: Activation, y: &Mat<T>, a: &Mat<T>, da: &Mat<T>) -> Mat<T> {
    match act {
        Activation::LeakyRelu(slope) => {
            let s = T::of(slope);
            y.zip_map(da, |x, g| if x > T::zero() { g } else { s * g })
        }
        Activation::Tanh => a.zip_map(da, |t, g| g * (T::one() - t * t)),
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One LSTM direction. Gate blocks are ordered input, forget, candidate,
/// output along the `4H` axis.
#[derive(Clone, Copy)]
pub struct LstmWeights<'a, T> {
    /// `input x 4H`.
    pub w_in: &'a [T],
    /// `H x 4H`.
    pub w_rec: &'a [T],
    /// `4H`.
    pub bias: &'a [T],
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
struct LstmStep<T> {
    t: usize,
    /// Post-nonlinearity gates, `B x 4H`.
    gates: Mat<T>,
    c: Mat<T>,
    tanh_c: Mat<T>,
    h: Mat<T>,
}

#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    /// Steps in processing order.
    steps: Vec<LstmStep<T>>,
}

/// Runs the recurrence over `xs` (one `B x input` matrix per time step) in
/// forward or reverse time order. Hidden states come back in original time
/// order, which is what the bi-LSTM averaging needs.
pub fn lstm_forward<T: Scalar>(xs: &[Mat<T>], w: &LstmWeights<'_, T>, reverse: bool) -> (Vec<Mat<T>>, LstmCache<T>) {
    let steps = xs.len();
    let batch = xs.first().map_or(0, Mat::rows);
    let hdim = w.hidden;
    let w_in = View::new(w.w_in, w.input, 4 * hdim);
    let w_rec = View::new(w.w_rec, hdim, 4 * hdim);
    let mut h_prev = Mat::zeros(batch, hdim);
    let mut c_prev = Mat::zeros(batch, hdim);
    let mut cache = Vec::with_capacity(steps);
    let mut out = vec![Mat::zeros(batch, hdim); steps];
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let mut g = Mat::zeros(batch, 4 * hdim);
        gemm(T::one(), xs[t].view(), false, w_in, false, T::zero(), &mut g);
        gemm(T::one(), h_prev.view(), false, w_rec, false, T::one(), &mut g);
        g.add_row_vector(w.bias);
        let mut c = Mat::zeros(batch, hdim);
        let mut tanh_c = Mat::zeros(batch, hdim);
        let mut h = Mat::zeros(batch, hdim);
        for r in 0..batch {
            let row = g.row_mut(r);
            for j in 0..hdim {
                row[j] = sigmoid(row[j]);
                row[hdim + j] = sigmoid(row[hdim + j]);
                row[2 * hdim + j] = row[2 * hdim + j].tanh();
                row[3 * hdim + j] = sigmoid(row[3 * hdim + j]);
            }
            let row = g.row(r);
            for j in 0..hdim {
                let cv = row[hdim + j] * c_prev.get(r, j) + row[j] * row[2 * hdim + j];
                let tc = cv.tanh();
                c.row_mut(r)[j] = cv;
                tanh_c.row_mut(r)[j] = tc;
                h.row_mut(r)[j] = row[3 * hdim + j] * tc;
            }
        }
        out[t] = h.clone();
        h_prev = h.clone();
        c_prev = c.clone();
        cache.push(LstmStep {
            t,
            gates: g,
            c,
            tanh_c,
            h,
        });
    }
    (out, LstmCache { steps: cache })
}

pub struct LstmGrads<T> {
    /// Input gradients in original time order.
    pub dxs: Vec<Mat<T>>,
    pub dw_in: Vec<T>,
    pub dw_rec: Vec<T>,
    pub dbias: Vec<T>,
}

/// Backpropagation through time. `dhs` holds the upstream gradient of each
/// hidden state, in original time order.
pub fn lstm_backward<T: Scalar>(
    xs: &[Mat<T>],
    w: &LstmWeights<'_, T>,
    cache: &LstmCache<T>,
    dhs: &[Mat<T>],
) -> LstmGrads<T> {
    let steps = cache.steps.len();
    let batch = xs.first().map_or(0, Mat::rows);
    let hdim = w.hidden;
    let w_in = View::new(w.w_in, w.input, 4 * hdim);
    let w_rec = View::new(w.w_rec, hdim, 4 * hdim);
    let mut dw_in = Mat::zeros(w.input, 4 * hdim);
    let mut dw_rec = Mat::zeros(hdim, 4 * hdim);
    let mut dbias = vec![T::zero(); 4 * hdim];
    let mut dxs = vec![Mat::zeros(batch, w.input); steps];
    let mut dh_next: Mat<T> = Mat::zeros(batch, hdim);
    let mut dc_next: Mat<T> = Mat::zeros(batch, hdim);
    let zeros: Mat<T> = Mat::zeros(batch, hdim);
    for k in (0..steps).rev() {
        let st = &cache.steps[k];
        let (h_prev, c_prev) = if k == 0 {
            (&zeros, &zeros)
        } else {
            (&cache.steps[k - 1].h, &cache.steps[k - 1].c)
        };
        let mut dg = Mat::zeros(batch, 4 * hdim);
        for r in 0..batch {
            let gates = st.gates.row(r);
            for j in 0..hdim {
                let (i, f, g, o) = (gates[j], gates[hdim + j], gates[2 * hdim + j], gates[3 * hdim + j]);
                let tc = st.tanh_c.get(r, j);
                let dh = dhs[st.t].get(r, j) + dh_next.get(r, j);
                let d_o = dh * tc;
                let dc = dc_next.get(r, j) + dh * o * (T::one() - tc * tc);
                let di = dc * g;
                let dgc = dc * i;
                let df = dc * c_prev.get(r, j);
                dc_next.row_mut(r)[j] = dc * f;
                let row = dg.row_mut(r);
                row[j] = di * i * (T::one() - i);
                row[hdim + j] = df * f * (T::one() - f);
                row[2 * hdim + j] = dgc * (T::one() - g * g);
                row[3 * hdim + j] = d_o * o * (T::one() - o);
            }
        }
        gemm(T::one(), xs[st.t].view(), true, dg.view(), false, T::one(), &mut dw_in);
        gemm(T::one(), h_prev.view(), true, dg.view(), false, T::one(), &mut dw_rec);
        for (b, s) in dbias.iter_mut().zip(dg.column_sums()) {
            *b = *b + s;
        }
        dxs[st.t] = matmul(dg.view(), false, w_in, true);
        dh_next = matmul(dg.view(), false, w_rec, true);
    }
    LstmGrads {
        dxs,
        dw_in: dw_in.into_vec(),
        dw_rec: dw_rec.into_vec(),
        dbias,
    }
}

/// Splits `B x (T * width)` into `T` matrices of `B x width`.
pub fn split_steps<T: Scalar>(x: &Mat<T>, steps: usize) -> Vec<Mat<T>> {
    let width = x.cols() / steps;
    (0..steps).map(|t| x.columns(t * width, width)).collect()
}

pub fn join_steps<T: Scalar>(parts: &[Mat<T>]) -> Mat<T> {
    let width = parts.first().map_or(0, Mat::cols);
    let rows = parts.first().map_or(0, Mat::rows);
    let mut out = Mat::zeros(rows, width * parts.len());
    for (t, p) in parts.iter().enumerate() {
        out.set_columns(t * width, p);
    }
    out
}
