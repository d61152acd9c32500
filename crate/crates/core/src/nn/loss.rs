//! Cosine-similarity loss on real `[Re vec(V); Im vec(V)]` rows.

use super::tensor::{Mat, Scalar};
use crate::error::{ensure, Result};

/// Similarity of one column pair and its gradient with respect to the
/// reconstruction. `x`, `y` are the real and imaginary parts of `v_hat`,
/// `p`, `q` those of `v`.
///
/// With `z = v_hat^H v`, `d|z|/dx_k = Re(conj(z) v_k) / |z|` and
/// `d|z|/dy_k = Im(conj(z) v_k) / |z|`; the norm of `v_hat` contributes
/// `-|z| x_k / (‖v_hat‖^3 ‖v‖)`.
///
/// Two points are not differentiable. At `z = 0` the subgradient of `|z|`
/// along `Re z` is used, i.e. `(p_k, q_k)`. At `v_hat = 0` the similarity is
/// reported as 0 and `‖v_hat‖` is taken as 1 in the gradient, which points
/// the reconstruction toward `v`. A decoder whose output is exactly zero
/// (for example when every code rounds to 0) can therefore still learn.
pub fn column_similarity_grad(x: &[f64], y: &[f64], p: &[f64], q: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let mut zr = 0.0;
    let mut zi = 0.0;
    let mut nh = 0.0;
    let mut nv = 0.0;
    for k in 0..x.len() {
        zr += x[k] * p[k] + y[k] * q[k];
        zi += x[k] * q[k] - y[k] * p[k];
        nh += x[k] * x[k] + y[k] * y[k];
        nv += p[k] * p[k] + q[k] * q[k];
    }
    let (nh, nv) = (nh.sqrt(), nv.sqrt());
    if nv == 0.0 {
        return (0.0, vec![0.0; x.len()], vec![0.0; x.len()]);
    }
    let mag = (zr * zr + zi * zi).sqrt();
    let (sim, nh) = if nh == 0.0 { (0.0, 1.0) } else { (mag / (nh * nv), nh) };
    // unit phasor of z, or 1 at z = 0
    let (ur, ui) = if mag > 0.0 { (zr / mag, zi / mag) } else { (1.0, 0.0) };
    let first = 1.0 / (nh * nv);
    let second = mag / (nh * nh * nh * nv);
    let gx = (0..x.len())
        .map(|k| (ur * p[k] + ui * q[k]) * first - second * x[k])
        .collect();
    let gy = (0..x.len())
        .map(|k| (ur * q[k] - ui * p[k]) * first - second * y[k])
        .collect();
    (sim, gx, gy)
}

fn check_shapes<T: Scalar>(output: &Mat<T>, target: &Mat<T>, nt: usize, ns: usize) -> Result<()> {
    ensure!(
        output.rows() == target.rows() && output.cols() == target.cols(),
        Contract,
        "output {}x{} vs target {}x{}",
        output.rows(),
        output.cols(),
        target.rows(),
        target.cols()
    );
    ensure!(output.rows() > 0, Contract, "empty batch");
    ensure!(
        output.cols() == 2 * nt * ns,
        Contract,
        "row width {} is not 2*nt*ns = {}",
        output.cols(),
        2 * nt * ns
    );
    Ok(())
}

fn split_column<T: Scalar>(row: &[T], nt: usize, ns: usize, s: usize) -> (Vec<f64>, Vec<f64>) {
    let half = nt * ns;
    let re = row[s * nt..(s + 1) * nt].iter().map(|v| v.f64()).collect();
    let im = row[half + s * nt..half + (s + 1) * nt].iter().map(|v| v.f64()).collect();
    (re, im)
}

/// Per-sample similarity averaged over the `ns` columns.
pub fn row_similarities<T: Scalar>(output: &Mat<T>, target: &Mat<T>, nt: usize, ns: usize) -> Result<Vec<f64>> {
    check_shapes(output, target, nt, ns)?;
    Ok((0..output.rows())
        .map(|r| {
            (0..ns)
                .map(|s| {
                    let (x, y) = split_column(output.row(r), nt, ns, s);
                    let (p, q) = split_column(target.row(r), nt, ns, s);
                    column_similarity_grad(&x, &y, &p, &q).0
                })
                .sum::<f64>()
                / ns as f64
        })
        .collect())
}

/// Negative mean similarity over batch and subbands, and its gradient with
/// respect to `output`.
pub fn cosine_loss<T: Scalar>(output: &Mat<T>, target: &Mat<T>, nt: usize, ns: usize) -> Result<(f64, Mat<T>)> {
    check_shapes(output, target, nt, ns)?;
    let (b, half) = (output.rows(), nt * ns);
    let weight = 1.0 / (b * ns) as f64;
    let mut grad = Mat::zeros(b, 2 * half);
    let mut total = 0.0;
    for r in 0..b {
        for s in 0..ns {
            let (x, y) = split_column(output.row(r), nt, ns, s);
            let (p, q) = split_column(target.row(r), nt, ns, s);
            let (sim, gx, gy) = column_similarity_grad(&x, &y, &p, &q);
            total += sim;
            let row = grad.row_mut(r);
            for k in 0..nt {
                row[s * nt + k] = T::of(-weight * gx[k]);
                row[half + s * nt + k] = T::of(-weight * gy[k]);
            }
        }
    }
    Ok((-total * weight, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMatrix, C64};
    use crate::metrics::{loss_multi, stacked_cosine_similarity};
    use crate::nn::spec::stacked_row;
    use crate::rng::Stream;

    fn random_matrix(nt: usize, ns: usize, s: &mut Stream) -> CMatrix {
        CMatrix::from_fn(nt, ns, |_, _| C64::new(s.normal(), s.normal()))
    }

    #[test]
    fn loss_matches_the_complex_metric() {
        let mut s = Stream::new(1);
        let (nt, ns) = (4, 3);
        let pairs: Vec<(CMatrix, CMatrix)> = (0..5)
            .map(|_| (random_matrix(nt, ns, &mut s), random_matrix(nt, ns, &mut s)))
            .collect();
        let target = Mat::from_rows(&pairs.iter().map(|(v, _)| stacked_row(v)).collect::<Vec<_>>());
        let output = Mat::from_rows(&pairs.iter().map(|(_, h)| stacked_row(h)).collect::<Vec<_>>());
        let (loss, _) = cosine_loss(&output, &target, nt, ns).unwrap();
        assert!((loss - loss_multi(&pairs).unwrap()).abs() < 1e-12);
        let sims = row_similarities(&output, &target, nt, ns).unwrap();
        for (k, (v, h)) in pairs.iter().enumerate() {
            assert!((sims[k] - stacked_cosine_similarity(v, h).unwrap().rho).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut s = Stream::new(2);
        let (nt, ns, b) = (4, 2, 3);
        for _ in 0..10 {
            let target = Mat::from_fn(b, 2 * nt * ns, |_, _| s.normal());
            let output = Mat::from_fn(b, 2 * nt * ns, |_, _| s.normal());
            let (_, g) = cosine_loss(&output, &target, nt, ns).unwrap();
            let h = 1e-5;
            for k in 0..output.as_slice().len() {
                let mut up = output.clone();
                up.as_mut_slice()[k] += h;
                let mut down = output.clone();
                down.as_mut_slice()[k] -= h;
                let n = (cosine_loss(&up, &target, nt, ns).unwrap().0 - cosine_loss(&down, &target, nt, ns).unwrap().0)
                    / (2.0 * h);
                let a = g.as_slice()[k];
                assert!((a - n).abs() / a.abs().max(n.abs()).max(1e-6) <= 1e-4, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn hand_derivative_at_a_point() {
        // v = (1, 0), v_hat = (1 + i, 1): z = 1 - i, |z| = √2, ‖v_hat‖ = √3.
        let (x, y, p, q) = ([1.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]);
        let (sim, gx, gy) = column_similarity_grad(&x, &y, &p, &q);
        let r2 = 2f64.sqrt();
        let r3 = 3f64.sqrt();
        assert!((sim - r2 / r3).abs() < 1e-15);
        // d/dx0 = Re(conj(z)·1)/(|z|·√3) - √2·1/(3√3) = 1/(√2√3) - √2/(3√3)
        assert!((gx[0] - (1.0 / (r2 * r3) - r2 / (3.0 * r3))).abs() < 1e-15);
        assert!((gx[1] - (-r2 / (3.0 * r3))).abs() < 1e-15);
        // d/dy0 = Im(conj(z)·1)/(|z|·√3) - √2·1/(3√3) = 1/(√2√3) - √2/(3√3)
        assert!((gy[0] - (1.0 / (r2 * r3) - r2 / (3.0 * r3))).abs() < 1e-15);
        assert_eq!(gy[1], 0.0);
    }

    #[test]
    fn zero_reconstruction_pulls_toward_the_target() {
        let (p, q) = ([0.6, 0.0], [0.0, 0.8]);
        let (sim, gx, gy) = column_similarity_grad(&[0.0; 2], &[0.0; 2], &p, &q);
        assert_eq!(sim, 0.0);
        assert_eq!(gx, vec![0.6, 0.0]);
        assert_eq!(gy, vec![0.0, 0.8]);
        // a small step along the gradient gives a positive similarity
        let (s2, _, _) = column_similarity_grad(&[0.06, 0.0], &[0.0, 0.08], &p, &q);
        assert!((s2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_is_stationary() {
        let mut s = Stream::new(3);
        let v = random_matrix(8, 1, &mut s);
        let t = Mat::from_rows(&[stacked_row(&v)]);
        let rot = CMatrix::from_fn(8, 1, |r, c| v[(r, c)] * C64::from_polar(0.5, 1.1));
        let o = Mat::from_rows(&[stacked_row(&rot)]);
        let (loss, g) = cosine_loss(&o, &t, 8, 1).unwrap();
        assert!((loss + 1.0).abs() < 1e-12);
        assert!(g.as_slice().iter().all(|x| x.abs() < 1e-12));
        assert!(cosine_loss(&o, &t, 4, 1).is_err());
    }
}
