//! Feedback ground truth: dominant eigenvectors per RB or per subband, phase
//! canonicalization and power spectral entropy.

use rustfft::FftPlanner;

use crate::channel::ChannelSample;
use crate::error::{ensure, Error, Result};
use crate::linalg::{hermitian_eigen, norm, CMatrix, C64};

/// Entries at or below this modulus are skipped when fixing the phase.
pub const PHASE_REF_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMode {
    SingleRb,
    MultiRb,
}

/// Unit-norm, phase-canonical eigenvectors stored as the columns of an
/// `nt x ns` matrix (`ns = 1` in single-RB mode).
#[derive(Clone, Debug, PartialEq)]
pub struct EigenTarget {
    pub mode: EigenMode,
    pub v: CMatrix,
    /// `seed_used` of the channel sample this target came from.
    pub source_seed: u64,
}

impl EigenTarget {
    pub fn single(v: Vec<C64>, source_seed: u64) -> Result<Self> {
        Ok(Self {
            mode: EigenMode::SingleRb,
            v: CMatrix::from_columns(&[v])?,
            source_seed,
        })
    }

    pub fn multi(v: CMatrix, source_seed: u64) -> Self {
        Self {
            mode: EigenMode::MultiRb,
            v,
            source_seed,
        }
    }

    pub fn nt(&self) -> usize {
        self.v.rows()
    }

    pub fn n_subbands(&self) -> usize {
        self.v.cols()
    }

    /// The first (in single-RB mode, the only) column.
    pub fn vector(&self) -> Vec<C64> {
        self.v.column(0)
    }
}

/// Rotate `v` by a unit phasor so its first non-negligible entry is real and
/// non-negative.
pub fn canonical_phase(v: &[C64]) -> Result<Vec<C64>> {
    let pivot = v
        .iter()
        .find(|x| x.norm() > PHASE_REF_EPS)
        .ok_or_else(|| Error::Degenerate("cannot fix the phase of a zero vector".into()))?;
    let rot = pivot.conj() / pivot.norm();
    Ok(v.iter().map(|x| x * rot).collect())
}

fn top_eigenvector(a: &CMatrix) -> Result<(Vec<C64>, f64)> {
    let eig = hermitian_eigen(a)?;
    let top = eig.top_index();
    let lambda = eig.values[top];
    ensure!(lambda > 0.0, Degenerate, "matrix has no positive eigenvalue");
    let v = eig.vectors.column(top);
    let n = norm(&v);
    let v: Vec<C64> = v.iter().map(|x| x / n).collect();
    Ok((canonical_phase(&v)?, lambda))
}

/// Right singular vector of the largest singular value of `h`, obtained from
/// the Hermitian EVD of `h^H h`.
pub fn dominant_right_singular_vector(h: &CMatrix) -> Result<(Vec<C64>, f64)> {
    ensure!(h.is_finite(), Domain, "channel matrix has non-finite entries");
    ensure!(
        h.frobenius_norm() > 0.0,
        Degenerate,
        "channel matrix is zero"
    );
    let (v, lambda) = top_eigenvector(&h.gram())?;
    Ok((v, lambda.sqrt()))
}

/// Subband-averaged Gram matrices `mean_n H_{s,n}^H H_{s,n}`, one per subband.
pub fn subband_grams(sample: &ChannelSample, n_subbands: usize) -> Result<Vec<CMatrix>> {
    ensure!(n_subbands >= 1, Config, "n_subbands must be at least 1");
    let n_rb = sample.n_rb();
    ensure!(
        n_rb % n_subbands == 0 && n_rb > 0,
        Config,
        "n_rb = {n_rb} is not divisible by n_subbands = {n_subbands}"
    );
    let per = n_rb / n_subbands;
    Ok(sample
        .h
        .chunks(per)
        .map(|rbs| {
            let mut acc = rbs[0].gram();
            for h in &rbs[1..] {
                acc.add_assign(&h.gram());
            }
            acc.scale_assign(1.0 / per as f64);
            acc
        })
        .collect())
}

/// Stacked eigen matrix: column `s` is the dominant eigenvector of subband
/// `s`'s averaged Gram matrix.
///
/// When the subband stacks fewer channel rows than `nt`, the Gram matrix is
/// rank deficient and the eigenvector is taken from the smaller `A A^H`
/// instead, where `A` stacks the subband's RB matrices: if `A A^H u = λu`
/// then `A^H A (A^H u) = λ A^H u`.
pub fn subband_eigenvectors(sample: &ChannelSample, n_subbands: usize) -> Result<EigenTarget> {
    subband_grams(sample, n_subbands)?; // shape checks
    let per = sample.n_rb() / n_subbands;
    let columns = sample
        .h
        .chunks(per)
        .map(|rbs| {
            let nt = rbs[0].cols();
            let rows: usize = rbs.iter().map(|h| h.rows()).sum();
            if rows >= nt {
                let mut acc = rbs[0].gram();
                for h in &rbs[1..] {
                    acc.add_assign(&h.gram());
                }
                acc.scale_assign(1.0 / per as f64);
                return top_eigenvector(&acc).map(|(v, _)| v);
            }
            let data: Vec<C64> = rbs.iter().flat_map(|h| h.as_slice().iter().copied()).collect();
            let a = CMatrix::from_row_major(rows, nt, data)?;
            let ah = a.conj_transpose();
            let (u, _) = top_eigenvector(&ah.gram())?;
            let v = ah.mul_vec(&u);
            let n = norm(&v);
            ensure!(n > 0.0, Degenerate, "subband channel is zero");
            canonical_phase(&v.iter().map(|x| x / n).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenTarget::multi(
        CMatrix::from_columns(&columns)?,
        sample.seed_used,
    ))
}

/// Ground truth for a scene: a single eigenvector when the scene has one
/// subband, otherwise the stacked subband eigen matrix.
pub fn extract_target(sample: &ChannelSample, n_subbands: usize) -> Result<EigenTarget> {
    if n_subbands == 1 {
        let v = if sample.n_rb() == 1 {
            dominant_right_singular_vector(&sample.h[0])?.0
        } else {
            subband_eigenvectors(sample, 1)?.vector()
        };
        EigenTarget::single(v, sample.seed_used)
    } else {
        subband_eigenvectors(sample, n_subbands)
    }
}

/// Normalized entropy of the DFT power distribution of `v`, in `[0, 1]`.
pub fn pse(v: &[C64]) -> Result<f64> {
    let n = v.len();
    ensure!(n >= 2, Domain, "power spectral entropy needs at least two entries");
    ensure!(norm(v) > 0.0, Degenerate, "power spectral entropy of a zero vector");
    let mut spectrum = v.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut spectrum);
    let power: Vec<f64> = spectrum.iter().map(|x| x.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    let entropy: f64 = power
        .iter()
        .map(|&p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    Ok((entropy / (n as f64).log2()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::linalg::inner;
    use crate::rng::Stream;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(n: usize, s: &mut Stream) -> Vec<C64> {
        (0..n).map(|_| c(s.normal(), s.normal())).collect()
    }

    fn cos_sim(a: &[C64], b: &[C64]) -> f64 {
        inner(a, b).norm() / (norm(a) * norm(b))
    }

    /// Power iteration on `A = H^H H` to tight tolerance.
    fn power_iteration(a: &CMatrix) -> Vec<C64> {
        let mut v: Vec<C64> = (0..a.cols()).map(|i| c(1.0 + i as f64 * 0.1, 0.3)).collect();
        for _ in 0..100_000 {
            let w = a.mul_vec(&v);
            let n = norm(&w);
            let w: Vec<C64> = w.iter().map(|x| x / n).collect();
            let delta = 1.0 - cos_sim(&w, &v);
            v = w;
            if delta < 1e-16 {
                break;
            }
        }
        v
    }

    #[test]
    fn diagonal_matrix() {
        let h = CMatrix::from_fn(2, 2, |r, cc| if r == cc { c(2.0 - r as f64, 0.0) } else { c(0.0, 0.0) });
        let (v, sigma) = dominant_right_singular_vector(&h).unwrap();
        assert!((sigma - 2.0).abs() < 1e-12);
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-12 && v[1].norm() < 1e-12);
    }

    #[test]
    fn rank_one_outer_product() {
        let mut s = Stream::new(2);
        let u = random_vec(3, &mut s);
        let a = random_vec(6, &mut s);
        let na = norm(&a);
        let a: Vec<C64> = a.iter().map(|x| x / na).collect();
        let h = CMatrix::from_fn(3, 6, |r, cc| u[r] * a[cc].conj());
        let (v, sigma) = dominant_right_singular_vector(&h).unwrap();
        assert!((cos_sim(&v, &a) - 1.0).abs() < 1e-12);
        assert!((sigma - norm(&u)).abs() < 1e-10);
    }

    #[test]
    fn matches_power_iteration_and_sigma() {
        let mut s = Stream::new(9);
        for _ in 0..20 {
            let h = CMatrix::from_fn(4, 8, |_, _| c(s.normal(), s.normal()));
            let (v, sigma) = dominant_right_singular_vector(&h).unwrap();
            let oracle = power_iteration(&h.gram());
            assert!(cos_sim(&v, &oracle) >= 1.0 - 1e-9);
            assert!((norm(&h.mul_vec(&v)) - sigma).abs() <= 1e-9 * sigma);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        assert!(matches!(
            dominant_right_singular_vector(&CMatrix::zeros(2, 4)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn canonical_phase_cases() {
        let v = canonical_phase(&[c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-15 && v[1].norm() == 0.0);
        let w = [c(0.0, 0.0), c(0.5, 0.0), c(0.1, -0.2)];
        assert_eq!(canonical_phase(&w).unwrap(), w.to_vec());
        assert!(canonical_phase(&[c(0.0, 0.0); 3]).is_err());

        let mut s = Stream::new(4);
        let base = random_vec(8, &mut s);
        let reference = canonical_phase(&base).unwrap();
        for _ in 0..50 {
            let phi = s.uniform_range(-PI, PI);
            let rotated: Vec<C64> = base.iter().map(|x| x * C64::from_polar(1.0, phi)).collect();
            let out = canonical_phase(&rotated).unwrap();
            for (a, b) in out.iter().zip(&reference) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    fn sample_from(h: Vec<CMatrix>) -> ChannelSample {
        ChannelSample {
            h,
            seed_used: 0,
            scene_id: "test".into(),
        }
    }

    #[test]
    fn identical_rbs_reduce_to_per_rb_svd() {
        let mut s = Stream::new(5);
        let h = CMatrix::from_fn(2, 8, |_, _| c(s.normal(), s.normal()));
        let sample = sample_from(vec![h.clone(); 8]);
        let target = subband_eigenvectors(&sample, 2).unwrap();
        let (v, _) = dominant_right_singular_vector(&h).unwrap();
        for col in target.v.columns() {
            assert!((cos_sim(&col, &v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_subbands_satisfy_the_full_gram_equation() {
        let mut s = Stream::new(9);
        let hs: Vec<CMatrix> = (0..6)
            .map(|_| CMatrix::from_fn(2, 16, |_, _| c(s.normal(), s.normal())))
            .collect();
        let target = subband_eigenvectors(&sample_from(hs.clone()), 2).unwrap();
        let grams = subband_grams(&sample_from(hs), 2).unwrap();
        for (k, g) in grams.iter().enumerate() {
            let v = target.v.column(k);
            let gv = g.mul_vec(&v);
            let lambda = inner(&v, &gv).re;
            let resid = norm(&gv.iter().zip(&v).map(|(a, b)| a - b * lambda).collect::<Vec<_>>());
            assert!(resid <= 1e-9 * lambda, "{resid} vs {lambda}");
            assert!((cos_sim(&v, &power_iteration(g)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_rb_per_subband_matches_svd() {
        let mut s = Stream::new(6);
        let hs: Vec<CMatrix> = (0..4)
            .map(|_| CMatrix::from_fn(2, 8, |_, _| c(s.normal(), s.normal())))
            .collect();
        let target = subband_eigenvectors(&sample_from(hs.clone()), 4).unwrap();
        for (k, h) in hs.iter().enumerate() {
            let (v, _) = dominant_right_singular_vector(h).unwrap();
            assert!((cos_sim(&target.v.column(k), &v) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn subband_divisibility_is_checked() {
        let sample = sample_from(vec![CMatrix::identity(2); 6]);
        assert!(matches!(subband_eigenvectors(&sample, 4), Err(Error::Config(_))));
    }

    #[test]
    fn pse_reference_values() {
        let n = 8;
        // exp(j 2π 3 k / n) puts all DFT energy into bin 3.
        let single: Vec<C64> = (0..n)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * 3.0 * k as f64 / n as f64))
            .collect();
        assert!(pse(&single).unwrap().abs() < 1e-12);
        // A delta has a flat spectrum.
        let mut delta = vec![c(0.0, 0.0); n];
        delta[2] = c(1.0, 0.0);
        assert!((pse(&delta).unwrap() - 1.0).abs() < 1e-12);
        // Equal energy in bins 1 and 5.
        let two: Vec<C64> = (0..n)
            .map(|k| {
                C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)
                    + C64::from_polar(1.0, 2.0 * PI * 5.0 * k as f64 / n as f64)
            })
            .collect();
        assert!((pse(&two).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(pse(&[c(0.0, 0.0); 4]).is_err());
    }

    #[test]
    fn pse_is_scale_invariant() {
        let mut s = Stream::new(8);
        for _ in 0..100 {
            let v = random_vec(16, &mut s);
            let k = c(s.normal(), s.normal());
            let p = pse(&v).unwrap();
            assert!((0.0..=1.0).contains(&p));
            let scaled: Vec<C64> = v.iter().map(|x| x * k).collect();
            assert!((pse(&scaled).unwrap() - p).abs() < 1e-12);
        }
    }
}
