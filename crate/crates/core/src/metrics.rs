//! Cosine-similarity figures of merit and the matching losses.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::linalg::{inner, norm, CMatrix, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_subband: Option<Vec<f64>>,
    pub n_samples: usize,
}

impl SimilarityReport {
    /// Sample-weighted mean of several reports; per-subband curves are
    /// averaged when every input carries one of the same length.
    pub fn aggregate(reports: &[SimilarityReport]) -> Result<Self> {
        ensure!(!reports.is_empty(), Contract, "nothing to aggregate");
        let n: usize = reports.iter().map(|r| r.n_samples).sum();
        ensure!(n > 0, Contract, "reports cover no samples");
        let rho = reports.iter().map(|r| r.rho * r.n_samples as f64).sum::<f64>() / n as f64;
        let per_subband = match reports[0].per_subband.as_ref().map(Vec::len) {
            Some(len)
                if reports
                    .iter()
                    .all(|r| r.per_subband.as_ref().map(Vec::len) == Some(len)) =>
            {
                let mut acc = vec![0.0; len];
                for r in reports {
                    for (a, x) in acc.iter_mut().zip(r.per_subband.as_ref().unwrap()) {
                        *a += x * r.n_samples as f64;
                    }
                }
                Some(acc.into_iter().map(|a| a / n as f64).collect())
            }
            _ => None,
        };
        Ok(Self {
            rho,
            per_subband,
            n_samples: n,
        })
    }
}

/// `|v_hat^H v| / (‖v_hat‖ ‖v‖)`.
pub fn cosine_similarity(v: &[C64], v_hat: &[C64]) -> Result<f64> {
    ensure!(
        v.len() == v_hat.len(),
        Contract,
        "length mismatch: {} vs {}",
        v.len(),
        v_hat.len()
    );
    let (a, b) = (norm(v), norm(v_hat));
    ensure!(a > 0.0 && b > 0.0, Degenerate, "cosine similarity of a zero vector");
    Ok((inner(v_hat, v).norm() / (a * b)).min(1.0))
}

/// Mean of the column-wise cosine similarities of two eigen matrices.
pub fn stacked_cosine_similarity(v_stack: &CMatrix, v_stack_hat: &CMatrix) -> Result<SimilarityReport> {
    ensure!(
        v_stack.rows() == v_stack_hat.rows() && v_stack.cols() == v_stack_hat.cols(),
        Contract,
        "shape mismatch: {}x{} vs {}x{}",
        v_stack.rows(),
        v_stack.cols(),
        v_stack_hat.rows(),
        v_stack_hat.cols()
    );
    let per = (0..v_stack.cols())
        .map(|c| cosine_similarity(&v_stack.column(c), &v_stack_hat.column(c)))
        .collect::<Result<Vec<_>>>()?;
    let rho = per.iter().sum::<f64>() / per.len() as f64;
    Ok(SimilarityReport {
        rho,
        per_subband: Some(per),
        n_samples: 1,
    })
}

/// Negative mean cosine similarity over a batch of vector pairs `(v, v_hat)`.
pub fn loss_single(batch: &[(Vec<C64>, Vec<C64>)]) -> Result<f64> {
    ensure!(!batch.is_empty(), Contract, "empty batch");
    let mut total = 0.0;
    for (v, v_hat) in batch {
        total += cosine_similarity(v, v_hat)?;
    }
    Ok(-total / batch.len() as f64)
}

/// Negative mean over the batch and subbands of the column similarities.
pub fn loss_multi(batch: &[(CMatrix, CMatrix)]) -> Result<f64> {
    ensure!(!batch.is_empty(), Contract, "empty batch");
    let mut total = 0.0;
    for (v, v_hat) in batch {
        total += stacked_cosine_similarity(v, v_hat)?.rho;
    }
    Ok(-total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_1_SQRT_2;

    use super::*;
    use crate::rng::Stream;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(n: usize, s: &mut Stream) -> Vec<C64> {
        (0..n).map(|_| c(s.normal(), s.normal())).collect()
    }

    #[test]
    fn basic_values() {
        let mut s = Stream::new(1);
        let v = random_vec(8, &mut s);
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let rot: Vec<C64> = v.iter().map(|x| x * C64::from_polar(1.0, 0.7)).collect();
        assert!((cosine_similarity(&v, &rot).unwrap() - 1.0).abs() < 1e-12);
        let r = cosine_similarity(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        assert!((r - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_similarity(&v, &[c(0.0, 0.0); 8]).is_err());
        assert!(cosine_similarity(&v, &v[..4]).is_err());
    }

    #[test]
    fn symmetric_and_scale_invariant() {
        let mut s = Stream::new(2);
        for _ in 0..100 {
            let a = random_vec(6, &mut s);
            let b = random_vec(6, &mut s);
            let r = cosine_similarity(&a, &b).unwrap();
            assert!((0.0..=1.0).contains(&r));
            assert!((r - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let k = c(s.normal(), s.normal());
            let bk: Vec<C64> = b.iter().map(|x| x * k).collect();
            assert!((r - cosine_similarity(&a, &bk).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn stacked_cases() {
        let mut s = Stream::new(3);
        let m = CMatrix::from_fn(4, 3, |_, _| c(s.normal(), s.normal()));
        assert!((stacked_cosine_similarity(&m, &m).unwrap().rho - 1.0).abs() < 1e-12);

        let a = CMatrix::from_columns(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.3, 0.1), c(0.2, 0.0)]]).unwrap();
        let b = CMatrix::from_columns(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.3, 0.1), c(0.2, 0.0)]]).unwrap();
        let rep = stacked_cosine_similarity(&a, &b).unwrap();
        assert!((rep.rho - 0.5).abs() < 1e-12);

        let h = CMatrix::from_fn(4, 3, |_, _| c(s.normal(), s.normal()));
        let rep = stacked_cosine_similarity(&m, &h).unwrap();
        let mut oracle = 0.0;
        for col in 0..3 {
            let (x, y) = (m.column(col), h.column(col));
            let dot: C64 = y.iter().zip(&x).map(|(p, q)| p.conj() * q).sum();
            oracle += dot.norm() / (norm(&x) * norm(&y));
        }
        assert!((rep.rho - oracle / 3.0).abs() < 1e-12);
        assert!(stacked_cosine_similarity(&m, &CMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn losses_track_the_metric() {
        let mut s = Stream::new(4);
        let v = random_vec(4, &mut s);
        assert!((loss_single(&[(v.clone(), v.clone())]).unwrap() + 1.0).abs() < 1e-12);
        let ortho = loss_single(&[(vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)])]).unwrap();
        assert!(ortho.abs() < 1e-12);
        assert!(loss_single(&[]).is_err());
        assert!(loss_multi(&[]).is_err());

        let batch: Vec<(Vec<C64>, Vec<C64>)> = (0..10).map(|_| (random_vec(4, &mut s), random_vec(4, &mut s))).collect();
        let mean: f64 = batch.iter().map(|(a, b)| cosine_similarity(a, b).unwrap()).sum::<f64>() / 10.0;
        assert!((loss_single(&batch).unwrap() + mean).abs() < 1e-12);

        let mats: Vec<(CMatrix, CMatrix)> = (0..5)
            .map(|_| {
                (
                    CMatrix::from_fn(4, 3, |_, _| c(s.normal(), s.normal())),
                    CMatrix::from_fn(4, 3, |_, _| c(s.normal(), s.normal())),
                )
            })
            .collect();
        let reports: Vec<_> = mats.iter().map(|(a, b)| stacked_cosine_similarity(a, b).unwrap()).collect();
        let agg = SimilarityReport::aggregate(&reports).unwrap();
        assert!((loss_multi(&mats).unwrap() + agg.rho).abs() < 1e-12);
        assert_eq!(agg.n_samples, 5);
        assert_eq!(agg.per_subband.unwrap().len(), 3);
    }
}
