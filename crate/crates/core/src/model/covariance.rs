use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};
use crate::ndgrad::Tensor;

/// Where the latent-factor covariance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovSource {
    /// Sample covariance of the dense activations over the given notes.
    #[default]
    Empirical,
    /// Unit covariance, so that `A = ΛΛᵀ`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    /// Logit covariance `Λ·cov[x]·Λᵀ`.
    pub a: Vec<Vec<f64>>,
    /// `A_ij / sqrt(A_ii·A_jj)`; `None` when a variance is below 1e-12.
    pub corr: Vec<Vec<Option<f64>>>,
    /// Classes whose variance is too small for a correlation.
    pub degenerate: Vec<usize>,
    pub source: CovSource,
}

const MIN_VARIANCE: f64 = 1e-12;

/// Unbiased sample covariance of row vectors.
pub fn empirical_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// `A = Λ·C·Λᵀ` and the matching correlation matrix.
pub fn covariance_from_factors(loading: &Tensor, cov_x: &[Vec<f64>], source: CovSource) -> CovarianceReport {
    let (k, s) = (loading.rows(), loading.cols());
    // lc = Λ·C
    let mut lc = vec![vec![0.0; s]; k];
    for i in 0..k {
        for t in 0..s {
            let l = loading.get2(i, t);
            if l != 0.0 {
                for u in 0..s {
                    lc[i][u] += l * cov_x[t][u];
                }
            }
        }
    }
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let v: f64 = (0..s).map(|u| lc[i][u] * loading.get2(j, u)).sum();
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let degenerate: Vec<usize> = (0..k).filter(|&i| a[i][i] < MIN_VARIANCE).collect();
    let corr = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if degenerate.contains(&i) || degenerate.contains(&j) {
                        None
                    } else if i == j {
                        Some(1.0)
                    } else {
                        Some(a[i][j] / (a[i][i].sqrt() * a[j][j].sqrt()))
                    }
                })
                .collect()
        })
        .collect();
    CovarianceReport {
        a,
        corr,
        degenerate,
        source,
    }
}

/// Learned medication covariance over `examples` (inference mode).
pub fn medication_covariance(
    params: &ModelParams,
    examples: &[&[usize]],
    source: CovSource,
) -> Result<CovarianceReport, ModelError> {
    let s = params.arch.dense_units;
    let cov_x = match source {
        CovSource::Identity => (0..s).map(|i| (0..s).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
        CovSource::Empirical => {
            if examples.len() < 2 {
                return Err(ModelError::TooFewExamples {
                    need: 2,
                    got: examples.len(),
                });
            }
            let factors: Vec<Vec<f64>> = params.infer_all(examples, 256)?.into_iter().map(|t| t.factors).collect();
            empirical_covariance(&factors)
        }
    };
    Ok(covariance_from_factors(&params.loading, &cov_x, source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
    }

    #[test]
    fn identity_loading_and_white_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows: Vec<Vec<f64>> = (0..20_000)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let cov = empirical_covariance(&rows);
        let r = covariance_from_factors(&Tensor::identity(4), &cov, CovSource::Empirical);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((r.corr[i][j].unwrap() - want).abs() < 0.03);
            }
        }
    }

    #[test]
    fn duplicated_row_is_fully_correlated() {
        let l = Tensor::matrix(&[vec![0.3, -1.0, 2.0], vec![0.3, -1.0, 2.0], vec![1.0, 0.0, 0.0]]);
        let r = covariance_from_factors(&l, &identity(3), CovSource::Identity);
        assert!((r.corr[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.corr[2][2], Some(1.0));
    }

    #[test]
    fn zero_row_is_degenerate() {
        let l = Tensor::matrix(&[vec![0.0, 0.0], vec![1.0, 0.5]]);
        let r = covariance_from_factors(&l, &identity(2), CovSource::Identity);
        assert_eq!(r.degenerate, vec![0]);
        assert_eq!(r.corr[0][1], None);
        assert_eq!(r.corr[1][1], Some(1.0));
    }

    #[test]
    fn sample_covariance_by_hand() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 10.0]];
        let c = empirical_covariance(&rows);
        assert_eq!(c, vec![vec![4.0, 8.0], vec![8.0, 16.0]]);
    }

    proptest! {
        #[test]
        fn symmetric_psd_and_bounded(
            l in proptest::collection::vec(-2.0f64..2.0, 12),
            x in proptest::collection::vec(-3.0f64..3.0, 30),
        ) {
            let loading = Tensor::from_vec(&[4, 3], l).unwrap();
            let rows: Vec<Vec<f64>> = x.chunks(3).map(<[f64]>::to_vec).collect();
            let r = covariance_from_factors(&loading, &empirical_covariance(&rows), CovSource::Empirical);
            let m = DMatrix::from_fn(4, 4, |i, j| r.a[i][j]);
            prop_assert!((&m - m.transpose()).amax() <= 1e-10);
            let scale = m.amax().max(1.0);
            let eig = m.symmetric_eigen().eigenvalues;
            prop_assert!(eig.iter().all(|&e| e >= -1e-8 * scale));
            for i in 0..4 {
                for j in 0..4 {
                    if let Some(c) = r.corr[i][j] {
                        prop_assert!(c.abs() <= 1.0 + 1e-9);
                    }
                }
                if r.corr[i][i].is_some() {
                    prop_assert_eq!(r.corr[i][i], Some(1.0));
                }
            }
        }
    }
}
