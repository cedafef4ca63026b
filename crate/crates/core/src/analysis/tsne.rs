//! Exact t-SNE with the usual optimization recipe: perplexity-calibrated
//! Gaussian input affinities, Student-t output affinities, momentum gradient
//! descent with per-coordinate gains and early exaggeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    /// Iterations run with exaggerated input affinities.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which the momentum switches to its final value.
    pub momentum_switch: usize,
    pub min_gain: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            min_gain: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneEmbedding {
    pub coords: Vec<[f64; 2]>,
    /// KL divergence of the random starting layout.
    pub kl_start: f64,
    /// KL divergence once exaggeration ends (equal to `kl_final` when it never does).
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
    pub perplexity: f64,
    pub seed: u64,
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Row `i` of `exp(-β·d)` over `j ≠ i`, normalized; returns the row and its
/// Shannon entropy in nats.
fn gaussian_row(d: &[f64], i: usize, beta: f64) -> (Vec<f64>, f64) {
    // shift by the smallest distance so the largest weight is exp(0)
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == i { 0.0 } else { (-beta * (v - dmin)).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    let h = -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
    (p, h)
}

/// Conditional input affinities `p(j|i)`, each row calibrated by bisection on
/// the Gaussian precision so that its perplexity matches `perplexity`.
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let d = squared_distances(x);
    let target = perplexity.ln();
    (0..x.len())
        .map(|i| {
            let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
            let (mut row, mut h) = gaussian_row(&d[i], i, beta);
            for _ in 0..200 {
                if (h - target).abs() < 1e-10 {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                (row, h) = gaussian_row(&d[i], i, beta);
            }
            row
        })
        .collect()
}

/// Symmetrized joint input affinities `(p(j|i) + p(i|j)) / 2n`.
pub fn joint_affinities(x: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let c = conditional_affinities(x, perplexity);
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| (c[i][j] + c[j][i]) / (2.0 * n as f64)).collect())
        .collect()
}

/// Student-t output affinities `q_ij` and their unnormalized kernel values.
pub fn output_affinities(y: &[[f64; 2]]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = y.len();
    let mut num = vec![vec![0.0; n]; n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i][j] = v;
            num[j][i] = v;
            sum += 2.0 * v;
        }
    }
    let q = num.iter().map(|r| r.iter().map(|&v| v / sum).collect()).collect();
    (q, num)
}

/// `KL(P ‖ Q)` over off-diagonal pairs with positive `p`.
pub fn kl_divergence(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut kl = 0.0;
    for (i, (pr, qr)) in p.iter().zip(q).enumerate() {
        for (j, (&pv, &qv)) in pr.iter().zip(qr).enumerate() {
            if i != j && pv > 0.0 {
                kl += pv * (pv / qv.max(f64::MIN_POSITIVE)).ln();
            }
        }
    }
    kl.max(0.0)
}

/// Projects the rows of `x` to two dimensions.
pub fn tsne(x: &[Vec<f64>], config: &TsneConfig) -> Result<TsneEmbedding, AnalysisError> {
    let n = x.len();
    if n < MIN_POINTS {
        return Err(AnalysisError::TooFewPoints {
            need: MIN_POINTS,
            got: n,
        });
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(AnalysisError::DimMismatch {
            what: "t-SNE input row",
            expected: dim,
            got: bad.len(),
        });
    }
    let perp = config.perplexity;
    if !(perp > 0.0 && perp < n as f64 / 3.0) {
        return Err(AnalysisError::BadPerplexity {
            perplexity: perp,
            points: n,
        });
    }

    let p = joint_affinities(x, perp);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    let kl_start = kl_divergence(&p, &output_affinities(&y).0);
    let mut kl_after = None;
    for it in 0..config.iterations {
        if it == config.exaggeration_iters {
            kl_after = Some(kl_divergence(&p, &output_affinities(&y).0));
        }
        let exag = if it < config.exaggeration_iters { config.exaggeration } else { 1.0 };
        let momentum = if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let (q, num) = output_affinities(&y);
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let m = 4.0 * (exag * p[i][j] - q[i][j]) * num[i][j];
                grad[0] += m * (y[i][0] - y[j][0]);
                grad[1] += m * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                let g = &mut gains[i][c];
                *g = if (grad[c] > 0.0) != (update[i][c] > 0.0) { *g + 0.2 } else { *g * 0.8 };
                *g = (*g).max(config.min_gain);
                update[i][c] = momentum * update[i][c] - config.learning_rate * *g * grad[c];
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let mean = y.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        for yi in &mut y {
            yi[0] -= mean[0] / n as f64;
            yi[1] -= mean[1] / n as f64;
        }
    }
    let kl_final = kl_divergence(&p, &output_affinities(&y).0);
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    Ok(TsneEmbedding {
        coords: y,
        kl_start,
        kl_after_exaggeration: kl_after.unwrap_or(kl_final),
        kl_final,
        perplexity: perp,
        seed: config.seed,
    })
}
