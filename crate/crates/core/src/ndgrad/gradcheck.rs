use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many entries per parameter tensor; `None` checks all.
    pub max_entries_per_param: Option<usize>,
    /// Denominator floor for the relative error, so that two near-zero
    /// gradients compare as absolute values.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_entries_per_param: None,
            floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    /// `(param index, entry index, analytic, numeric)` at the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares analytic gradients against central finite differences of `loss`.
///
/// `loss` must be deterministic in its argument (dropout off, fixed batch).
pub fn grad_check(
    mut loss: impl FnMut(&[Tensor]) -> f64,
    params: &[Tensor],
    analytic: &[Tensor],
    opts: &GradCheckOptions,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        entries_checked: 0,
        worst: None,
    };
    for (pi, p) in params.iter().enumerate() {
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(cap) if cap < p.len() => {
                let mut idx = sample(&mut rng, p.len(), cap).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..p.len()).collect(),
        };
        for k in entries {
            let original = p.data()[k];
            work[pi].data_mut()[k] = original + opts.step;
            let plus = loss(&work);
            work[pi].data_mut()[k] = original - opts.step;
            let minus = loss(&work);
            work[pi].data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[pi].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, k, a, numeric));
            }
        }
    }
    report
}
