//! Tape-free versions of the layer primitives.

use rand::Rng;

use super::{Activation, Mode, NdError, Tensor};

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Stable per-entry cross-entropy `max(y,0) − y·l + ln(1 + e^{−|y|})`.
#[inline]
pub(crate) fn bce_term(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Summed sigmoid cross-entropy over `k` logits.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<f64, NdError> {
    if logits.len() != labels.len() {
        return Err(NdError::ShapeMismatch {
            op: "bce_with_logits",
            left: vec![logits.len()],
            right: vec![labels.len()],
        });
    }
    Ok(logits.iter().zip(labels).map(|(&y, &l)| bce_term(y, l)).sum())
}

/// Slides a single `n×h` filter down an `l×h` matrix.
///
/// Output entry `i` is `act(⟨W, D[i..i+n]⟩ + b)`.
pub fn conv_window(d: &Tensor, w: &Tensor, b: f64, act: Activation) -> Result<Tensor, NdError> {
    if d.ndim() != 2 || w.ndim() != 2 || d.cols() != w.cols() {
        return Err(NdError::ShapeMismatch {
            op: "conv_window",
            left: d.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    let (l, n, h) = (d.rows(), w.rows(), d.cols());
    if n > l {
        return Err(NdError::WindowTooLarge { window: n, rows: l });
    }
    let out = (0..=l - n)
        .map(|i| {
            let window = &d.data()[i * h..(i + n) * h];
            act.apply(super::tensor::dot(window, w.data()) + b)
        })
        .collect();
    Ok(Tensor::vector(out))
}

/// Largest value and its position; ties go to the lowest index.
pub fn max_pool(c: &[f64]) -> Result<(f64, usize), NdError> {
    let mut iter = c.iter().enumerate();
    let (_, &first) = iter.next().ok_or(NdError::EmptyInput("max_pool"))?;
    let (mut best, mut arg) = (first, 0);
    for (i, &v) in iter {
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok((best, arg))
}

/// Inverted dropout: kept entries are scaled by `1/keep_rate`.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    keep_rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor, NdError> {
    let mask = dropout_mask(x.len(), keep_rate, mode, rng)?;
    Ok(match mask {
        None => x.clone(),
        Some(mask) => {
            let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            Tensor::from_vec(x.shape(), data)?
        }
    })
}

pub(crate) fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    keep_rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Option<Vec<f64>>, NdError> {
    if !(keep_rate > 0.0 && keep_rate <= 1.0) {
        return Err(NdError::InvalidRate(keep_rate));
    }
    if mode == Mode::Infer || keep_rate == 1.0 {
        return Ok(None);
    }
    let scale = 1.0 / keep_rate;
    Ok(Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < keep_rate { scale } else { 0.0 })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0).is_finite());
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relu_clamps() {
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Relu.apply(3.0), 3.0);
    }

    #[test]
    fn tanh_derivative_matches_central_difference() {
        let (x, h) = (0.7, 1e-5);
        let y = Activation::Tanh.apply(x);
        let numeric = (Activation::Tanh.apply(x + h) - Activation::Tanh.apply(x - h)) / (2.0 * h);
        assert!((Activation::Tanh.derivative(x, y) - numeric).abs() < 1e-6);
    }

    #[test]
    fn bce_at_zero_logits_is_k_ln2() {
        let loss = bce_with_logits(&[0.0; 8], &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        approx::assert_relative_eq!(loss, 8.0 * std::f64::consts::LN_2, max_relative = 1e-15);
    }

    #[test]
    fn bce_saturates() {
        assert!(bce_with_logits(&[50.0], &[1.0]).unwrap() < 1e-20);
        let big = bce_with_logits(&[-1000.0], &[1.0]).unwrap();
        assert!((big - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn conv_window_zero_filter() {
        let d = Tensor::filled(&[5, 3], 0.3);
        let w = Tensor::zeros(&[2, 3]);
        let out = conv_window(&d, &w, 0.0, Activation::Identity).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn conv_window_single_window() {
        let d = Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let w = Tensor::matrix(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let out = conv_window(&d, &w, 0.1, Activation::Identity).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.data()[0] - (0.5 - 2.0 + 6.0 + 1.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn conv_window_rejects_oversized_filter() {
        let d = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[3, 3]);
        assert_eq!(
            conv_window(&d, &w, 0.0, Activation::Relu),
            Err(NdError::WindowTooLarge { window: 3, rows: 2 })
        );
    }

    #[test]
    fn conv_window_matches_sliding_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, n, h) = (7, 3, 4);
        let d = Tensor::uniform(&[l, h], -1.0, 1.0, &mut rng);
        let w = Tensor::uniform(&[n, h], -1.0, 1.0, &mut rng);
        let out = conv_window(&d, &w, 0.2, Activation::Tanh).unwrap();
        assert_eq!(out.len(), l - n + 1);
        for i in 0..=l - n {
            let mut s = 0.2;
            for r in 0..n {
                for c in 0..h {
                    s += w.get2(r, c) * d.get2(i + r, c);
                }
            }
            assert!((out.data()[i] - s.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pool_ties_and_empty() {
        assert_eq!(max_pool(&[1.0, 5.0, 3.0]).unwrap(), (5.0, 1));
        assert_eq!(max_pool(&[2.0, 2.0]).unwrap(), (2.0, 0));
        assert!(max_pool(&[]).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::filled(&[10], 2.0);
        assert_eq!(dropout(&x, 1.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.3, Mode::Infer, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng), Err(NdError::InvalidRate(0.0)));
        assert!(dropout(&x, 1.5, Mode::Infer, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::filled(&[100_000], 1.0);
        let out = dropout(&x, 0.3, Mode::Train, &mut rng).unwrap();
        let mean = out.sum() / out.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }
}
