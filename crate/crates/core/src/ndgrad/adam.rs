use super::{NdError, Tensor};

/// First/second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'t>(params: impl IntoIterator<Item = &'t Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

/// One bias-corrected Adam update.
///
/// Parameters with `decay_mask[i] == true` get `weight_decay · param` added to
/// their gradient first, which is the gradient of an `weight_decay/2 · ‖w‖²`
/// penalty.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
    decay_mask: &[bool],
) -> Result<(), NdError> {
    if params.len() != grads.len() || params.len() != state.m.len() || decay_mask.len() != params.len() {
        return Err(NdError::ShapeMismatch {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len(), state.m.len(), decay_mask.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(NdError::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let decay = if decay_mask[i] { weight_decay } else { 0.0 };
        let pd = p.data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, &gk) in grads[i].data().iter().enumerate() {
            let g = gk + decay * pd[k];
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            pd[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
