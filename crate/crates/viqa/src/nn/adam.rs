use super::{NetGrads, Network, NnError, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates, one slot per network parameter in
/// flat layer order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            first_moment: Tensor::zeros(&[param_count]),
            second_moment: Tensor::zeros(&[param_count]),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(
    net: &mut Network,
    grads: &NetGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NnError> {
    let flat = grads.to_flat();
    if flat.len() != net.param_count() || flat.len() != state.first_moment.len() {
        return Err(NnError::ShapeMismatch(format!(
            "adam: {} grads, {} params, {} moments",
            flat.len(),
            net.param_count(),
            state.first_moment.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let m_correction = 1.0 - ADAM_BETA1.powi(t);
    let v_correction = 1.0 - ADAM_BETA2.powi(t);
    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    let mut i = 0usize;
    net.for_each_param_mut(|p| {
        let g = flat[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / m_correction;
        let v_hat = v[i] / v_correction;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        i += 1;
    });
    Ok(())
}
