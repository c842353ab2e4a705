use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Moment estimates for one group of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    /// Fresh state shaped like `params`, with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(params: &[Matrix]) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Matrix], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::shape(format!(
                "adam: tensor {i} has shape {:?}, gradient {:?}, moments {:?}",
                p.shape(),
                g.shape(),
                state.first[i].shape()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (((pv, &gv), mv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Matrix::from_vec(1, 3, vec![1.0, -2.0, 3.0]).unwrap()];
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Matrix::zeros(1, 3)], &mut state, 1e-3).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_by_hand() {
        let mut params = vec![Matrix::scalar(1.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Matrix::scalar(1.0)], &mut state, 1e-4).unwrap();
        // m̂ = 1, v̂ = 1
        let expected = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8));
        assert_eq!(params[0].item(), expected);
        assert!((params[0].item() - 0.9999).abs() < 1e-10);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut params = vec![Matrix::scalar(0.0)];
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            let g = Matrix::scalar(2.0 * (params[0].item() - 3.0));
            adam_step(&mut params, &[g], &mut state, 0.1).unwrap();
        }
        assert!((params[0].item() - 3.0).abs() < 0.1, "p = {}", params[0].item());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = vec![Matrix::zeros(2, 2)];
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[Matrix::zeros(2, 3)], &mut state, 0.1);
        assert!(matches!(err, Err(Error::ShapeMismatch(_))));
        assert_eq!(state.step_count(), 0);
    }
}
