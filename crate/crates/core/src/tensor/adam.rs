use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments for a fixed, ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// Bias-corrected Adam step: `p -= lr * m̂ / (sqrt(v̂) + eps)`.
pub fn adam_update(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        super::check_same(p, g)?;
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::ShapeMismatch("optimizer state does not match parameters".into()));
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let mh = *mi / bc1;
            let vh = *vi / bc2;
            *x -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        for g in [1e-3, 0.5, -2.0, 40.0] {
            let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap();
            let gt = Tensor::from_vec(&[1], vec![g]).unwrap();
            let mut st = AdamState::new(AdamConfig::default());
            adam_update(&mut [&mut p], &[&gt], &mut st).unwrap();
            let delta = (p.data()[0] - 1.0).abs();
            let want = 3e-4 * g.abs() / (g.abs() + 1e-8);
            assert!((delta - want).abs() < 1e-15);
            assert!((delta - 3e-4).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::new(AdamConfig::default());
        adam_update(&mut [&mut p], &[&g], &mut st).unwrap();
        assert_eq!(p.data(), &[1.0, -1.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let g = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let run = || {
            let mut p = Tensor::from_vec(&[3], vec![0.0; 3]).unwrap();
            let mut st = AdamState::new(AdamConfig::default());
            for _ in 0..3 {
                adam_update(&mut [&mut p], &[&g], &mut st).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut p = Tensor::zeros(&[2]);
        let mut st = AdamState::new(AdamConfig::default());
        assert!(adam_update(&mut [&mut p], &[&g], &mut st).is_err());
    }
}
