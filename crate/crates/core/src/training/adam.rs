use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// One bias-corrected ADAM update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    check_dim("ADAM parameters", state.m.len(), params.len())?;
    check_dim("ADAM gradients", state.m.len(), grads.len())?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "ADAM gradient".into(),
        });
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook scalar ADAM, written independently of the vector version.
    fn reference(mut x: f64, grads: impl Fn(f64) -> f64, steps: usize, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=steps {
            let g = grads(x);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut s, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn matches_scalar_reference_on_a_quadratic() {
        let grad = |x: f64| 3.0 * (x - 2.0);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(1, cfg);
        let mut p = vec![-1.0];
        for _ in 0..25 {
            let g = grad(p[0]);
            adam_step(&mut s, &mut p, &[g]).unwrap();
        }
        assert_eq!(p[0], reference(-1.0, grad, 25, 0.05));
    }

    #[test]
    fn first_step_moves_by_the_learning_rate_against_the_gradient() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        adam_step(&mut s, &mut p, &[4.0, -0.01]).unwrap();
        // Bias correction makes the first step γ·g/(|g| + ε).
        let expected = |g: f64| -5e-4 * g / (g.abs() + 1e-8);
        assert!((p[0] - expected(4.0)).abs() < 1e-15);
        assert!((p[1] - expected(-0.01)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_with_constant_gradient_reduce_a_quadratic() {
        let f = |x: f64| 0.5 * x * x;
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = vec![1.0];
        adam_step(&mut s, &mut p, &[1.0]).unwrap();
        adam_step(&mut s, &mut p, &[1.0]).unwrap();
        assert!(f(p[0]) < f(1.0));
    }

    #[test]
    fn shape_mismatch_and_non_finite_gradients_are_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(adam_step(&mut s, &mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(adam_step(&mut s, &mut [0.0; 2], &[f64::NAN, 0.0]).is_err());
    }
}
