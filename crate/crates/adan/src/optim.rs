//! Adam optimizer and critic weight clipping.

use std::collections::BTreeMap;

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::nn::Gradients;

/// Mutable view over a named parameter set, as handed out by the model.
pub type ParamsMut<'a> = Vec<(String, &'a mut Matrix)>;

/// Per-parameter Adam moments plus the shared step counter and
/// hyperparameters. Moments are allocated lazily on first update.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
}

impl AdamState {
    /// Adam with the conventional β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Matrix> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Matrix> {
        self.v.get(name)
    }
}

/// One Adam update over every named parameter:
/// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², θ ← θ − lr·m̂/(√v̂ + ε)
/// with bias-corrected m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ).
pub fn adam_step(
    params: &mut ParamsMut<'_>,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(AdanError::Contract(format!(
            "gradient keys ({}) do not match parameter keys ({})",
            grads.len(),
            params.len()
        )));
    }
    for (name, _) in params.iter() {
        if grads.get(name).is_none() {
            return Err(AdanError::Contract(format!(
                "missing gradient for parameter {name}"
            )));
        }
    }

    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);

    for (name, param) in params.iter_mut() {
        let grad = grads.get(name).expect("checked above");
        if grad.shape() != param.shape() {
            return Err(AdanError::Shape {
                op: "adam_step",
                lhs: param.shape(),
                rhs: grad.shape(),
            });
        }
        if !grad.all_finite() {
            return Err(AdanError::Numeric {
                what: format!("gradient for {name}"),
            });
        }

        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Matrix::zeros(param.rows(), param.cols()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Matrix::zeros(param.rows(), param.cols()));

        let theta = param.values_mut();
        for i in 0..theta.len() {
            let g = grad.values()[i];
            let mi = state.beta1 * m.values()[i] + (1.0 - state.beta1) * g;
            let vi = state.beta2 * v.values()[i] + (1.0 - state.beta2) * g * g;
            m.values_mut()[i] = mi;
            v.values_mut()[i] = vi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            theta[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

/// Clamps every entry of every parameter to `[-bound, bound]`.
pub fn clip_params(params: &mut ParamsMut<'_>, bound: f64) {
    debug_assert!(bound > 0.0);
    for (_, param) in params.iter_mut() {
        for v in param.values_mut() {
            *v = v.clamp(-bound, bound);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: Vec<f64>) -> Matrix {
        Matrix::row_vec(value)
    }

    fn grads_for(name: &str, values: Vec<f64>) -> Gradients {
        let mut g = Gradients::new();
        g.accumulate(name, Matrix::row_vec(values)).unwrap();
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut theta = single_param(vec![1.0, -2.0]);
        let mut state = AdamState::new(0.1);
        let grads = grads_for("w", vec![0.0, 0.0]);
        {
            let mut params: ParamsMut = vec![("w".to_string(), &mut theta)];
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert_eq!(theta.values(), &[1.0, -2.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // θ = 1, g = 2, lr = 0.1: m̂ = 2, v̂ = 4, θ' = 1 − 0.1·2/(2+1e-8)
        let mut theta = single_param(vec![1.0]);
        let mut state = AdamState::new(0.1);
        let grads = grads_for("w", vec![2.0]);
        let mut params: ParamsMut = vec![("w".to_string(), &mut theta)];
        adam_step(&mut params, &grads, &mut state).unwrap();
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((theta.values()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_scripted_recurrence_for_two_steps() {
        // Independent re-implementation of the update recurrence.
        let mut theta = 0.5f64;
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.01);
        let g = -3.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2u32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let mut param = single_param(vec![0.5]);
        let mut state = AdamState::new(0.01);
        let grads = grads_for("w", vec![g]);
        for _ in 0..2 {
            let mut params: ParamsMut = vec![("w".to_string(), &mut param)];
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert!((param.values()[0] - theta).abs() < 1e-12);
    }

    #[test]
    fn step_one_moves_against_gradient_sign() {
        for &g in &[4.0, -0.25, 1e-3] {
            let mut param = single_param(vec![0.0]);
            let mut state = AdamState::new(0.05);
            let grads = grads_for("w", vec![g]);
            let mut params: ParamsMut = vec![("w".to_string(), &mut param)];
            adam_step(&mut params, &grads, &mut state).unwrap();
            assert!(param.values()[0] * g < 0.0, "g={g}");
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut param = single_param(vec![0.0]);
        let mut state = AdamState::new(0.05);
        let grads = grads_for("p.2.w", vec![f64::NAN]);
        let mut params: ParamsMut = vec![("p.2.w".to_string(), &mut param)];
        let msg = adam_step(&mut params, &grads, &mut state)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("p.2.w"), "{msg}");
    }

    #[test]
    fn mismatched_keys_rejected() {
        let mut param = single_param(vec![0.0]);
        let mut state = AdamState::new(0.05);
        let grads = grads_for("other", vec![1.0]);
        let mut params: ParamsMut = vec![("w".to_string(), &mut param)];
        assert!(adam_step(&mut params, &grads, &mut state).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut param = single_param(vec![1.0, 2.0, 3.0]);
            let mut state = AdamState::new(0.02);
            for i in 0..10 {
                let grads = grads_for("w", vec![i as f64, -1.0, 0.5]);
                let mut params: ParamsMut = vec![("w".to_string(), &mut param)];
                adam_step(&mut params, &grads, &mut state).unwrap();
            }
            param.values().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clip_saturates_and_preserves_interior() {
        let mut param = single_param(vec![-5.0, 0.0, 0.005, 0.5]);
        let mut params: ParamsMut = vec![("w".to_string(), &mut param)];
        clip_params(&mut params, 0.01);
        assert_eq!(param.values(), &[-0.01, 0.0, 0.005, 0.01]);
        // already inside: unchanged
        let mut small = single_param(vec![0.009, -0.002]);
        let mut params: ParamsMut = vec![("w".to_string(), &mut small)];
        clip_params(&mut params, 0.01);
        assert_eq!(small.values(), &[0.009, -0.002]);
    }

    #[test]
    fn clip_bound_holds_exactly() {
        use rand::rngs::StdRng;
        use rand::SeedableRng;
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let mut p = Matrix::uniform(3, 4, 2.0, &mut rng);
            let mut params: ParamsMut = vec![("q".to_string(), &mut p)];
            clip_params(&mut params, 0.01);
            assert!(p.max_abs() <= 0.01);
        }
    }
}
