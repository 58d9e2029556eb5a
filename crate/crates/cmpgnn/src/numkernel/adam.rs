//! Adam parameter updates with bias correction.

use crate::error::{Error, Result};
use crate::numkernel::dense::DenseMatrix;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<DenseMatrix>,
    second_moment: Vec<DenseMatrix>,
}

impl AdamState {
    /// Zeroed moment accumulators shaped like `params`, with the standard
    /// defaults beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(learning_rate: f64, params: &[&DenseMatrix]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
            second_moment: params
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a named parameter list. `params`, `grads`, and
/// `names` are parallel, and must match the shapes the state was built with.
/// Deterministic: identical inputs give bitwise identical outputs.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut DenseMatrix],
    grads: &[DenseMatrix],
    names: &[&str],
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != names.len()
        || params.len() != state.first_moment.len()
    {
        return Err(Error::Dimension(format!(
            "adam_step: {} params, {} grads, {} names, {} accumulators",
            params.len(),
            grads.len(),
            names.len(),
            state.first_moment.len()
        )));
    }
    for ((param, grad), name) in params.iter().zip(grads).zip(names) {
        if param.shape() != grad.shape() {
            return Err(Error::Dimension(format!(
                "adam_step: {} is {:?} but gradient is {:?}",
                name,
                param.shape(),
                grad.shape()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter {}",
                name
            )));
        }
    }

    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for (idx, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        for ((p, &g), (m, v)) in param
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(m.values_mut().iter_mut().zip(v.values_mut()))
        {
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = scalar(1.5);
        let mut state = AdamState::new(0.01, &[&p]);
        adam_step(&mut state, &mut [&mut p], &[scalar(0.0)], &["p"]).unwrap();
        assert_eq!(p.get(0, 0), 1.5);
    }

    #[test]
    fn first_step_matches_scalar_recurrence_oracle() {
        // Hand recurrence: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1,
        // delta = -lr / (1 + eps) ~ -0.01.
        let mut p = scalar(0.0);
        let mut state = AdamState::new(0.01, &[&p]);
        adam_step(&mut state, &mut [&mut p], &[scalar(1.0)], &["p"]).unwrap();
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p.get(0, 0) - expected).abs() < 1e-15);
        assert!((p.get(0, 0) + 0.01).abs() < 1e-9);
    }

    #[test]
    fn multi_step_matches_scalar_recurrence_oracle() {
        let grads = [0.3, -1.2, 0.7, 0.0, 2.5];
        let mut p = scalar(0.4);
        let mut state = AdamState::new(0.05, &[&p]);

        // Independent scalar replay of the recurrence.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.4f64);
        for (t, &g) in grads.iter().enumerate() {
            adam_step(&mut state, &mut [&mut p], &[scalar(g)], &["p"]).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= 0.05 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p.get(0, 0) - x).abs() < 1e-12, "step {}", t);
        }
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut p =
                DenseMatrix::from_vec(2, 2, vec![0.1, -0.2, 0.3, -0.4]).unwrap();
            let mut state = AdamState::new(0.01, &[&p]);
            for k in 0..10 {
                let g = DenseMatrix::from_vec(
                    2,
                    2,
                    vec![0.5 - k as f64, 0.1, -0.3, k as f64 * 0.2],
                )
                .unwrap();
                adam_step(&mut state, &mut [&mut p], &[g], &["p"]).unwrap();
            }
            p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(0.0);
        let mut state = AdamState::new(0.01, &[&p]);
        let mut g = scalar(0.0);
        g.values_mut()[0] = f64::NAN;
        let err = adam_step(&mut state, &mut [&mut p], &[g], &["encoder.w1"]);
        match err {
            Err(crate::Error::Numeric(msg)) => assert!(msg.contains("encoder.w1")),
            other => panic!("expected numeric error, got {:?}", other.map(|_| ())),
        }
    }
}
