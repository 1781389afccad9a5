//! Bias-corrected Adam.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Optimizer state: one first/second moment buffer per parameter.
pub struct AdamState<T: Scalar> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step_count: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>], lr: T) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            step_count: 0,
            lr,
            beta1: T::from_f64_(0.9),
            beta2: T::from_f64_(0.999),
            eps: T::from_f64_(1e-8),
        }
    }
}

/// One in-place Adam update using the gradients accumulated on `params`.
pub fn adam_step<T: Scalar>(params: &[Tensor<T>], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam_step: {} params but state holds {}",
            params.len(),
            state.m.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = T::one() - state.beta1.powi(t);
    let bc2 = T::one() - state.beta2.powi(t);
    for (i, p) in params.iter().enumerate() {
        let grad = p
            .grad()
            .ok_or_else(|| Error::Usage("adam_step on parameter without gradient".into()))?;
        if grad.len() != state.m[i].len() {
            return Err(Error::Dimension(format!(
                "adam_step: param {} has {} elements, state expects {}",
                i,
                grad.len(),
                state.m[i].len()
            )));
        }
        let mut data = p.data();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..grad.len() {
            let g = grad[j];
            m[j] = state.beta1 * m[j] + (T::one() - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (T::one() - state.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] = data[j] - state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        p.set_data(data)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let p = Tensor::<f64>::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p), 0.01);
        st.step_count = 41; // arbitrary prior step count
        let before = p.data();
        adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        assert_eq!(p.data(), before);
        assert_eq!(st.step_count, 42);
    }

    fn first_step_delta(g: f64) -> f64 {
        let p = Tensor::<f64>::param(&[1], vec![0.0]).unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p), 1e-3);
        {
            let loss = p.scale(g).unwrap().sum_all().unwrap();
            loss.backward().unwrap();
        }
        adam_step(std::slice::from_ref(&p), &mut st).unwrap();
        p.data()[0]
    }

    #[test]
    fn first_step_is_signed_lr() {
        // m_hat/(sqrt(v_hat)+eps) ~= sign(g) on the first step
        let d = first_step_delta(0.7);
        assert!((d + 1e-3).abs() < 1e-6, "delta {d}");
        let d = first_step_delta(-0.7);
        assert!((d - 1e-3).abs() < 1e-6, "delta {d}");
    }

    #[test]
    fn first_step_scale_invariance() {
        let d1 = first_step_delta(1.0);
        let d100 = first_step_delta(100.0);
        assert!((d1 - d100).abs() < 1e-6 * 1e-3);
    }

    #[test]
    fn step_count_increments() {
        let p = Tensor::<f64>::param(&[1], vec![0.0]).unwrap();
        let mut st = AdamState::new(std::slice::from_ref(&p), 1e-3);
        for expect in 1..=5 {
            adam_step(std::slice::from_ref(&p), &mut st).unwrap();
            assert_eq!(st.step_count, expect);
        }
    }
}
