use super::matrix::Matrix;
use super::tape::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are allocated lazily on the first step
/// and must keep the same shapes afterwards.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients stored in `params`, then zeroes them.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            if !p.requires_grad() {
                return Err(Error::MissingGradient(i));
            }
        }
        if self.first.is_empty() {
            self.first = params
                .iter()
                .map(|p| Matrix::zeros(p.shape().0, p.shape().1))
                .collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.shape() != p.shape())
        {
            return Err(Error::Shape("adam: parameter set changed between steps".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let g = p.grad().expect("checked above").clone();
            let value = p.value_mut();
            for k in 0..g.len() {
                let gk = g.data()[k] + self.weight_decay * value.data()[k];
                let mk = self.beta1 * m.data()[k] + (1.0 - self.beta1) * gk;
                let vk = self.beta2 * v.data()[k] + (1.0 - self.beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                value.data_mut()[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(x: f64) -> Tensor {
        Tensor::parameter(Matrix::scalar(x))
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_param(1.0);
        p.grad_mut().unwrap().set(0, 0, 1.0);
        let mut adam = AdamState::new(0.001);
        adam.step(&mut [&mut p]).unwrap();
        let moved = 1.0 - p.value().get(0, 0);
        assert!((moved - 0.001).abs() < 1e-8, "moved {moved}");
        assert_eq!(p.grad().unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn zero_gradient_keeps_parameter() {
        let mut p = scalar_param(0.3);
        let mut adam = AdamState::new(0.01);
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value().get(0, 0), 0.3);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn matches_hand_rolled_scalar_trace() {
        // Oracle: textbook Adam written out for a single scalar.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let grads = [0.5, 0.5];
        let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t as i32 + 1));
            let vhat = v / (1.0 - b2.powi(t as i32 + 1));
            x -= lr * mhat / (vhat.sqrt() + eps);
            expected.push(x);
        }
        let mut p = scalar_param(2.0);
        let mut adam = AdamState::new(lr);
        for (g, want) in grads.iter().zip(expected) {
            p.grad_mut().unwrap().set(0, 0, *g);
            adam.step(&mut [&mut p]).unwrap();
            assert!((p.value().get(0, 0) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_tensor_is_rejected() {
        let mut c = Tensor::constant(Matrix::scalar(1.0));
        let mut adam = AdamState::new(0.01);
        assert!(matches!(
            adam.step(&mut [&mut c]),
            Err(Error::MissingGradient(0))
        ));
    }
}
