use rand::Rng;

use crate::error::{Error, Result};

use super::Matrix;

/// A trainable matrix with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
    adam_m: Matrix,
    adam_v: Matrix,
    step_count: u64,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Parameter {
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::new(Matrix::glorot(rows, cols, rng))
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate_grad(&mut self, g: &Matrix) -> Result<()> {
        self.grad.expect_same_shape(g, "gradient accumulation")?;
        self.grad.add_assign(g);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update of every parameter, then zeroes the
    /// gradients. Nothing is modified if any gradient is non-finite.
    pub fn step(&self, params: &mut [Parameter]) -> Result<()> {
        if let Some(i) = params.iter().position(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {i} contains NaN or infinity"
            )));
        }
        for p in params.iter_mut() {
            p.step_count += 1;
            let t = p.step_count as f64;
            let bias1 = 1.0 - self.beta1.powf(t);
            let bias2 = 1.0 - self.beta2.powf(t);
            let values = p.value.as_mut_slice();
            let m = p.adam_m.as_mut_slice();
            let v = p.adam_v.as_mut_slice();
            for (i, &g) in p.grad.as_slice().iter().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = vec![Parameter::new(Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap())];
        Adam::new(0.1).step(&mut ps).unwrap();
        assert_eq!(ps[0].value.as_slice(), &[0.3, -0.7]);
        assert_eq!(ps[0].step_count(), 1);
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut ps = vec![Parameter::new(Matrix::scalar(0.0))];
        ps[0].grad = Matrix::scalar(1.0);
        Adam::new(0.1).step(&mut ps).unwrap();
        // m_hat = 1, v_hat = 1 -> -0.1 / (1 + 1e-8)
        assert!((ps[0].value.item().unwrap() + 0.1).abs() < 1e-8);
        assert_eq!(ps[0].grad.item(), Some(0.0));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut ps = vec![Parameter::new(Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap())];
        ps[0].grad = Matrix::from_vec(1, 2, vec![5.0, -3.0]).unwrap();
        Adam::new(0.0).step(&mut ps).unwrap();
        assert_eq!(ps[0].value.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let make = || {
            let mut p = Parameter::new(Matrix::from_vec(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
            p.grad = Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
            vec![p]
        };
        let (mut a, mut b) = (make(), make());
        Adam::new(0.01).step(&mut a).unwrap();
        Adam::new(0.01).step(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut ps = vec![Parameter::new(Matrix::scalar(1.0))];
        ps[0].grad = Matrix::scalar(f64::NAN);
        assert!(matches!(Adam::new(0.1).step(&mut ps), Err(Error::NonFinite(_))));
        assert_eq!(ps[0].value.item(), Some(1.0));
    }
}
