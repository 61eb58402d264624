use crate::error::{check_dim, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam<R: Real> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter tensor from its gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<R>], grads: &[Tensor<R>]) -> Result<()> {
        check_dim("adam_step", "tensor count", params.len(), grads.len())?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![R::ZERO; p.len()]).collect();
            self.v = self.m.clone();
        }
        check_dim("adam_step", "state tensor count", self.m.len(), params.len())?;
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            check_dim("adam_step", &format!("tensor {i} size"), p.len(), g.len())?;
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (R::from_f64(c.beta1), R::from_f64(c.beta2));
        let (ob1, ob2) = (R::from_f64(1.0 - c.beta1), R::from_f64(1.0 - c.beta2));
        let (inv_bc1, inv_bc2) = (R::from_f64(1.0 / bc1), R::from_f64(1.0 / bc2));
        let (lr, eps) = (R::from_f64(c.lr), R::from_f64(c.eps));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + ob1 * gv;
                *vv = b2 * *vv + ob2 * gv * gv;
                let m_hat = *mv * inv_bc1;
                let v_hat = *vv * inv_bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut p = Tensor::<f64>::full(&[1], 0.5);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], &[Tensor::full(&[1], 3.0)]).unwrap();
        let delta = (p.data()[0] - 0.5).abs();
        assert!((delta - 1e-4 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = Tensor::<f32>::new(vec![3], vec![1.0, -2.0, 0.25]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [&mut p], &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn two_steps_match_hand_rolled() {
        let g = 0.7f64;
        let (lr, b1, b2, eps) = (1e-4, 0.9, 0.999, 1e-8);
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = Tensor::<f64>::full(&[1], 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..2 {
            adam.step(&mut [&mut p], &[Tensor::full(&[1], g)]).unwrap();
        }
        assert!((p.data()[0] - theta).abs() < 1e-9);
    }
}
