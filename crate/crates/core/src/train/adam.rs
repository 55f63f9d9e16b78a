use super::TrainError;
use crate::scalar::Scalar;
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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// Applies one update at learning rate `lr` to every parameter with a gradient.
    ///
    /// Any non-finite gradient aborts before a single parameter is touched.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], lr: f64) -> Result<(), TrainError> {
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = &p.grad {
                let bad = g.iter().filter(|v| !v.is_finite()).count();
                if bad > 0 {
                    return Err(TrainError::NonFiniteGradient {
                        param: i,
                        shape: p.shape().to_vec(),
                        count: bad,
                    });
                }
            }
        }
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let (lr_t, c1_t, c2_t, eps_t) = (T::lit(lr), T::lit(c1), T::lit(c2), T::lit(eps));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Some(g) = p.grad.take() else { continue };
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / c1_t;
                let v_hat = v[i] / c2_t;
                *x -= lr_t * m_hat / (v_hat.sqrt() + eps_t);
            }
            p.grad = Some(g);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor<f64> {
        let mut t = Tensor::scalar(v).with_grad();
        t.grad = Some(vec![g]);
        t
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = param(0.7, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [&mut p], 0.1).unwrap();
        }
        assert_eq!(p.item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = param(1.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 0.1).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = 0.1 / (1 + 1e-8)
        assert!((p.item() - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn repeated_gradient_keeps_step_and_shrinking_gradient_shrinks_it() {
        let mut p = param(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 0.1).unwrap();
        let first = -p.item();
        adam.step(&mut [&mut p], 0.1).unwrap();
        let second = -p.item() - first;
        // Bias correction makes m̂ = v̂ = 1 again: the same step.
        assert!((second - first).abs() < 1e-9);

        // After g = 1, a gradient of 0.5: m = 0.9·0.1 + 0.1·0.5 = 0.14, v = 0.999·0.001 + 0.001·0.25
        let mut q = param(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut q], 0.1).unwrap();
        let before = q.item();
        q.grad = Some(vec![0.5]);
        adam.step(&mut [&mut q], 0.1).unwrap();
        let m_hat: f64 = 0.14 / (1.0 - 0.81);
        let v_hat: f64 = (0.999 * 0.001 + 0.001 * 0.25) / (1.0 - 0.999f64.powi(2));
        let want = 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!(((before - q.item()) - want).abs() < 1e-12);
        assert!(want < first);
    }

    #[test]
    fn nan_gradient_aborts_untouched() {
        let mut a = param(1.0, 1.0);
        let mut b = param(2.0, f64::NAN);
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut [&mut a, &mut b], 0.1).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { param: 1, count: 1, .. }));
        assert_eq!(a.item(), 1.0);
        assert_eq!(adam.steps(), 0);
    }
}
