/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    /// Default moments `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(n_params: usize, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut adam = Adam::new(2, 0.1);
        let mut w = vec![1.0, -2.0];
        adam.step(&mut w, &[1.0, 1.0]);
        let before = w.clone();
        let (m0, v0) = (adam.first_moment()[0], adam.second_moment()[0]);
        adam.step(&mut w, &[0.0, 0.0]);
        assert_ne!(w, before); // momentum still moves the iterate
        let mut still = Adam::new(2, 0.1);
        let mut w2 = vec![1.0, -2.0];
        still.step(&mut w2, &[0.0, 0.0]);
        assert_eq!(w2, vec![1.0, -2.0]);
        assert!((adam.first_moment()[0] - 0.9 * m0).abs() < 1e-16);
        assert!((adam.second_moment()[0] - 0.999 * v0).abs() < 1e-16);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut adam = Adam::new(1, 1e-3);
        let mut w = vec![0.0];
        let mut last = 0.0;
        for _ in 0..2000 {
            let prev = w[0];
            adam.step(&mut w, &[3.7]);
            last = prev - w[0];
        }
        assert!((last - 1e-3).abs() < 1e-9, "{last}");
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut adam = Adam::new(1, 1e-2);
        let mut w = vec![1.0];
        for _ in 0..5000 {
            let g = 2.0 * w[0];
            adam.step(&mut w, &[g]);
        }
        assert!(w[0].abs() < 1e-6, "{}", w[0]);
    }
}
