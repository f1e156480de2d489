//! Adam optimizer with bias correction, plus global-norm gradient clipping.

use crate::param::ParamSet;

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over all trainable parameters using their current grads.
    pub fn step(&mut self, params: &mut ParamSet) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer bound to a different ParamSet");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for ((w, g), (mi, vi)) in
                p.value.iter_mut().zip(&p.grad).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Scales all trainable gradients so the global L2 norm is at most
/// `max_norm`; returns the applied scale factor (1.0 when no clipping).
pub fn clip_grad_norm(params: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    for p in params.iter_mut() {
        if p.trainable {
            for g in &mut p.grad {
                *g *= scale;
            }
        }
    }
    scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = ParamSet::new();
        params.add("w", vec![1, 3], vec![1.0, -2.0, 0.5], true);
        let before = params.get(0).value.clone();
        let mut opt = Adam::new(1e-3);
        opt.step(&mut params);
        assert_eq!(params.get(0).value, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut params = ParamSet::new();
        params.add("w", vec![1, 2], vec![0.0, 0.0], true);
        params.get_mut(0).grad.copy_from_slice(&[3.0, -0.7]);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut params);
        let w = &params.get(0).value;
        // Bias-corrected first step is ~lr in magnitude, opposite the grad.
        assert!((w[0] + 1e-3).abs() < 1e-6, "w0 = {}", w[0]);
        assert!((w[1] - 1e-3).abs() < 1e-6, "w1 = {}", w[1]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut params = ParamSet::new();
        params.add("w", vec![1, 4], vec![2.0, -1.5, 0.8, -3.0], true);
        let mut opt = Adam::new(1e-2);
        for _ in 0..2000 {
            params.zero_grads();
            let w = params.get(0).value.clone();
            for (g, wi) in params.get_mut(0).grad.iter_mut().zip(&w) {
                *g = 2.0 * wi;
            }
            opt.step(&mut params);
        }
        let norm = params.get(0).value.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "final |w| = {norm}");
    }

    #[test]
    fn clip_halves_when_norm_is_double() {
        let mut params = ParamSet::new();
        params.add("w", vec![1, 2], vec![0.0, 0.0], true);
        params.get_mut(0).grad.copy_from_slice(&[1.2, 1.6]); // norm 2.0
        let scale = clip_grad_norm(&mut params, 1.0);
        assert!((scale - 0.5).abs() < 1e-12);
        assert_eq!(params.get(0).grad, vec![0.6, 0.8]);
        assert!((params.grad_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_is_identity_below_threshold() {
        let mut params = ParamSet::new();
        params.add("w", vec![1, 2], vec![0.0, 0.0], true);
        params.get_mut(0).grad.copy_from_slice(&[0.3, 0.4]);
        let scale = clip_grad_norm(&mut params, 1.0);
        assert_eq!(scale, 1.0);
        assert_eq!(params.get(0).grad, vec![0.3, 0.4]);
    }
}
