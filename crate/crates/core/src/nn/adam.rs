//! Adam with the two learning-rate schedules used by the toolkit: stepped
//! multiplicative decay for network training and cosine decay for image
//! optimization.

use crate::math;
use crate::tensor::Tensor;
use alloc::vec::Vec;

pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    /// One update over `(param, grad)` slots in a fixed order. Grads are
    /// zeroed after use.
    pub fn step(&mut self, slots: &mut [(&mut Tensor, &mut Tensor)], lr: f32) {
        if self.m.is_empty() {
            for (p, _) in slots.iter() {
                self.m.push(Tensor::zeros(p.dims()));
                self.v.push(Tensor::zeros(p.dims()));
            }
        }
        debug_assert_eq!(self.m.len(), slots.len());
        self.t += 1;
        let b1t = 1.0 - math::powi(self.beta1, self.t as i32);
        let b2t = 1.0 - math::powi(self.beta2, self.t as i32);
        for (i, (p, g)) in slots.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            let gd = g.data_mut();
            for j in 0..pd.len() {
                let grad = gd[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * grad;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * grad * grad;
                let mhat = m[j] / b1t;
                let vhat = v[j] / b2t;
                pd[j] -= lr * mhat / (math::sqrt(vhat) + self.eps);
                gd[j] = 0.0;
            }
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

/// Multiplicative step decay: `lr0 * factor^(step / every)`.
pub fn step_decay_lr(lr0: f32, factor: f32, every: usize, step: usize) -> f32 {
    if every == 0 {
        return lr0;
    }
    let k = (step / every) as i32;
    lr0 * math::powi(factor, k)
}

/// Cosine decay from `lr0` down to exactly `lr0 * floor` at `step >= horizon`.
pub fn cosine_lr(lr0: f32, floor: f32, horizon: usize, step: usize) -> f32 {
    if horizon == 0 || step >= horizon {
        return lr0 * floor;
    }
    let ramp = 0.5 * (1.0 + math::cos(math::PI * step as f32 / horizon as f32));
    lr0 * (floor + (1.0 - floor) * ramp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        // With bias correction the first step is lr * g/(|g| + eps') regardless
        // of gradient magnitude.
        let mut p = Tensor::from_vec(&[2], alloc::vec![1.0, -2.0]);
        let mut g = Tensor::from_vec(&[2], alloc::vec![0.3, -7.0]);
        let mut adam = Adam::new();
        adam.step(&mut [(&mut p, &mut g)], 0.1);
        assert!((p.data()[0] - (1.0 - 0.1)).abs() < 1e-4);
        assert!((p.data()[1] - (-2.0 + 0.1)).abs() < 1e-4);
        // grads were reset
        assert_eq!(g.data(), &[0.0, 0.0]);
    }

    #[test]
    fn adam_matches_reference_trajectory() {
        // Hand-computed two-step Adam on a scalar with constant gradient 1.
        // step1: m=0.1, v=0.001, mhat=1, vhat=1 -> p -= lr*1/(1+eps)
        // step2: m=0.19, v=0.001999, mhat=1, vhat=1 -> same again
        let mut p = Tensor::from_vec(&[1], alloc::vec![0.0]);
        let mut adam = Adam::new();
        for _ in 0..2 {
            let mut g = Tensor::from_vec(&[1], alloc::vec![1.0]);
            adam.step(&mut [(&mut p, &mut g)], 0.01);
        }
        assert!((p.data()[0] + 0.02).abs() < 1e-5);
    }

    #[test]
    fn cosine_decay_hits_floor_exactly() {
        let lr0 = 0.1;
        let floor = 0.03;
        assert_eq!(cosine_lr(lr0, floor, 300, 0), lr0);
        assert_eq!(cosine_lr(lr0, floor, 300, 300), lr0 * floor);
        assert_eq!(cosine_lr(lr0, floor, 300, 299_999), lr0 * floor);
        let mid = cosine_lr(lr0, floor, 300, 150);
        assert!((mid - lr0 * (floor + (1.0 - floor) * 0.5)).abs() < 1e-6);
        // monotone non-increasing
        let mut prev = f32::INFINITY;
        for s in 0..=300 {
            let lr = cosine_lr(lr0, floor, 300, s);
            assert!(lr <= prev + 1e-7);
            prev = lr;
        }
    }

    #[test]
    fn step_decay_schedule() {
        assert_eq!(step_decay_lr(1.0, 0.9, 10, 0), 1.0);
        assert_eq!(step_decay_lr(1.0, 0.9, 10, 9), 1.0);
        assert!((step_decay_lr(1.0, 0.9, 10, 10) - 0.9).abs() < 1e-6);
        assert!((step_decay_lr(1.0, 0.9, 10, 25) - 0.81).abs() < 1e-6);
    }
}
