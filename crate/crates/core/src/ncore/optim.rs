use super::{Gradients, ParamSet, Tensor};

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of applied updates.
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Applies one update from the gradients stored in `params`, then zeroes them.
    pub fn update(&mut self, params: &mut ParamSet) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * g[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad.fill(0.0);
        }
    }
}

/// Plain gradient descent from the stored gradients, which are then zeroed.
pub fn sgd_update(params: &mut ParamSet, lr: f64) {
    for p in params.iter_mut() {
        for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *w -= lr * g;
        }
        p.grad.fill(0.0);
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::from_vec(&[1], vec![w]).unwrap()).unwrap();
        ps
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut ps = scalar_param(0.0);
        let mut adam = AdamState::new(&ps, 0.1);
        ps.iter_mut().next().unwrap().grad.data_mut()[0] = 1.0;
        adam.update(&mut ps);
        let w = ps.value(0).data()[0];
        assert!((w + 0.1).abs() < 1e-8, "w = {w}");
        assert_eq!(adam.t, 1);
        assert_eq!(ps.iter().next().unwrap().grad.data(), &[0.0]);
    }

    #[test]
    fn adam_zero_grad_is_a_null_step() {
        let mut ps = scalar_param(0.25);
        let mut adam = AdamState::new(&ps, 0.1);
        adam.update(&mut ps);
        assert_eq!(ps.value(0).data(), &[0.25]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut ps = scalar_param(0.5);
            let mut adam = AdamState::new(&ps, 0.01);
            for k in 0..5 {
                ps.iter_mut().next().unwrap().grad.data_mut()[0] = 0.3 * k as f64 - 0.4;
                adam.update(&mut ps);
            }
            ps.value(0).data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn clip_bounds_norm() {
        let mut g = Gradients(vec![Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap()]);
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        let mut small = Gradients(vec![Tensor::from_vec(&[1], vec![0.5]).unwrap()]);
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small.0[0].data(), &[0.5]);
    }
}
