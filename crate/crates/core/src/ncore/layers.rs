//! Embedding, affine and Elman recurrent layers with hand-written backward
//! passes, plus the softmax cross-entropy loss.

use super::{NcoreError, Tensor};

fn check_shape(what: &'static str, t: &Tensor, expected: &[usize]) -> Result<(), NcoreError> {
    if t.shape() != expected {
        return Err(NcoreError::ShapeMismatch {
            what,
            expected: expected.to_vec(),
            actual: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), NcoreError> {
    if v.len() != expected {
        return Err(NcoreError::ShapeMismatch {
            what,
            expected: vec![expected],
            actual: vec![v.len()],
        });
    }
    Ok(())
}

/// Row `id` of an embedding table.
pub fn embed(table: &Tensor, id: u32) -> Result<&[f64], NcoreError> {
    let id = id as usize;
    if id >= table.rows() {
        return Err(NcoreError::IndexOutOfRange {
            index: id,
            bound: table.rows(),
        });
    }
    Ok(table.row(id))
}

/// Scatter-add of an upstream gradient into the embedding row it came from.
pub fn embed_backward(grad_table: &mut Tensor, id: u32, dy: &[f64]) {
    for (g, d) in grad_table.row_mut(id as usize).iter_mut().zip(dy) {
        *g += d;
    }
}

/// `y = Wᵀx + b` with `W` stored as `in × out`.
pub fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>, NcoreError> {
    let (n_in, n_out) = (w.rows(), w.cols());
    check_len("affine input", x, n_in)?;
    check_shape("affine bias", b, &[n_out])?;
    let mut y = b.data().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (yj, wij) in y.iter_mut().zip(w.row(i)) {
            *yj += xi * wij;
        }
    }
    Ok(y)
}

/// Accumulates `dW`, `db` and returns `dx` for [`affine`].
pub fn affine_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    grad_w: &mut Tensor,
    grad_b: &mut Tensor,
) -> Vec<f64> {
    for (gb, d) in grad_b.data_mut().iter_mut().zip(dy) {
        *gb += d;
    }
    let mut dx = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        let w_row = w.row(i);
        let mut acc = 0.0;
        for (wij, d) in w_row.iter().zip(dy) {
            acc += wij * d;
        }
        dx[i] = acc;
        if xi != 0.0 {
            for (g, d) in grad_w.row_mut(i).iter_mut().zip(dy) {
                *g += xi * d;
            }
        }
    }
    dx
}

/// Borrowed weights of one Elman cell: `w_xh` is `d × h`, `w_hh` is `h × h`.
#[derive(Debug, Clone, Copy)]
pub struct RnnCell<'a> {
    pub w_xh: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub b_h: &'a Tensor,
}

impl RnnCell<'_> {
    pub fn input_dim(&self) -> usize {
        self.w_xh.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.rows()
    }
}

/// Mutable gradient buffers matching an [`RnnCell`].
pub struct RnnCellGrads<'a> {
    pub w_xh: &'a mut Tensor,
    pub w_hh: &'a mut Tensor,
    pub b_h: &'a mut Tensor,
}

/// `h_t = tanh(W_xhᵀ x_t + W_hhᵀ h_prev + b_h)`.
pub fn rnn_step(x: &[f64], h_prev: &[f64], cell: RnnCell<'_>) -> Result<Vec<f64>, NcoreError> {
    let h = cell.w_xh.cols();
    check_shape("rnn W_hh", cell.w_hh, &[h, h])?;
    check_len("rnn h_prev", h_prev, h)?;
    let mut z = affine(cell.w_xh, cell.b_h, x)?;
    for (i, &hi) in h_prev.iter().enumerate() {
        if hi == 0.0 {
            continue;
        }
        for (zj, wij) in z.iter_mut().zip(cell.w_hh.row(i)) {
            *zj += hi * wij;
        }
    }
    z.iter_mut().for_each(|v| *v = v.tanh());
    Ok(z)
}

/// Backward pass of [`rnn_step`] given its inputs, its output `h` and `dh`.
/// Accumulates weight gradients and returns `(dx, dh_prev)`.
pub fn rnn_step_backward(
    x: &[f64],
    h_prev: &[f64],
    h: &[f64],
    dh: &[f64],
    cell: RnnCell<'_>,
    grads: &mut RnnCellGrads<'_>,
) -> (Vec<f64>, Vec<f64>) {
    let dz: Vec<f64> = h.iter().zip(dh).map(|(hv, d)| d * (1.0 - hv * hv)).collect();
    let dx = affine_backward(cell.w_xh, x, &dz, grads.w_xh, grads.b_h);
    let mut dh_prev = vec![0.0; h_prev.len()];
    for (i, &hi) in h_prev.iter().enumerate() {
        let mut acc = 0.0;
        for (wij, d) in cell.w_hh.row(i).iter().zip(&dz) {
            acc += wij * d;
        }
        dh_prev[i] = acc;
        if hi != 0.0 {
            for (g, d) in grads.w_hh.row_mut(i).iter_mut().zip(&dz) {
                *g += hi * d;
            }
        }
    }
    (dx, dh_prev)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|v| v - lse).collect()
}

/// Cross-entropy `-log softmax(logits)[target]` and its gradient
/// `softmax(logits) - onehot(target)`.
pub fn softmax_xent(logits: &[f64], target: u32) -> Result<(f64, Vec<f64>), NcoreError> {
    let t = target as usize;
    if t >= logits.len() {
        return Err(NcoreError::TargetOutOfRange {
            target: t,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[t] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[t] -= 1.0;
    Ok((loss.max(0.0), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn rnn_step_zero_weights_gives_tanh_bias() {
        let w_xh = Tensor::zeros(&[2, 3]);
        let w_hh = Tensor::zeros(&[3, 3]);
        let b = Tensor::from_vec(&[3], vec![0.0, 0.5, -1.0]).unwrap();
        let cell = RnnCell { w_xh: &w_xh, w_hh: &w_hh, b_h: &b };
        let h = rnn_step(&[0.0, 0.0], &[0.0; 3], cell).unwrap();
        assert_eq!(h, vec![0.0, 0.5f64.tanh(), (-1.0f64).tanh()]);
    }

    #[test]
    fn rnn_step_scalar() {
        let w_xh = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let w_hh = Tensor::zeros(&[1, 1]);
        let b = Tensor::zeros(&[1]);
        let cell = RnnCell { w_xh: &w_xh, w_hh: &w_hh, b_h: &b };
        let h = rnn_step(&[0.5], &[0.0], cell).unwrap();
        assert_close(h[0], 0.46212, 5e-6);
    }

    #[test]
    fn rnn_step_rejects_bad_shapes() {
        let w_xh = Tensor::zeros(&[2, 3]);
        let w_hh = Tensor::zeros(&[3, 3]);
        let b = Tensor::zeros(&[3]);
        let cell = RnnCell { w_xh: &w_xh, w_hh: &w_hh, b_h: &b };
        assert!(matches!(
            rnn_step(&[0.0; 3], &[0.0; 3], cell),
            Err(NcoreError::ShapeMismatch { .. })
        ));
        assert!(rnn_step(&[0.0; 2], &[0.0; 2], cell).is_err());
    }

    #[test]
    fn xent_symmetric_case() {
        let (loss, grad) = softmax_xent(&[0.0, 0.0], 0).unwrap();
        assert_close(loss, std::f64::consts::LN_2, 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
    }

    #[test]
    fn xent_is_stable_for_large_logits() {
        let (loss, grad) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_xent(&[1000.0, 0.0], 1).unwrap();
        assert_close(loss, 1000.0, 1e-9);
    }

    #[test]
    fn xent_target_out_of_range() {
        assert!(matches!(
            softmax_xent(&[0.0, 1.0], 2),
            Err(NcoreError::TargetOutOfRange { target: 2, classes: 2 })
        ));
    }

    #[test]
    fn xent_grad_sums_to_zero() {
        let logits = [0.3, -1.2, 2.5, 0.0, 7.0];
        let (_, grad) = softmax_xent(&logits, 3).unwrap();
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xent_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let logits: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let target = rng.random_range(0..5u32);
            let (_, grad) = softmax_xent(&logits, target).unwrap();
            let h = 1e-5;
            for i in 0..5 {
                let mut plus = logits.clone();
                let mut minus = logits.clone();
                plus[i] += h;
                minus[i] -= h;
                // Exact log-sum-exp without the max(0) clamp for the oracle.
                let f = |l: &[f64]| {
                    let lse = l.iter().map(|v| v.exp()).sum::<f64>().ln();
                    lse - l[target as usize]
                };
                let num = (f(&plus) - f(&minus)) / (2.0 * h);
                let rel = (grad[i] - num).abs() / (grad[i].abs() + num.abs()).max(1e-12);
                assert!(rel < 1e-8, "coord {i}: analytic {} numeric {num} rel {rel}", grad[i]);
            }
        }
    }

    #[test]
    fn affine_backward_input_grad() {
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        let y = affine(&w, &b, &[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![4.5, 5.5]);
        let mut gw = Tensor::zeros(&[2, 2]);
        let mut gb = Tensor::zeros(&[2]);
        let dx = affine_backward(&w, &[1.0, 2.0], &[1.0, 0.0], &mut gw, &mut gb);
        assert_eq!(dx, vec![1.0, 3.0]);
        assert_eq!(gw.data(), &[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(gb.data(), &[1.0, 0.0]);
    }
}
