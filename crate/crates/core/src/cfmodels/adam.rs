use crate::linalg::DenseMatrix;

/// Adam with bias correction. Moments mirror the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(shapes: &[(usize, usize)], learning_rate: f64) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect::<Vec<_>>();
        OptimizerState {
            first_moment: zeros(),
            second_moment: zeros(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Apply one update to every tensor in `params` given matching `grads`.
    pub fn update(&mut self, params: &mut [DenseMatrix], grads: &[DenseMatrix]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.first_moment.len());
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[k].as_mut_slice();
            let v = self.second_moment[k].as_mut_slice();
            for (((p, &g), m), v) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = OptimizerState::new(&[(1, 1)], 0.001);
        let mut p = vec![DenseMatrix::from_vec(1, 1, vec![0.5])];
        let g = vec![DenseMatrix::from_vec(1, 1, vec![1.0])];
        opt.update(&mut p, &g);
        let delta = p[0].as_slice()[0] - 0.5;
        // m̂ = 1, v̂ = 1  =>  Δ = -lr / (1 + ε)
        assert!((delta + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_learning_rate_is_a_null_step() {
        let mut opt = OptimizerState::new(&[(2, 1)], 0.0);
        let mut p = vec![DenseMatrix::from_vec(2, 1, vec![0.5, -0.25])];
        let g = vec![DenseMatrix::from_vec(2, 1, vec![3.0, -1.0])];
        opt.update(&mut p, &g);
        assert_eq!(p[0].as_slice(), [0.5, -0.25]);
    }
}
