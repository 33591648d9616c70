//! Glorot initialization and the Adam optimizer.

use alloc::fmt;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// I.i.d. uniform on +/- sqrt(6 / (rows + cols)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    assert!(rows >= 1 && cols >= 1);
    let bound = math::sqrt(6.0 / (rows + cols) as f64);
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.symmetric(bound)).collect();
    Tensor::from_vec(rows, cols, values)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimError {
    pub index: usize,
    pub expected: (usize, usize),
    pub got: (usize, usize),
}

impl fmt::Display for OptimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parameter {}: gradient shape {}x{} does not match {}x{}",
            self.index, self.got.0, self.got.1, self.expected.0, self.expected.1
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OptimError {}

/// Adam with bias correction. L2 weight decay is folded into the
/// gradient before the moment update.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step(
        &mut self,
        params: &mut [Tensor],
        grads: &[Tensor],
        lr: f64,
        weight_decay: f64,
    ) -> Result<(), OptimError> {
        assert_eq!(params.len(), self.m.len());
        for (index, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(OptimError {
                    index,
                    expected: p.shape(),
                    got: g.shape(),
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - math::powi(self.beta1, self.t);
        let bc2 = 1.0 - math::powi(self.beta2, self.t);
        for (idx, p) in params.iter_mut().enumerate() {
            let m = self.m[idx].values_mut();
            let v = self.v[idx].values_mut();
            let g = grads[idx].values();
            for (k, pv) in p.values_mut().iter_mut().enumerate() {
                let grad = g[k] + weight_decay * *pv;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad * grad;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *pv -= lr * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}
