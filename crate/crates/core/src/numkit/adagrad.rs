//! Adagrad parameter updates.

use super::linalg::Mat;

/// Per-parameter Adagrad accumulators plus hyperparameters.
#[derive(Debug, Clone)]
pub struct AdagradState {
    pub learning_rate: f64,
    pub accumulators: Vec<Mat>,
}

impl AdagradState {
    /// Accumulators start at `initial_accumulator` (strictly positive keeps
    /// the denominator nonzero from the first step).
    pub fn new(shapes: &[(usize, usize)], learning_rate: f64, initial_accumulator: f64) -> Self {
        assert!(learning_rate > 0.0);
        assert!(initial_accumulator > 0.0);
        AdagradState {
            learning_rate,
            accumulators: shapes
                .iter()
                .map(|&(r, c)| Mat::from_elem((r, c), initial_accumulator))
                .collect(),
        }
    }

    /// Applies one update to every parameter in `params` given matching grads.
    pub fn apply(&mut self, params: &mut [&mut Mat], grads: &[Mat]) {
        assert_eq!(params.len(), self.accumulators.len());
        assert_eq!(grads.len(), self.accumulators.len());
        for ((param, grad), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            for ((p, g), a) in param.iter_mut().zip(grad.iter()).zip(acc.iter_mut()) {
                let (np, na) = adagrad_step(*p, *g, *a, self.learning_rate);
                *p = np;
                *a = na;
            }
        }
    }
}

/// Single scalar Adagrad step: acc' = acc + g^2, param' = param - lr*g/sqrt(acc').
pub fn adagrad_step(param: f64, grad: f64, acc: f64, lr: f64) -> (f64, f64) {
    debug_assert!(acc >= 0.0);
    let acc2 = acc + grad * grad;
    let param2 = if lr == 0.0 || grad == 0.0 {
        param
    } else {
        param - lr * grad / acc2.sqrt()
    };
    (param2, acc2)
}
