//! Optimizers and the training step.

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::float::Float;
use crate::model::{Mode, Model};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers shaped like the model's parameters.
#[derive(Clone, Debug)]
pub struct OptimState<F> {
    pub optimizer: Optimizer,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Float> OptimState<F> {
    pub fn new(optimizer: Optimizer, model: &Model<F>) -> OptimState<F> {
        let zeros = || model.params().iter().map(|p| vec![F::zero(); p.len()]).collect::<Vec<_>>();
        let v = match optimizer {
            Optimizer::Adam { .. } => zeros(),
            Optimizer::Sgd { .. } => Vec::new(),
        };
        OptimState {
            optimizer,
            step: 0,
            m: zeros(),
            v,
        }
    }

    /// Apply one update. `grads` must be in `Model::params` order.
    pub fn apply(&mut self, model: &mut Model<F>, grads: &[Vec<F>]) {
        self.step += 1;
        let params = model.params_mut();
        assert_eq!(params.len(), grads.len(), "gradient count");
        match self.optimizer {
            Optimizer::Sgd { lr, momentum } => {
                let (lr, mu) = (F::of(lr), F::of(momentum));
                for ((p, g), m) in params.into_iter().zip(grads).zip(&mut self.m) {
                    for ((p, &g), m) in p.iter_mut().zip(g).zip(m.iter_mut()) {
                        *m = mu * *m + g;
                        *p -= lr * *m;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let step = F::of(lr * c2.sqrt() / c1);
                let (b1, b2, eps) = (F::of(beta1), F::of(beta2), F::of(epsilon * c2.sqrt()));
                let (o1, o2) = (F::one() - b1, F::one() - b2);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + o1 * g;
                        *v = b2 * *v + o2 * g * g;
                        *p -= step * *m / (v.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// One optimisation step on a batch in training mode. Dropout masks come
/// from `seed`; batch-norm running statistics are updated. Returns the loss.
pub fn train_step<F: Float>(
    model: &mut Model<F>,
    optim: &mut OptimState<F>,
    x: &Tensor<F>,
    labels: &[usize],
    seed: u64,
    class_weights: Option<&[f64]>,
) -> Result<F, NnError> {
    let lg = model.loss_and_grads(x, labels, Mode::Train { seed }, class_weights, false)?;
    optim.apply(model, &lg.grads);
    model.update_running_stats(&lg.stats);
    Ok(lg.loss)
}
