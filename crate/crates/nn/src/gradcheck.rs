//! Central finite-difference gradient check in f64.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::NnError;
use crate::model::{Mode, Model};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Where the largest error occurred, e.g. "param 3[17]" or "input[5]".
    pub worst: String,
}

/// |a − b| / max(|a|, |b|, floor); the floor keeps entries that are zero up
/// to rounding from dominating.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compare analytic gradients with central differences (step `h`) on up to
/// `per_tensor` sampled entries of every parameter tensor and of the input.
/// Training mode with a fixed dropout seed, so both sides see the same mask.
pub fn check(model: &Model<f64>, x: &Tensor<f64>, labels: &[usize], seed: u64, per_tensor: usize, h: f64) -> Result<GradCheck, NnError> {
    let mode = Mode::Train { seed };
    let lg = model.loss_and_grads(x, labels, mode, None, true)?;
    let loss = |m: &Model<f64>, x: &Tensor<f64>| m.loss_and_grads(x, labels, mode, None, false).map(|g| g.loss);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let mut record = |a: f64, num: f64, at: String| {
        let e = rel_err(a, num);
        out.checked += 1;
        if e >= out.max_rel_err {
            out.max_rel_err = e;
            out.worst = at;
        }
    };
    let n_params = model.params().len();
    for t in 0..n_params {
        let len = model.params()[t].len();
        for idx in sample(&mut rng, len, per_tensor.min(len)) {
            let mut m = model.clone();
            let orig = m.params()[t][idx];
            m.params_mut()[t][idx] = orig + h;
            let up = loss(&m, x)?;
            m.params_mut()[t][idx] = orig - h;
            let down = loss(&m, x)?;
            record(lg.grads[t][idx], (up - down) / (2.0 * h), format!("param {t}[{idx}]"));
        }
    }
    let gi = lg.input_grad.expect("requested");
    for idx in sample(&mut rng, gi.len(), per_tensor.min(gi.len())) {
        let mut xp = x.clone();
        let orig = xp.data()[idx];
        xp.data_mut()[idx] = orig + h;
        let up = loss(model, &xp)?;
        xp.data_mut()[idx] = orig - h;
        let down = loss(model, &xp)?;
        record(gi[idx], (up - down) / (2.0 * h), format!("input[{idx}]"));
    }
    Ok(out)
}
