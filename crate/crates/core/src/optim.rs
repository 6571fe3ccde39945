//! Plain SGD with a cosine-annealed learning rate.

use crate::error::{Error, Result};
use crate::nn::{EncoderParams, ParamGrads};

/// `lr0 · ½ · (1 + cos(π t / T))`.
pub fn cosine_lr(lr0: f64, step: usize, total_steps: usize) -> f64 {
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos())
}

/// Apply one update and return the learning rate that was used.
pub fn sgd_cosine_step(
    params: &mut EncoderParams,
    grads: &ParamGrads,
    step: usize,
    total_steps: usize,
    lr0: f64,
) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::Config(format!("step {step} is not below the total {total_steps}")));
    }
    if grads.len() != params.tensors().len() {
        return Err(Error::Shape("gradient list does not match the parameters".into()));
    }
    let lr = cosine_lr(lr0, step, total_steps);
    for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
        p.add_scaled(g, -lr)?;
    }
    Ok(lr)
}
