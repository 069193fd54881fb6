//! First-order optimizers: Adam (default) and plain SGD for unit tests.

use serde::{Deserialize, Serialize};

use super::{DenseNetSpec, GradientBuffer, ParameterSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Adaptive moment estimation with bias correction.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    /// p <- p - step_size * g.
    Sgd,
}

/// Per-network optimizer state. The step counter doubles as the update audit
/// used by the protocol invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub step_count: u64,
    moment1: Option<GradientBuffer>,
    moment2: Option<GradientBuffer>,
}

impl OptimizerState {
    pub fn adam(spec: &DenseNetSpec, step_size: f64) -> Self {
        Self::adam_with(spec, step_size, 0.9, 0.999, 1e-8)
    }

    pub fn adam_with(
        spec: &DenseNetSpec,
        step_size: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        assert!(step_size > 0.0, "step size must be positive");
        Self {
            kind: OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            },
            step_size,
            step_count: 0,
            moment1: Some(GradientBuffer::zeros(spec)),
            moment2: Some(GradientBuffer::zeros(spec)),
        }
    }

    pub fn sgd(step_size: f64) -> Self {
        assert!(step_size > 0.0, "step size must be positive");
        Self {
            kind: OptimizerKind::Sgd,
            step_size,
            step_count: 0,
            moment1: None,
            moment2: None,
        }
    }
}

/// Apply one optimizer step in place. Errors on non-finite gradients so a
/// diverging run aborts with a diagnostic instead of poisoning parameters.
pub fn optimizer_step(
    params: &mut ParameterSet,
    grads: &GradientBuffer,
    state: &mut OptimizerState,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite(
            "gradient contains NaN or infinity; aborting update".into(),
        ));
    }
    state.step_count += 1;
    match state.kind {
        OptimizerKind::Sgd => {
            let lr = state.step_size;
            for l in 0..params.layer_count() {
                for (p, g) in params.weights_mut(l).iter_mut().zip(grads.weights[l].iter()) {
                    *p -= lr * g;
                }
                for (p, g) in params.biases_mut(l).iter_mut().zip(grads.biases[l].iter()) {
                    *p -= lr * g;
                }
            }
        }
        OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let t = state.step_count as i32;
            let corr1 = 1.0 - beta1.powi(t);
            let corr2 = 1.0 - beta2.powi(t);
            let lr = state.step_size;
            let m = state.moment1.as_mut().expect("adam moment1");
            let v = state.moment2.as_mut().expect("adam moment2");
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mhat = m[i] / corr1;
                    let vhat = v[i] / corr2;
                    p[i] -= lr * mhat / (vhat.sqrt() + epsilon);
                }
            };
            for l in 0..params.layer_count() {
                let gw = &grads.weights[l];
                let gb = &grads.biases[l];
                let (mw, mb) = (&mut m.weights[l], &mut m.biases[l]);
                let (vw, vb) = (&mut v.weights[l], &mut v.biases[l]);
                update(&mut params.weights[l], gw, mw, vw);
                update(&mut params.biases[l], gb, mb, vb);
            }
        }
    }
    Ok(())
}
