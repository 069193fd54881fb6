//! Joint update of one local network and the global network.
//!
//! The composite being differentiated is `MLP([local(s) | C]; theta_f)` where
//! `C` is the other platform's Q-vector held constant. One optimizer step is
//! applied to the local parameters and one to the global parameters per call;
//! the constant side contributes no gradient anywhere.

use crate::nn::{
    huber, huber_prime, optimizer_step, DenseNet, ForwardTrace, GradientBuffer, OptimizerState,
};
use crate::slateq::{choice_scores, slate_choice_probs, td_target, ChoiceScores, Slate};
use crate::{Error, Result};

/// How the scalar online Q-value is read off a federated Q-vector.
#[derive(Debug, Clone, PartialEq)]
pub enum OnlineValue {
    /// The consumed item's Q-value (candidate index, not slot index).
    Clicked(usize),
    /// The choice-probability-weighted slate value, used when the consumed
    /// item is unknown or no click occurred.
    Expected { slate: Slate, probs: Vec<f64> },
}

impl OnlineValue {
    fn eval(&self, q: &[f64]) -> f64 {
        match self {
            OnlineValue::Clicked(item) => q[*item],
            OnlineValue::Expected { slate, probs } => slate
                .indices()
                .iter()
                .zip(probs.iter())
                .map(|(&i, &p)| p * q[i])
                .sum(),
        }
    }

    /// Scatter d(online)/d(q) scaled by `g` into `out`.
    fn scatter(&self, g: f64, out: &mut [f64]) {
        match self {
            OnlineValue::Clicked(item) => out[*item] += g,
            OnlineValue::Expected { slate, probs } => {
                for (&i, &p) in slate.indices().iter().zip(probs.iter()) {
                    out[i] += g * p;
                }
            }
        }
    }
}

/// Candidate choice scores recovered from a stored observation vector, whose
/// trailing `candidates` entries hold the candidate kaleness.
pub fn state_candidate_scores(
    state: &[f64],
    candidates: usize,
    null_score: f64,
) -> ChoiceScores {
    choice_scores(&state[state.len() - candidates..], null_score)
}

/// Per-sample TD targets: `r` when terminal, else `r + gamma * (greedy slate
/// inner product over the primed Q-row)`.
pub fn compute_targets(
    rewards: &[f64],
    terminals: &[bool],
    gamma: f64,
    next_q_rows: &[Vec<f64>],
    next_scores: &[ChoiceScores],
    slate_size: usize,
) -> Result<Vec<f64>> {
    let mut targets = Vec::with_capacity(rewards.len());
    for b in 0..rewards.len() {
        targets.push(td_target(
            rewards[b],
            gamma,
            &next_q_rows[b],
            &next_scores[b],
            slate_size,
            terminals[b],
        )?);
    }
    Ok(targets)
}

/// Expected-value selector for a recorded slate under the state's own
/// candidate scores.
pub fn expected_selector(state: &[f64], slate: Slate, candidates: usize, null_score: f64) -> OnlineValue {
    let scores = state_candidate_scores(state, candidates, null_score);
    let probs = slate_choice_probs(&slate, &scores);
    OnlineValue::Expected { slate, probs }
}

/// One batched optimizer step on the local and global networks.
///
/// Returns the mean Huber loss. Errors if the loss or any gradient stops
/// being finite.
#[allow(clippy::too_many_arguments)]
pub fn joint_update(
    local: &mut DenseNet,
    local_opt: &mut OptimizerState,
    fed: &mut DenseNet,
    fed_opt: &mut OptimizerState,
    states: &[&[f64]],
    other_q: &[Vec<f64>],
    targets: &[f64],
    selectors: &[OnlineValue],
    huber_delta: f64,
) -> Result<f64> {
    let batch = states.len();
    if other_q.len() != batch || targets.len() != batch || selectors.len() != batch {
        return Err(Error::contract("misaligned batch inputs in joint update"));
    }
    if batch == 0 {
        return Err(Error::contract("empty batch in joint update"));
    }
    let candidates = fed.spec().output_width;

    let mut local_grads = GradientBuffer::zeros(local.spec());
    let mut fed_grads = GradientBuffer::zeros(fed.spec());
    let mut local_trace = ForwardTrace::default();
    let mut fed_trace = ForwardTrace::default();
    let inv_batch = 1.0 / batch as f64;
    let mut loss_sum = 0.0;

    for b in 0..batch {
        let q_local = local.forward_trace(states[b], &mut local_trace)?;
        if other_q[b].len() != candidates {
            return Err(Error::contract("constant Q-vector has wrong length"));
        }
        let mut joined = Vec::with_capacity(2 * candidates);
        joined.extend_from_slice(&q_local);
        joined.extend_from_slice(&other_q[b]);
        let q_fed = fed.forward_trace(&joined, &mut fed_trace)?;

        let online = selectors[b].eval(&q_fed);
        let residual = targets[b] - online;
        loss_sum += huber(residual, huber_delta);

        // d(mean loss)/d(online) = -huber'(residual) / batch.
        let g = -huber_prime(residual, huber_delta) * inv_batch;
        let mut d_qfed = vec![0.0; candidates];
        selectors[b].scatter(g, &mut d_qfed);

        let d_joined = fed.backward_from_trace(&fed_trace, &d_qfed, &mut fed_grads)?;
        local.backward_from_trace(&local_trace, &d_joined[..candidates], &mut local_grads)?;
    }

    let mean_loss = loss_sum * inv_batch;
    if !mean_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss became non-finite ({mean_loss})"
        )));
    }
    optimizer_step(local.params_mut(), &local_grads, local_opt)?;
    optimizer_step(fed.params_mut(), &fed_grads, fed_opt)?;
    Ok(mean_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseNetSpec, ParameterSet};
    use crate::rng::{derive, Stream};

    fn zero_net(input: usize, output: usize) -> DenseNet {
        let spec = DenseNetSpec::new(input, vec![4], output, Activation::Identity).unwrap();
        DenseNet::from_parts(spec.clone(), ParameterSet::zeros(&spec)).unwrap()
    }

    #[test]
    fn zero_targets_and_zero_nets_leave_parameters_unchanged() {
        let mut local = zero_net(3, 2);
        let mut fed = zero_net(4, 2);
        let mut local_opt = OptimizerState::sgd(0.1);
        let mut fed_opt = OptimizerState::sgd(0.1);
        let before_local = local.params().clone();
        let before_fed = fed.params().clone();
        let states: Vec<&[f64]> = vec![&[1.0, 2.0, 0.5]];
        let loss = joint_update(
            &mut local,
            &mut local_opt,
            &mut fed,
            &mut fed_opt,
            &states,
            &[vec![0.0, 0.0]],
            &[0.0],
            &[OnlineValue::Clicked(0)],
            1.0,
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(local.params(), &before_local);
        assert_eq!(fed.params(), &before_fed);
        assert_eq!(local_opt.step_count, 1);
        assert_eq!(fed_opt.step_count, 1);
    }

    #[test]
    fn single_sample_loss_matches_hand_computation() {
        let mut rng = derive(1, Stream::NetInit, 0);
        let local_spec = DenseNetSpec::new(3, vec![5], 2, Activation::Mish).unwrap();
        let fed_spec = DenseNetSpec::new(4, vec![5], 2, Activation::Mish).unwrap();
        let mut local = DenseNet::new(local_spec, &mut rng);
        let mut fed = DenseNet::new(fed_spec, &mut rng);
        let state = [0.3, -0.4, 0.9];
        let other = vec![0.2, -0.6];
        // Hand computation: the online value for a one-item slate with all
        // probability mass on that item is just that item's federated Q.
        let q_local = local.forward(&state).unwrap();
        let joined = [q_local.clone(), other.clone()].concat();
        let q_fed = fed.forward(&joined).unwrap();
        let slate = Slate(vec![1]);
        let online = q_fed[1];
        let y = 0.75;
        let want = huber(y - online, 1.0);

        let mut local_opt = OptimizerState::sgd(1e-3);
        let mut fed_opt = OptimizerState::sgd(1e-3);
        let states: Vec<&[f64]> = vec![&state];
        let loss = joint_update(
            &mut local,
            &mut local_opt,
            &mut fed,
            &mut fed_opt,
            &states,
            &[other],
            &[y],
            &[OnlineValue::Expected {
                slate,
                probs: vec![1.0],
            }],
            1.0,
        )
        .unwrap();
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn joint_gradients_match_finite_differences() {
        let mut rng = derive(2, Stream::NetInit, 0);
        let local_spec = DenseNetSpec::new(3, vec![4], 2, Activation::Mish).unwrap();
        let fed_spec = DenseNetSpec::new(4, vec![4], 2, Activation::Mish).unwrap();
        let local = DenseNet::new(local_spec.clone(), &mut rng);
        let fed = DenseNet::new(fed_spec.clone(), &mut rng);
        let state = vec![0.5, -0.2, 0.1];
        let other = vec![0.4, 0.8];
        let y = 1.25;
        let selector = OnlineValue::Expected {
            slate: Slate(vec![0, 1]),
            probs: vec![0.6, 0.3],
        };

        let loss_of = |local: &DenseNet, fed: &DenseNet| -> f64 {
            let q_local = local.forward(&state).unwrap();
            let joined = [q_local, other.clone()].concat();
            let q_fed = fed.forward(&joined).unwrap();
            huber(y - selector.eval(&q_fed), 1.0)
        };

        // Analytic gradients via one SGD step of known size: p' = p - lr * g
        // so g = (p - p') / lr.
        let lr = 1e-6;
        let mut l2 = local.clone();
        let mut f2 = fed.clone();
        let mut lo = OptimizerState::sgd(lr);
        let mut fo = OptimizerState::sgd(lr);
        let states: Vec<&[f64]> = vec![&state];
        joint_update(
            &mut l2,
            &mut lo,
            &mut f2,
            &mut fo,
            &states,
            &[other.clone()],
            &[y],
            &[selector.clone()],
            1.0,
        )
        .unwrap();

        let h = 1e-5;
        // Check a few weights in each net against central differences.
        for (which, spec) in [(0, &local_spec), (1, &fed_spec)] {
            for layer in 0..spec.layer_count() {
                let count = if which == 0 {
                    local.params().weights(layer).len()
                } else {
                    fed.params().weights(layer).len()
                };
                for idx in [0, count - 1] {
                    let mut lp = local.clone();
                    let mut fp = fed.clone();
                    let mut lm = local.clone();
                    let mut fm = fed.clone();
                    {
                        let net = if which == 0 { &mut lp } else { &mut fp };
                        net.params_mut().weights_mut(layer)[idx] += h;
                        let net = if which == 0 { &mut lm } else { &mut fm };
                        net.params_mut().weights_mut(layer)[idx] -= h;
                    }
                    let fd = (loss_of(&lp, &fp) - loss_of(&lm, &fm)) / (2.0 * h);
                    let updated = if which == 0 {
                        l2.params().weights(layer)[idx]
                    } else {
                        f2.params().weights(layer)[idx]
                    };
                    let original = if which == 0 {
                        local.params().weights(layer)[idx]
                    } else {
                        fed.params().weights(layer)[idx]
                    };
                    let analytic = (original - updated) / lr;
                    assert!(
                        (analytic - fd).abs() < 1e-4 * fd.abs().max(1.0),
                        "net {which} layer {layer} idx {idx}: {analytic} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn targets_use_reward_only_on_terminal_samples() {
        let scores = vec![
            choice_scores(&[0.5, 0.5], 1.0),
            choice_scores(&[0.5, 0.5], 1.0),
        ];
        let targets = compute_targets(
            &[1.0, 2.0],
            &[false, true],
            0.0,
            &[vec![9.0, 9.0], vec![f64::NAN, f64::NAN]],
            &scores,
            1,
        )
        .unwrap();
        // gamma = 0 collapses both to the reward.
        assert_eq!(targets, vec![1.0, 2.0]);
    }

    #[test]
    fn expected_selector_reads_scores_from_the_state_tail() {
        // State layout ends with candidate kaleness [1.0, 1.0]; equal scores
        // with zero null mean equal probabilities.
        let state = vec![0.5, 0.0, 0.0, 1.0, 1.0];
        let sel = expected_selector(&state, Slate(vec![0, 1]), 2, 0.0);
        match sel {
            OnlineValue::Expected { probs, .. } => {
                assert!((probs[0] - 0.5).abs() < 1e-12);
                assert!((probs[1] - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected Expected selector"),
        }
    }
}
