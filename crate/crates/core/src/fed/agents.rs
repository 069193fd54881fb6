//! The three agents: the feedback-owning local agent (alpha), the
//! feedback-less local agent (beta), and the central federated agent that
//! owns the global network.

use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, TransitionAlpha, TransitionBeta};
use crate::env::{alpha_obs_width, beta_obs_width};
use crate::nn::{copy_to_target, Activation, DenseNet, DenseNetSpec, OptimizerState};
use crate::{Error, Result};

/// Optimizer settings shared by all three networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub algo: OptimizerAlgo,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerAlgo {
    Adam,
    Sgd,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algo: OptimizerAlgo::Adam,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn build(&self, spec: &DenseNetSpec) -> OptimizerState {
        match self.algo {
            OptimizerAlgo::Adam => OptimizerState::adam_with(
                spec,
                self.step_size,
                self.beta1,
                self.beta2,
                self.epsilon,
            ),
            OptimizerAlgo::Sgd => OptimizerState::sgd(self.step_size),
        }
    }
}

/// A local Q-network bundle: online net, frozen target copy, optimizer and
/// replay buffer.
#[derive(Debug, Clone)]
pub struct LocalAgent<T> {
    pub net: DenseNet,
    pub target: DenseNet,
    pub opt: OptimizerState,
    pub buffer: ReplayBuffer<T>,
}

impl<T> LocalAgent<T> {
    fn new(spec: DenseNetSpec, opt: &OptimizerConfig, capacity: usize, net: DenseNet) -> Self {
        let target = DenseNet::from_parts(spec.clone(), copy_to_target(net.params()))
            .expect("target shares the online spec");
        Self {
            opt: opt.build(&spec),
            buffer: ReplayBuffer::new(capacity),
            net,
            target,
        }
    }

    /// Copy online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target
            .set_params(copy_to_target(self.net.params()))
            .expect("target shares the online spec");
    }
}

pub type AgentAlpha = LocalAgent<TransitionAlpha>;
pub type AgentBeta = LocalAgent<TransitionBeta>;

/// Build agent alpha. Its observation width is `1 + 5n + N` and its output
/// width equals the candidate count; both are checked at construction.
pub fn build_alpha<R: rand::Rng + ?Sized>(
    slate_size: usize,
    candidates: usize,
    hidden: Vec<usize>,
    opt: &OptimizerConfig,
    capacity: usize,
    rng: &mut R,
) -> Result<AgentAlpha> {
    if hidden.is_empty() {
        return Err(Error::config("local networks need at least one hidden layer"));
    }
    let spec = DenseNetSpec::new(
        alpha_obs_width(slate_size, candidates),
        hidden,
        candidates,
        Activation::Mish,
    )?;
    let net = DenseNet::new(spec.clone(), rng);
    Ok(LocalAgent::new(spec, opt, capacity, net))
}

/// Build agent beta. Its observation width is `1 + N`.
pub fn build_beta<R: rand::Rng + ?Sized>(
    candidates: usize,
    hidden: Vec<usize>,
    opt: &OptimizerConfig,
    capacity: usize,
    rng: &mut R,
) -> Result<AgentBeta> {
    if hidden.is_empty() {
        return Err(Error::config("local networks need at least one hidden layer"));
    }
    let spec = DenseNetSpec::new(
        beta_obs_width(candidates),
        hidden,
        candidates,
        Activation::Mish,
    )?;
    let net = DenseNet::new(spec.clone(), rng);
    Ok(LocalAgent::new(spec, opt, capacity, net))
}

/// The central federated agent: the global network mapping the two
/// concatenated local Q-vectors to the Q-values used for slate selection.
#[derive(Debug, Clone)]
pub struct FedServer {
    pub net: DenseNet,
    pub target: DenseNet,
    pub opt: OptimizerState,
    pub is_learn: bool,
    pub learn_every: u64,
    candidates: usize,
}

impl FedServer {
    pub fn new<R: rand::Rng + ?Sized>(
        candidates: usize,
        hidden: Vec<usize>,
        activation: Activation,
        opt: &OptimizerConfig,
        is_learn: bool,
        learn_every: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if learn_every == 0 {
            return Err(Error::config("learn_every must be positive"));
        }
        let spec = DenseNetSpec::new(2 * candidates, hidden, candidates, activation)?;
        let net = DenseNet::new(spec.clone(), rng);
        let target = DenseNet::from_parts(spec.clone(), copy_to_target(net.params()))
            .expect("target shares the online spec");
        Ok(Self {
            net,
            target,
            opt: opt.build(&spec),
            is_learn,
            learn_every,
            candidates,
        })
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn sync_target(&mut self) {
        self.target
            .set_params(copy_to_target(self.net.params()))
            .expect("target shares the online spec");
    }

    /// Federated Q-values for agent alpha: the global net applied to
    /// `[own Q | other Q]` with alpha's vector in the first position.
    pub fn forward_alpha(&self, q_alpha: &[f64], q_beta_const: &[f64]) -> Result<Vec<f64>> {
        self.forward_joined(&self.net, q_alpha, q_beta_const)
    }

    /// Federated Q-values for agent beta, with beta's vector first.
    pub fn forward_beta(&self, q_beta: &[f64], q_alpha_const: &[f64]) -> Result<Vec<f64>> {
        self.forward_joined(&self.net, q_beta, q_alpha_const)
    }

    /// Same as [`FedServer::forward_alpha`] under the frozen target
    /// parameters, used for next-state values.
    pub fn forward_alpha_target(&self, q_alpha: &[f64], q_beta_const: &[f64]) -> Result<Vec<f64>> {
        self.forward_joined(&self.target, q_alpha, q_beta_const)
    }

    pub fn forward_beta_target(&self, q_beta: &[f64], q_alpha_const: &[f64]) -> Result<Vec<f64>> {
        self.forward_joined(&self.target, q_beta, q_alpha_const)
    }

    fn forward_joined(&self, net: &DenseNet, own: &[f64], other: &[f64]) -> Result<Vec<f64>> {
        if own.len() != self.candidates || other.len() != self.candidates {
            return Err(Error::contract(format!(
                "federated input halves must each have length {}",
                self.candidates
            )));
        }
        let mut joined = Vec::with_capacity(2 * self.candidates);
        joined.extend_from_slice(own);
        joined.extend_from_slice(other);
        net.forward(&joined)
    }
}
