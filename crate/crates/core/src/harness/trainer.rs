//! Experiment drivers: the federated modes, the standalone baseline and the
//! random recommender, plus resume-from-checkpoint.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointPayload, StandaloneState,
};
use super::config::{ExperimentConfig, Mode};
use super::metrics::{write_metrics_file, MetricsRecord};
use crate::env::trajectory::{TrajectoryLog, TrajectoryRow};
use crate::env::{DualPlatformEnv, PlatformTag, SinglePlatformEnv};
use crate::fed::{
    build_alpha, build_beta, expected_selector, sample_indices, state_candidate_scores,
    AgentAlpha, FedRuntime, FedServer, OnlineValue, ProtocolConfig, TransitionAlpha,
};
use crate::nn::{
    huber, huber_prime, optimizer_step, Activation, ForwardTrace, GradientBuffer,
};
use crate::rng::{derive, Stream};
use crate::slateq::{greedy_slate, topk_slate, Slate};
use crate::{Error, Result};

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRecord>,
    pub out_dir: Option<PathBuf>,
}

enum Trainer {
    Fed(Box<FedTrainer>),
    Standalone(Box<StandaloneTrainer>),
    Random(RandomTrainer),
}

/// Run an experiment end to end: train, then write metrics, checkpoints and
/// optional logs under the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut trainer = build_trainer(config)?;
    trainer.train(config)?;
    finish(config, trainer)
}

/// Continue a checkpointed run up to `episodes` total episodes (defaults to
/// the checkpointed configuration's count). When `expected` is given, the
/// checkpoint must belong to the same training trajectory. The metrics file
/// of the resumed run covers the full history, so it equals an
/// uninterrupted run's.
pub fn resume_experiment(
    checkpoint_path: &Path,
    expected: Option<&ExperimentConfig>,
    episodes: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<RunOutput> {
    let ckpt = load_checkpoint(checkpoint_path)?;
    if let Some(expected) = expected {
        if expected.normalized_for_resume() != ckpt.config.normalized_for_resume() {
            return Err(Error::checkpoint(
                "checkpoint belongs to a different configuration",
            ));
        }
    }
    let mut config = ckpt.config.clone();
    if let Some(e) = episodes {
        config.episodes = e;
    }
    if out_dir.is_some() {
        config.out_dir = out_dir;
    }
    config.validate()?;
    let mut trainer = build_trainer(&config)?;
    trainer.restore(ckpt)?;
    trainer.train(&config)?;
    finish(&config, trainer)
}

/// Run frozen-policy evaluation episodes from a checkpoint: learning is
/// disabled, metrics start fresh, and the environment seed may be replaced.
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    episodes: Option<u64>,
    env_seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<RunOutput> {
    let ckpt = load_checkpoint(checkpoint_path)?;
    let mut config = ckpt.config.clone();
    config.is_learn = false;
    config.checkpoint_every = 0;
    if let Some(e) = episodes {
        config.episodes = e;
    }
    if let Some(s) = env_seed {
        config.seeds.env = s;
    }
    config.out_dir = out_dir;
    config.validate()?;
    let mut trainer = build_trainer(&config)?;
    match (&mut trainer, ckpt.payload) {
        (Trainer::Fed(t), CheckpointPayload::Fed(state)) => t.runtime.restore(state)?,
        (Trainer::Standalone(t), CheckpointPayload::Standalone(state)) => t.restore(state),
        _ => {
            return Err(Error::checkpoint(
                "checkpoint payload does not match the configured mode",
            ))
        }
    }
    trainer.train(&config)?;
    finish(&config, trainer)
}

fn build_trainer(config: &ExperimentConfig) -> Result<Trainer> {
    Ok(match config.mode {
        Mode::FedSlate | Mode::FedSlateExtended | Mode::FedSlateAblated => {
            Trainer::Fed(Box::new(FedTrainer::new(config)?))
        }
        Mode::SlateQStandalone => Trainer::Standalone(Box::new(StandaloneTrainer::new(config)?)),
        Mode::Random => Trainer::Random(RandomTrainer::new(config)?),
    })
}

/// An incrementally driven experiment, used by embedders (e.g. the C ABI)
/// that want to interleave training with their own control flow. The
/// exploration schedule stays anchored to the configured episode count.
pub struct Session {
    trainer: Trainer,
    config: ExperimentConfig,
}

impl Session {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            trainer: build_trainer(&config)?,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn episodes_done(&self) -> u64 {
        match &self.trainer {
            Trainer::Fed(t) => t.episodes_done,
            Trainer::Standalone(t) => t.episodes_done,
            Trainer::Random(t) => t.episodes_done,
        }
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        match &self.trainer {
            Trainer::Fed(t) => &t.metrics,
            Trainer::Standalone(t) => &t.metrics,
            Trainer::Random(t) => &t.metrics,
        }
    }

    /// Advance by `count` episodes.
    pub fn run_episodes(&mut self, count: u64) -> Result<()> {
        let mut target = self.config.clone();
        target.episodes = self.episodes_done() + count;
        self.trainer.train(&target)
    }

    /// Write the configured outputs (metrics, checkpoint, logs) and return
    /// the collected metrics.
    pub fn finish(self) -> Result<RunOutput> {
        finish(&self.config, self.trainer)
    }
}

fn finish(config: &ExperimentConfig, trainer: Trainer) -> Result<RunOutput> {
    let (metrics, checkpoint, messages, trajectory) = match trainer {
        Trainer::Fed(t) => t.into_outputs(config),
        Trainer::Standalone(t) => t.into_outputs(config),
        Trainer::Random(t) => (t.metrics, None, None, Some(t.trajectory)),
    };
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        write_metrics_file(&dir.join("metrics.csv"), &metrics)?;
        std::fs::write(dir.join("config.json"), config.to_json_pretty())?;
        if let Some(ckpt) = &checkpoint {
            save_checkpoint(&dir.join("checkpoint.fsl"), ckpt)?;
        }
        if config.record_messages {
            if let Some(text) = messages {
                std::fs::write(dir.join("messages.log"), text)?;
            }
        }
        if config.write_trajectory {
            if let Some(log) = &trajectory {
                let mut buf = Vec::new();
                log.write_csv(&mut buf)?;
                std::fs::write(dir.join("trajectory.csv"), buf)?;
            }
        }
    }
    Ok(RunOutput {
        metrics,
        out_dir: config.out_dir.clone(),
    })
}

impl Trainer {
    fn train(&mut self, config: &ExperimentConfig) -> Result<()> {
        match self {
            Trainer::Fed(t) => t.train(config),
            Trainer::Standalone(t) => t.train(config),
            Trainer::Random(t) => t.train(config.episodes),
        }
    }

    fn restore(&mut self, ckpt: Checkpoint) -> Result<()> {
        match (self, ckpt.payload) {
            (Trainer::Fed(t), CheckpointPayload::Fed(state)) => {
                t.runtime.restore(state)?;
                t.metrics = ckpt.metrics;
                t.episodes_done = ckpt.episodes_done;
                Ok(())
            }
            (Trainer::Standalone(t), CheckpointPayload::Standalone(state)) => {
                t.restore(state);
                t.metrics = ckpt.metrics;
                t.episodes_done = ckpt.episodes_done;
                Ok(())
            }
            _ => Err(Error::checkpoint(
                "checkpoint payload does not match the configured mode",
            )),
        }
    }
}

fn wall_ms(start: Instant, deterministic: bool) -> u64 {
    if deterministic {
        0
    } else {
        start.elapsed().as_millis() as u64
    }
}

/// Write `checkpoint_ep<N>.fsl` every `checkpoint_every` episodes when an
/// output directory is configured.
fn maybe_intermediate_checkpoint(
    config: &ExperimentConfig,
    episodes_done: u64,
    make: impl FnOnce() -> Checkpoint,
) -> Result<()> {
    if config.checkpoint_every == 0 || episodes_done % config.checkpoint_every != 0 {
        return Ok(());
    }
    let Some(dir) = &config.out_dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let ckpt = make();
    save_checkpoint(&dir.join(format!("checkpoint_ep{episodes_done}.fsl")), &ckpt)
}

// ---------------------------------------------------------------------------
// Federated modes.
// ---------------------------------------------------------------------------

struct FedTrainer {
    runtime: FedRuntime,
    metrics: Vec<MetricsRecord>,
    episodes_done: u64,
    deterministic_timing: bool,
}

impl FedTrainer {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let env = DualPlatformEnv::new(config.env.clone(), config.seeds.env)?;
        let mut net_rng = derive(config.seeds.nets, Stream::NetInit, 0);
        let alpha = build_alpha(
            config.env.slate_size,
            config.env.candidates,
            config.nets.local_hidden.clone(),
            &config.optimizer,
            config.replay_capacity,
            &mut net_rng,
        )?;
        let beta = build_beta(
            config.env.candidates,
            config.nets.local_hidden.clone(),
            &config.optimizer,
            config.replay_capacity,
            &mut net_rng,
        )?;
        let (global_hidden, global_activation) = match config.mode {
            Mode::FedSlateAblated => (config.nets.ablated_global_hidden.clone(), Activation::Identity),
            _ => (config.nets.global_hidden.clone(), Activation::Mish),
        };
        let fed = FedServer::new(
            config.env.candidates,
            global_hidden,
            global_activation,
            &config.optimizer,
            config.is_learn,
            config.learn_every,
            &mut net_rng,
        )?;
        let protocol = ProtocolConfig {
            gamma: config.gamma,
            batch_size: config.batch_size,
            huber_delta: config.huber_delta,
            target_sync_every: config.target_sync_every,
            epsilon: config.epsilon,
            slate_strategy: config.slate_strategy,
            extended: config.mode == Mode::FedSlateExtended,
            total_episodes: config.episodes,
            sampling_seed: config.seeds.sampling,
        };
        let mut runtime = FedRuntime::new(env, alpha, beta, fed, protocol, config.record_messages)?;
        if config.write_trajectory {
            runtime.trajectory = Some(TrajectoryLog::new());
        }
        Ok(Self {
            runtime,
            metrics: Vec::new(),
            episodes_done: 0,
            deterministic_timing: config.deterministic_timing,
        })
    }

    fn train(&mut self, config: &ExperimentConfig) -> Result<()> {
        for ep in self.episodes_done..config.episodes {
            let start = Instant::now();
            let stats = self.runtime.run_episode(ep)?;
            let rounds = stats.learning_rounds.max(1) as f64;
            self.metrics.push(MetricsRecord {
                episode: ep,
                return_a: stats.return_a,
                return_b: stats.return_b,
                epsilon: stats.epsilon,
                loss_alpha: stats.loss_a_sum / rounds,
                loss_beta: stats.loss_b_sum / rounds,
                wall_ms: wall_ms(start, self.deterministic_timing),
            });
            self.episodes_done = ep + 1;
            maybe_intermediate_checkpoint(config, self.episodes_done, || self.checkpoint(config))?;
        }
        Ok(())
    }

    fn checkpoint(&self, config: &ExperimentConfig) -> Checkpoint {
        Checkpoint {
            config: config.clone(),
            episodes_done: self.episodes_done,
            metrics: self.metrics.clone(),
            payload: CheckpointPayload::Fed(self.runtime.state()),
        }
    }

    #[allow(clippy::type_complexity)]
    fn into_outputs(
        self,
        config: &ExperimentConfig,
    ) -> (
        Vec<MetricsRecord>,
        Option<Checkpoint>,
        Option<String>,
        Option<TrajectoryLog>,
    ) {
        let ckpt = self.checkpoint(config);
        let messages = if config.record_messages {
            let mut buf = Vec::new();
            self.runtime
                .channel
                .write_log(&mut buf)
                .expect("in-memory write");
            Some(String::from_utf8(buf).expect("log is utf8"))
        } else {
            None
        };
        let trajectory = self.runtime.trajectory.clone();
        (self.metrics, Some(ckpt), messages, trajectory)
    }
}

// ---------------------------------------------------------------------------
// Standalone baseline: one platform, one local Q-network, no federation.
// ---------------------------------------------------------------------------

struct StandaloneTrainer {
    env: SinglePlatformEnv,
    agent: AgentAlpha,
    config: ExperimentConfig,
    obs: Vec<f64>,
    learning_rounds: u64,
    metrics: Vec<MetricsRecord>,
    episodes_done: u64,
    epsilon_current: f64,
    rng_explore: ChaCha8Rng,
    rng_sampling: ChaCha8Rng,
    trajectory: TrajectoryLog,
}

impl StandaloneTrainer {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut env = SinglePlatformEnv::new(config.env.clone(), config.seeds.env)?;
        let mut net_rng = derive(config.seeds.nets, Stream::NetInit, 0);
        let agent = build_alpha(
            config.env.slate_size,
            config.env.candidates,
            config.nets.local_hidden.clone(),
            &config.optimizer,
            config.replay_capacity,
            &mut net_rng,
        )?;
        let obs = env.reset(0);
        Ok(Self {
            env,
            agent,
            config: config.clone(),
            obs,
            learning_rounds: 0,
            metrics: Vec::new(),
            episodes_done: 0,
            epsilon_current: 0.0,
            rng_explore: derive(config.seeds.sampling, Stream::ExploreAlpha, 0),
            rng_sampling: derive(config.seeds.sampling, Stream::BatchSampling, 0),
            trajectory: TrajectoryLog::new(),
        })
    }

    fn restore(&mut self, state: StandaloneState) {
        self.agent.net = state.net;
        self.agent
            .target
            .set_params(state.target)
            .expect("shapes match");
        self.agent.opt = state.opt;
        self.agent.buffer = state.buffer;
        self.learning_rounds = state.learning_rounds;
    }

    fn select_slate(&mut self, q: &[f64]) -> Result<Slate> {
        use rand::Rng;
        let n = self.config.env.slate_size;
        let candidates = self.config.env.candidates;
        if self.rng_explore.gen::<f64>() < self.epsilon_current {
            let ids = sample_indices(candidates, n, &mut self.rng_explore)?;
            return Ok(Slate(ids.into_iter().map(|i| i as usize).collect()));
        }
        let scores = state_candidate_scores(&self.obs, candidates, self.config.env.null_score);
        match self.config.slate_strategy {
            crate::fed::SlateStrategy::Greedy => greedy_slate(q, &scores, n),
            crate::fed::SlateStrategy::TopK => topk_slate(q, n),
        }
    }

    /// One optimizer step on the single local network: targets from the
    /// frozen target copy, online values from clicked items (or the expected
    /// slate value on no-click).
    fn learning_round(&mut self) -> Result<Option<f64>> {
        let batch = self.config.batch_size;
        if self.agent.buffer.len() < batch {
            return Ok(None);
        }
        let candidates = self.config.env.candidates;
        let null_score = self.config.env.null_score;
        let ids = sample_indices(self.agent.buffer.len(), batch, &mut self.rng_sampling)?;

        let mut targets = Vec::with_capacity(batch);
        let mut selectors = Vec::with_capacity(batch);
        let mut states: Vec<&[f64]> = Vec::with_capacity(batch);
        for &id in &ids {
            let t = self.agent.buffer.get(id as usize)?;
            let y = if t.terminal {
                t.reward
            } else {
                let next_q = self.agent.target.forward(&t.next_state)?;
                let scores = state_candidate_scores(&t.next_state, candidates, null_score);
                crate::slateq::td_target(
                    t.reward,
                    self.config.gamma,
                    &next_q,
                    &scores,
                    self.config.env.slate_size,
                    false,
                )?
            };
            targets.push(y);
            selectors.push(match t.chosen_slot {
                Some(slot) => OnlineValue::Clicked(t.slate[slot]),
                None => expected_selector(&t.state, t.slate(), candidates, null_score),
            });
            states.push(&t.state);
        }

        let mut grads = GradientBuffer::zeros(self.agent.net.spec());
        let mut trace = ForwardTrace::default();
        let inv_batch = 1.0 / batch as f64;
        let mut loss_sum = 0.0;
        let delta = self.config.huber_delta;
        for b in 0..batch {
            let q = self.agent.net.forward_trace(states[b], &mut trace)?;
            let online = match &selectors[b] {
                OnlineValue::Clicked(item) => q[*item],
                OnlineValue::Expected { slate, probs } => slate
                    .indices()
                    .iter()
                    .zip(probs.iter())
                    .map(|(&i, &p)| p * q[i])
                    .sum(),
            };
            let residual = targets[b] - online;
            loss_sum += huber(residual, delta);
            let g = -huber_prime(residual, delta) * inv_batch;
            let mut d_q = vec![0.0; candidates];
            match &selectors[b] {
                OnlineValue::Clicked(item) => d_q[*item] += g,
                OnlineValue::Expected { slate, probs } => {
                    for (&i, &p) in slate.indices().iter().zip(probs.iter()) {
                        d_q[i] += g * p;
                    }
                }
            }
            self.agent.net.backward_from_trace(&trace, &d_q, &mut grads)?;
        }
        let mean_loss = loss_sum * inv_batch;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "standalone loss became non-finite ({mean_loss})"
            )));
        }
        optimizer_step(self.agent.net.params_mut(), &grads, &mut self.agent.opt)?;
        self.learning_rounds += 1;
        if self.learning_rounds % self.config.target_sync_every == 0 {
            self.agent.sync_target();
        }
        Ok(Some(mean_loss))
    }

    fn train(&mut self, run_config: &ExperimentConfig) -> Result<()> {
        for ep in self.episodes_done..run_config.episodes {
            let start = Instant::now();
            self.epsilon_current = self.config.epsilon.value(ep, self.config.episodes);
            self.rng_explore = derive(self.config.seeds.sampling, Stream::ExploreAlpha, ep);
            self.rng_sampling = derive(self.config.seeds.sampling, Stream::BatchSampling, ep);
            self.obs = self.env.reset(ep);
            let mut return_a = 0.0;
            let mut loss_sum = 0.0;
            let mut rounds = 0u64;
            let mut step = 0u64;
            let mut episode_step = 0u64;
            loop {
                let q = self.agent.net.forward(&self.obs)?;
                let slate = self.select_slate(&q)?;
                let (next_obs, response, reward, terminal) = self.env.step(&slate)?;
                self.agent.buffer.push(TransitionAlpha {
                    state: std::mem::replace(&mut self.obs, next_obs),
                    slate: slate.0.clone(),
                    chosen_slot: response.chosen_slot,
                    reward,
                    next_state: self.obs.clone(),
                    terminal,
                });
                return_a += reward;
                if self.config.write_trajectory {
                    let u = self.env.user_state();
                    self.trajectory.push(TrajectoryRow {
                        episode: ep,
                        step: episode_step,
                        platform: PlatformTag::A,
                        slate: slate.0.clone(),
                        chosen_slot: response.chosen_slot,
                        engagement: reward,
                        sat: u.sat,
                        nke: u.nke,
                        budget: u.budget,
                    });
                }
                episode_step += 1;
                if self.config.is_learn && step % self.config.learn_every == 0 {
                    if let Some(loss) = self.learning_round()? {
                        loss_sum += loss;
                        rounds += 1;
                    }
                }
                if terminal {
                    break;
                }
                step += 1;
            }
            self.metrics.push(MetricsRecord {
                episode: ep,
                return_a,
                return_b: 0.0,
                epsilon: self.epsilon_current,
                loss_alpha: loss_sum / rounds.max(1) as f64,
                loss_beta: 0.0,
                wall_ms: wall_ms(start, self.config.deterministic_timing),
            });
            self.episodes_done = ep + 1;
            maybe_intermediate_checkpoint(run_config, self.episodes_done, || {
                self.checkpoint(run_config)
            })?;
        }
        Ok(())
    }

    fn checkpoint(&self, config: &ExperimentConfig) -> Checkpoint {
        Checkpoint {
            config: config.clone(),
            episodes_done: self.episodes_done,
            metrics: self.metrics.clone(),
            payload: CheckpointPayload::Standalone(StandaloneState {
                net: self.agent.net.clone(),
                target: self.agent.target.params().clone(),
                opt: self.agent.opt.clone(),
                buffer: self.agent.buffer.clone(),
                learning_rounds: self.learning_rounds,
            }),
        }
    }

    #[allow(clippy::type_complexity)]
    fn into_outputs(
        self,
        config: &ExperimentConfig,
    ) -> (
        Vec<MetricsRecord>,
        Option<Checkpoint>,
        Option<String>,
        Option<TrajectoryLog>,
    ) {
        let ckpt = self.checkpoint(config);
        // No federation: the message log is empty by construction.
        (self.metrics, Some(ckpt), None, Some(self.trajectory))
    }
}

// ---------------------------------------------------------------------------
// Random recommender: uniform valid slates on both platforms, no parameters.
// ---------------------------------------------------------------------------

struct RandomTrainer {
    env: DualPlatformEnv,
    config: ExperimentConfig,
    metrics: Vec<MetricsRecord>,
    episodes_done: u64,
    trajectory: TrajectoryLog,
}

impl RandomTrainer {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            env: DualPlatformEnv::new(config.env.clone(), config.seeds.env)?,
            config: config.clone(),
            metrics: Vec::new(),
            episodes_done: 0,
            trajectory: TrajectoryLog::new(),
        })
    }

    fn train(&mut self, episodes: u64) -> Result<()> {
        let n = self.config.env.slate_size;
        let candidates = self.config.env.candidates;
        for ep in self.episodes_done..episodes {
            let start = Instant::now();
            let mut rng_a = derive(self.config.seeds.sampling, Stream::ExploreAlpha, ep);
            let mut rng_b = derive(self.config.seeds.sampling, Stream::ExploreBeta, ep);
            self.env.reset(ep);
            let mut return_a = 0.0;
            let mut return_b = 0.0;
            let mut episode_step = 0u64;
            loop {
                let slate_a = Slate(
                    sample_indices(candidates, n, &mut rng_a)?
                        .into_iter()
                        .map(|i| i as usize)
                        .collect(),
                );
                let slate_b = Slate(
                    sample_indices(candidates, n, &mut rng_b)?
                        .into_iter()
                        .map(|i| i as usize)
                        .collect(),
                );
                let out = self.env.step(&slate_a, &slate_b)?;
                return_a += out.reward_a;
                return_b += out.reward_b;
                if self.config.write_trajectory {
                    for (platform, slate, response) in [
                        (PlatformTag::A, &slate_a, &out.response_a),
                        (PlatformTag::B, &slate_b, &out.response_b),
                    ] {
                        let u = self.env.user_state(platform);
                        self.trajectory.push(TrajectoryRow {
                            episode: ep,
                            step: episode_step,
                            platform,
                            slate: slate.0.clone(),
                            chosen_slot: response.chosen_slot,
                            engagement: response.engagement,
                            sat: u.sat,
                            nke: u.nke,
                            budget: u.budget,
                        });
                    }
                }
                episode_step += 1;
                if out.terminal {
                    break;
                }
            }
            self.metrics.push(MetricsRecord {
                episode: ep,
                return_a,
                return_b,
                epsilon: 1.0,
                loss_alpha: 0.0,
                loss_beta: 0.0,
                wall_ms: wall_ms(start, self.config.deterministic_timing),
            });
            self.episodes_done = ep + 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    pub(super) fn small_config(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            episodes: 4,
            env: EnvConfig {
                candidates: 5,
                slate_size: 2,
                corpus_size: 5,
                budget: 150.0,
                ..EnvConfig::default()
            },
            nets: super::super::config::NetsConfig {
                local_hidden: vec![8, 8],
                global_hidden: vec![8],
                ablated_global_hidden: vec![8],
            },
            batch_size: 8,
            deterministic_timing: true,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn random_mode_writes_one_row_per_episode_and_no_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(Mode::Random);
        config.episodes = 10;
        config.out_dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.metrics.len(), 10);
        assert!(dir.path().join("metrics.csv").exists());
        assert!(!dir.path().join("checkpoint.fsl").exists());
        assert!(out.metrics.iter().all(|m| m.loss_alpha == 0.0));
        assert!(out.metrics.iter().all(|m| m.return_a >= 0.0 && m.return_b >= 0.0));
    }

    #[test]
    fn zero_episodes_give_an_empty_history() {
        let mut config = small_config(Mode::FedSlate);
        config.episodes = 0;
        let out = run_experiment(&config).unwrap();
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn identical_configs_produce_identical_metrics() {
        let config = small_config(Mode::FedSlate);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        super::super::metrics::write_metrics_csv(&mut csv_a, &a.metrics).unwrap();
        super::super::metrics::write_metrics_csv(&mut csv_b, &b.metrics).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn resume_from_intermediate_checkpoint_equals_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(Mode::FedSlate);
        config.episodes = 6;
        let full = run_experiment(&config).unwrap();

        let mut interrupted = config.clone();
        interrupted.checkpoint_every = 3;
        interrupted.out_dir = Some(dir.path().to_path_buf());
        run_experiment(&interrupted).unwrap();
        let resumed = resume_experiment(
            &dir.path().join("checkpoint_ep3.fsl"),
            Some(&interrupted),
            None,
            None,
        )
        .unwrap();
        assert_eq!(full.metrics, resumed.metrics);
    }

    #[test]
    fn resume_rejects_mismatched_configs() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(Mode::FedSlate);
        let mut with_out = config.clone();
        with_out.out_dir = Some(dir.path().to_path_buf());
        run_experiment(&with_out).unwrap();
        let path = dir.path().join("checkpoint.fsl");
        let mut other = config.clone();
        other.gamma = 0.123;
        assert!(resume_experiment(&path, Some(&other), None, None).is_err());
        // Episode-count and output overrides are not trajectory changes.
        assert!(resume_experiment(&path, Some(&config), Some(8), None).is_ok());
    }

    #[test]
    fn standalone_mode_trains_without_any_messages() {
        let mut config = small_config(Mode::SlateQStandalone);
        config.episodes = 3;
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.metrics.len(), 3);
        assert!(out.metrics.iter().all(|m| m.return_b == 0.0));
        assert!(out.metrics.iter().all(|m| m.loss_beta == 0.0));
    }

    #[test]
    fn is_learn_false_keeps_parameters_flat() {
        let mut config = small_config(Mode::FedSlate);
        config.is_learn = false;
        config.episodes = 3;
        let mut trainer = FedTrainer::new(&config).unwrap();
        let digest = trainer.runtime.params_digest();
        trainer.train(&config).unwrap();
        assert_eq!(trainer.runtime.params_digest(), digest);
        assert!(trainer.metrics.iter().all(|m| m.loss_alpha == 0.0));
    }

    #[test]
    fn random_slates_are_uniform_over_subsets() {
        // Frozen oracle: chi-square(0.999, df = 14) = 36.12327368039813 for
        // the 15 two-element subsets of six candidates.
        let mut rng = derive(9, Stream::ExploreAlpha, 0);
        let mut counts = std::collections::HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let mut ids = sample_indices(6, 2, &mut rng).unwrap();
            ids.sort_unstable();
            *counts.entry((ids[0], ids[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 15);
        let expected = draws as f64 / 15.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 36.12327368039813, "chi2 = {chi2}");
    }

    #[test]
    fn random_mean_return_is_seed_stable() {
        let mut means = Vec::new();
        for seed in 0..10u64 {
            let mut config = small_config(Mode::Random);
            config.episodes = 40;
            config.env = EnvConfig::default();
            config.seeds.env = seed;
            config.seeds.sampling = seed + 100;
            let out = run_experiment(&config).unwrap();
            let mean = out.metrics.iter().map(|m| m.return_b).sum::<f64>()
                / out.metrics.len() as f64;
            means.push(mean);
        }
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        for m in &means {
            assert!(
                (m - grand).abs() / grand < 0.05,
                "seed mean {m} deviates from {grand}"
            );
        }
    }
}
