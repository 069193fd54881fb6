//! The two-platform "Choc vs. Kale" simulator.
//!
//! Two document corpora (platform A and platform B) face a single user. In
//! coupled mode both platforms read and write the same latent user state; in
//! sparse mode each platform owns an independently seeded copy. Each
//! environment step is a strict A-then-B pair of interactions: the user
//! reacts to platform A's slate, the latent state advances, then the user
//! reacts to platform B's slate.

pub mod trajectory;
mod user;

pub use user::{
    apply_transition, choice_probabilities, engagement_sample, observe_satisfaction, user_choice,
    EngagementParams, ResponseRecord, UserLatentState, UserParams,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive, Stream};
use crate::slateq::Slate;
use crate::{Error, Result};

/// Length of platform A's engagement history block, in steps.
pub const HISTORY_STEPS: usize = 5;

/// Observation width for the feedback-owning platform: satisfaction,
/// HISTORY_STEPS response vectors of slate length, candidate features.
pub fn alpha_obs_width(slate_size: usize, candidates: usize) -> usize {
    1 + HISTORY_STEPS * slate_size + candidates
}

/// Observation width for the feedback-less platform: satisfaction plus
/// candidate features.
pub fn beta_obs_width(candidates: usize) -> usize {
    1 + candidates
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlatformTag {
    A,
    B,
}

impl std::fmt::Display for PlatformTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlatformTag::A => write!(f, "A"),
            PlatformTag::B => write!(f, "B"),
        }
    }
}

/// An item: dense integer id plus a kaleness score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub kaleness: f64,
}

/// A platform's document pool. Candidate selection returns the first
/// `candidates` documents in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub platform: PlatformTag,
    docs: Vec<Document>,
    candidates: usize,
}

impl Corpus {
    /// Kaleness drawn i.i.d. uniform over [0, 1] from the corpus stream.
    pub fn generate<R: Rng + ?Sized>(
        platform: PlatformTag,
        size: usize,
        candidates: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let docs = (0..size)
            .map(|id| Document {
                id,
                kaleness: rng.gen_range(0.0..=1.0),
            })
            .collect();
        Self::from_docs(platform, docs, candidates)
    }

    pub fn from_kaleness(
        platform: PlatformTag,
        kaleness: Vec<f64>,
        candidates: usize,
    ) -> Result<Self> {
        let docs = kaleness
            .into_iter()
            .enumerate()
            .map(|(id, k)| Document { id, kaleness: k })
            .collect();
        Self::from_docs(platform, docs, candidates)
    }

    fn from_docs(platform: PlatformTag, docs: Vec<Document>, candidates: usize) -> Result<Self> {
        if candidates == 0 || candidates > docs.len() {
            return Err(Error::config(format!(
                "candidate count {candidates} invalid for corpus of {} documents",
                docs.len()
            )));
        }
        if docs.iter().any(|d| !(0.0..=1.0).contains(&d.kaleness)) {
            return Err(Error::config("kaleness must lie in [0, 1]"));
        }
        Ok(Self {
            platform,
            docs,
            candidates,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates
    }

    /// Kaleness of the current candidates, id-ordered.
    pub fn candidate_features(&self) -> Vec<f64> {
        self.docs[..self.candidates]
            .iter()
            .map(|d| d.kaleness)
            .collect()
    }

    pub fn kaleness_of(&self, candidate: usize) -> f64 {
        self.docs[candidate].kaleness
    }
}

/// Whether both platforms share one latent user state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Coupled,
    Sparse,
}

/// How the time budget is consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetCost {
    /// Every platform interaction costs one budget unit, click or not.
    PerInteraction,
    /// A click consumes the engagement itself; a no-click costs
    /// `no_click_cost`.
    Engagement,
}

/// Order in which the two platforms act within one environment step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlatformOrder {
    /// Strict A-then-B every step.
    Alternating,
    /// Coin-flip order per step.
    Randomized,
}

/// Environment block of the experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Candidate count N per platform.
    pub candidates: usize,
    /// Slate size n.
    pub slate_size: usize,
    /// Documents per corpus (>= candidates).
    pub corpus_size: usize,
    /// Initial time budget per episode.
    pub budget: f64,
    pub coupling: Coupling,
    /// Score of the null (no-click) option.
    pub null_score: f64,
    pub budget_cost: BudgetCost,
    /// Budget charge for a no-click interaction in `Engagement` mode.
    pub no_click_cost: f64,
    /// Scale the log-engagement mean by current satisfaction, tying
    /// long-term satisfaction to future engagement.
    pub sat_scales_engagement: bool,
    pub platform_order: PlatformOrder,
    pub user: UserParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            candidates: 50,
            slate_size: 5,
            corpus_size: 50,
            budget: 120.0,
            coupling: Coupling::Coupled,
            null_score: 1.0,
            budget_cost: BudgetCost::Engagement,
            no_click_cost: 1.0,
            sat_scales_engagement: false,
            platform_order: PlatformOrder::Alternating,
            user: UserParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::config("env.candidates must be positive"));
        }
        if self.slate_size == 0 || self.slate_size > self.candidates {
            return Err(Error::config(
                "env.slate_size must be in 1..=env.candidates",
            ));
        }
        if self.corpus_size < self.candidates {
            return Err(Error::config("env.corpus_size must be >= env.candidates"));
        }
        if self.budget <= 0.0 {
            return Err(Error::config("env.budget must be positive"));
        }
        if self.null_score < 0.0 {
            return Err(Error::config("env.null_score must be nonnegative"));
        }
        if self.no_click_cost <= 0.0 {
            return Err(Error::config("env.no_click_cost must be positive"));
        }
        if !(0.0..1.0).contains(&self.user.mem_discount) {
            return Err(Error::config("user.mem_discount must be in [0, 1)"));
        }
        if self.user.tau <= 0.0 {
            return Err(Error::config("user.tau must be positive"));
        }
        if self.user.nke_noise_std < 0.0 || self.user.obs_noise_std < 0.0 {
            return Err(Error::config("noise standard deviations must be >= 0"));
        }
        Ok(())
    }
}

/// Result of one paired environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs_a: Vec<f64>,
    pub obs_b: Vec<f64>,
    pub response_a: ResponseRecord,
    /// Platform B's response. Its engagement is produced for evaluation
    /// only; base-mode learning never reads it.
    pub response_b: ResponseRecord,
    pub reward_a: f64,
    pub reward_b: f64,
    pub terminal: bool,
}

/// Minimum budget charge per interaction in `Engagement` mode, enforcing
/// finite episodes even for vanishingly small engagements.
const MIN_BUDGET_COST: f64 = 0.01;

/// One platform's interaction with the user.
fn interact(
    corpus: &Corpus,
    slate: &Slate,
    user: &mut UserLatentState,
    config: &EnvConfig,
    platform_rng: &mut ChaCha8Rng,
    user_rng: &mut ChaCha8Rng,
) -> ResponseRecord {
    let slate_kaleness: Vec<f64> = slate
        .indices()
        .iter()
        .map(|&i| corpus.kaleness_of(i))
        .collect();
    let chosen_slot = user_choice(&slate_kaleness, config.null_score, platform_rng);
    match chosen_slot {
        Some(slot) => {
            let k = slate_kaleness[slot];
            let mut params = EngagementParams::from(&user.params);
            if config.sat_scales_engagement {
                params.mu_kale *= user.sat;
                params.mu_choc *= user.sat;
            }
            let engagement = engagement_sample(k, &params, platform_rng);
            apply_transition(user, k, user_rng);
            user.budget -= match config.budget_cost {
                BudgetCost::PerInteraction => 1.0,
                BudgetCost::Engagement => engagement.max(MIN_BUDGET_COST),
            };
            ResponseRecord {
                chosen_slot: Some(slot),
                engagement,
            }
        }
        None => {
            user.budget -= match config.budget_cost {
                BudgetCost::PerInteraction => 1.0,
                BudgetCost::Engagement => config.no_click_cost,
            };
            ResponseRecord {
                chosen_slot: None,
                engagement: 0.0,
            }
        }
    }
}

/// The dual-platform environment.
#[derive(Debug, Clone)]
pub struct DualPlatformEnv {
    config: EnvConfig,
    base_seed: u64,
    corpus_a: Corpus,
    corpus_b: Corpus,
    /// The user as seen by platform A; the only instance in coupled mode.
    user_a: UserLatentState,
    /// Present only in sparse mode.
    user_b: Option<UserLatentState>,
    rng_user_a: ChaCha8Rng,
    rng_user_b: ChaCha8Rng,
    rng_platform_a: ChaCha8Rng,
    rng_platform_b: ChaCha8Rng,
    /// Most recent first; each entry has one engagement per slate slot.
    history_a: Vec<Vec<f64>>,
    step: u64,
}

impl DualPlatformEnv {
    pub fn new(config: EnvConfig, base_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng_ca = derive(base_seed, Stream::CorpusA, 0);
        let mut rng_cb = derive(base_seed, Stream::CorpusB, 0);
        let corpus_a = Corpus::generate(
            PlatformTag::A,
            config.corpus_size,
            config.candidates,
            &mut rng_ca,
        )?;
        let corpus_b = Corpus::generate(
            PlatformTag::B,
            config.corpus_size,
            config.candidates,
            &mut rng_cb,
        )?;
        let user = UserLatentState::new(config.user, config.budget);
        let mut env = Self {
            user_a: user,
            user_b: None,
            rng_user_a: derive(base_seed, Stream::User, 0),
            rng_user_b: derive(base_seed, Stream::UserB, 0),
            rng_platform_a: derive(base_seed, Stream::PlatformA, 0),
            rng_platform_b: derive(base_seed, Stream::PlatformB, 0),
            history_a: Vec::new(),
            step: 0,
            config,
            base_seed,
            corpus_a,
            corpus_b,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn corpus(&self, platform: PlatformTag) -> &Corpus {
        match platform {
            PlatformTag::A => &self.corpus_a,
            PlatformTag::B => &self.corpus_b,
        }
    }

    /// Kaleness of the current candidates on one platform.
    pub fn candidate_features(&self, platform: PlatformTag) -> Vec<f64> {
        self.corpus(platform).candidate_features()
    }

    /// Current latent user state as seen by a platform.
    pub fn user_state(&self, platform: PlatformTag) -> &UserLatentState {
        match (platform, &self.user_b) {
            (PlatformTag::A, _) | (PlatformTag::B, None) => &self.user_a,
            (PlatformTag::B, Some(u)) => u,
        }
    }

    /// Number of live latent-state instances (one when coupled, two when
    /// sparse).
    pub fn latent_state_count(&self) -> usize {
        1 + usize::from(self.user_b.is_some())
    }

    /// Start a fresh episode. All per-episode streams are re-derived from
    /// `(base seed, episode)`, so the same arguments always reproduce the
    /// same episode.
    pub fn reset(&mut self, episode: u64) -> (Vec<f64>, Vec<f64>) {
        self.rng_user_a = derive(self.base_seed, Stream::User, episode);
        self.rng_user_b = derive(self.base_seed, Stream::UserB, episode);
        self.rng_platform_a = derive(self.base_seed, Stream::PlatformA, episode);
        self.rng_platform_b = derive(self.base_seed, Stream::PlatformB, episode);
        self.user_a = UserLatentState::new(self.config.user, self.config.budget);
        self.user_b = match self.config.coupling {
            Coupling::Coupled => None,
            Coupling::Sparse => Some(UserLatentState::new(self.config.user, self.config.budget)),
        };
        self.history_a.clear();
        self.step = 0;
        (self.observe_alpha(), self.observe_beta())
    }

    /// Observation for platform A: [noisy satisfaction, engagement history
    /// (most recent step first, zero-padded), candidate kaleness].
    fn observe_alpha(&mut self) -> Vec<f64> {
        let n = self.config.slate_size;
        let mut obs = Vec::with_capacity(alpha_obs_width(n, self.config.candidates));
        obs.push(observe_satisfaction(&self.user_a, &mut self.rng_platform_a));
        for i in 0..HISTORY_STEPS {
            match self.history_a.get(i) {
                Some(row) => obs.extend_from_slice(row),
                None => obs.extend(std::iter::repeat(0.0).take(n)),
            }
        }
        obs.extend(self.corpus_a.candidate_features());
        obs
    }

    /// Observation for platform B: [noisy satisfaction, candidate kaleness].
    fn observe_beta(&mut self) -> Vec<f64> {
        let user = match &self.user_b {
            Some(u) => u,
            None => &self.user_a,
        };
        let mut obs = Vec::with_capacity(beta_obs_width(self.config.candidates));
        obs.push(observe_satisfaction(user, &mut self.rng_platform_b));
        obs.extend(self.corpus_b.candidate_features());
        obs
    }

    /// One paired step: the user reacts to platform A's slate, then to
    /// platform B's on the updated state (shared in coupled mode). Terminal
    /// once any latent state's budget is exhausted.
    pub fn step(&mut self, slate_a: &Slate, slate_b: &Slate) -> Result<StepOutcome> {
        if slate_a.len() != self.config.slate_size || slate_b.len() != self.config.slate_size {
            return Err(Error::contract("slate size does not match configuration"));
        }
        slate_a.validate(self.config.candidates)?;
        slate_b.validate(self.config.candidates)?;

        let b_first = match self.config.platform_order {
            PlatformOrder::Alternating => false,
            PlatformOrder::Randomized => self.rng_user_a.gen::<bool>(),
        };

        let (response_a, response_b) = if b_first {
            let rb = self.interact_b(slate_b);
            let ra = self.interact_a(slate_a);
            (ra, rb)
        } else {
            let ra = self.interact_a(slate_a);
            let rb = self.interact_b(slate_b);
            (ra, rb)
        };

        // Platform A's history records per-slot engagement of its own slate.
        let mut row = vec![0.0; self.config.slate_size];
        if let Some(slot) = response_a.chosen_slot {
            row[slot] = response_a.engagement;
        }
        self.history_a.insert(0, row);
        self.history_a.truncate(HISTORY_STEPS);

        self.step += 1;
        let terminal = self.user_a.budget <= 0.0
            || self.user_b.as_ref().is_some_and(|u| u.budget <= 0.0);
        Ok(StepOutcome {
            obs_a: self.observe_alpha(),
            obs_b: self.observe_beta(),
            reward_a: response_a.engagement,
            reward_b: response_b.engagement,
            response_a,
            response_b,
            terminal,
        })
    }

    fn interact_a(&mut self, slate: &Slate) -> ResponseRecord {
        interact(
            &self.corpus_a,
            slate,
            &mut self.user_a,
            &self.config,
            &mut self.rng_platform_a,
            &mut self.rng_user_a,
        )
    }

    fn interact_b(&mut self, slate: &Slate) -> ResponseRecord {
        let config = &self.config;
        match &mut self.user_b {
            Some(user) => interact(
                &self.corpus_b,
                slate,
                user,
                config,
                &mut self.rng_platform_b,
                &mut self.rng_user_b,
            ),
            None => interact(
                &self.corpus_b,
                slate,
                &mut self.user_a,
                config,
                &mut self.rng_platform_b,
                &mut self.rng_user_a,
            ),
        }
    }
}

/// Single-platform variant used by the standalone baseline: one corpus, one
/// user, one interaction per step. Observations use the platform-A encoding.
#[derive(Debug, Clone)]
pub struct SinglePlatformEnv {
    config: EnvConfig,
    base_seed: u64,
    corpus: Corpus,
    user: UserLatentState,
    rng_user: ChaCha8Rng,
    rng_platform: ChaCha8Rng,
    history: Vec<Vec<f64>>,
}

impl SinglePlatformEnv {
    pub fn new(config: EnvConfig, base_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng_c = derive(base_seed, Stream::CorpusA, 0);
        let corpus = Corpus::generate(
            PlatformTag::A,
            config.corpus_size,
            config.candidates,
            &mut rng_c,
        )?;
        let user = UserLatentState::new(config.user, config.budget);
        let mut env = Self {
            user,
            rng_user: derive(base_seed, Stream::User, 0),
            rng_platform: derive(base_seed, Stream::PlatformA, 0),
            history: Vec::new(),
            config,
            base_seed,
            corpus,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn user_state(&self) -> &UserLatentState {
        &self.user
    }

    pub fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.rng_user = derive(self.base_seed, Stream::User, episode);
        self.rng_platform = derive(self.base_seed, Stream::PlatformA, episode);
        self.user = UserLatentState::new(self.config.user, self.config.budget);
        self.history.clear();
        self.observe()
    }

    fn observe(&mut self) -> Vec<f64> {
        let n = self.config.slate_size;
        let mut obs =
            Vec::with_capacity(alpha_obs_width(n, self.config.candidates));
        obs.push(observe_satisfaction(&self.user, &mut self.rng_platform));
        for i in 0..HISTORY_STEPS {
            match self.history.get(i) {
                Some(row) => obs.extend_from_slice(row),
                None => obs.extend(std::iter::repeat(0.0).take(n)),
            }
        }
        obs.extend(self.corpus.candidate_features());
        obs
    }

    pub fn step(&mut self, slate: &Slate) -> Result<(Vec<f64>, ResponseRecord, f64, bool)> {
        if slate.len() != self.config.slate_size {
            return Err(Error::contract("slate size does not match configuration"));
        }
        slate.validate(self.config.candidates)?;
        let response = interact(
            &self.corpus,
            slate,
            &mut self.user,
            &self.config,
            &mut self.rng_platform,
            &mut self.rng_user,
        );
        let mut row = vec![0.0; self.config.slate_size];
        if let Some(slot) = response.chosen_slot {
            row[slot] = response.engagement;
        }
        self.history.insert(0, row);
        self.history.truncate(HISTORY_STEPS);
        let terminal = self.user.budget <= 0.0;
        Ok((self.observe(), response, response.engagement, terminal))
    }
}
