//! User latent state and its dynamics: the exponential-kaleness choice rule,
//! log-normal engagement, and the net-kale-exposure transition.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::functions::sigmoid;

/// Static user parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserParams {
    /// Satisfaction sensitivity: sat = sigmoid(tau * nke).
    pub tau: f64,
    /// Memory discount on net kale exposure (beta of the nke recurrence,
    /// renamed to avoid colliding with agent beta).
    pub mem_discount: f64,
    /// Standard deviation of the nke transition noise (eta).
    pub nke_noise_std: f64,
    /// Standard deviation of the observation noise on satisfaction.
    pub obs_noise_std: f64,
    /// Initial net kale exposure.
    pub initial_nke: f64,
    /// Log-normal engagement parameters for the pure kale response.
    pub mu_kale: f64,
    pub sigma_kale: f64,
    /// Log-normal engagement parameters for the pure choc response.
    pub mu_choc: f64,
    pub sigma_choc: f64,
}

impl Default for UserParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            mem_discount: 0.7,
            nke_noise_std: 0.1,
            obs_noise_std: 0.05,
            initial_nke: 0.0,
            mu_kale: 2.5,
            sigma_kale: 0.1,
            mu_choc: 3.0,
            sigma_choc: 0.2,
        }
    }
}

/// Per-draw engagement parameters handed to [`engagement_sample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngagementParams {
    pub mu_kale: f64,
    pub sigma_kale: f64,
    pub mu_choc: f64,
    pub sigma_choc: f64,
}

impl From<&UserParams> for EngagementParams {
    fn from(p: &UserParams) -> Self {
        Self {
            mu_kale: p.mu_kale,
            sigma_kale: p.sigma_kale,
            mu_choc: p.mu_choc,
            sigma_choc: p.sigma_choc,
        }
    }
}

/// The user's latent state. Satisfaction is always sigmoid(tau * nke).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLatentState {
    pub nke: f64,
    pub sat: f64,
    pub budget: f64,
    pub params: UserParams,
}

impl UserLatentState {
    pub fn new(params: UserParams, budget: f64) -> Self {
        let nke = params.initial_nke;
        Self {
            nke,
            sat: sigmoid(params.tau * nke),
            budget,
            params,
        }
    }
}

/// The user's reaction to one slate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    /// Slot index within the slate; `None` is the null choice.
    pub chosen_slot: Option<usize>,
    /// Consumed engagement; zero exactly when no choice was made.
    pub engagement: f64,
}

/// Analytic choice distribution over slate slots plus the trailing null
/// option: P(i) = e^(1 - k_i) / (sum_j e^(1 - k_j) + v_null).
pub fn choice_probabilities(slate_kaleness: &[f64], null_score: f64) -> Vec<f64> {
    let scores: Vec<f64> = slate_kaleness.iter().map(|k| (1.0 - k).exp()).collect();
    let denom: f64 = scores.iter().sum::<f64>() + null_score;
    let mut probs: Vec<f64> = scores.iter().map(|v| v / denom).collect();
    probs.push(null_score / denom);
    probs
}

/// Sample the chosen slot (or the null choice) from the exponential-kaleness
/// distribution.
pub fn user_choice<R: Rng + ?Sized>(
    slate_kaleness: &[f64],
    null_score: f64,
    rng: &mut R,
) -> Option<usize> {
    debug_assert!(!slate_kaleness.is_empty());
    let probs = choice_probabilities(slate_kaleness, null_score);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (slot, p) in probs[..slate_kaleness.len()].iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(slot);
        }
    }
    None
}

/// Draw engagement from logNormal(k mu_k + (1-k) mu_c, k sigma_k + (1-k) sigma_c).
///
/// A standard-normal variate is always consumed, so configurations that zero
/// the sigmas keep identical stream positions.
pub fn engagement_sample<R: Rng + ?Sized>(
    kaleness: f64,
    params: &EngagementParams,
    rng: &mut R,
) -> f64 {
    let mu = kaleness * params.mu_kale + (1.0 - kaleness) * params.mu_choc;
    let sigma = kaleness * params.sigma_kale + (1.0 - kaleness) * params.sigma_choc;
    let z: f64 = StandardNormal.sample(rng);
    (mu + sigma * z).exp()
}

/// Advance the latent state after the user consumed an item with the given
/// kaleness: nke <- mem_discount * nke + 2(k - 1/2) + Normal(0, eta), then
/// recompute satisfaction. Budget is handled by the environment.
pub fn apply_transition<R: Rng + ?Sized>(state: &mut UserLatentState, kaleness: f64, rng: &mut R) {
    let z: f64 = StandardNormal.sample(rng);
    state.nke = state.params.mem_discount * state.nke
        + 2.0 * (kaleness - 0.5)
        + state.params.nke_noise_std * z;
    state.sat = sigmoid(state.params.tau * state.nke);
}

/// Map latent satisfaction to the observable: clip(sat + Normal(0, std), 0, 1).
pub fn observe_satisfaction<R: Rng + ?Sized>(state: &UserLatentState, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (state.sat + state.params.obs_noise_std * z).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    fn no_noise_params() -> UserParams {
        UserParams {
            nke_noise_std: 0.0,
            obs_noise_std: 0.0,
            ..UserParams::default()
        }
    }

    #[test]
    fn fresh_state_with_zero_nke_has_half_satisfaction() {
        let s = UserLatentState::new(UserParams::default(), 120.0);
        assert_eq!(s.sat, 0.5);
        assert_eq!(s.budget, 120.0);
    }

    #[test]
    fn choice_probabilities_match_frozen_example() {
        // Slate kaleness [0, 1] with null score 1: [e/(e+2), 1/(e+2), 1/(e+2)].
        let p = choice_probabilities(&[0.0, 1.0], 1.0);
        assert!((p[0] - 0.5761).abs() < 1e-3);
        assert!((p[1] - 0.2120).abs() < 1e-3);
        assert!((p[2] - 0.2120).abs() < 1e-3);
    }

    #[test]
    fn choice_distribution_sums_to_one() {
        let mut rng = derive(0, Stream::User, 0);
        for _ in 0..200 {
            let n = rng.gen_range(1..7usize);
            let ks: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p = choice_probabilities(&ks, rng.gen_range(0.0..3.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_item_with_zero_null_is_always_chosen() {
        let mut rng = derive(1, Stream::User, 0);
        for _ in 0..100 {
            assert_eq!(user_choice(&[1.0], 0.0, &mut rng), Some(0));
        }
    }

    #[test]
    fn choice_frequencies_match_analytic_probabilities() {
        let slate = [0.0, 1.0];
        let null = 1.0;
        let want = choice_probabilities(&slate, null);
        let draws = 100_000usize;
        let mut counts = [0usize; 3];
        let mut rng = derive(2, Stream::User, 0);
        for _ in 0..draws {
            match user_choice(&slate, null, &mut rng) {
                Some(s) => counts[s] += 1,
                None => counts[2] += 1,
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            let se = (want[i] * (1.0 - want[i]) / draws as f64).sqrt();
            assert!(
                (freq - want[i]).abs() < 3.0 * se,
                "slot {i}: freq {freq} vs p {} (3se = {})",
                want[i],
                3.0 * se
            );
        }
    }

    #[test]
    fn degenerate_engagement_is_exact_exponential() {
        let params = EngagementParams {
            mu_kale: 1.7,
            sigma_kale: 0.0,
            mu_choc: 0.0,
            sigma_choc: 0.0,
        };
        let mut rng = derive(3, Stream::User, 0);
        let x = engagement_sample(1.0, &params, &mut rng);
        assert_eq!(x, 1.7f64.exp());
    }

    #[test]
    fn interpolated_engagement_example() {
        // sigma = 0, k = 0.5, mu_kale = 4, mu_choc = 2 -> e^3.
        let params = EngagementParams {
            mu_kale: 4.0,
            sigma_kale: 0.0,
            mu_choc: 2.0,
            sigma_choc: 0.0,
        };
        let mut rng = derive(4, Stream::User, 0);
        let x = engagement_sample(0.5, &params, &mut rng);
        assert!((x - 20.085536923187668).abs() < 1e-12);
    }

    #[test]
    fn engagement_mean_matches_lognormal_moment() {
        let params = EngagementParams {
            mu_kale: 1.0,
            sigma_kale: 0.4,
            mu_choc: 1.0,
            sigma_choc: 0.4,
        };
        let mut rng = derive(5, Stream::User, 0);
        let draws = 100_000usize;
        let mean: f64 = (0..draws)
            .map(|_| engagement_sample(0.3, &params, &mut rng))
            .sum::<f64>()
            / draws as f64;
        let want = (1.0f64 + 0.4 * 0.4 / 2.0).exp();
        assert!(
            (mean - want).abs() / want < 0.02,
            "mean {mean} vs analytic {want}"
        );
    }

    #[test]
    fn engagement_is_strictly_positive() {
        let params = EngagementParams::from(&UserParams::default());
        let mut rng = derive(6, Stream::User, 0);
        for _ in 0..1000 {
            assert!(engagement_sample(rng.gen_range(0.0..1.0), &params, &mut rng) > 0.0);
        }
    }

    #[test]
    fn transition_arithmetic_examples() {
        let mut rng = derive(7, Stream::User, 0);
        let mut state = UserLatentState::new(
            UserParams {
                mem_discount: 0.9,
                ..no_noise_params()
            },
            120.0,
        );
        state.nke = 1.0;
        apply_transition(&mut state, 1.0, &mut rng);
        assert!((state.nke - 1.9).abs() < 1e-12);

        // k = 0.5 only scales nke by the memory discount.
        let mut state = UserLatentState::new(
            UserParams {
                mem_discount: 0.6,
                ..no_noise_params()
            },
            120.0,
        );
        state.nke = 2.0;
        apply_transition(&mut state, 0.5, &mut rng);
        assert!((state.nke - 1.2).abs() < 1e-12);

        // tau = 1 and nke = 0 gives sat = 0.5.
        let mut state = UserLatentState::new(no_noise_params(), 120.0);
        state.nke = 0.0;
        apply_transition(&mut state, 0.5, &mut rng);
        assert_eq!(state.sat, 0.5);
    }

    #[test]
    fn satisfaction_tracks_sigmoid_of_nke() {
        let mut rng = derive(8, Stream::User, 0);
        let mut state = UserLatentState::new(UserParams::default(), 120.0);
        for _ in 0..200 {
            apply_transition(&mut state, rng.gen_range(0.0..1.0), &mut rng);
            assert!(state.sat > 0.0 && state.sat < 1.0);
            let want = sigmoid(state.params.tau * state.nke);
            assert!((state.sat - want).abs() < 1e-12);
        }
    }

    #[test]
    fn observed_satisfaction_is_clipped() {
        let mut rng = derive(9, Stream::User, 0);
        let mut state = UserLatentState::new(
            UserParams {
                obs_noise_std: 5.0,
                ..UserParams::default()
            },
            120.0,
        );
        state.sat = 0.5;
        for _ in 0..200 {
            let o = observe_satisfaction(&state, &mut rng);
            assert!((0.0..=1.0).contains(&o));
        }
    }
}
