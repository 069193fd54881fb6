//! Item-level Q decomposition and slate construction.
//!
//! A slate's value is the choice-probability-weighted sum of per-item
//! Q-values. Slates are built either greedily (each slot maximizes the
//! marginal ratio objective over the partial slate) or by plain top-k.
//! All functions here are pure and safe for concurrent use.

use crate::{Error, Result};

/// Per-candidate Q-values, one entry per candidate document.
pub type ItemQVector = Vec<f64>;

/// Unnormalized user choice scores: `v[i]` per item plus the score of the
/// null (no-click) option.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceScores {
    pub item: Vec<f64>,
    pub null: f64,
}

/// An ordered set of distinct candidate indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slate(pub Vec<usize>);

impl Slate {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Validates distinctness and range against the candidate count.
    pub fn validate(&self, candidate_count: usize) -> Result<()> {
        let mut seen = vec![false; candidate_count];
        for &i in &self.0 {
            if i >= candidate_count {
                return Err(Error::contract(format!(
                    "slate index {i} out of range (N = {candidate_count})"
                )));
            }
            if seen[i] {
                return Err(Error::contract(format!("duplicate slate index {i}")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Choice scores from candidate kaleness: v_i = e^(1 - k_i).
pub fn choice_scores(candidate_kaleness: &[f64], null_score: f64) -> ChoiceScores {
    ChoiceScores {
        item: candidate_kaleness.iter().map(|k| (1.0 - k).exp()).collect(),
        null: null_score,
    }
}

/// Conditional-logit choice probabilities over slate slots plus the null
/// option in the final position: P(i) = v_i / (sum_j v_j + v_null).
pub fn slate_choice_probs(slate: &Slate, scores: &ChoiceScores) -> Vec<f64> {
    let denom: f64 =
        slate.indices().iter().map(|&i| scores.item[i]).sum::<f64>() + scores.null;
    let mut probs: Vec<f64> = slate
        .indices()
        .iter()
        .map(|&i| scores.item[i] / denom)
        .collect();
    probs.push(scores.null / denom);
    probs
}

/// Slate value under the decomposition: sum over slots of P(slot) * Q(item).
/// The trailing null probability contributes zero.
pub fn slate_q_value(slate: &Slate, probs: &[f64], item_q: &[f64]) -> f64 {
    slate
        .indices()
        .iter()
        .zip(probs.iter())
        .map(|(&i, &p)| p * item_q[i])
        .sum()
}

/// The online slate value used when the consumed item is unknown: identical
/// arithmetic to [`slate_q_value`], exposed under its role as the expected
/// (inner-product) Q-value.
pub fn expected_slate_q(slate: &Slate, probs: &[f64], item_q: &[f64]) -> f64 {
    slate_q_value(slate, probs, item_q)
}

/// Greedy slate construction. Slot L maximizes
///
/// ```text
/// (v_i Q_i + sum_{l<L} v_l Q_l) / (v_i + v_null + sum_{l<L} v_l)
/// ```
///
/// over candidates not yet in the slate; ties break toward the smallest
/// candidate index.
pub fn greedy_slate(item_q: &[f64], scores: &ChoiceScores, n: usize) -> Result<Slate> {
    let count = item_q.len();
    if scores.item.len() != count {
        return Err(Error::contract("scores and Q-vector lengths differ"));
    }
    if n > count {
        return Err(Error::contract(format!(
            "slate size {n} exceeds candidate count {count}"
        )));
    }
    let mut chosen = Vec::with_capacity(n);
    let mut in_slate = vec![false; count];
    let mut acc_vq = 0.0; // sum of v_l * Q_l over the partial slate
    let mut acc_v = 0.0; // sum of v_l over the partial slate
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..count {
            if in_slate[i] {
                continue;
            }
            let v = scores.item[i];
            let objective = (v * item_q[i] + acc_vq) / (v + scores.null + acc_v);
            match best {
                Some((_, b)) if objective <= b => {}
                _ => best = Some((i, objective)),
            }
        }
        let (idx, _) = best.expect("n <= candidate count");
        chosen.push(idx);
        in_slate[idx] = true;
        acc_vq += scores.item[idx] * item_q[idx];
        acc_v += scores.item[idx];
    }
    Ok(Slate(chosen))
}

/// Indices of the n largest Q-values, in descending Q order; ties break
/// toward the smallest index.
pub fn topk_slate(item_q: &[f64], n: usize) -> Result<Slate> {
    if n > item_q.len() {
        return Err(Error::contract(format!(
            "slate size {n} exceeds candidate count {}",
            item_q.len()
        )));
    }
    let mut order: Vec<usize> = (0..item_q.len()).collect();
    // Stable sort keeps the smallest index first among equal Q-values.
    order.sort_by(|&a, &b| {
        item_q[b]
            .partial_cmp(&item_q[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.truncate(n);
    Ok(Slate(order))
}

/// One-step TD target: `r` when terminal, else
/// `r + gamma * slate_q_value(greedy slate on the next state)`.
///
/// The next-state arguments are only touched on the non-terminal branch.
pub fn td_target(
    r: f64,
    gamma: f64,
    next_item_q: &[f64],
    next_scores: &ChoiceScores,
    n: usize,
    terminal: bool,
) -> Result<f64> {
    if terminal {
        return Ok(r);
    }
    let slate = greedy_slate(next_item_q, next_scores, n)?;
    let probs = slate_choice_probs(&slate, next_scores);
    Ok(r + gamma * slate_q_value(&slate, &probs, next_item_q))
}
