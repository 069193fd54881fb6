//! Replay buffers and the per-step experience records.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::slateq::Slate;
use crate::{Error, Result};

/// Platform A's experience: the full transition including reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionAlpha {
    pub state: Vec<f64>,
    pub slate: Vec<usize>,
    pub chosen_slot: Option<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Reward-bearing extension stored only when the run operates in extended
/// mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBetaExt {
    pub chosen_slot: Option<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Platform B's experience. In base mode it holds only the observed state
/// and the recommended slate; there is no reward or next-state field to
/// read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBeta {
    pub state: Vec<f64>,
    pub slate: Vec<usize>,
    pub ext: Option<TransitionBetaExt>,
}

impl TransitionAlpha {
    pub fn slate(&self) -> Slate {
        Slate(self.slate.clone())
    }
}

impl TransitionBeta {
    pub fn slate(&self) -> Slate {
        Slate(self.slate.clone())
    }
}

/// Fixed-capacity ring buffer. Both agents push once per acting round with
/// the same capacity, so stored indices stay aligned one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Result<&T> {
        self.items
            .get(index)
            .ok_or_else(|| Error::contract(format!("replay index {index} out of range")))
    }
}

/// Uniform sample of `count` distinct indices from `[0, len)` by partial
/// Fisher-Yates; order is the draw order.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, count: usize, rng: &mut R) -> Result<Vec<u32>> {
    if count > len {
        return Err(Error::contract(format!(
            "cannot sample {count} indices from buffer of {len}"
        )));
    }
    let mut pool: Vec<u32> = (0..len as u32).collect();
    for i in 0..count {
        let j = rng.gen_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(count);
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    #[test]
    fn ring_buffer_wraps_at_capacity() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 3);
        // Positions 0 and 1 were overwritten by 3 and 4.
        assert_eq!(*buf.get(0).unwrap(), 3);
        assert_eq!(*buf.get(1).unwrap(), 4);
        assert_eq!(*buf.get(2).unwrap(), 2);
        assert!(buf.get(3).is_err());
    }

    #[test]
    fn sampling_is_without_replacement_and_seed_reproducible() {
        let mut rng = derive(1, Stream::BatchSampling, 0);
        let ids = sample_indices(50, 20, &mut rng).unwrap();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);

        let mut rng2 = derive(1, Stream::BatchSampling, 0);
        assert_eq!(ids, sample_indices(50, 20, &mut rng2).unwrap());
        assert!(sample_indices(5, 6, &mut rng).is_err());
    }

    #[test]
    fn sampled_marginals_are_uniform() {
        // Frozen oracle: chi-square(0.999, df = 99) = 148.23035916510173.
        // 1000 rounds of 10 draws from 100 indices; expected 100 per cell.
        let mut rng = derive(2, Stream::BatchSampling, 0);
        let mut counts = [0u32; 100];
        for _ in 0..1000 {
            for id in sample_indices(100, 10, &mut rng).unwrap() {
                counts[id as usize] += 1;
            }
        }
        let expected = 100.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 148.23035916510173, "chi2 = {chi2}");
    }
}
