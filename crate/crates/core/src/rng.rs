//! Seeded RNG stream derivation.
//!
//! Every source of randomness in a run is a ChaCha8 stream derived from a
//! `(base seed, stream tag, index)` triple. Episode-scoped streams are
//! re-derived from the episode number, which lets a resumed run reproduce an
//! uninterrupted one without serializing generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each independent consumer of randomness gets its own tag so
/// streams never alias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    CorpusA = 1,
    CorpusB = 2,
    User = 3,
    UserB = 4,
    PlatformA = 5,
    PlatformB = 6,
    NetInit = 7,
    ExploreAlpha = 8,
    ExploreBeta = 9,
    BatchSampling = 10,
}

/// Derive a deterministic ChaCha8 stream for `(base, stream, index)`.
pub fn derive(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&base.to_le_bytes());
    seed[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    // Constant block so the all-zeros triple still keys a full-entropy state.
    seed[24..32].copy_from_slice(&0x9E37_79B9_7F4A_7C15u64.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_deterministic() {
        let mut a = derive(42, Stream::User, 7);
        let mut b = derive(42, Stream::User, 7);
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn distinct_tags_and_indices_give_distinct_streams() {
        let mut a = derive(42, Stream::User, 0);
        let mut b = derive(42, Stream::UserB, 0);
        let mut c = derive(42, Stream::User, 1);
        let (x, y, z) = (a.gen::<u64>(), b.gen::<u64>(), c.gen::<u64>());
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_ne!(y, z);
    }
}
