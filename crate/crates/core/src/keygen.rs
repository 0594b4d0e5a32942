//! Entropy-banded benchmark keys.
//!
//! Each key is the bitwise AND of `q` uniform random words, so every bit is
//! set with probability `2^-q` and carries `H(2^-q)` bits of Shannon entropy.
//! Words come from a seeded ChaCha8 stream; key `i` consumes stream words
//! `[i*q*w, (i+1)*q*w)` where `w` is the key width in 32-bit words, so any
//! index range can be generated independently of the rest.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::keycodec::KeyBits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyGenSpec {
    /// Samples AND-ed per key.
    pub q: u32,
    pub seed: u64,
    pub n: usize,
    pub key_bits: u32,
}

/// The six bands used throughout the benchmarks.
pub const ENTROPY_BANDS: [u32; 6] = [1, 2, 3, 4, 8, 16];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyGenError {
    #[error("entropy of an empty key set is undefined")]
    Empty,
    #[error("sample count q must be at least 1")]
    ZeroSamples,
    #[error("key width must be 32 or 64 bits, got {0}")]
    KeyBits(u32),
}

fn check(spec: &KeyGenSpec, bits: u32) -> Result<(), KeyGenError> {
    if spec.q == 0 {
        return Err(KeyGenError::ZeroSamples);
    }
    if spec.key_bits != bits {
        return Err(KeyGenError::KeyBits(spec.key_bits));
    }
    Ok(())
}

fn stream_at<B: KeyBits>(spec: &KeyGenSpec, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words_per_key = (B::BITS / 32) as u128 * spec.q as u128;
    rng.set_word_pos(start as u128 * words_per_key);
    rng
}

#[inline]
fn next_word<B: KeyBits>(rng: &mut ChaCha8Rng) -> B {
    if B::BITS == 32 {
        B::from_u64(rng.next_u32() as u64)
    } else {
        B::from_u64(rng.next_u64())
    }
}

/// Keys `[start, start + len)` of the stream described by `spec`.
pub fn generate_range<B: KeyBits>(
    spec: &KeyGenSpec,
    start: usize,
    len: usize,
) -> Result<Vec<B>, KeyGenError> {
    check(spec, B::BITS)?;
    let mut rng = stream_at::<B>(spec, start);
    let ones = B::from_u64(u64::MAX);
    let keys = (0..len)
        .map(|_| {
            (0..spec.q).fold(ones, |acc, _| {
                B::from_u64(acc.to_u64() & next_word::<B>(&mut rng).to_u64())
            })
        })
        .collect();
    Ok(keys)
}

pub fn generate_keys<B: KeyBits>(spec: &KeyGenSpec) -> Result<Vec<B>, KeyGenError> {
    generate_range(spec, 0, spec.n)
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Per-bit entropy of keys built from `q` AND-ed uniform samples.
pub fn expected_entropy(q: u32) -> f64 {
    binary_entropy(0.5f64.powi(q as i32))
}

/// Mean over bit positions of the binary entropy of the observed fraction
/// of ones at that position.
pub fn empirical_bit_entropy<B: KeyBits>(keys: &[B]) -> Result<f64, KeyGenError> {
    if keys.is_empty() {
        return Err(KeyGenError::Empty);
    }
    let mut ones = vec![0u64; B::BITS as usize];
    for &k in keys {
        let mut w = k.to_u64();
        while w != 0 {
            ones[w.trailing_zeros() as usize] += 1;
            w &= w - 1;
        }
    }
    let n = keys.len() as f64;
    let total: f64 = ones.iter().map(|&c| binary_entropy(c as f64 / n)).sum();
    Ok(total / B::BITS as f64)
}
