//! Order-preserving key encodings and radix planning.
//!
//! Every supported key type maps onto an unsigned bit pattern of the same
//! width such that unsigned comparison of the patterns agrees with the
//! source type's order. Radix sorting then only ever deals with `u32` or
//! `u64` words.
//!
//! | type | rule |
//! |------|------|
//! | `u32`, `u64` | identity |
//! | `i32`, `i64` | flip the sign bit |
//! | `f32`, `f64` | negative: flip all bits; positive: flip the sign bit |
//!
//! Under the float rule `-0.0` sorts immediately before `+0.0`. NaNs with
//! the sign bit clear sort after `+inf`, NaNs with the sign bit set sort
//! before `-inf`. Decoding is the exact inverse, NaN payloads included.

use std::fmt::Debug;

use thiserror::Error;

/// Largest tile the 30-bit chained-scan counters can describe.
pub const MAX_TILE_SIZE: usize = (1 << 30) - 1;
/// Default and largest strip handled by one chained-scan invocation.
pub const MAX_STRIP_SIZE: usize = 1 << 28;
/// Default and largest histogram portion counted in 32-bit local counters.
pub const MAX_PORTION_SIZE: usize = 1 << 30;
pub const DEFAULT_DIGIT_BITS: u32 = 8;
pub const DEFAULT_TILE_SIZE: usize = 4096;

/// Unsigned word that carries an encoded key.
pub trait KeyBits: Copy + Clone + Default + Eq + Ord + Debug + Send + Sync + 'static {
    const BITS: u32;

    /// The `bits`-wide field starting at `shift`, as an index.
    fn field(self, shift: u32, mask: u32) -> usize;

    fn to_u64(self) -> u64;

    /// Truncating conversion.
    fn from_u64(v: u64) -> Self;

    fn bit(self, i: u32) -> bool {
        (self.to_u64() >> i) & 1 == 1
    }
}

impl KeyBits for u32 {
    const BITS: u32 = 32;

    #[inline(always)]
    fn field(self, shift: u32, mask: u32) -> usize {
        ((self >> shift) & mask) as usize
    }

    #[inline(always)]
    fn to_u64(self) -> u64 {
        self as u64
    }

    #[inline(always)]
    fn from_u64(v: u64) -> Self {
        v as u32
    }
}

impl KeyBits for u64 {
    const BITS: u32 = 64;

    #[inline(always)]
    fn field(self, shift: u32, mask: u32) -> usize {
        ((self >> shift) & mask as u64) as usize
    }

    #[inline(always)]
    fn to_u64(self) -> u64 {
        self
    }

    #[inline(always)]
    fn from_u64(v: u64) -> Self {
        v
    }
}

/// A key type that can be radix sorted through an order-preserving encoding.
pub trait RadixKey: Copy + Send + Sync + 'static {
    type Bits: KeyBits;

    fn encode(self) -> Self::Bits;
    fn decode(bits: Self::Bits) -> Self;
}

impl RadixKey for u32 {
    type Bits = u32;

    #[inline(always)]
    fn encode(self) -> u32 {
        self
    }

    #[inline(always)]
    fn decode(bits: u32) -> Self {
        bits
    }
}

impl RadixKey for u64 {
    type Bits = u64;

    #[inline(always)]
    fn encode(self) -> u64 {
        self
    }

    #[inline(always)]
    fn decode(bits: u64) -> Self {
        bits
    }
}

impl RadixKey for i32 {
    type Bits = u32;

    #[inline(always)]
    fn encode(self) -> u32 {
        (self as u32) ^ (1 << 31)
    }

    #[inline(always)]
    fn decode(bits: u32) -> Self {
        (bits ^ (1 << 31)) as i32
    }
}

impl RadixKey for i64 {
    type Bits = u64;

    #[inline(always)]
    fn encode(self) -> u64 {
        (self as u64) ^ (1 << 63)
    }

    #[inline(always)]
    fn decode(bits: u64) -> Self {
        (bits ^ (1 << 63)) as i64
    }
}

impl RadixKey for f32 {
    type Bits = u32;

    #[inline(always)]
    fn encode(self) -> u32 {
        let bits = self.to_bits();
        // Arithmetic shift smears the sign into a full mask for negatives.
        let mask = ((bits as i32) >> 31) as u32 | (1 << 31);
        bits ^ mask
    }

    #[inline(always)]
    fn decode(bits: u32) -> Self {
        let mask = if bits >> 31 == 1 { 1 << 31 } else { u32::MAX };
        f32::from_bits(bits ^ mask)
    }
}

impl RadixKey for f64 {
    type Bits = u64;

    #[inline(always)]
    fn encode(self) -> u64 {
        let bits = self.to_bits();
        let mask = ((bits as i64) >> 63) as u64 | (1 << 63);
        bits ^ mask
    }

    #[inline(always)]
    fn decode(bits: u64) -> Self {
        let mask = if bits >> 63 == 1 { 1 << 63 } else { u64::MAX };
        f64::from_bits(bits ^ mask)
    }
}

/// Encoded form of a key: an unsigned word ordered like the source key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EncodedKey<B>(pub B);

pub fn encode_key<K: RadixKey>(key: K) -> EncodedKey<K::Bits> {
    EncodedKey(key.encode())
}

pub fn decode_key<K: RadixKey>(bits: EncodedKey<K::Bits>) -> K {
    K::decode(bits.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("key width must be 32 or 64 bits, got {0}")]
    KeyBits(u32),
    #[error("digit width must be in 1..=16 bits, got {0}")]
    DigitBits(u32),
    #[error("{name} must be non-zero")]
    Zero { name: &'static str },
    #[error("{name} = {value} exceeds the limit of {limit}")]
    TooLarge {
        name: &'static str,
        value: usize,
        limit: usize,
    },
}

/// Digit layout and tiling parameters for one sort.
///
/// Strips and portions bound the range of the 30-bit chained-scan counters
/// and the 32-bit private histogram counters respectively; both may be set
/// far below their limits to exercise the multi-strip paths on small inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadixConfig {
    pub key_bits: u32,
    pub digit_bits: u32,
    pub radix: usize,
    pub passes: usize,
    pub tile_size: usize,
    pub strip_size: usize,
    pub portion_size: usize,
}

impl RadixConfig {
    /// Default tiling for `key_bits`-wide keys with `digit_bits`-wide digits.
    pub fn new(key_bits: u32, digit_bits: u32) -> Result<Self, ConfigError> {
        radix_plan(
            key_bits,
            digit_bits,
            DEFAULT_TILE_SIZE,
            MAX_STRIP_SIZE,
            MAX_PORTION_SIZE,
        )
    }

    pub fn with_tile_size(self, tile_size: usize) -> Result<Self, ConfigError> {
        radix_plan(
            self.key_bits,
            self.digit_bits,
            tile_size,
            self.strip_size,
            self.portion_size,
        )
    }

    pub fn with_strip_size(self, strip_size: usize) -> Result<Self, ConfigError> {
        radix_plan(
            self.key_bits,
            self.digit_bits,
            self.tile_size,
            strip_size,
            self.portion_size,
        )
    }

    pub fn with_portion_size(self, portion_size: usize) -> Result<Self, ConfigError> {
        radix_plan(
            self.key_bits,
            self.digit_bits,
            self.tile_size,
            self.strip_size,
            portion_size,
        )
    }

    #[inline(always)]
    pub fn digit_mask(&self) -> u32 {
        (self.radix - 1) as u32
    }

    #[inline(always)]
    pub fn shift(&self, place: usize) -> u32 {
        place as u32 * self.digit_bits
    }

    /// Tiles actually used: never longer than a strip.
    pub fn effective_tile_size(&self) -> usize {
        self.tile_size.min(self.strip_size)
    }
}

pub fn radix_plan(
    key_bits: u32,
    digit_bits: u32,
    tile_size: usize,
    strip_size: usize,
    portion_size: usize,
) -> Result<RadixConfig, ConfigError> {
    if key_bits != 32 && key_bits != 64 {
        return Err(ConfigError::KeyBits(key_bits));
    }
    if !(1..=16).contains(&digit_bits) {
        return Err(ConfigError::DigitBits(digit_bits));
    }
    for (name, value, limit) in [
        ("tile_size", tile_size, MAX_TILE_SIZE),
        ("strip_size", strip_size, MAX_STRIP_SIZE),
        ("portion_size", portion_size, MAX_PORTION_SIZE),
    ] {
        if value == 0 {
            return Err(ConfigError::Zero { name });
        }
        if value > limit {
            return Err(ConfigError::TooLarge { name, value, limit });
        }
    }
    Ok(RadixConfig {
        key_bits,
        digit_bits,
        radix: 1 << digit_bits,
        passes: key_bits.div_ceil(digit_bits) as usize,
        tile_size,
        strip_size,
        portion_size,
    })
}

/// Digit of `bits` at `place`; the top place is zero-extended when the
/// digit width does not divide the key width.
#[inline(always)]
pub fn extract_digit<B: KeyBits>(bits: B, place: usize, cfg: &RadixConfig) -> usize {
    debug_assert!(place < cfg.passes);
    bits.field(cfg.shift(place), cfg.digit_mask())
}

#[cfg(test)]
mod tests {
    use super::*;

    // 16-bit analogs of the three encodings, checked exhaustively.
    fn enc_u16(x: u16) -> u16 {
        x
    }
    fn enc_i16(x: i16) -> u16 {
        (x as u16) ^ 0x8000
    }
    fn enc_f16_like(bits: u16) -> u16 {
        if bits & 0x8000 != 0 {
            !bits
        } else {
            bits | 0x8000
        }
    }
    /// Order of a sign-magnitude 16-bit pattern: magnitude with sign applied,
    /// with negative zero strictly below positive zero.
    fn sign_magnitude_rank(bits: u16) -> i32 {
        let mag = (bits & 0x7FFF) as i32;
        if bits & 0x8000 != 0 {
            -mag - 1
        } else {
            mag
        }
    }

    #[test]
    fn sixteen_bit_analogs_are_monotone_bijections() {
        let mut seen_u = vec![false; 1 << 16];
        let mut seen_i = vec![false; 1 << 16];
        let mut seen_f = vec![false; 1 << 16];
        for x in 0..=u16::MAX {
            seen_u[enc_u16(x) as usize] = true;
            seen_i[enc_i16(x as i16) as usize] = true;
            seen_f[enc_f16_like(x) as usize] = true;
        }
        assert!(seen_u.iter().chain(&seen_i).chain(&seen_f).all(|&s| s));

        let mut ints: Vec<i16> = (i16::MIN..=i16::MAX).collect();
        ints.sort();
        assert!(ints.windows(2).all(|w| enc_i16(w[0]) < enc_i16(w[1])));

        let mut floats: Vec<u16> = (0..=u16::MAX).collect();
        floats.sort_by_key(|&b| sign_magnitude_rank(b));
        assert!(floats
            .windows(2)
            .all(|w| enc_f16_like(w[0]) < enc_f16_like(w[1])));
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(encode_key(0u32), EncodedKey(0x0000_0000));
        assert_eq!(encode_key(-1i32), EncodedKey(0x7FFF_FFFF));
        assert_eq!(encode_key(i32::MIN), EncodedKey(0x0000_0000));
        assert_eq!(encode_key(-0.0f32), EncodedKey(0x7FFF_FFFF));
        assert_eq!(encode_key(0.0f32), EncodedKey(0x8000_0000));
        assert!(encode_key(-0.0f64) < encode_key(0.0f64));

        assert_eq!(decode_key::<u32>(EncodedKey(0)), 0);
        assert_eq!(decode_key::<i32>(EncodedKey(0x7FFF_FFFF)), -1);
        let z: f32 = decode_key(EncodedKey(0x8000_0000));
        assert_eq!(z.to_bits(), 0.0f32.to_bits());
    }

    #[test]
    fn nan_placement_follows_sign_bit() {
        let pos_nan = f32::from_bits(0x7FC0_0001);
        let neg_nan = f32::from_bits(0xFFC0_0001);
        assert!(pos_nan.encode() > f32::INFINITY.encode());
        assert!(neg_nan.encode() < f32::NEG_INFINITY.encode());
        assert_eq!(f32::decode(pos_nan.encode()).to_bits(), pos_nan.to_bits());
        assert_eq!(f32::decode(neg_nan.encode()).to_bits(), neg_nan.to_bits());
        let nan64 = f64::from_bits(0xFFF8_0000_0000_0042);
        assert_eq!(f64::decode(nan64.encode()).to_bits(), nan64.to_bits());
    }

    #[test]
    fn digit_extraction() {
        let cfg8 = RadixConfig::new(32, 8).unwrap();
        assert_eq!(extract_digit(0xDEAD_BEEFu32, 1, &cfg8), 0xBE);

        let cfg3 = RadixConfig::new(32, 3).unwrap();
        assert_eq!(extract_digit(17u32, 0, &cfg3), 1);
        assert_eq!(extract_digit(8u32, 0, &cfg3), 0);
        assert_eq!(extract_digit(24u32, 0, &cfg3), 0);
        assert_eq!(extract_digit(5u32, 0, &cfg3), 5);
    }

    #[test]
    fn partial_top_digit_matches_per_bit_oracle() {
        let cfg = RadixConfig::new(32, 7).unwrap();
        assert_eq!(cfg.passes, 5);
        let samples = [0u32, 1, 0xFFFF_FFFF, 0xDEAD_BEEF, 0x8000_0000, 0x1234_5678];
        for &x in &samples {
            for place in 0..cfg.passes {
                let mut oracle = 0usize;
                for b in 0..7u32 {
                    let bit = place as u32 * 7 + b;
                    if bit < 32 && (x >> bit) & 1 == 1 {
                        oracle |= 1 << b;
                    }
                }
                assert_eq!(
                    extract_digit(x, place, &cfg),
                    oracle,
                    "x={x:#x} place={place}"
                );
            }
            assert!(extract_digit(x, 4, &cfg) < 16);
        }
        let cfg64 = RadixConfig::new(64, 9).unwrap();
        assert_eq!(cfg64.passes, 8);
        assert_eq!(extract_digit(u64::MAX, 7, &cfg64), 1);
    }

    #[test]
    fn radix_plan_examples() {
        let c = RadixConfig::new(32, 8).unwrap();
        assert_eq!((c.passes, c.radix), (4, 256));
        let c = RadixConfig::new(32, 7).unwrap();
        assert_eq!((c.passes, c.radix), (5, 128));
        let c = RadixConfig::new(64, 8).unwrap();
        assert_eq!((c.passes, c.radix), (8, 256));
        let c = RadixConfig::new(32, 16).unwrap();
        assert_eq!((c.passes, c.radix), (2, 65536));
    }

    #[test]
    fn radix_plan_rejects_bad_parameters() {
        assert_eq!(RadixConfig::new(32, 0), Err(ConfigError::DigitBits(0)));
        assert_eq!(RadixConfig::new(32, 17), Err(ConfigError::DigitBits(17)));
        assert_eq!(RadixConfig::new(16, 8), Err(ConfigError::KeyBits(16)));
        assert!(matches!(
            radix_plan(32, 8, 1 << 30, MAX_STRIP_SIZE, MAX_PORTION_SIZE),
            Err(ConfigError::TooLarge {
                name: "tile_size",
                ..
            })
        ));
        assert!(matches!(
            radix_plan(32, 8, 0, MAX_STRIP_SIZE, MAX_PORTION_SIZE),
            Err(ConfigError::Zero { name: "tile_size" })
        ));
        assert!(matches!(
            radix_plan(32, 8, 256, 0, MAX_PORTION_SIZE),
            Err(ConfigError::Zero { name: "strip_size" })
        ));
        assert!(matches!(
            radix_plan(32, 8, 256, MAX_STRIP_SIZE + 1, MAX_PORTION_SIZE),
            Err(ConfigError::TooLarge {
                name: "strip_size",
                ..
            })
        ));
        assert!(matches!(
            radix_plan(32, 8, 256, 1024, MAX_PORTION_SIZE + 1),
            Err(ConfigError::TooLarge {
                name: "portion_size",
                ..
            })
        ));
    }
}
