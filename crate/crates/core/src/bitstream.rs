//! Message framing: payload bytes to bit sequences and back, test pattern
//! generation, and bit error scoring.
//!
//! Byte-to-bit order is MSB first throughout. The channel carries raw bits;
//! there is no preamble, ECC or compression layer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An ordered sequence of binary symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bitstream {
    bits: Vec<bool>,
}

impl Bitstream {
    pub fn new() -> Self {
        Self { bits: Vec::new() }
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Builds a stream from 0/1 symbols.
    pub fn from_symbols(symbols: &[u8]) -> Result<Self> {
        let mut bits = Vec::with_capacity(symbols.len());
        for &s in symbols {
            match s {
                0 => bits.push(false),
                1 => bits.push(true),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "bit symbol must be 0 or 1, got {other}"
                    )))
                }
            }
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.bits.get(i).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Index of the first position where the two streams differ, comparing
    /// positionally over the common prefix.
    pub fn first_mismatch(&self, other: &Bitstream) -> Option<usize> {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .position(|(a, b)| a != b)
    }
}

impl FromIterator<bool> for Bitstream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self {
            bits: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for Bitstream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitstream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "bitstream literal may only contain 0/1, got `{other}`"
                    )))
                }
            }
        }
        Ok(Self { bits })
    }
}

/// Converts payload bytes to bits, MSB first (8 bits per byte).
pub fn encode_text(text: &[u8]) -> Bitstream {
    let mut bits = Vec::with_capacity(text.len() * 8);
    for &byte in text {
        for k in 0..8 {
            bits.push(byte & (0x80 >> k) != 0);
        }
    }
    Bitstream { bits }
}

/// Inverse of [`encode_text`]. The stream length must be a multiple of 8.
pub fn decode_text(bits: &Bitstream) -> Result<Vec<u8>> {
    if bits.len() % 8 != 0 {
        return Err(Error::NonByteAlignedLength { len: bits.len() });
    }
    let mut out = Vec::with_capacity(bits.len() / 8);
    for chunk in bits.bits.chunks_exact(8) {
        let mut byte = 0u8;
        for &b in chunk {
            byte = (byte << 1) | u8::from(b);
        }
        out.push(byte);
    }
    Ok(out)
}

/// Test pattern families for channel characterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// 0101...
    Alternating,
    /// Exactly ⌊n/2⌋ ones in a seed-determined order.
    BalancedRandom { seed: u64 },
    AllZero,
    AllOne,
}

/// Generates an `n`-bit pattern.
pub fn generate_pattern(kind: PatternKind, n: usize) -> Bitstream {
    let bits = match kind {
        PatternKind::Alternating => (0..n).map(|i| i % 2 == 1).collect(),
        PatternKind::AllZero => vec![false; n],
        PatternKind::AllOne => vec![true; n],
        PatternKind::BalancedRandom { seed } => {
            let ones = n / 2;
            let mut bits: Vec<bool> = (0..n).map(|i| i < ones).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bits.shuffle(&mut rng);
            bits
        }
    };
    Bitstream { bits }
}

/// Pattern request as written on the command line or in config files,
/// e.g. `balanced:1024`, `alternating:8`, `ones:3`, `zeros:16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternSpec {
    pub kind: PatternName,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternName {
    Alternating,
    Balanced,
    Zeros,
    Ones,
}

impl PatternSpec {
    pub fn realize(&self, seed: u64) -> Bitstream {
        let kind = match self.kind {
            PatternName::Alternating => PatternKind::Alternating,
            PatternName::Balanced => PatternKind::BalancedRandom { seed },
            PatternName::Zeros => PatternKind::AllZero,
            PatternName::Ones => PatternKind::AllOne,
        };
        generate_pattern(kind, self.len)
    }
}

impl FromStr for PatternSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, count) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("pattern must be name:count, got `{s}`")))?;
        let kind = match name {
            "alternating" => PatternName::Alternating,
            "balanced" => PatternName::Balanced,
            "zeros" => PatternName::Zeros,
            "ones" => PatternName::Ones,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown pattern `{other}` (expected alternating|balanced|zeros|ones)"
                )))
            }
        };
        let len = count
            .parse::<usize>()
            .map_err(|e| Error::InvalidParameter(format!("bad pattern length `{count}`: {e}")))?;
        Ok(Self { kind, len })
    }
}

/// Positional bit error rate: Hamming distance over length. Streams must
/// have equal length; two empty streams score 0.
pub fn bit_error_rate(sent: &Bitstream, received: &Bitstream) -> Result<f64> {
    if sent.len() != received.len() {
        return Err(Error::LengthMismatch {
            sent: sent.len(),
            received: received.len(),
        });
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let errors = sent
        .bits
        .iter()
        .zip(received.bits.iter())
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / sent.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent byte-to-bit reference: pure integer arithmetic, written
    /// before the production encoder and kept separate from it.
    fn reference_bits(text: &[u8]) -> Vec<bool> {
        let mut out = Vec::new();
        for &byte in text {
            for k in 0..8u32 {
                let divisor = 2u16.pow(7 - k);
                out.push((byte as u16 / divisor) % 2 == 1);
            }
        }
        out
    }

    #[test]
    fn encode_empty_is_empty() {
        let b = encode_text(b"");
        assert_eq!(b.len(), 0);
        assert!(b.is_empty());
    }

    #[test]
    fn encode_h_is_01001000() {
        let b = encode_text(&[0x48]);
        assert_eq!(b.to_string(), "01001000");
    }

    #[test]
    fn encode_hello_world_matches_reference_and_roundtrips() {
        let text = b"Hello, World";
        let b = encode_text(text);
        assert_eq!(b.len(), 96);
        assert_eq!(b.as_slice(), reference_bits(text).as_slice());
        assert_eq!(decode_text(&b).unwrap(), text);
    }

    #[test]
    fn decode_single_byte() {
        let b: Bitstream = "01001000".parse().unwrap();
        assert_eq!(decode_text(&b).unwrap(), vec![0x48]);
    }

    #[test]
    fn decode_empty() {
        assert_eq!(decode_text(&Bitstream::new()).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn decode_rejects_ragged_length() {
        let b: Bitstream = "0100100".parse().unwrap();
        match decode_text(&b) {
            Err(Error::NonByteAlignedLength { len: 7 }) => {}
            other => panic!("expected NonByteAlignedLength, got {other:?}"),
        }
    }

    #[test]
    fn alternating_pattern() {
        assert_eq!(generate_pattern(PatternKind::Alternating, 4).to_string(), "0101");
        assert_eq!(generate_pattern(PatternKind::AllOne, 3).to_string(), "111");
        assert_eq!(generate_pattern(PatternKind::AllZero, 2).to_string(), "00");
        assert_eq!(generate_pattern(PatternKind::Alternating, 0).len(), 0);
    }

    #[test]
    fn balanced_random_is_balanced_and_reproducible() {
        let a = generate_pattern(PatternKind::BalancedRandom { seed: 7 }, 1024);
        let b = generate_pattern(PatternKind::BalancedRandom { seed: 7 }, 1024);
        assert_eq!(a.count_ones(), 512);
        assert_eq!(a, b);
        let c = generate_pattern(PatternKind::BalancedRandom { seed: 8 }, 1024);
        assert_ne!(a, c);
        // odd length keeps the floor rule
        let odd = generate_pattern(PatternKind::BalancedRandom { seed: 7 }, 9);
        assert_eq!(odd.count_ones(), 4);
    }

    #[test]
    fn ber_identical_and_opposite() {
        let a: Bitstream = "0101".parse().unwrap();
        let b: Bitstream = "0101".parse().unwrap();
        assert_eq!(bit_error_rate(&a, &b).unwrap(), 0.0);
        let z: Bitstream = "0000".parse().unwrap();
        let o: Bitstream = "1111".parse().unwrap();
        assert_eq!(bit_error_rate(&z, &o).unwrap(), 1.0);
    }

    #[test]
    fn ber_counts_planted_flips() {
        let sent = generate_pattern(PatternKind::BalancedRandom { seed: 42 }, 1024);
        let mut flipped = sent.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut idx: Vec<usize> = (0..1024).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(10) {
            flipped.bits[i] = !flipped.bits[i];
        }
        let ber = bit_error_rate(&sent, &flipped).unwrap();
        assert_eq!(ber, 10.0 / 1024.0);
    }

    #[test]
    fn ber_rejects_length_mismatch() {
        let a: Bitstream = "01".parse().unwrap();
        let b: Bitstream = "011".parse().unwrap();
        assert!(matches!(
            bit_error_rate(&a, &b),
            Err(Error::LengthMismatch { sent: 2, received: 3 })
        ));
    }

    #[test]
    fn pattern_spec_parses() {
        let p: PatternSpec = "balanced:1024".parse().unwrap();
        assert_eq!(p.len, 1024);
        assert_eq!(p.realize(7), generate_pattern(PatternKind::BalancedRandom { seed: 7 }, 1024));
        assert!("balanced".parse::<PatternSpec>().is_err());
        assert!("weird:8".parse::<PatternSpec>().is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_bytes(text in proptest::collection::vec(any::<u8>(), 0..256)) {
            let bits = encode_text(&text);
            let reference = reference_bits(&text);
            prop_assert_eq!(bits.len(), text.len() * 8);
            prop_assert_eq!(bits.as_slice(), reference.as_slice());
            prop_assert_eq!(decode_text(&bits).unwrap(), text);
        }

        #[test]
        fn roundtrip_random_bitstream(seed in any::<u64>()) {
            // 256 random bits -> bytes -> bits reproduces the input
            let bits = generate_pattern(PatternKind::BalancedRandom { seed }, 256);
            let bytes = decode_text(&bits).unwrap();
            prop_assert_eq!(encode_text(&bytes), bits);
        }

        #[test]
        fn ber_bounds_and_symmetry(seed_a in any::<u64>(), seed_b in any::<u64>()) {
            let a = generate_pattern(PatternKind::BalancedRandom { seed: seed_a }, 128);
            let b = generate_pattern(PatternKind::BalancedRandom { seed: seed_b }, 128);
            let ab = bit_error_rate(&a, &b).unwrap();
            let ba = bit_error_rate(&b, &a).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(bit_error_rate(&a, &a).unwrap(), 0.0);
        }
    }
}
