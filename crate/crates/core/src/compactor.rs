// SPDX-License-Identifier: Apache-2.0

//! Response compaction: XOR-cascade width folding, MISRs and the output
//! selector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tpg::Polynomial;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompactorError {
    #[error("word has {got} bits, expected {expected}")]
    Width { expected: usize, got: usize },
    #[error("cascade cannot fold {in_width} bits into {out_width}")]
    Cascade { in_width: usize, out_width: usize },
    #[error("output selector {sel} out of range ({count} signatures registered)")]
    Selector { sel: u8, count: usize },
    #[error("invalid signature value `{0}`")]
    Value(String),
}

/// Folds a wide word into `out_width` bits: output bit `j` is the XOR of
/// input bits `i` with `i mod out_width == j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct XorCascade {
    #[serde(rename = "in")]
    in_width: usize,
    #[serde(rename = "out")]
    out_width: usize,
}

impl XorCascade {
    pub fn new(in_width: usize, out_width: usize) -> Result<Self, CompactorError> {
        if out_width == 0 || out_width > 64 || out_width > in_width {
            return Err(CompactorError::Cascade { in_width, out_width });
        }
        Ok(XorCascade { in_width, out_width })
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn fold(&self, word: &[bool]) -> Result<u64, CompactorError> {
        if word.len() != self.in_width {
            return Err(CompactorError::Width {
                expected: self.in_width,
                got: word.len(),
            });
        }
        Ok(self.fold_unchecked(word))
    }

    #[inline]
    pub(crate) fn fold_unchecked(&self, word: &[bool]) -> u64 {
        word.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |acc, (i, _)| acc ^ (1u64 << (i % self.out_width)))
    }
}

/// Free-function form of [`XorCascade::fold`].
pub fn fold(cascade: &XorCascade, word: &[bool]) -> Result<u64, CompactorError> {
    cascade.fold(word)
}

/// Multiple-input signature register.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MisrState {
    polynomial: Polynomial,
    register: u64,
}

impl MisrState {
    /// All-zero start, as applied by the core reset.
    pub fn new(polynomial: Polynomial) -> Self {
        MisrState {
            polynomial,
            register: 0,
        }
    }

    pub fn with_register(polynomial: Polynomial, register: u64) -> Result<Self, CompactorError> {
        if register & !polynomial.mask() != 0 {
            return Err(CompactorError::Width {
                expected: polynomial.degree() as usize,
                got: 64 - register.leading_zeros() as usize,
            });
        }
        Ok(MisrState {
            polynomial,
            register,
        })
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.polynomial
    }

    pub fn register(&self) -> u64 {
        self.register
    }

    pub fn width(&self) -> usize {
        self.polynomial.degree() as usize
    }

    /// `next = step(state) ^ word`.
    pub fn absorb(&mut self, word: u64) -> Result<(), CompactorError> {
        if word & !self.polynomial.mask() != 0 {
            return Err(CompactorError::Width {
                expected: self.width(),
                got: 64 - word.leading_zeros() as usize,
            });
        }
        self.absorb_unchecked(word);
        Ok(())
    }

    #[inline]
    pub(crate) fn absorb_unchecked(&mut self, word: u64) {
        self.register = self.polynomial.step(self.register) ^ word;
    }

    pub fn absorb_bits(&mut self, word: &[bool]) -> Result<(), CompactorError> {
        if word.len() != self.width() {
            return Err(CompactorError::Width {
                expected: self.width(),
                got: word.len(),
            });
        }
        let w = word
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
        self.absorb_unchecked(w);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.register = 0;
    }
}

/// Free-function form of [`MisrState::absorb`].
pub fn misr_absorb(state: &MisrState, word: u64) -> Result<MisrState, CompactorError> {
    let mut next = state.clone();
    next.absorb(word)?;
    Ok(next)
}

/// Signature of `words` from the all-zero state.
pub fn signature_of(polynomial: &Polynomial, words: &[u64]) -> u64 {
    let mut m = MisrState::new(polynomial.clone());
    for &w in words {
        m.absorb_unchecked(w & polynomial.mask());
    }
    m.register()
}

/// Final MISR contents for one block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub block: String,
    #[serde(rename = "poly")]
    pub polynomial: Polynomial,
    #[serde(with = "hex_value")]
    pub value: u64,
    #[serde(rename = "patterns")]
    pub pattern_count: u32,
}

impl Signature {
    pub fn width(&self) -> usize {
        self.polynomial.degree() as usize
    }

    /// `0x`-prefixed, zero-padded to the register width.
    pub fn hex(&self) -> String {
        format_hex(self.value, self.width())
    }
}

pub fn format_hex(value: u64, bits: usize) -> String {
    let digits = bits.div_ceil(4).max(1);
    format!("0x{value:0digits$x}")
}

pub fn parse_hex(text: &str) -> Result<u64, CompactorError> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    u64::from_str_radix(digits, 16).map_err(|_| CompactorError::Value(text.to_string()))
}

mod hex_value {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// The signature addressed by a 2-bit selector code.
pub fn select_output(signatures: &[Signature], sel: u8) -> Result<&Signature, CompactorError> {
    if sel > 3 || sel as usize >= signatures.len() {
        return Err(CompactorError::Selector {
            sel,
            count: signatures.len(),
        });
    }
    Ok(&signatures[sel as usize])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AliasingEstimate {
    pub width: usize,
    pub stream_len: usize,
    pub trials: u64,
    pub aliased: u64,
    pub rate: f64,
    /// Exact probability for a uniformly random non-zero error stream.
    pub expected: f64,
    /// Wilson score interval at z = 3.29 (99.9 %).
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Monte-Carlo aliasing: each trial draws a fault-free response stream and a
/// uniformly random non-zero error stream, compacts both and counts equal
/// signatures.
pub fn aliasing_estimate(polynomial: &Polynomial, trials: u64, stream_len: usize, seed: u64) -> AliasingEstimate {
    let k = polynomial.degree() as usize;
    let mask = polynomial.mask();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut good = vec![0u64; stream_len];
    let mut bad = vec![0u64; stream_len];
    let mut aliased = 0u64;
    for _ in 0..trials {
        loop {
            let mut any = false;
            for (g, b) in good.iter_mut().zip(bad.iter_mut()) {
                *g = rng.gen::<u64>() & mask;
                let e = rng.gen::<u64>() & mask;
                any |= e != 0;
                *b = *g ^ e;
            }
            if any {
                break;
            }
        }
        if signature_of(polynomial, &good) == signature_of(polynomial, &bad) {
            aliased += 1;
        }
    }
    let n = trials as f64;
    let rate = if trials == 0 { 0.0 } else { aliased as f64 / n };
    let total_bits = (k * stream_len) as i32;
    let expected = if total_bits >= 1000 {
        2f64.powi(-(k as i32))
    } else {
        (2f64.powi(total_bits - k as i32) - 1.0) / (2f64.powi(total_bits) - 1.0)
    };
    let z = 3.29f64;
    let (ci_low, ci_high) = if trials == 0 {
        (0.0, 1.0)
    } else {
        let denom = 1.0 + z * z / n;
        let centre = (rate + z * z / (2.0 * n)) / denom;
        let half = z * ((rate * (1.0 - rate) / n) + z * z / (4.0 * n * n)).sqrt() / denom;
        ((centre - half).max(0.0), (centre + half).min(1.0))
    };
    AliasingEstimate {
        width: k,
        stream_len,
        trials,
        aliased,
        rate,
        expected,
        ci_low,
        ci_high,
    }
}

/// Enumerates every non-zero error stream of `stream_len` words and counts
/// those that leave the signature unchanged. Returns `(aliased, total)`.
pub fn exhaustive_aliasing(polynomial: &Polynomial, stream_len: usize) -> (u64, u64) {
    let k = polynomial.degree() as usize;
    let bits = k * stream_len;
    assert!(bits <= 24, "exhaustive enumeration limited to 24 error bits");
    let mask = polynomial.mask();
    let mut aliased = 0u64;
    let total = (1u64 << bits) - 1;
    let mut words = vec![0u64; stream_len];
    for e in 1..=total {
        for (t, w) in words.iter_mut().enumerate() {
            *w = (e >> (t * k)) & mask;
        }
        // Linear compaction: the corrupted signature equals the golden one
        // exactly when the error stream compacts to zero.
        if signature_of(polynomial, &words) == 0 {
            aliased += 1;
        }
    }
    (aliased, total)
}
