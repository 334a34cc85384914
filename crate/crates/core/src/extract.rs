//! Toeplitz hashing over GF(2) with leftover-hash parameter accounting.
//!
//! Seed layout: the σ×n matrix `T` has first column `s[0..σ]` read top to
//! bottom and first row `s[σ−1..]` read left to right, sharing the corner
//! `s[0]` in the first column so that `T[j][i] = s[j−i]` for `j ≥ i` and
//! `T[j][i] = s[σ−1+i−j]` otherwise. Bit strings serialize most significant
//! bit first within each byte.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Packed bit string; bit `i` lives in word `i / 64` at position `i % 64`.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({} bits, {})", self.len, self.to_hex())
    }
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    /// Bits from an iterator of known length.
    pub fn from_iter_len(len: usize, bits: impl IntoIterator<Item = bool>) -> Self {
        let mut s = Self::zeros(len);
        for (i, b) in bits.into_iter().take(len).enumerate() {
            s.set(i, b);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::LengthMismatch { what: "xor operand", expected: self.len, actual: other.len });
        }
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(BitString { words, len: self.len })
    }

    /// Lowercase hex, most significant bit first within each byte; the last
    /// byte is zero-padded on the right.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.len.div_ceil(8) * 2);
        for byte in 0..self.len.div_ceil(8) {
            let mut v = 0u8;
            for bit in 0..8 {
                let i = byte * 8 + bit;
                if i < self.len && self.get(i) {
                    v |= 0x80 >> bit;
                }
            }
            out.push_str(&format!("{v:02x}"));
        }
        out
    }

    /// Inverse of [`to_hex`](Self::to_hex); padding bits must be zero.
    pub fn from_hex(hex: &str, len: usize) -> Result<BitString> {
        let bytes = hex.trim();
        if bytes.len() != len.div_ceil(8) * 2 {
            return Err(Error::Parse(format!("{} hex digits cannot hold exactly {len} bits", bytes.len())));
        }
        if let Some(c) = bytes.chars().find(|c| !c.is_ascii_hexdigit()) {
            return Err(Error::Parse(format!("{c:?} is not a hex digit")));
        }
        let mut s = BitString::zeros(len);
        for (byte, chunk) in bytes.as_bytes().chunks(2).enumerate() {
            let text = std::str::from_utf8(chunk).expect("checked ASCII");
            let v = u8::from_str_radix(text, 16).expect("checked hex digits");
            for bit in 0..8 {
                let i = byte * 8 + bit;
                let set = v & (0x80 >> bit) != 0;
                if i < len {
                    s.set(i, set);
                } else if set {
                    return Err(Error::Parse("nonzero padding bits".into()));
                }
            }
        }
        Ok(s)
    }

    /// 64 bits starting at `offset`, zero past the end.
    fn window(&self, offset: usize, word: usize) -> u64 {
        let start = offset + 64 * word;
        let (q, r) = (start / 64, start % 64);
        let lo = self.words.get(q).copied().unwrap_or(0) >> r;
        let hi = if r == 0 { 0 } else { self.words.get(q + 1).copied().unwrap_or(0) << (64 - r) };
        lo | hi
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("BitString", 2)?;
        st.serialize_field("len", &self.len)?;
        st.serialize_field("hex", &self.to_hex())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            len: usize,
            hex: String,
        }
        let r = Raw::deserialize(d)?;
        BitString::from_hex(&r.hex, r.len).map_err(serde::de::Error::custom)
    }
}

/// Parameters `(n, l, σ_h, σ, ε_Ext)` of a Toeplitz extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorParams {
    /// Input length in bits.
    pub n: usize,
    /// Seed length in bits.
    pub l: usize,
    /// Min-entropy budget of the input in bits.
    pub sigma_h: f64,
    /// Output length in bits.
    pub sigma: usize,
    pub eps_ext: f64,
}

/// Leftover hash lemma in trace distance: `σ = ⌊σ_h − 2·log(1/ε_Ext)⌋`,
/// clamped at zero, with seed length `n + σ − 1`.
pub fn plan(n: usize, sigma_h: f64, eps_ext: f64) -> Result<ExtractorParams> {
    if !(sigma_h >= 0.0) {
        return Err(Error::Domain(format!("min-entropy budget {sigma_h} must be non-negative")));
    }
    if !(eps_ext > 0.0 && eps_ext < 1.0) {
        return Err(Error::Domain(format!("eps_ext = {eps_ext} outside (0, 1)")));
    }
    let raw = (sigma_h - 2.0 * (1.0 / eps_ext).log2()).floor();
    let sigma = if raw > 0.0 { (raw as usize).min(n) } else { 0 };
    let l = if sigma == 0 { 0 } else { n + sigma - 1 };
    Ok(ExtractorParams { n, l, sigma_h, sigma, eps_ext })
}

/// `K = T(s)·a` over GF(2).
pub fn toeplitz_extract(input: &BitString, seed: &BitString, p: &ExtractorParams) -> Result<BitString> {
    if input.len() != p.n {
        return Err(Error::LengthMismatch { what: "extractor input", expected: p.n, actual: input.len() });
    }
    if seed.len() != p.l {
        return Err(Error::LengthMismatch { what: "extractor seed", expected: p.l, actual: seed.len() });
    }
    let sigma = p.sigma;
    if sigma == 0 {
        return Ok(BitString::zeros(0));
    }
    // diagonal generator: g[d] = s[σ−1−d] for d < σ, s[d] beyond, so that
    // row j reads g[σ−1−j .. σ−1−j+n]
    let mut g = BitString::zeros(p.l);
    for d in 0..p.l {
        let v = if d < sigma { seed.get(sigma - 1 - d) } else { seed.get(d) };
        g.set(d, v);
    }
    let words = p.n.div_ceil(64);
    let bits: Vec<bool> = (0..sigma)
        .into_par_iter()
        .map(|j| {
            let offset = sigma - 1 - j;
            let mut acc = 0u64;
            for w in 0..words {
                acc ^= g.window(offset, w) & input.words[w];
            }
            acc.count_ones() % 2 == 1
        })
        .collect();
    Ok(BitString::from_bits(&bits))
}
