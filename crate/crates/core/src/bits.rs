//! Packed bit strings of up to 64 bits.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Longest bit string representable by [`BitString`].
pub const MAX_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitStringError {
    #[error("invalid character {0:?} in bit string (expected '0' or '1')")]
    InvalidChar(char),
    #[error("bit string of length {0} exceeds the {MAX_BITS}-bit limit")]
    TooLong(usize),
}

/// A finite sequence of bits, first bit stored in the most significant
/// position of the `len` low bits of `value`.
///
/// The derived ordering is length-lexicographic: shorter strings first, then
/// lexicographic order among strings of equal length.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: u32,
    value: u64,
}

impl BitString {
    pub const EMPTY: BitString = BitString { len: 0, value: 0 };

    /// Builds a string from the low `len` bits of `value`.
    pub fn from_value(value: u64, len: u32) -> Self {
        assert!(len <= MAX_BITS, "bit string longer than {MAX_BITS} bits");
        let value = if len == 64 { value } else { value & ((1u64 << len) - 1) };
        BitString { len, value }
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, BitStringError> {
        if bits.len() > MAX_BITS as usize {
            return Err(BitStringError::TooLong(bits.len()));
        }
        let mut s = BitString::EMPTY;
        for &b in bits {
            s = s.push(b);
        }
        Ok(s)
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The bits as an integer, first bit most significant.
    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Bit at position `i` (0 is the first bit).
    #[inline]
    pub fn get(&self, i: u32) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.value >> (self.len - 1 - i)) & 1 == 1
    }

    /// Appends one bit. Panics past [`MAX_BITS`].
    #[inline]
    pub fn push(self, bit: bool) -> Self {
        assert!(self.len < MAX_BITS, "bit string longer than {MAX_BITS} bits");
        BitString {
            len: self.len + 1,
            value: (self.value << 1) | bit as u64,
        }
    }

    /// Appends the low `len` bits of `code`, first bit most significant.
    #[inline]
    pub fn append(self, code: u64, len: u32) -> Self {
        assert!(self.len + len <= MAX_BITS, "bit string longer than {MAX_BITS} bits");
        if len == 0 {
            return self;
        }
        BitString {
            len: self.len + len,
            value: (self.value << len) | code,
        }
    }

    /// The first `n` bits.
    pub fn prefix(&self, n: u32) -> Self {
        assert!(n <= self.len);
        BitString::from_value(self.value >> (self.len - n), n)
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len <= other.len && other.prefix(self.len) == *self
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// All strings of exactly `len` bits, in lexicographic order.
    pub fn all_of_len(len: u32) -> impl Iterator<Item = BitString> {
        assert!(len < MAX_BITS);
        (0..(1u64 << len)).map(move |v| BitString::from_value(v, len))
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.value.cmp(&other.value))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl FromStr for BitString {
    type Err = BitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > MAX_BITS as usize {
            return Err(BitStringError::TooLong(s.len()));
        }
        let mut out = BitString::EMPTY;
        for c in s.chars() {
            out = match c {
                '0' => out.push(false),
                '1' => out.push(true),
                other => return Err(BitStringError::InvalidChar(other)),
            };
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display() {
        for s in ["", "0", "1", "0010", "1111", "11011101111"] {
            assert_eq!(bs(s).to_string(), s);
            assert_eq!(bs(s).len() as usize, s.len());
        }
        assert!(matches!("012".parse::<BitString>(), Err(BitStringError::InvalidChar('2'))));
        let long = "0".repeat(65);
        assert!(matches!(long.parse::<BitString>(), Err(BitStringError::TooLong(65))));
    }

    #[test]
    fn length_lex_order() {
        let mut v = vec![bs("10"), bs("0"), bs("001"), bs(""), bs("01"), bs("1")];
        v.sort();
        let got: Vec<String> = v.iter().map(|b| b.to_string()).collect();
        assert_eq!(got, ["", "0", "1", "01", "10", "001"]);
    }

    #[test]
    fn prefixes() {
        assert!(bs("").is_prefix_of(&bs("101")));
        assert!(bs("10").is_prefix_of(&bs("101")));
        assert!(!bs("11").is_prefix_of(&bs("101")));
        assert!(!bs("1010").is_prefix_of(&bs("101")));
        assert_eq!(bs("110111").prefix(3), bs("110"));
        assert_eq!(bs("00").append(0b1111, 4), bs("001111"));
    }

    #[test]
    fn full_width() {
        let s = BitString::from_value(u64::MAX, 64);
        assert_eq!(s.len(), 64);
        assert!(s.get(0) && s.get(63));
        assert_eq!(s.prefix(1), bs("1"));
    }
}
