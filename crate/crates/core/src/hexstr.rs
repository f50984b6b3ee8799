//! Lowercase hex strings for byte fields in configs and reports.
//!
//! Scenario files and emitted reports represent opaque byte strings as
//! hex rather than JSON number arrays; these helpers keep that
//! convention in one place. Parsing accepts both cases, output is
//! always lowercase.

use alloc::string::String;
use alloc::vec::Vec;

/// Where and why a hex string failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("hex string has odd length {0}")]
    OddLength(usize),
    #[error("invalid hex digit at offset {0}")]
    Digit(usize),
}

pub fn encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let hi = b >> 4;
        let lo = b & 0x0F;
        for n in [hi, lo] {
            out.push(char::from_digit(n as u32, 16).expect("nibble in range"));
        }
    }
    out
}

pub fn decode(s: &str) -> Result<Vec<u8>, HexError> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() % 2 != 0 {
        return Err(HexError::OddLength(chars.len()));
    }
    let mut out = Vec::with_capacity(chars.len() / 2);
    for (i, pair) in chars.chunks(2).enumerate() {
        let hi = pair[0].to_digit(16).ok_or(HexError::Digit(i * 2))? as u8;
        let lo = pair[1].to_digit(16).ok_or(HexError::Digit(i * 2 + 1))? as u8;
        out.push((hi << 4) | lo);
    }
    Ok(out)
}

/// Fixed-size variant for keys and similar fields.
pub fn decode_array<const N: usize>(s: &str) -> Result<[u8; N], HexError> {
    let bytes = decode(s)?;
    let len = bytes.len();
    bytes.try_into().map_err(|_| HexError::OddLength(len * 2))
}

/// Serde adapter for `Option<Vec<u8>>` as an optional hex string.
#[cfg(feature = "serde")]
pub mod serde_opt_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_some(&encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| decode(&t).map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn roundtrips_and_rejects() {
        assert_eq!(encode(&[0xDE, 0xAD, 0x01]), "dead01");
        assert_eq!(decode("dead01").unwrap(), vec![0xDE, 0xAD, 0x01]);
        assert_eq!(decode("DEAD01").unwrap(), vec![0xDE, 0xAD, 0x01]);
        assert_eq!(decode("").unwrap(), Vec::<u8>::new());
        assert_eq!(decode("abc"), Err(HexError::OddLength(3)));
        assert_eq!(decode("zz"), Err(HexError::Digit(0)));
        assert_eq!(decode("aaxb"), Err(HexError::Digit(2)));
        let key: [u8; 4] = decode_array("00ff10a0").unwrap();
        assert_eq!(key, [0x00, 0xFF, 0x10, 0xA0]);
        assert!(decode_array::<4>("00ff").is_err());
    }
}
