//! Canonical CVE identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Shortest and longest sequence-number lengths accepted after the year.
pub const MIN_SEQUENCE_DIGITS: usize = 4;
pub const MAX_SEQUENCE_DIGITS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid CVE identifier {input:?}: expected CVE-<4-digit year>-<4 to 7 digits>")]
pub struct InvalidCveId {
    pub input: String,
}

/// An uppercase `CVE-YYYY-NNNN[NNN]` identifier.
///
/// Parsing accepts any ASCII case for the prefix and surrounding whitespace;
/// the stored form is always uppercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CveId(String);

impl CveId {
    pub fn parse(input: &str) -> Result<Self, InvalidCveId> {
        let trimmed = input.trim();
        if is_canonical_shape(trimmed) {
            Ok(CveId(trimmed.to_ascii_uppercase()))
        } else {
            Err(InvalidCveId {
                input: input.to_string(),
            })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn year(&self) -> u32 {
        self.0[4..8].parse().expect("year digits checked at parse time")
    }
}

fn is_canonical_shape(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.len() < 4 + 4 + 1 + MIN_SEQUENCE_DIGITS || !bytes[..4].eq_ignore_ascii_case(b"CVE-") {
        return false;
    }
    let rest = &bytes[4..];
    if !rest[..4].iter().all(u8::is_ascii_digit) || rest[4] != b'-' {
        return false;
    }
    let seq = &rest[5..];
    (MIN_SEQUENCE_DIGITS..=MAX_SEQUENCE_DIGITS).contains(&seq.len())
        && seq.iter().all(u8::is_ascii_digit)
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CveId {
    type Err = InvalidCveId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CveId::parse(s)
    }
}

impl AsRef<str> for CveId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for CveId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CveId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        CveId::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case() {
        let id = CveId::parse("cve-2099-0001").unwrap();
        assert_eq!(id.as_str(), "CVE-2099-0001");
        assert_eq!(id.year(), 2099);
    }

    #[test]
    fn accepts_seven_digit_sequence() {
        assert!(CveId::parse("CVE-2021-1234567").is_ok());
        assert!(CveId::parse("CVE-2021-12345678").is_err());
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["CVE-99-1", "CVE-2020-123", "CVE2020-1234", "XCVE-2020-1234", "", "CVE-20a0-1234"] {
            assert!(CveId::parse(bad).is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn old_years_are_still_pattern_valid() {
        assert_eq!(CveId::parse("CVE-1998-0001").unwrap().year(), 1998);
    }
}
