// SPDX-License-Identifier: Apache-2.0

//! Scalar value types shared by every section: UTC timestamps and
//! fixed-point fractions.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// A UTC instant with second precision, written as RFC 3339 with a `Z`
/// suffix (`2025-03-01T09:30:00Z`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp {input:?}: expected RFC 3339 UTC form YYYY-MM-DDTHH:MM:SSZ")]
pub struct TimestampError {
    pub input: String,
}

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    pub fn parse(input: &str) -> Result<Self, TimestampError> {
        let err = || TimestampError {
            input: input.to_string(),
        };
        let naive = NaiveDateTime::parse_from_str(input, TIMESTAMP_FORMAT).map_err(|_| err())?;
        let ts = Timestamp(naive.and_utc().timestamp());
        // chrono tolerates unpadded fields; only the exact rendering is accepted.
        if ts.to_string() != input {
            return Err(err());
        }
        Ok(ts)
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0.saturating_add(secs))
    }

    /// Seconds elapsed from `earlier` to `self` (negative if `earlier` is later).
    pub fn secs_since(self, earlier: Timestamp) -> i64 {
        self.0.saturating_sub(earlier.0)
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0, 0).unwrap_or(DateTime::<Utc>::MIN_UTC)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format(TIMESTAMP_FORMAT))
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(de::Error::custom)
    }
}

/// Parts-per-million fixed-point quantity.
///
/// Presented as a decimal number in the document file format (`0.95`) and
/// encoded as the integer `950000` in canonical bytes, so signatures never
/// depend on float formatting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ppm(i64);

pub const PPM_SCALE: i64 = 1_000_000;

impl Ppm {
    pub const ZERO: Ppm = Ppm(0);
    pub const ONE: Ppm = Ppm(PPM_SCALE);

    pub const fn from_ppm(ppm: i64) -> Self {
        Ppm(ppm)
    }

    pub const fn ppm(self) -> i64 {
        self.0
    }

    /// Rounds to the nearest millionth. `None` for non-finite or absurdly
    /// large inputs.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() || value.abs() > 9.0e12 {
            return None;
        }
        Some(Ppm((value * PPM_SCALE as f64).round() as i64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / PPM_SCALE as f64
    }

    pub fn is_unit_fraction(self) -> bool {
        (0..=PPM_SCALE).contains(&self.0)
    }
}

impl fmt::Display for Ppm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Ppm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if crate::canon::scaled_as_integer() {
            serializer.serialize_i64(self.0)
        } else {
            serializer.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Ppm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PpmVisitor;

        impl Visitor<'_> for PpmVisitor {
            type Value = Ppm;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal number")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Ppm, E> {
                Ppm::from_f64(v).ok_or_else(|| E::custom("number out of range"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ppm, E> {
                self.visit_f64(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ppm, E> {
                self.visit_f64(v as f64)
            }
        }

        deserializer.deserialize_any(PpmVisitor)
    }
}
