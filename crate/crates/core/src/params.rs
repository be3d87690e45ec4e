//! Exact numeric config parameters.
//!
//! Config numerics carry decimal semantics: `0.3` means 3/10, not the nearest
//! f64. `Dec` wraps an exact rational and accepts JSON numbers (parsed from
//! their literal text), decimal strings, or `"p/q"` strings. It serializes as
//! `"p/q"` so a manifest echo is lossless.

use rug::Rational;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::scalar::{rational_from_decimal, HPScalar};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Dec(pub Rational);

impl Dec {
    pub fn scalar(&self) -> HPScalar {
        HPScalar::from_rational(self.0.clone())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn from_u64(v: u64) -> Dec {
        Dec(Rational::from(v))
    }

    pub fn parse(text: &str) -> Result<Dec, String> {
        let t = text.trim();
        if let Some((n, d)) = t.split_once('/') {
            let num = rational_from_decimal(n)?;
            let den = rational_from_decimal(d)?;
            if den == 0 {
                return Err("zero denominator".into());
            }
            return Ok(Dec(num / den));
        }
        Ok(Dec(rational_from_decimal(t)?))
    }
}

impl fmt::Display for Dec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Dec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Dec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(serde_json::Number),
            Text(String),
        }
        let raw = Raw::deserialize(d)?;
        let text = match raw {
            Raw::Num(n) => n.to_string(),
            Raw::Text(t) => t,
        };
        Dec::parse(&text).map_err(DeError::custom)
    }
}
