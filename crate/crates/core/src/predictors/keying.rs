//! Reduction from continuous inputs to the finite keys a tabular predictor indexes by.

use crate::error::{Error, Result};
use crate::example::dot;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyingRule {
    /// Digest of the input quantized to 16 significant digits per coordinate.
    ExactInput,
    /// Class of the prototype with the largest dot product (ties to the lowest class).
    #[default]
    NearestPrototype,
}

/// Key of one input in a tabular predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputKey {
    Class(usize),
    Exact(u128),
}

impl InputKey {
    pub fn class(&self) -> Option<usize> {
        match self {
            InputKey::Class(c) => Some(*c),
            InputKey::Exact(_) => None,
        }
    }
}

impl fmt::Display for InputKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputKey::Class(c) => write!(f, "c{c}"),
            InputKey::Exact(h) => write!(f, "x{h:032x}"),
        }
    }
}

impl FromStr for InputKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Malformed(format!("bad input key `{s}`"));
        if let Some(rest) = s.strip_prefix('c') {
            rest.parse().map(InputKey::Class).map_err(|_| bad())
        } else if let Some(rest) = s.strip_prefix('x') {
            u128::from_str_radix(rest, 16).map(InputKey::Exact).map_err(|_| bad())
        } else {
            Err(bad())
        }
    }
}

impl Serialize for InputKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InputKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn derive_key(rule: KeyingRule, input: &[f64], prototypes: &[Vec<f64>]) -> Result<InputKey> {
    match rule {
        KeyingRule::ExactInput => Ok(InputKey::Exact(exact_digest(input))),
        KeyingRule::NearestPrototype => nearest_prototype(input, prototypes).map(InputKey::Class),
    }
}

pub fn nearest_prototype(input: &[f64], prototypes: &[Vec<f64>]) -> Result<usize> {
    if prototypes.is_empty() {
        return Err(Error::InvalidSpec("nearest-prototype keying needs prototypes".into()));
    }
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (class, proto) in prototypes.iter().enumerate() {
        let s = dot(input, proto);
        if s > best_dot {
            best = class;
            best_dot = s;
        }
    }
    Ok(best)
}

fn exact_digest(input: &[f64]) -> u128 {
    let mut hasher = Sha256::new();
    for x in input {
        // normalize negative zero so it collides with zero
        let x = if *x == 0.0 { 0.0 } else { *x };
        hasher.update(format!("{x:.15e};").as_bytes());
    }
    let bytes = hasher.finalize();
    u128::from_be_bytes(bytes[..16].try_into().expect("sha256 digest is 32 bytes"))
}
