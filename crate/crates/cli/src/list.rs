//! Comma-separated lists with inclusive ranges: `2..4,7` is `[2, 3, 4, 7]`.

use oversquash::layers::LayerType;
use serde::{Deserialize, Deserializer};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntList(pub Vec<u64>);

impl FromStr for IntList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            if part.is_empty() {
                return Err(format!("empty item in list '{s}'"));
            }
            let int = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("invalid integer '{t}' in '{s}'"));
            match part.split_once("..") {
                Some((lo, hi)) => {
                    let (lo, hi) = (int(lo)?, int(hi.trim_start_matches('='))?);
                    if lo > hi {
                        return Err(format!("empty range '{part}'"));
                    }
                    out.extend(lo..=hi);
                }
                None => out.push(int(part)?),
            }
        }
        Ok(IntList(out))
    }
}

impl fmt::Display for IntList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&items.join(","))
    }
}

impl<'de> Deserialize<'de> for IntList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(u64),
            Many(Vec<u64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::One(x) => Ok(IntList(vec![x])),
            Raw::Many(v) => Ok(IntList(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GnnList(pub Vec<LayerType>);

impl FromStr for GnnList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(GnnList(LayerType::ALL.to_vec()));
        }
        s.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>().map(GnnList)
    }
}

impl<'de> Deserialize<'de> for GnnList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Many(Vec<LayerType>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Many(v) => Ok(GnnList(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
