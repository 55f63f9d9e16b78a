//! Combinatorial capacity bounds relating hidden dimension and problem radius.
//!
//! A `d`-dimensional vector of `f`-bit floats distinguishes at most
//! `b^(f·d)` cases. Fitting Tree-NeighborsMatch of radius `r` requires telling
//! apart every leaf-label assignment that reaches the root, so
//! `b^(f·d) > R(r)` with
//!
//! * main variant: `R(r) = (m^r)! / (m!)^P`, where `P = (m^r − 1)/(m − 1)` is
//!   the number of parent nodes whose children may be reordered;
//! * appendix variant: `R(r) = (m^r)!`.
//!
//! All comparisons are exact big-integer arithmetic.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;
use thiserror::Error;

/// Largest radius [`max_radius`] will report.
pub const MAX_RADIUS_CAP: u32 = 64;
/// Leaf counts above this make the exact factorial impractically slow.
pub const MAX_LEAVES: u64 = 1 << 18;
/// Upper limit on `log2` of the capacity `b^(f·d)`.
pub const MAX_CAPACITY_BITS: f64 = (1u64 << 21) as f64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundError {
    #[error("invalid bound parameters: {0}")]
    Params(String),
    #[error("radius must be at least 1")]
    Radius,
    #[error("hidden dimension must be at least 1")]
    Dimension,
    #[error("empty radius range")]
    EmptyRange,
    #[error("internal consistency: (m!)^{parents} does not divide (m^r)! for m={m}, r={r}")]
    InexactDivision { m: u32, r: u32, parents: u64 },
    #[error("radius {0} exceeds the supported leaf count ({MAX_LEAVES})")]
    Overflow(u32),
    #[error("capacity b^(f*d) exceeds 2^{MAX_CAPACITY_BITS} for d={0}")]
    CapacityTooLarge(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundVariant {
    /// Leaf assignments up to reordering of siblings.
    #[default]
    Main,
    /// All leaf assignments.
    Appendix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Tree arity.
    pub m: u32,
    /// Counting base.
    pub b: u32,
    /// Digits (bits for `b = 2`) per float.
    pub f: u32,
    pub variant: BoundVariant,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            m: 2,
            b: 2,
            f: 32,
            variant: BoundVariant::Main,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<(), BoundError> {
        if self.m < 2 {
            return Err(BoundError::Params(format!("arity m={} < 2", self.m)));
        }
        if self.b < 2 {
            return Err(BoundError::Params(format!("base b={} < 2", self.b)));
        }
        if self.f < 1 {
            return Err(BoundError::Params("f must be at least 1".into()));
        }
        Ok(())
    }

    /// `b^(f·d)`
    pub fn capacity(&self, d: u64) -> BigUint {
        let exp = u32::try_from(self.f as u64 * d).expect("capacity exponent fits u32");
        BigUint::from(self.b).pow(exp)
    }
}

/// `lo · (lo+1) · … · hi` by balanced splitting.
fn range_product(lo: u64, hi: u64) -> BigUint {
    if lo > hi {
        return BigUint::one();
    }
    if hi - lo < 16 {
        return (lo..=hi).fold(BigUint::one(), |acc, x| acc * x);
    }
    let mid = lo + (hi - lo) / 2;
    range_product(lo, mid) * range_product(mid + 1, hi)
}

pub fn factorial(n: u64) -> BigUint {
    range_product(2, n)
}

fn leaves(m: u32, r: u32) -> Result<u64, BoundError> {
    (m as u64)
        .checked_pow(r)
        .filter(|&n| n <= MAX_LEAVES)
        .ok_or(BoundError::Overflow(r))
}

/// Number of examples the root's vector must separate at radius `r`.
pub fn required_distinctions(r: u32, params: &BoundParams) -> Result<BigUint, BoundError> {
    params.validate()?;
    if r < 1 {
        return Err(BoundError::Radius);
    }
    let n = leaves(params.m, r)?;
    let all = factorial(n);
    match params.variant {
        BoundVariant::Appendix => Ok(all),
        BoundVariant::Main => {
            let parents = (n - 1) / (params.m as u64 - 1);
            let exp = u32::try_from(parents).map_err(|_| BoundError::Overflow(r))?;
            let sibling_orders = factorial(params.m as u64).pow(exp);
            let (q, rem) = all.div_rem(&sibling_orders);
            if !rem.is_zero() {
                return Err(BoundError::InexactDivision {
                    m: params.m,
                    r,
                    parents,
                });
            }
            Ok(q)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundQuery {
    MinHiddenDim { radius: u32 },
    MaxRadius { dim: u64 },
}

/// The exact inequality sides at the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// `capacity = b^(f·d) > required` and `capacity_below = b^(f·(d−1)) ≤ required`.
    MinHiddenDim {
        capacity: BigUint,
        capacity_below: BigUint,
        required: BigUint,
    },
    /// `capacity > required = R(r)` and `capacity ≤ R(r+1)`. `required_above` is
    /// `None` only when the search hit [`MAX_RADIUS_CAP`].
    MaxRadius {
        capacity: BigUint,
        required: BigUint,
        required_above: Option<BigUint>,
    },
}

impl Witness {
    /// Re-checks the inequalities the witness stands for.
    pub fn certifies(&self) -> bool {
        match self {
            Witness::MinHiddenDim {
                capacity,
                capacity_below,
                required,
            } => capacity > required && capacity_below <= required,
            Witness::MaxRadius {
                capacity,
                required,
                required_above,
            } => capacity > required && required_above.as_ref().is_none_or(|above| capacity <= above),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundResult {
    pub query: BoundQuery,
    pub value: u64,
    pub witness: Witness,
}

/// Smallest `d` with `b^(f·d) > R(r)`.
pub fn min_hidden_dim(r: u32, params: &BoundParams) -> Result<BoundResult, BoundError> {
    let required = required_distinctions(r, params)?;
    let unit = BigUint::from(params.b).pow(params.f);
    // Jump close to the answer using bit lengths, then step exactly.
    let bits_per_dim = params.f as f64 * (params.b as f64).log2();
    let guess = ((required.bits() as f64 - 1.0) / bits_per_dim).floor().max(1.0) as u64 - 1;
    let mut d = guess;
    let mut capacity = params.capacity(d);
    while capacity > required && d > 0 {
        d -= 1;
        capacity = params.capacity(d);
    }
    let mut below = capacity.clone();
    while capacity <= required {
        below = capacity.clone();
        capacity *= &unit;
        d += 1;
    }
    Ok(BoundResult {
        query: BoundQuery::MinHiddenDim { radius: r },
        value: d,
        witness: Witness::MinHiddenDim {
            capacity,
            capacity_below: below,
            required,
        },
    })
}

/// Largest `r ≤ MAX_RADIUS_CAP` with `b^(f·d) > R(r)`; `0` if even `r = 1` fails.
pub fn max_radius(d: u64, params: &BoundParams) -> Result<BoundResult, BoundError> {
    params.validate()?;
    if d < 1 {
        return Err(BoundError::Dimension);
    }
    if params.f as f64 * d as f64 * (params.b as f64).log2() > MAX_CAPACITY_BITS {
        return Err(BoundError::CapacityTooLarge(d));
    }
    let capacity = params.capacity(d);
    let mut best = 0u32;
    let mut best_required = BigUint::one();
    let mut above = None;
    for r in 1..=MAX_RADIUS_CAP {
        let required = required_distinctions(r, params)?;
        if capacity > required {
            best = r;
            best_required = required;
        } else {
            above = Some(required);
            break;
        }
    }
    Ok(BoundResult {
        query: BoundQuery::MaxRadius { dim: d },
        value: best as u64,
        witness: Witness::MaxRadius {
            capacity,
            required: best_required,
            required_above: above,
        },
    })
}

/// `(r, min_d)` for every radius in `radii`.
pub fn bound_table(radii: RangeInclusive<u32>, params: &BoundParams) -> Result<Vec<(u32, u64)>, BoundError> {
    if radii.is_empty() {
        return Err(BoundError::EmptyRange);
    }
    radii
        .map(|r| min_hidden_dim(r, params).map(|res| (r, res.value)))
        .collect()
}

/// Exact `(2^depth)! · 2^depth`: distinct Tree-NeighborsMatch examples at `depth`.
pub fn total_examples(depth: u32) -> BigUint {
    let leaves = 1u64 << depth;
    factorial(leaves) * leaves
}

/// Convenience for callers that know the count fits.
pub fn total_examples_u64(depth: u32) -> Option<u64> {
    if depth >= 6 {
        return None;
    }
    total_examples(depth).to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appendix() -> BoundParams {
        BoundParams {
            variant: BoundVariant::Appendix,
            ..Default::default()
        }
    }

    #[test]
    fn required_distinctions_examples() {
        let p = BoundParams::default();
        assert_eq!(required_distinctions(1, &p).unwrap(), BigUint::from(1u32));
        assert_eq!(required_distinctions(2, &p).unwrap(), BigUint::from(3u32));
        assert_eq!(required_distinctions(2, &appendix()).unwrap(), BigUint::from(24u32));
        let ternary = BoundParams { m: 3, ..p };
        // 9! / (3!)^4: four parents (root + three internal nodes)
        assert_eq!(required_distinctions(2, &ternary).unwrap(), BigUint::from(280u32));
        assert_eq!(required_distinctions(0, &p), Err(BoundError::Radius));
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial(0), BigUint::one());
        assert_eq!(factorial(1), BigUint::one());
        assert_eq!(factorial(8), BigUint::from(40320u32));
        let slow = (1..=100u32).fold(BigUint::one(), |a, x| a * x);
        assert_eq!(factorial(100), slow);
    }

    #[test]
    fn total_examples_examples() {
        assert_eq!(total_examples(1), BigUint::from(4u32));
        assert_eq!(total_examples(2), BigUint::from(96u32));
        assert_eq!(total_examples(3), BigUint::from(322_560u32));
        assert!(total_examples(4) > BigUint::from(3u64 * 10u64.pow(14)));
        assert_eq!(total_examples_u64(2), Some(96));
    }

    #[test]
    fn min_dim_matches_published_series() {
        let p = BoundParams::default();
        let table = bound_table(2..=12, &p).unwrap();
        let values: Vec<u64> = table.iter().map(|&(_, d)| d).collect();
        assert_eq!(values, vec![1, 1, 1, 3, 8, 19, 45, 106, 243, 548, 1224]);
        for r in 1..=12 {
            assert!(min_hidden_dim(r, &p).unwrap().witness.certifies());
        }
        assert_eq!(min_hidden_dim(2, &appendix()).unwrap().value, 1);
    }

    #[test]
    fn max_radius_examples() {
        let p = BoundParams::default();
        for (d, r) in [(32, 7), (1, 4), (3, 5)] {
            let res = max_radius(d, &p).unwrap();
            assert_eq!(res.value, r, "d={d}");
            assert!(res.witness.certifies());
            assert!(matches!(
                res.witness,
                Witness::MaxRadius {
                    required_above: Some(_),
                    ..
                }
            ));
        }
        assert_eq!(max_radius(0, &p), Err(BoundError::Dimension));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = BoundParams {
            m: 1,
            ..Default::default()
        };
        assert!(matches!(required_distinctions(2, &p), Err(BoundError::Params(_))));
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 5..=4;
        assert_eq!(bound_table(empty, &BoundParams::default()), Err(BoundError::EmptyRange));
    }
}
