//! Identifiers, units and small value types shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LoRA rank: the inner dimension of the adapter factorization `B · A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Rank(u32);

impl Rank {
    pub fn new(value: u32) -> Result<Self> {
        if value == 0 {
            return Err(Error::InvalidArgument("rank must be ≥ 1".into()));
        }
        Ok(Rank(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Checks the rank against the dimensions of a `d × k` adapter target.
    pub fn fits(self, d: usize, k: usize) -> bool {
        self.as_usize() <= d.min(k)
    }
}

impl TryFrom<u32> for Rank {
    type Error = Error;
    fn try_from(value: u32) -> Result<Self> {
        Rank::new(value)
    }
}

impl From<Rank> for u32 {
    fn from(r: Rank) -> u32 {
        r.0
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Candidate rank set: non-empty and strictly ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct RankSet(Vec<Rank>);

impl RankSet {
    pub fn new(ranks: Vec<Rank>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::InvalidArgument("rank set must not be empty".into()));
        }
        if ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "rank set must be strictly ascending without duplicates".into(),
            ));
        }
        Ok(RankSet(ranks))
    }

    pub fn from_values(values: &[u32]) -> Result<Self> {
        let ranks = values.iter().map(|&v| Rank::new(v)).collect::<Result<Vec<_>>>()?;
        RankSet::new(ranks)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Rank {
        self.0[index]
    }

    pub fn index_of(&self, rank: Rank) -> Option<usize> {
        self.0.binary_search(&rank).ok()
    }

    pub fn min(&self) -> Rank {
        self.0[0]
    }

    pub fn max(&self) -> Rank {
        self.0[self.0.len() - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = Rank> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[Rank] {
        &self.0
    }
}

impl TryFrom<Vec<u32>> for RankSet {
    type Error = Error;
    fn try_from(values: Vec<u32>) -> Result<Self> {
        RankSet::from_values(&values)
    }
}

impl From<RankSet> for Vec<u32> {
    fn from(set: RankSet) -> Vec<u32> {
        set.0.into_iter().map(u32::from).collect()
    }
}

macro_rules! dense_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Dense task index assigned at validation.
    TaskId
);
dense_id!(
    /// Dense vehicle index assigned at validation.
    VehicleId
);
dense_id!(
    /// Dense RSU index assigned at validation.
    RsuId
);

/// Objective weights.
///
/// `alpha` prices latency (per second), `gamma` prices accuracy (per unit of
/// accuracy fraction) and `beta` prices energy (per joule) in the mobility
/// fallback costs only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(
                    format!("weights.{name}"),
                    None,
                    "weight must be finite and ≥ 0",
                ));
            }
        }
        Ok(())
    }
}

/// 1-based communication round index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoundIndex(u32);

impl RoundIndex {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("round index is 1-based".into()));
        }
        Ok(RoundIndex(m))
    }

    pub fn first() -> Self {
        RoundIndex(1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn next(self) -> Self {
        RoundIndex(self.0 + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_zero_rejected() {
        let err = Rank::new(0).unwrap_err();
        assert!(err.to_string().contains("rank must be ≥ 1"));
        assert!(Rank::new(1).is_ok());
    }

    #[test]
    fn rank_fits_shape() {
        let r = Rank::new(8).unwrap();
        assert!(r.fits(8, 64));
        assert!(!r.fits(7, 64));
    }

    #[test]
    fn rank_set_must_ascend() {
        assert!(RankSet::from_values(&[1, 4, 8, 16]).is_ok());
        assert!(RankSet::from_values(&[]).is_err());
        assert!(RankSet::from_values(&[4, 1]).is_err());
        assert!(RankSet::from_values(&[1, 1]).is_err());
        assert!(RankSet::from_values(&[0, 1]).is_err());
    }

    #[test]
    fn rank_set_lookup() {
        let set = RankSet::from_values(&[1, 4, 8, 16]).unwrap();
        assert_eq!(set.index_of(Rank::new(8).unwrap()), Some(2));
        assert_eq!(set.index_of(Rank::new(5).unwrap()), None);
        assert_eq!(set.min().get(), 1);
        assert_eq!(set.max().get(), 16);
    }

    #[test]
    fn weights_reject_negative() {
        let w = Weights { alpha: 1.0, gamma: -1.0, beta: 0.0 };
        assert!(w.validate().is_err());
    }
}
