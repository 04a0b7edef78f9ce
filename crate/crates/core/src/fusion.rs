//! Per-pixel majority vote over expert label maps.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ExpertSet, LabelMap};

/// How a vote with several top-scoring classes is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    LowestClass,
    HighestClass,
    /// The tied class named by the earliest expert in the set.
    FirstExpert,
}

impl TieRule {
    pub const ALL: [TieRule; 3] = [
        TieRule::LowestClass,
        TieRule::HighestClass,
        TieRule::FirstExpert,
    ];
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::LowestClass => "lowest_class",
            TieRule::HighestClass => "highest_class",
            TieRule::FirstExpert => "first_expert",
        })
    }
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest_class" | "lowest" => Ok(TieRule::LowestClass),
            "highest_class" | "highest" => Ok(TieRule::HighestClass),
            "first_expert" | "first" => Ok(TieRule::FirstExpert),
            other => Err(Error::Config(format!("unknown tie rule `{other}`"))),
        }
    }
}

pub fn major_vote(experts: &ExpertSet, rule: TieRule) -> Result<LabelMap> {
    major_vote_maps(experts.labels(), rule)
}

/// Majority vote over a slice of maps. Errors when the slice is empty or the
/// maps disagree in shape or class count.
pub fn major_vote_maps(maps: &[LabelMap], rule: TieRule) -> Result<LabelMap> {
    let first = maps.first().ok_or(Error::NoAnnotators)?;
    ExpertSet::check(maps)?;
    let k = first.num_classes();
    let (h, w) = first.dim();
    let mut counts = vec![0u32; k];
    let mut out = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            counts.iter_mut().for_each(|c| *c = 0);
            for m in maps {
                counts[usize::from(m.get(y, x))] += 1;
            }
            let top = *counts.iter().max().unwrap();
            let winner = match rule {
                TieRule::LowestClass => counts.iter().position(|&c| c == top).unwrap(),
                TieRule::HighestClass => counts.iter().rposition(|&c| c == top).unwrap(),
                TieRule::FirstExpert => maps
                    .iter()
                    .map(|m| usize::from(m.get(y, x)))
                    .find(|&c| counts[c] == top)
                    .unwrap(),
            };
            out[[y, x]] = winner as u8;
        }
    }
    LabelMap::new(out, k)
}
