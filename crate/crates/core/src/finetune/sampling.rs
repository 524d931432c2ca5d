use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Level, LevelIndex};
use crate::rng;
use crate::{Error, Result};

use super::LossKind;

/// Which levels negatives may come from, relative to the anchor's level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Any other level.
    #[default]
    All,
    /// Levels at least two away.
    Easy,
    /// Adjacent levels.
    Hard,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::All => "all",
            Strategy::Easy => "easy",
            Strategy::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Strategy::All),
            "easy" => Ok(Strategy::Easy),
            "hard" => Ok(Strategy::Hard),
            other => Err(Error::InvalidArgument(format!("unknown sampling strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn eligible_negative_levels(anchor: Level, strategy: Strategy, min_level: Level, max_level: Level) -> Result<Vec<Level>> {
    if !(min_level..=max_level).contains(&anchor) {
        return Err(Error::InvalidArgument(format!(
            "anchor level {anchor} outside [{min_level}, {max_level}]"
        )));
    }
    let levels: Vec<Level> = (min_level..=max_level)
        .filter(|&l| {
            let gap = (l - anchor).abs();
            match strategy {
                Strategy::All => gap != 0,
                Strategy::Easy => gap >= 2,
                Strategy::Hard => gap == 1,
            }
        })
        .collect();
    if levels.is_empty() {
        return Err(Error::NoEligibleLevels {
            anchor,
            strategy: strategy.name().into(),
            min: min_level,
            max: max_level,
        });
    }
    Ok(levels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    /// Up to `negs_per_level` ids from each eligible level, in level order.
    pub negatives: Vec<String>,
}

/// Sample one epoch of triplets.
///
/// Every essay in a level with at least two essays is an anchor exactly
/// once. Its positive is drawn uniformly from the rest of its level; from
/// each eligible non-empty level, `negs_per_level` negatives are drawn
/// without replacement (all of them when the level is smaller). The triplet
/// order is shuffled. The result depends only on `(seed, epoch)`.
pub fn sample_triplets(
    index: &LevelIndex,
    strategy: Strategy,
    negs_per_level: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Triplet>> {
    if negs_per_level == 0 {
        return Err(Error::InvalidArgument("negs_per_level must be at least 1".into()));
    }
    let mut rng = rng::rng(rng::indexed_seed(rng::stream_seed(seed, "triplets"), epoch));
    let mut triplets = Vec::new();
    for (&level, ids) in &index.levels {
        if ids.is_empty() {
            continue;
        }
        if ids.len() < 2 {
            log::warn!("level {level} of `{}` has a single essay; it is not used as an anchor", index.task_id);
            continue;
        }
        let eligible: Vec<Level> = eligible_negative_levels(level, strategy, index.min_level, index.max_level)?
            .into_iter()
            .filter(|l| !index.ids(*l).is_empty())
            .collect();
        if eligible.is_empty() {
            return Err(Error::NoEligibleLevels {
                anchor: level,
                strategy: strategy.name().into(),
                min: index.min_level,
                max: index.max_level,
            });
        }
        for (i, anchor) in ids.iter().enumerate() {
            let mut j = rng.random_range(0..ids.len() - 1);
            if j >= i {
                j += 1;
            }
            let mut negatives = Vec::new();
            for &l in &eligible {
                let pool = index.ids(l);
                negatives.extend(pool.choose_multiple(&mut rng, negs_per_level).cloned());
            }
            triplets.push(Triplet {
                anchor: anchor.clone(),
                positive: ids[j].clone(),
                negatives,
            });
        }
    }
    if triplets.is_empty() {
        return Err(Error::NoAnchors);
    }
    triplets.shuffle(&mut rng);
    Ok(triplets)
}

/// One loss term: PSCE uses exactly one negative, InfoNCE all of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingUnit<'a> {
    pub anchor: &'a str,
    pub positive: &'a str,
    pub negatives: Vec<&'a str>,
}

/// Expand triplets into loss terms, preserving triplet order.
pub fn training_units(triplets: &[Triplet], loss: LossKind) -> Vec<TrainingUnit<'_>> {
    match loss {
        LossKind::Psce => triplets
            .iter()
            .flat_map(|t| {
                t.negatives.iter().map(move |n| TrainingUnit {
                    anchor: &t.anchor,
                    positive: &t.positive,
                    negatives: vec![n.as_str()],
                })
            })
            .collect(),
        LossKind::InfoNce => triplets
            .iter()
            .map(|t| TrainingUnit {
                anchor: &t.anchor,
                positive: &t.positive,
                negatives: t.negatives.iter().map(String::as_str).collect(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eligible_examples() {
        assert_eq!(eligible_negative_levels(2, Strategy::All, 0, 4).unwrap(), [0, 1, 3, 4]);
        assert_eq!(eligible_negative_levels(2, Strategy::Easy, 0, 4).unwrap(), [0, 4]);
        assert_eq!(eligible_negative_levels(2, Strategy::Hard, 0, 4).unwrap(), [1, 3]);
        assert_eq!(eligible_negative_levels(0, Strategy::Hard, 0, 4).unwrap(), [1]);
        let err = eligible_negative_levels(0, Strategy::Easy, 0, 1).unwrap_err();
        assert!(err.to_string().contains("different sampling strategy"));
        assert!(eligible_negative_levels(5, Strategy::All, 0, 4).is_err());
    }

    #[test]
    fn strategy_partition() {
        for max in 2..7 {
            for anchor in 0..=max {
                let all = eligible_negative_levels(anchor, Strategy::All, 0, max).unwrap();
                let easy = eligible_negative_levels(anchor, Strategy::Easy, 0, max).unwrap_or_default();
                let hard = eligible_negative_levels(anchor, Strategy::Hard, 0, max).unwrap();
                let mut union: Vec<_> = easy.iter().chain(&hard).copied().collect();
                union.sort();
                assert_eq!(union, all);
                assert!(easy.iter().all(|l| !hard.contains(l)));
            }
        }
    }

    fn idx(levels: &[(Level, &[&str])], max: Level) -> LevelIndex {
        let mut i = LevelIndex::empty("T", 0, max);
        for (l, ids) in levels {
            i.levels.insert(*l, ids.iter().map(|s| s.to_string()).collect());
        }
        i
    }

    #[test]
    fn single_level_has_no_negatives() {
        let i = idx(&[(0, &["a", "b"])], 3);
        assert!(matches!(sample_triplets(&i, Strategy::All, 1, 0, 0), Err(Error::NoEligibleLevels { .. })));
    }

    #[test]
    fn two_by_two_enumeration() {
        let i = idx(&[(0, &["a", "b"]), (1, &["c", "d"])], 1);
        let ts = sample_triplets(&i, Strategy::All, 1, 3, 0).unwrap();
        assert_eq!(ts.len(), 4);
        let level = |id: &str| if id == "a" || id == "b" { 0 } else { 1 };
        let mut anchors: Vec<_> = ts.iter().map(|t| t.anchor.as_str()).collect();
        anchors.sort();
        assert_eq!(anchors, ["a", "b", "c", "d"]);
        for t in &ts {
            // Only one other essay at the anchor's level.
            let partner = match t.anchor.as_str() {
                "a" => "b",
                "b" => "a",
                "c" => "d",
                _ => "c",
            };
            assert_eq!(t.positive, partner);
            assert_eq!(t.negatives.len(), 1);
            assert_ne!(level(&t.negatives[0]), level(&t.anchor));
        }
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        let i = idx(&[(0, &["a", "b", "c"]), (1, &["d", "e", "f"]), (2, &["g", "h"])], 2);
        let a = sample_triplets(&i, Strategy::All, 2, 9, 4).unwrap();
        assert_eq!(a, sample_triplets(&i, Strategy::All, 2, 9, 4).unwrap());
        assert_ne!(a, sample_triplets(&i, Strategy::All, 2, 9, 5).unwrap());
    }

    #[test]
    fn negatives_per_level_and_strategy() {
        let ids: Vec<String> = (0..25).map(|n| format!("e{n}")).collect();
        let mut i = LevelIndex::empty("T", 0, 4);
        for l in 0..5 {
            i.levels.insert(l, ids[(l as usize * 5)..(l as usize * 5 + 5)].to_vec());
        }
        let level_of = |id: &str| i.level_of(id).unwrap();
        let ts = sample_triplets(&i, Strategy::All, 5, 1, 0).unwrap();
        for t in &ts {
            let a = level_of(&t.anchor);
            assert_ne!(t.anchor, t.positive);
            assert_eq!(level_of(&t.positive), a);
            assert_eq!(t.negatives.len(), 20);
            let mut negs = t.negatives.clone();
            negs.sort();
            negs.dedup();
            assert_eq!(negs.len(), 20);
        }
        let ts = sample_triplets(&i, Strategy::Easy, 2, 1, 0).unwrap();
        for t in &ts {
            let a = level_of(&t.anchor);
            assert!(t.negatives.iter().all(|n| (level_of(n) - a).abs() >= 2));
        }
        let ts = sample_triplets(&i, Strategy::Hard, 3, 1, 0).unwrap();
        for t in &ts {
            let a = level_of(&t.anchor);
            assert!(t.negatives.iter().all(|n| (level_of(n) - a).abs() == 1));
        }
        assert_eq!(training_units(&ts, LossKind::Psce).len(), ts.iter().map(|t| t.negatives.len()).sum::<usize>());
        assert_eq!(training_units(&ts, LossKind::InfoNce).len(), ts.len());
    }

    #[test]
    fn singleton_levels_are_skipped_as_anchors() {
        let i = idx(&[(0, &["a"]), (1, &["c", "d"])], 1);
        let ts = sample_triplets(&i, Strategy::All, 1, 0, 0).unwrap();
        assert_eq!(ts.len(), 2);
        assert!(ts.iter().all(|t| t.negatives == ["a"]));
        let i = idx(&[(0, &["a"]), (1, &["c"])], 1);
        assert!(matches!(sample_triplets(&i, Strategy::All, 1, 0, 0), Err(Error::NoAnchors)));
    }
}
