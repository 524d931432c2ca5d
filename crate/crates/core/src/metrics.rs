//! Quadratic weighted kappa, confusion matrices and fold aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Level;
use crate::{Error, Result};

fn check(gold: &[Level], pred: &[Level], min_level: Level, max_level: Level) -> Result<usize> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "rating lists differ in length: {} vs {}",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no ratings to compare".into()));
    }
    if min_level > max_level {
        return Err(Error::InvalidArgument("min_level exceeds max_level".into()));
    }
    if let Some(v) = gold.iter().chain(pred).find(|v| !(min_level..=max_level).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "rating {v} outside [{min_level}, {max_level}]"
        )));
    }
    Ok((max_level - min_level + 1) as usize)
}

/// Gold × predicted counts over a fixed level range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub min_level: Level,
    pub max_level: Level,
    /// `counts[g][p]`, offset by `min_level`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(min_level: Level, max_level: Level) -> Self {
        let l = (max_level - min_level + 1).max(0) as usize;
        ConfusionMatrix {
            min_level,
            max_level,
            counts: vec![vec![0; l]; l],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.counts.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Element-wise sum; ranges are widened to cover both.
    pub fn merged(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        let min = self.min_level.min(other.min_level);
        let max = self.max_level.max(other.max_level);
        let mut out = ConfusionMatrix::zeros(min, max);
        for m in [self, other] {
            let off = (m.min_level - min) as usize;
            for (i, row) in m.counts.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    out.counts[i + off][j + off] += c;
                }
            }
        }
        out
    }
}

pub fn confusion(gold: &[Level], pred: &[Level], min_level: Level, max_level: Level) -> Result<ConfusionMatrix> {
    check(gold, pred, min_level, max_level)?;
    let mut m = ConfusionMatrix::zeros(min_level, max_level);
    for (&g, &p) in gold.iter().zip(pred) {
        m.counts[(g - min_level) as usize][(p - min_level) as usize] += 1;
    }
    Ok(m)
}

/// A kappa value and whether the degenerate-denominator rule produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    pub degenerate: bool,
}

/// Quadratic weighted kappa with the degeneracy flag.
///
/// Weights are `(i - j)^2 / (L - 1)^2`; expected counts are the outer product
/// of the gold and predicted histograms divided by the number of ratings.
/// When the weighted expected disagreement is zero the value is 1.0 for a
/// diagonal observed matrix and 0.0 otherwise. A single-level range gives
/// 1.0.
pub fn qwk_detailed(gold: &[Level], pred: &[Level], min_level: Level, max_level: Level) -> Result<Kappa> {
    let l = check(gold, pred, min_level, max_level)?;
    if l == 1 {
        return Ok(Kappa {
            value: 1.0,
            degenerate: true,
        });
    }
    let observed = confusion(gold, pred, min_level, max_level)?;
    let hist_gold = observed.row_sums();
    let hist_pred = observed.col_sums();
    let n = gold.len() as f64;
    let scale = ((l - 1) * (l - 1)) as f64;

    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (row, &g)) in observed.counts.iter().zip(&hist_gold).enumerate() {
        for (j, (&o, &p)) in row.iter().zip(&hist_pred).enumerate() {
            let w = ((i as f64 - j as f64).powi(2)) / scale;
            num += w * o as f64;
            den += w * (g as f64 * p as f64) / n;
        }
    }
    if den == 0.0 {
        return Ok(Kappa {
            value: if observed.is_diagonal() { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    Ok(Kappa {
        value: 1.0 - num / den,
        degenerate: false,
    })
}

pub fn qwk(gold: &[Level], pred: &[Level], min_level: Level, max_level: Level) -> Result<f64> {
    qwk_detailed(gold, pred, min_level, max_level).map(|k| k.value)
}

/// Outcome of scoring one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_id: u32,
    pub qwk: f64,
    pub degenerate: bool,
    pub n: usize,
    pub confusion: ConfusionMatrix,
}

impl FoldResult {
    pub fn evaluate(fold_id: u32, gold: &[Level], pred: &[Level], min_level: Level, max_level: Level) -> Result<Self> {
        let k = qwk_detailed(gold, pred, min_level, max_level)?;
        Ok(FoldResult {
            fold_id,
            qwk: k.value,
            degenerate: k.degenerate,
            n: gold.len(),
            confusion: confusion(gold, pred, min_level, max_level)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub fold_qwk: Vec<f64>,
    pub mean_qwk: f64,
    pub degenerate_folds: Vec<u32>,
    pub confusion: ConfusionMatrix,
}

/// Unweighted mean of fold kappas; confusion matrices are summed.
pub fn aggregate(folds: &[FoldResult]) -> Result<Aggregate> {
    let first = folds
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot aggregate zero folds".into()))?;
    let fold_qwk: Vec<f64> = folds.iter().map(|f| f.qwk).collect();
    let mean_qwk = fold_qwk.iter().sum::<f64>() / fold_qwk.len() as f64;
    let confusion = folds[1..]
        .iter()
        .fold(first.confusion.clone(), |acc, f| acc.merged(&f.confusion));
    Ok(Aggregate {
        fold_qwk,
        mean_qwk,
        degenerate_folds: folds.iter().filter(|f| f.degenerate).map(|f| f.fold_id).collect(),
        confusion,
    })
}

/// Plain-text table: one row per model, one column per task, then the
/// average over the row's tasks.
pub fn render_table(title: &str, tasks: &[String], rows: &[(String, BTreeMap<String, f64>)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).chain([5]).max().unwrap_or(5);
    let col_w = tasks.iter().map(String::len).chain([6]).max().unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<name_w$}", "Model");
    for t in tasks {
        let _ = write!(out, "  {t:>col_w$}");
    }
    let _ = writeln!(out, "  {:>col_w$}", "Ave.");
    for (name, values) in rows {
        let _ = write!(out, "{name:<name_w$}");
        let mut present = Vec::new();
        for t in tasks {
            match values.get(t) {
                Some(v) => {
                    present.push(*v);
                    let _ = write!(out, "  {v:>col_w$.3}");
                }
                None => {
                    let _ = write!(out, "  {:>col_w$}", "-");
                }
            }
        }
        if present.is_empty() {
            let _ = writeln!(out, "  {:>col_w$}", "-");
        } else {
            let avg = present.iter().sum::<f64>() / present.len() as f64;
            let _ = writeln!(out, "  {avg:>col_w$.3}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_inverse() {
        assert_eq!(qwk(&[0, 1, 2, 3], &[0, 1, 2, 3], 0, 3).unwrap(), 1.0);
        assert_eq!(qwk(&[0, 1], &[1, 0], 0, 1).unwrap(), -1.0);
    }

    #[test]
    fn degenerate_cases() {
        let k = qwk_detailed(&[2, 2, 2], &[2, 2, 2], 0, 4).unwrap();
        assert_eq!(k, Kappa { value: 1.0, degenerate: true });
        let k = qwk_detailed(&[1, 1], &[1, 1], 1, 1).unwrap();
        assert_eq!(k.value, 1.0);
        // Constant but different raters: not degenerate, kappa is 0.
        let k = qwk_detailed(&[0, 0], &[3, 3], 0, 3).unwrap();
        assert_eq!(k, Kappa { value: 0.0, degenerate: false });
    }

    #[test]
    fn errors() {
        assert!(qwk(&[0], &[0, 1], 0, 3).is_err());
        assert!(qwk(&[], &[], 0, 3).is_err());
        assert!(qwk(&[4], &[0], 0, 3).is_err());
        assert!(confusion(&[], &[], 0, 3).is_err());
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[2, 2], &[2, 2], 0, 3).unwrap();
        assert_eq!(m.counts[2][2], 2);
        assert_eq!(m.total(), 2);
        assert!(m.is_diagonal());
        let m = confusion(&[1, 2, 3], &[1, 3, 3], 1, 3).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 0, 1], vec![0, 0, 1]]);
    }

    #[test]
    fn aggregate_examples() {
        let fold = |id, q| FoldResult {
            fold_id: id,
            qwk: q,
            degenerate: false,
            n: 1,
            confusion: confusion(&[0], &[0], 0, 1).unwrap(),
        };
        let a = aggregate(&[fold(0, 0.6), fold(1, 0.8)]).unwrap();
        assert!((a.mean_qwk - 0.7).abs() < 1e-12);
        assert_eq!(a.confusion.total(), 2);
        assert_eq!(aggregate(&[fold(0, 0.42)]).unwrap().mean_qwk, 0.42);
        assert!(aggregate(&[]).is_err());

        let qs = [0.51, 0.77, 0.12, 0.93, 0.64];
        let folds: Vec<_> = qs.iter().enumerate().map(|(i, &q)| fold(i as u32, q)).collect();
        let a = aggregate(&folds).unwrap();
        let recomputed = (0.51 + 0.77 + 0.12 + 0.93 + 0.64) / 5.0;
        assert!((a.mean_qwk - recomputed).abs() < 1e-12);
    }

    #[test]
    fn table_layout() {
        let tasks = vec!["T3".to_string(), "T4".to_string()];
        let rows = vec![("pt".to_string(), [("T3".to_string(), 0.5), ("T4".to_string(), 0.7)].into_iter().collect())];
        let t = render_table("QWK", &tasks, &rows);
        assert!(t.contains("Ave."));
        assert!(t.lines().nth(2).unwrap().trim_end().ends_with("0.600"), "{t}");
    }

    fn ratings(max: Level) -> impl Strategy<Value = (Vec<Level>, Vec<Level>)> {
        (1usize..40).prop_flat_map(move |n| {
            (
                proptest::collection::vec(0..=max, n),
                proptest::collection::vec(0..=max, n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((g, p) in ratings(4)) {
            let a = qwk(&g, &p, 0, 4).unwrap();
            let b = qwk(&p, &g, 0, 4).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
        }

        #[test]
        fn shift_invariant((g, p) in ratings(3), shift in -5i64..5) {
            let gs: Vec<_> = g.iter().map(|v| v + shift).collect();
            let ps: Vec<_> = p.iter().map(|v| v + shift).collect();
            let a = qwk(&g, &p, 0, 3).unwrap();
            let b = qwk(&gs, &ps, shift, 3 + shift).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn self_agreement_and_diagonal((g, p) in ratings(4)) {
            prop_assert_eq!(qwk(&g, &g, 0, 4).unwrap(), 1.0);
            let m = confusion(&g, &p, 0, 4).unwrap();
            prop_assert_eq!(m.total(), g.len() as u64);
            prop_assert_eq!(m.row_sums().iter().sum::<u64>(), g.len() as u64);
            prop_assert_eq!(m.col_sums().iter().sum::<u64>(), g.len() as u64);
            let exact = g.iter().zip(&p).filter(|(a, b)| a == b).count() as u64;
            prop_assert_eq!(m.trace(), exact);
            let k = qwk_detailed(&g, &p, 0, 4).unwrap();
            if !k.degenerate {
                prop_assert_eq!(k.value == 1.0, m.is_diagonal());
            }
        }
    }
}
