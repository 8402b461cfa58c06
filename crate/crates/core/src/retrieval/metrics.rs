use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VgsError};
use crate::model::distance;

/// Per-query gold ranks (1-based) and their summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub ranks: Vec<usize>,
    pub pool_size: usize,
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub median_rank: f64,
}

/// Median; the mean of the two central values for even counts.
pub fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

pub fn recall_at(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|r| **r <= k).count() as f64 / ranks.len() as f64
}

impl RankingResult {
    pub fn from_ranks(ranks: Vec<usize>, pool_size: usize) -> Result<Self> {
        if ranks.is_empty() {
            return Err(VgsError::Retrieval("no queries".into()));
        }
        if let Some(r) = ranks.iter().find(|r| **r == 0 || **r > pool_size) {
            return Err(VgsError::Retrieval(format!(
                "rank {r} outside pool of {pool_size}"
            )));
        }
        Ok(RankingResult {
            r_at_1: recall_at(&ranks, 1),
            r_at_5: recall_at(&ranks, 5),
            r_at_10: recall_at(&ranks, 10),
            median_rank: median(&ranks),
            ranks,
            pool_size,
        })
    }
}

/// Rank of item `gold` when items are sorted by ascending score, ties
/// broken by index.
pub fn rank_of(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|(j, s)| **s < g || (**s == g && *j < gold))
        .count()
}

/// `d[q][j] = distance(queries[q], items[j])`, parallel over rows.
pub fn distance_matrix(queries: &[Vec<f64>], items: &[Vec<f64>]) -> Vec<Vec<f64>> {
    queries
        .par_iter()
        .map(|q| items.iter().map(|i| distance(q, i)).collect())
        .collect()
}

/// Ranks the gold image `gold[q]` of each utterance among all `images`.
pub fn rank_images(
    utterances: &[Vec<f64>],
    images: &[Vec<f64>],
    gold: &[usize],
) -> Result<RankingResult> {
    if gold.len() != utterances.len() {
        return Err(VgsError::Retrieval(format!(
            "{} gold entries for {} queries",
            gold.len(),
            utterances.len()
        )));
    }
    if let Some(g) = gold.iter().find(|g| **g >= images.len()) {
        return Err(VgsError::Retrieval(format!(
            "gold image {g} missing from a pool of {}",
            images.len()
        )));
    }
    let ranks = utterances
        .par_iter()
        .zip(gold.par_iter())
        .map(|(u, g)| {
            let scores: Vec<f64> = images.iter().map(|i| distance(u, i)).collect();
            rank_of(&scores, *g)
        })
        .collect();
    RankingResult::from_ranks(ranks, images.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_ranks() {
        let r = RankingResult::from_ranks(vec![1, 3, 12], 20).unwrap();
        assert_eq!(r.r_at_1, 1.0 / 3.0);
        assert_eq!(r.r_at_5, 2.0 / 3.0);
        assert_eq!(r.r_at_10, 2.0 / 3.0);
        assert_eq!(r.median_rank, 3.0);
        assert_eq!(median(&[4, 1, 2, 10]), 3.0);
    }

    #[test]
    fn gold_nearest() {
        let e: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let r = rank_images(&e, &e, &[0, 1, 2]).unwrap();
        assert_eq!(r.r_at_1, 1.0);
        assert_eq!(r.median_rank, 1.0);
        assert!(rank_images(&e, &e, &[0, 1, 3]).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 0), 1);
        assert_eq!(rank_of(&[0.5, 0.5, 0.5], 2), 3);
        assert_eq!(rank_of(&[0.9, 0.1, 0.5], 0), 3);
    }
}
