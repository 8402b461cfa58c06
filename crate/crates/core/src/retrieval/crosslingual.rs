use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{rank_of, RankingResult};
use crate::data::features::{write_features, FeatureMatrix};
use crate::error::{Result, VgsError};
use crate::numcore::Rng;

/// How per-pivot path lengths `d_src + d_tgt` combine into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Min,
    Mean,
    Sum,
}

impl Aggregator {
    pub fn combine(self, paths: impl Iterator<Item = f64>) -> f64 {
        match self {
            Aggregator::Min => paths.fold(f64::INFINITY, f64::min),
            Aggregator::Sum => paths.sum(),
            Aggregator::Mean => {
                let (s, n) = paths.fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
                s / n as f64
            }
        }
    }
}

/// Distances from each model's utterances to the shared pivot images, each
/// measured in that model's own embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotIndex {
    pub pivot_ids: Vec<String>,
    /// `src[u][p]`
    pub src: Vec<Vec<f64>>,
    /// `tgt[u][p]`
    pub tgt: Vec<Vec<f64>>,
}

impl PivotIndex {
    pub fn new(pivot_ids: Vec<String>, src: Vec<Vec<f64>>, tgt: Vec<Vec<f64>>) -> Result<Self> {
        if pivot_ids.is_empty() {
            return Err(VgsError::Retrieval("empty pivot set".into()));
        }
        let p = pivot_ids.len();
        if let Some(row) = src.iter().chain(&tgt).find(|r| r.len() != p) {
            return Err(VgsError::Retrieval(format!(
                "distance row of length {} for {p} pivots",
                row.len()
            )));
        }
        Ok(PivotIndex {
            pivot_ids,
            src,
            tgt,
        })
    }

    /// Fails if any pivot was seen in training by either model.
    pub fn check_unseen(&self, trained_on: &[&BTreeSet<String>]) -> Result<()> {
        for id in &self.pivot_ids {
            if trained_on.iter().any(|s| s.contains(id)) {
                return Err(VgsError::Retrieval(format!(
                    "pivot image {id} was seen in training"
                )));
            }
        }
        Ok(())
    }

    /// The same index with source and target roles exchanged.
    pub fn reversed(&self) -> PivotIndex {
        PivotIndex {
            pivot_ids: self.pivot_ids.clone(),
            src: self.tgt.clone(),
            tgt: self.src.clone(),
        }
    }

    /// Restricts to the given source and target utterance rows.
    pub fn select(&self, src_rows: &[usize], tgt_rows: &[usize]) -> PivotIndex {
        PivotIndex {
            pivot_ids: self.pivot_ids.clone(),
            src: src_rows.iter().map(|r| self.src[*r].clone()).collect(),
            tgt: tgt_rows.iter().map(|r| self.tgt[*r].clone()).collect(),
        }
    }
}

/// `scores[s][t] = agg_p (src[s][p] + tgt[t][p])`.
pub fn crosslingual_scores(index: &PivotIndex, agg: Aggregator) -> Vec<Vec<f64>> {
    index
        .src
        .par_iter()
        .map(|s| {
            index
                .tgt
                .iter()
                .map(|t| agg.combine(s.iter().zip(t).map(|(a, b)| a + b)))
                .collect()
        })
        .collect()
}

/// Ranks target utterance `gold[s]` for each source query `s`.
pub fn crosslingual_rank(
    index: &PivotIndex,
    gold: &[usize],
    agg: Aggregator,
) -> Result<RankingResult> {
    if index.pivot_ids.is_empty() {
        return Err(VgsError::Retrieval("empty pivot set".into()));
    }
    let scores = crosslingual_scores(index, agg);
    ranks_from_scores(&scores, gold)
}

pub fn ranks_from_scores(scores: &[Vec<f64>], gold: &[usize]) -> Result<RankingResult> {
    if gold.len() != scores.len() {
        return Err(VgsError::Retrieval(format!(
            "{} gold entries for {} queries",
            gold.len(),
            scores.len()
        )));
    }
    let pool = scores.first().map_or(0, Vec::len);
    if let Some(g) = gold.iter().find(|g| **g >= pool) {
        return Err(VgsError::Retrieval(format!(
            "gold candidate {g} missing from a pool of {pool}"
        )));
    }
    let ranks = scores
        .iter()
        .zip(gold)
        .map(|(row, g)| rank_of(row, *g))
        .collect();
    RankingResult::from_ranks(ranks, pool)
}

/// Captions of each evaluation image, as rows of a `PivotIndex`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionGroups {
    pub image_ids: Vec<String>,
    pub src: Vec<Vec<usize>>,
    pub tgt: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub r_at_10: f64,
    pub median_rank: f64,
}

impl MeanMetrics {
    pub fn of(results: &[&RankingResult]) -> Self {
        let n = results.len() as f64;
        let mean = |f: fn(&RankingResult) -> f64| results.iter().map(|r| f(r)).sum::<f64>() / n;
        MeanMetrics {
            r_at_1: mean(|r| r.r_at_1),
            r_at_5: mean(|r| r.r_at_5),
            r_at_10: mean(|r| r.r_at_10),
            median_rank: mean(|r| r.median_rank),
        }
    }
}

impl From<&RankingResult> for MeanMetrics {
    fn from(r: &RankingResult) -> Self {
        MeanMetrics::of(&[r])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub image_ids: Vec<String>,
    /// Source and target rows picked for each image.
    pub src_rows: Vec<usize>,
    pub tgt_rows: Vec<usize>,
    pub result: RankingResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleResult {
    pub mean: MeanMetrics,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub n_trials: usize,
    pub pool: usize,
    pub aggregator: Aggregator,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            n_trials: 10,
            pool: 1000,
            aggregator: Aggregator::Min,
            seed: 0,
        }
    }
}

/// Repeated `pool × pool` evaluations with one source and one target
/// caption per sampled image; metrics are averaged over trials. When
/// `dump_dir` is set each trial's score matrix is written as
/// `trial_<k>.vgsf`.
pub fn subsample_eval(
    index: &PivotIndex,
    groups: &CaptionGroups,
    config: &SubsampleConfig,
    dump_dir: Option<&Path>,
) -> Result<SubsampleResult> {
    let n = groups.image_ids.len();
    if config.pool == 0 || config.n_trials == 0 {
        return Err(VgsError::config(
            "subsample",
            "pool and n_trials must be positive",
        ));
    }
    if config.pool > n {
        return Err(VgsError::Retrieval(format!(
            "pool of {} exceeds the {n} images available",
            config.pool
        )));
    }
    if let Some(k) = (0..n).find(|k| groups.src[*k].is_empty() || groups.tgt[*k].is_empty()) {
        return Err(VgsError::Retrieval(format!(
            "image {} lacks a source or target caption",
            groups.image_ids[k]
        )));
    }
    let mut rng = Rng::derived(config.seed, "retrieval/subsample");
    let mut trials = Vec::with_capacity(config.n_trials);
    for k in 0..config.n_trials {
        let mut images = rng.sample_indices(n, config.pool);
        images.sort_unstable();
        let src_rows: Vec<usize> = images
            .iter()
            .map(|i| groups.src[*i][rng.below(groups.src[*i].len())])
            .collect();
        let tgt_rows: Vec<usize> = images
            .iter()
            .map(|i| groups.tgt[*i][rng.below(groups.tgt[*i].len())])
            .collect();
        let sub = index.select(&src_rows, &tgt_rows);
        let scores = crosslingual_scores(&sub, config.aggregator);
        if let Some(dir) = dump_dir {
            let m = FeatureMatrix {
                rows: scores.len(),
                cols: scores.len(),
                values: scores.iter().flatten().map(|v| *v as f32).collect(),
            };
            write_features(&dir.join(format!("trial_{k}.vgsf")), &m)?;
        }
        let gold: Vec<usize> = (0..config.pool).collect();
        trials.push(Trial {
            image_ids: images
                .iter()
                .map(|i| groups.image_ids[*i].clone())
                .collect(),
            src_rows,
            tgt_rows,
            result: ranks_from_scores(&scores, &gold)?,
        });
    }
    let refs: Vec<&RankingResult> = trials.iter().map(|t| &t.result).collect();
    Ok(SubsampleResult {
        mean: MeanMetrics::of(&refs),
        trials,
    })
}
