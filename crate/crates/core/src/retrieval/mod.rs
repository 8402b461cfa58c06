//! Speech→image ranking metrics and speech→speech retrieval through pivot
//! images.

pub mod crosslingual;
pub mod metrics;

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use crosslingual::{
    crosslingual_rank, crosslingual_scores, subsample_eval, Aggregator, CaptionGroups, MeanMetrics,
    PivotIndex, SubsampleConfig, SubsampleResult,
};
pub use metrics::{distance_matrix, median, rank_images, rank_of, RankingResult};

use crate::data::Dataset;
use crate::error::{Result, VgsError};
use crate::model::{encode_image, encode_utterance, ModelParams};
use crate::numcore::Tensor;

pub fn embed_utterances(params: &ModelParams, utterances: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    utterances
        .par_iter()
        .map(|u| Ok(encode_utterance(u, params)?.vector))
        .collect()
}

pub fn embed_images(params: &ModelParams, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|i| Ok(encode_image(i, params)?.vector))
        .collect()
}

/// Speech→image retrieval over every caption of `dataset`, with the
/// dataset's distinct images as the pool.
pub fn evaluate_dataset(params: &ModelParams, dataset: &Dataset) -> Result<RankingResult> {
    let u = embed_utterances(params, &dataset.utterances)?;
    let i = embed_images(params, &dataset.images)?;
    rank_images(&u, &i, &dataset.pair_image)
}

/// Distances from every utterance of `dataset` to each pivot image, both
/// encoded by `params`.
pub fn pivot_distances(
    params: &ModelParams,
    dataset: &Dataset,
    pivots: &[Tensor],
) -> Result<Vec<Vec<f64>>> {
    let u = embed_utterances(params, &dataset.utterances)?;
    let p = embed_images(params, pivots)?;
    Ok(distance_matrix(&u, &p))
}

/// Groups the captions of two image-aligned datasets by image id.
pub fn caption_groups(src: &Dataset, tgt: &Dataset) -> Result<CaptionGroups> {
    if src.image_ids != tgt.image_ids {
        return Err(VgsError::Retrieval(
            "source and target evaluation sets cover different images".into(),
        ));
    }
    let group = |ds: &Dataset| {
        let mut g = vec![Vec::new(); ds.image_ids.len()];
        for (row, img) in ds.pair_image.iter().enumerate() {
            g[*img].push(row);
        }
        g
    };
    Ok(CaptionGroups {
        image_ids: src.image_ids.clone(),
        src: group(src),
        tgt: group(tgt),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub direction: String,
    #[serde(rename = "R@1")]
    pub r_at_1: f64,
    #[serde(rename = "R@5")]
    pub r_at_5: f64,
    #[serde(rename = "R@10")]
    pub r_at_10: f64,
    pub median_rank: f64,
}

impl MetricsRow {
    pub fn new(direction: impl Into<String>, m: MeanMetrics) -> Self {
        MetricsRow {
            direction: direction.into(),
            r_at_1: m.r_at_1,
            r_at_5: m.r_at_5,
            r_at_10: m.r_at_10,
            median_rank: m.median_rank,
        }
    }
}

/// `direction,R@1,R@5,R@10,median_rank`
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| VgsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let r = RankingResult::from_ranks(vec![1, 2], 4).unwrap();
        write_metrics_csv(&path, &[MetricsRow::new("en->jp", MeanMetrics::from(&r))]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "direction,R@1,R@5,R@10,median_rank\nen->jp,0.5,1.0,1.0,1.5\n"
        );
    }
}
