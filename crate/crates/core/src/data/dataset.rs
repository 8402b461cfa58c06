//! Manifests with their features loaded into memory.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::features::load_features;
use super::manifest::Manifest;
use crate::error::{Result, VgsError};
use crate::numcore::Tensor;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    /// One `[n_frames, mfcc_dim]` matrix per record.
    pub utterances: Vec<Tensor>,
    /// Distinct image ids, sorted.
    pub image_ids: Vec<String>,
    pub images: Vec<Tensor>,
    /// Record index → index into `images`.
    pub pair_image: Vec<usize>,
}

impl Dataset {
    /// Reads every feature file referenced by `manifest`, checking shapes.
    pub fn load(manifest: Manifest, mfcc_dim: usize, image_dim: usize) -> Result<Self> {
        let utterances: Vec<Tensor> = manifest
            .records
            .par_iter()
            .map(|rec| {
                let t = load_features(&manifest.feature_path(&rec.feature_ref))?;
                if t.shape() != [rec.n_frames, mfcc_dim] {
                    return Err(VgsError::Caption {
                        caption_id: rec.caption_id.clone(),
                        reason: format!(
                            "features have shape {:?}, expected [{}, {mfcc_dim}]",
                            t.shape(),
                            rec.n_frames
                        ),
                    });
                }
                Ok(t)
            })
            .collect::<Result<_>>()?;
        let (image_ids, images) = load_images(&manifest, image_dim)?;
        Self::from_parts(manifest, utterances, image_ids, images)
    }

    pub fn from_parts(
        manifest: Manifest,
        utterances: Vec<Tensor>,
        image_ids: Vec<String>,
        images: Vec<Tensor>,
    ) -> Result<Self> {
        if utterances.len() != manifest.records.len() || image_ids.len() != images.len() {
            return Err(VgsError::config(
                "dataset",
                "feature count does not match the manifest",
            ));
        }
        let index: BTreeMap<&str, usize> = image_ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.as_str(), k))
            .collect();
        let pair_image = manifest
            .records
            .iter()
            .map(|r| {
                index
                    .get(r.image_id.as_str())
                    .copied()
                    .ok_or_else(|| VgsError::Caption {
                        caption_id: r.caption_id.clone(),
                        reason: format!("image {} has no features", r.image_id),
                    })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            manifest,
            utterances,
            image_ids,
            images,
            pair_image,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn image_of(&self, record: usize) -> &Tensor {
        &self.images[self.pair_image[record]]
    }
}

/// Every image of the manifest's index, sorted by id, as vectors.
pub fn load_images(manifest: &Manifest, image_dim: usize) -> Result<(Vec<String>, Vec<Tensor>)> {
    let image_ids: Vec<String> = manifest.images.keys().cloned().collect();
    let images = image_ids
        .par_iter()
        .map(|id| {
            let path = manifest.image_path(id).expect("id from index");
            let t = load_features(&path)?;
            if t.len() != image_dim {
                return Err(VgsError::format(
                    path,
                    format!(
                        "image {id} has shape {:?}, expected {image_dim} values",
                        t.shape()
                    ),
                ));
            }
            Ok(Tensor::vector(t.into_data()))
        })
        .collect::<Result<_>>()?;
    Ok((image_ids, images))
}
