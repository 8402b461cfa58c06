//! Mini-batch training with Adam, checkpoints and per-epoch validation.

pub mod adam;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState};
pub use config::TrainConfig;

use crate::data::Dataset;
use crate::error::{Result, VgsError};
use crate::model::checkpoint::{load_model, save_model, Archive};
use crate::model::encoder::check_utterance_len;
use crate::model::{loss_and_grad, ModelParams};
use crate::numcore::{Rng, Tensor};
use crate::retrieval::evaluate_dataset;

pub const MODEL_FILE: &str = "model.vgsc";
pub const OPTIMIZER_FILE: &str = "optimizer.vgsc";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed batch loss divided by the number of pairs seen.
    pub train_loss: f64,
    pub n_pairs: usize,
    pub val_r_at_1: Option<f64>,
    pub val_r_at_5: Option<f64>,
    pub val_r_at_10: Option<f64>,
    pub val_median_rank: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VgsError::io(path, e))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| VgsError::Manifest {
                    path: path.to_path_buf(),
                    line: n + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainLog { records })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Copy with wall times zeroed, for run-to-run comparison.
    pub fn without_wall_time(&self) -> TrainLog {
        TrainLog {
            records: self
                .records
                .iter()
                .map(|r| EpochRecord {
                    wall_time_s: 0.0,
                    ..r.clone()
                })
                .collect(),
        }
    }
}

pub fn append_record(path: &Path, record: &EpochRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| VgsError::io(path, e))?;
    let line = serde_json::to_string(record)? + "\n";
    f.write_all(line.as_bytes())
        .map_err(|e| VgsError::io(path, e))
}

/// Everything needed to continue training: parameters, optimizer moments,
/// completed epochs and their log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
    pub log: TrainLog,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    step: u64,
    epoch: usize,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let adam = AdamState::new(&params.set);
        TrainState {
            params,
            adam,
            epoch: 0,
            log: TrainLog::default(),
        }
    }

    /// Moments are stored as `adam.m.<param>` / `adam.v.<param>`.
    pub fn optimizer_archive(&self) -> Result<Archive> {
        let mut tensors = Vec::with_capacity(2 * self.params.set.len());
        for (k, p) in self.params.set.iter().enumerate() {
            tensors.push((format!("adam.m.{}", p.name), self.adam.m[k].clone()));
            tensors.push((format!("adam.v.{}", p.name), self.adam.v[k].clone()));
        }
        Ok(Archive {
            tensors,
            json: serde_json::to_string(&OptimizerMeta {
                step: self.adam.step,
                epoch: self.epoch,
            })?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| VgsError::io(dir, e))?;
        save_model(&self.params, &dir.join(MODEL_FILE))?;
        self.optimizer_archive()?.write(&dir.join(OPTIMIZER_FILE))
    }

    /// Reads the model, optimizer state and the log up to the saved epoch.
    pub fn load(dir: &Path) -> Result<Self> {
        let params = load_model(&dir.join(MODEL_FILE))?;
        let path = dir.join(OPTIMIZER_FILE);
        let archive = Archive::read(&path)?;
        let meta: OptimizerMeta = serde_json::from_str(&archive.json)?;
        let mut adam = AdamState::new(&params.set);
        adam.step = meta.step;
        let mut found = 0;
        for (name, t) in archive.tensors {
            let (moments, pname) = if let Some(n) = name.strip_prefix("adam.m.") {
                (&mut adam.m, n)
            } else if let Some(n) = name.strip_prefix("adam.v.") {
                (&mut adam.v, n)
            } else {
                return Err(VgsError::format(&path, format!("unexpected tensor {name}")));
            };
            let slot = params.set.slot(pname).ok_or_else(|| {
                VgsError::format(&path, format!("moment for unknown parameter {pname}"))
            })?;
            params.value(slot).same_shape(&t, "load optimizer state")?;
            moments[slot] = t;
            found += 1;
        }
        if found != 2 * params.set.len() {
            return Err(VgsError::format(
                &path,
                format!("{found} moment tensors, expected {}", 2 * params.set.len()),
            ));
        }
        let log_path = dir.join(LOG_FILE);
        let mut log = if log_path.exists() {
            TrainLog::read(&log_path)?
        } else {
            TrainLog::default()
        };
        if log.records.len() < meta.epoch {
            return Err(VgsError::format(
                &log_path,
                format!(
                    "{} records for {} saved epochs",
                    log.records.len(),
                    meta.epoch
                ),
            ));
        }
        log.records.truncate(meta.epoch);
        Ok(TrainState {
            params,
            adam,
            epoch: meta.epoch,
            log,
        })
    }
}

/// Pair order for an epoch: a seeded shuffle derived from `(seed, epoch)`,
/// cut into batches; a final batch of fewer than two pairs is dropped.
pub fn epoch_batches(n: usize, epoch: usize, config: &TrainConfig) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if config.shuffle {
        Rng::derived(config.seed, &format!("train/epoch{epoch}")).shuffle(&mut order);
    }
    order
        .chunks(config.batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

fn check_lengths(params: &ModelParams, data: &Dataset) -> Result<()> {
    for (rec, u) in data.manifest.records.iter().zip(&data.utterances) {
        check_utterance_len(&params.config, u.rows(), &rec.caption_id)?;
    }
    Ok(())
}

/// Runs the remaining epochs of `state`. `on_epoch` sees the state after
/// each completed epoch together with its log record.
pub fn train(
    mut state: TrainState,
    data: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState, &EpochRecord) -> Result<()>,
) -> Result<TrainState> {
    config.validate()?;
    if data.len() < 2 {
        return Err(VgsError::config(
            "dataset",
            format!("{} pairs; training needs at least 2", data.len()),
        ));
    }
    check_lengths(&state.params, data)?;
    if let Some(v) = val {
        check_lengths(&state.params, v)?;
    }
    let adam = config.adam();
    while state.epoch < config.epochs {
        let epoch = state.epoch + 1;
        let started = Instant::now();
        let mut total = 0.0;
        let mut pairs = 0;
        for (b, batch) in epoch_batches(data.len(), epoch, config).iter().enumerate() {
            let us: Vec<&Tensor> = batch.iter().map(|k| &data.utterances[*k]).collect();
            let is: Vec<&Tensor> = batch.iter().map(|k| data.image_of(*k)).collect();
            let first = &data.manifest.records[batch[0]].caption_id;
            let (loss, mut grads) =
                loss_and_grad(&state.params, &us, &is).map_err(|e| match e {
                    VgsError::NonFinite(_) | VgsError::DegenerateVector { .. } => {
                        VgsError::NonFinite(format!(
                            "epoch {epoch}, batch {b} (first caption {first}): {e}"
                        ))
                    }
                    e => e,
                })?;
            if !loss.is_finite() || !grads.iter().all(Tensor::all_finite) {
                return Err(VgsError::NonFinite(format!(
                    "epoch {epoch}, batch {b} (first caption {first}): loss {loss}"
                )));
            }
            adam_step(&mut state.params.set, &mut grads, &mut state.adam, &adam)?;
            total += loss;
            pairs += batch.len();
        }
        let metrics = val
            .map(|v| evaluate_dataset(&state.params, v))
            .transpose()?;
        let record = EpochRecord {
            epoch,
            train_loss: total / pairs as f64,
            n_pairs: pairs,
            val_r_at_1: metrics.as_ref().map(|m| m.r_at_1),
            val_r_at_5: metrics.as_ref().map(|m| m.r_at_5),
            val_r_at_10: metrics.as_ref().map(|m| m.r_at_10),
            val_median_rank: metrics.as_ref().map(|m| m.median_rank),
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} val R@10 {:?}",
            record.train_loss,
            record.val_r_at_10
        );
        state.epoch = epoch;
        state.log.records.push(record.clone());
        on_epoch(&state, &record)?;
    }
    Ok(state)
}

/// Trains into `out_dir`: appends to `train_log.jsonl` every epoch and
/// writes `model.vgsc` + `optimizer.vgsc` every `checkpoint_every` epochs
/// and after the last one. With `resume`, continues from the saved state.
pub fn train_to_dir(
    params: ModelParams,
    data: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
    out_dir: &Path,
    resume: bool,
) -> Result<TrainState> {
    std::fs::create_dir_all(out_dir).map_err(|e| VgsError::io(out_dir, e))?;
    let log_path: PathBuf = out_dir.join(LOG_FILE);
    let state = if resume {
        let s = TrainState::load(out_dir)?;
        if s.params.config != params.config {
            return Err(VgsError::config(
                "model",
                "checkpoint configuration differs from the requested one",
            ));
        }
        s
    } else {
        TrainState::new(params)
    };
    std::fs::write(&log_path, state.log.to_jsonl()?).map_err(|e| VgsError::io(&log_path, e))?;
    train(state, data, val, config, |s, record| {
        append_record(&log_path, record)?;
        if s.epoch % config.checkpoint_every == 0 || s.epoch == config.epochs {
            s.save(out_dir)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::CaptionRecord;
    use crate::data::Manifest;
    use crate::model::ModelConfig;

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let mut m = Manifest::new("train", ".");
        let mut utts = Vec::new();
        let mut ids = Vec::new();
        let mut imgs = Vec::new();
        for k in 0..n {
            let id = format!("img{k}");
            m.images.insert(id.clone(), format!("{id}.vgsf"));
            let frames = 12 + rng.below(4);
            m.records.push(CaptionRecord {
                caption_id: format!("c{k}"),
                image_id: id.clone(),
                language: "en".into(),
                feature_ref: format!("c{k}.vgsf"),
                n_frames: frames,
                tokens: vec![],
            });
            utts.push(
                Tensor::new(
                    vec![frames, 3],
                    (0..frames * 3).map(|_| rng.normal()).collect(),
                )
                .unwrap(),
            );
            ids.push(id);
            imgs.push(Tensor::vector((0..5).map(|_| rng.normal()).collect()));
        }
        Dataset::from_parts(m, utts, ids, imgs).unwrap()
    }

    fn toy_model() -> ModelParams {
        let mut c = ModelConfig::small(5, 4, 2);
        c.mfcc_dim = 3;
        c.conv_kernel = 3;
        c.conv_channels = 4;
        ModelParams::init(&c, 9).unwrap()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            learning_rate: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn batches_cover_and_drop_singletons() {
        let c = TrainConfig {
            batch_size: 4,
            ..Default::default()
        };
        let b = epoch_batches(9, 1, &c);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
        let b = epoch_batches(10, 1, &c);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_ne!(epoch_batches(10, 1, &c), epoch_batches(10, 2, &c));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = toy_dataset(6, 1);
        let params = toy_model();
        let c = TrainConfig {
            learning_rate: 0.0,
            ..config(3)
        };
        let out = train(TrainState::new(params.clone()), &data, None, &c, |_, _| {
            Ok(())
        })
        .unwrap();
        assert_eq!(out.params, params);
        assert_eq!(out.log.records.len(), 3);
    }

    #[test]
    fn loss_decreases_on_toy_data() {
        let data = toy_dataset(8, 2);
        let out = train(
            TrainState::new(toy_model()),
            &data,
            Some(&data),
            &config(30),
            |_, _| Ok(()),
        )
        .unwrap();
        let first = out.log.records[0].train_loss;
        let last = out.log.records.last().unwrap().train_loss;
        assert!(last < first, "{first} -> {last}");
        assert!(out
            .log
            .records
            .iter()
            .all(|r| r.train_loss.is_finite() && r.val_r_at_10.is_some()));
    }

    #[test]
    fn resume_is_bit_exact() {
        let data = toy_dataset(6, 3);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let full = train_to_dir(toy_model(), &data, None, &config(4), a.path(), false).unwrap();
        train_to_dir(toy_model(), &data, None, &config(2), b.path(), false).unwrap();
        let resumed = train_to_dir(toy_model(), &data, None, &config(4), b.path(), true).unwrap();
        assert_eq!(resumed.params, full.params);
        assert_eq!(resumed.adam, full.adam);
        for f in [MODEL_FILE, OPTIMIZER_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        let la = TrainLog::read(&a.path().join(LOG_FILE))
            .unwrap()
            .without_wall_time();
        let lb = TrainLog::read(&b.path().join(LOG_FILE))
            .unwrap()
            .without_wall_time();
        assert_eq!(la, lb);
        assert_eq!(la.records.len(), 4);
    }

    #[test]
    fn non_finite_input_names_batch() {
        let mut data = toy_dataset(4, 4);
        data.utterances[0].data_mut()[0] = f64::NAN;
        let c = TrainConfig {
            shuffle: false,
            ..config(1)
        };
        let err = train(TrainState::new(toy_model()), &data, None, &c, |_, _| Ok(())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("batch 0") && msg.contains("c0"), "{msg}");
    }

    #[test]
    fn short_utterance_named() {
        let mut data = toy_dataset(4, 5);
        data.utterances[2] = Tensor::zeros(&[2, 3]);
        let err = train(
            TrainState::new(toy_model()),
            &data,
            None,
            &config(1),
            |_, _| Ok(()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("c2"));
    }
}
