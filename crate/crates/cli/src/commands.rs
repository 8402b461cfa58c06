use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;
use vgs_core::analysis::{
    analyze, extract_attention, reference_frequencies, write_attention, write_reports,
};
use vgs_core::data::synth::SynthSpec;
use vgs_core::data::{generate_synthetic, load_images, load_manifest_with_hop, Dataset, Manifest};
use vgs_core::model::checkpoint::load_model;
use vgs_core::model::ModelParams;
use vgs_core::retrieval::{
    caption_groups, evaluate_dataset, pivot_distances, subsample_eval, write_metrics_csv,
    MeanMetrics, MetricsRow, PivotIndex, SubsampleConfig, SubsampleResult,
};
use vgs_core::train::train_to_dir;
use vgs_core::{Result, VgsError};

use crate::config::{Half, RunConfig};

/// Written next to a trained model; lists the images it saw.
pub const TRAIN_IMAGES_FILE: &str = "train_images.json";

pub fn read_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| VgsError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| VgsError::config(path.display().to_string(), e.to_string()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| VgsError::io(path, e))
}

pub fn dispatch(c: &RunConfig) -> Result<()> {
    let out = c.require(&c.paths.out, "out")?;
    match c.command.as_deref() {
        Some("synth") => synth(c, out),
        Some("train") => train(c, out),
        Some("eval") => eval(c, out),
        Some("analyze") => analyze_cmd(c, out, true),
        Some("export-attention") => analyze_cmd(c, out, false),
        Some("xlingual") => xlingual(c, out),
        other => Err(VgsError::config(
            "command",
            format!("unknown command {other:?}"),
        )),
    }
}

fn synth(c: &RunConfig, out: &Path) -> Result<()> {
    let mut spec = match &c.paths.spec {
        Some(p) => read_spec(p)?,
        None => SynthSpec::default(),
    };
    spec.seed = c.seed;
    let corpus = generate_synthetic(&spec)?;
    corpus.write(out)?;
    c.write_resolved(out)
}

fn load_dataset(path: &Path, params: &ModelParams) -> Result<Dataset> {
    let m = load_manifest_with_hop(path, params.config.frame_hop_ms)?;
    Dataset::load(m, params.config.mfcc_dim, params.config.image_dim)
}

fn train(c: &RunConfig, out: &Path) -> Result<()> {
    c.model.validate()?;
    c.train.validate()?;
    let manifest_path = c.require(&c.paths.manifest, "manifest")?;
    let mut manifest = load_manifest_with_hop(manifest_path, c.model.frame_hop_ms)?;
    if let Some(half) = c.half {
        manifest = manifest.half(half == Half::Second);
    }
    let images: BTreeSet<&String> = manifest.images.keys().collect();
    std::fs::create_dir_all(out).map_err(|e| VgsError::io(out, e))?;
    write_json(&out.join(TRAIN_IMAGES_FILE), &images)?;
    let data = Dataset::load(manifest.clone(), c.model.mfcc_dim, c.model.image_dim)?;
    let val = match &c.paths.val_manifest {
        Some(p) => {
            let m = load_manifest_with_hop(p, c.model.frame_hop_ms)?;
            Some(Dataset::load(m, c.model.mfcc_dim, c.model.image_dim)?)
        }
        None => None,
    };
    c.write_resolved(out)?;
    let params = ModelParams::init(&c.model, c.seed)?;
    train_to_dir(params, &data, val.as_ref(), &c.train, out, c.resume)?;
    Ok(())
}

fn eval(c: &RunConfig, out: &Path) -> Result<()> {
    let params = load_model(c.require(&c.paths.checkpoint, "checkpoint")?)?;
    let data = load_dataset(c.require(&c.paths.manifest, "manifest")?, &params)?;
    let result = evaluate_dataset(&params, &data)?;
    c.write_resolved(out)?;
    write_json(&out.join("metrics.json"), &result)?;
    write_metrics_csv(
        &out.join("metrics.csv"),
        &[MetricsRow::new("speech->image", MeanMetrics::from(&result))],
    )
}

fn analyze_cmd(c: &RunConfig, out: &Path, full: bool) -> Result<()> {
    c.peaks.validate()?;
    let params = load_model(c.require(&c.paths.checkpoint, "checkpoint")?)?;
    let data = load_dataset(c.require(&c.paths.manifest, "manifest")?, &params)?;
    c.write_resolved(out)?;
    if !full {
        let utterances = extract_attention(&params, &data, &c.peaks)?;
        return write_attention(&out.join("attention.json"), &utterances);
    }
    let reference_manifest = match &c.paths.reference_manifest {
        Some(p) => load_manifest_with_hop(p, params.config.frame_hop_ms)?,
        None => {
            log::warn!("no --reference-manifest; reference frequencies use the analyzed manifest");
            data.manifest.clone()
        }
    };
    let reference =
        reference_frequencies(reference_manifest.records.iter().flat_map(|r| &r.tokens));
    let (report, utterances) = analyze(&params, &data, &reference, &c.peaks, c.seed)?;
    write_reports(out, &report)?;
    write_attention(&out.join("attention.json"), &utterances)
}

fn trained_images(checkpoint: &Path) -> Result<Option<BTreeSet<String>>> {
    let path = checkpoint.with_file_name(TRAIN_IMAGES_FILE);
    if !path.exists() {
        log::warn!(
            "{} not found; pivot disjointness is not checked",
            path.display()
        );
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| VgsError::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn language(m: &Manifest, fallback: &str) -> String {
    m.records
        .first()
        .map(|r| r.language.clone())
        .unwrap_or_else(|| fallback.to_string())
}

#[derive(Serialize)]
struct XlingualReport<'a> {
    pivots: &'a [String],
    forward_direction: String,
    forward: SubsampleResult,
    backward_direction: String,
    backward: SubsampleResult,
}

fn xlingual(c: &RunConfig, out: &Path) -> Result<()> {
    let src_ckpt = c.require(&c.paths.src_checkpoint, "src-checkpoint")?;
    let tgt_ckpt = c.require(&c.paths.tgt_checkpoint, "tgt-checkpoint")?;
    let (src_model, tgt_model) = (load_model(src_ckpt)?, load_model(tgt_ckpt)?);
    let src = load_dataset(
        c.require(&c.paths.src_manifest, "src-manifest")?,
        &src_model,
    )?;
    let tgt = load_dataset(
        c.require(&c.paths.tgt_manifest, "tgt-manifest")?,
        &tgt_model,
    )?;
    if src_model.config.image_dim != tgt_model.config.image_dim {
        return Err(VgsError::config(
            "tgt-checkpoint",
            "image feature sizes of the two models differ",
        ));
    }
    let pivot_manifest = load_manifest_with_hop(
        c.require(&c.paths.pivot_manifest, "pivot-manifest")?,
        src_model.config.frame_hop_ms,
    )?;
    let (mut pivot_ids, mut pivots) = load_images(&pivot_manifest, src_model.config.image_dim)?;
    pivot_ids.truncate(c.xlingual.max_pivots);
    pivots.truncate(c.xlingual.max_pivots);

    let groups = caption_groups(&src, &tgt)?;
    let eval_images: BTreeSet<String> = groups.image_ids.iter().cloned().collect();
    let mut seen: Vec<BTreeSet<String>> = vec![eval_images];
    for ckpt in [src_ckpt, tgt_ckpt] {
        if let Some(s) = trained_images(ckpt)? {
            seen.push(s);
        }
    }
    let index = PivotIndex::new(
        pivot_ids.clone(),
        pivot_distances(&src_model, &src, &pivots)?,
        pivot_distances(&tgt_model, &tgt, &pivots)?,
    )?;
    index.check_unseen(&seen.iter().collect::<Vec<_>>())?;

    let (ls, lt) = (
        language(&src.manifest, "src"),
        language(&tgt.manifest, "tgt"),
    );
    let sub = SubsampleConfig {
        n_trials: c.xlingual.n_trials,
        pool: c.xlingual.pool,
        aggregator: c.xlingual.aggregator,
        seed: c.seed,
    };
    c.write_resolved(out)?;
    let dump = |name: &str| {
        c.dump_matrices
            .then(|| out.join("trials").join(name.replace("->", "_to_")))
    };
    let forward_name = format!("{ls}->{lt}");
    let backward_name = format!("{lt}->{ls}");
    let forward = subsample_eval(&index, &groups, &sub, dump(&forward_name).as_deref())?;
    let reversed = vgs_core::retrieval::CaptionGroups {
        image_ids: groups.image_ids.clone(),
        src: groups.tgt.clone(),
        tgt: groups.src.clone(),
    };
    let backward = subsample_eval(
        &index.reversed(),
        &reversed,
        &sub,
        dump(&backward_name).as_deref(),
    )?;
    write_metrics_csv(
        &out.join("metrics.csv"),
        &[
            MetricsRow::new(forward_name.clone(), forward.mean),
            MetricsRow::new(backward_name.clone(), backward.mean),
        ],
    )?;
    write_json(
        &out.join("report.json"),
        &XlingualReport {
            pivots: &pivot_ids,
            forward_direction: forward_name,
            forward,
            backward_direction: backward_name,
            backward,
        },
    )
}
