//! Attention peaks, the words under them and their part-of-speech
//! statistics.

pub mod peaks;
pub mod stats;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use peaks::{
    assign_peaks, detect_peaks, peak_indices, step_to_time, token_at, Peak, PeakConfig, Quartile,
};
pub use stats::{
    baseline_samples, pos_baseline, pos_observed, quartile_names, quartile_table,
    reference_frequencies, BaselineItem, PosDistribution, WordFreq, BASELINE_FACTOR,
};

use crate::data::{Dataset, TokenSpan, Upos};
use crate::error::{Result, VgsError};
use crate::model::{encode_utterance, ModelParams};

/// Attention weights of one caption with its assigned peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceAttention {
    pub caption_id: String,
    pub layer: usize,
    pub alpha: Vec<f64>,
    pub peaks: Vec<Peak>,
}

/// Encodes every caption and extracts the peaks of the selected head.
pub fn extract_attention(
    params: &ModelParams,
    data: &Dataset,
    config: &PeakConfig,
) -> Result<Vec<UtteranceAttention>> {
    config.validate()?;
    let layer = config.layer.unwrap_or(params.config.top_layer());
    if !params.config.attention_after_layers.contains(&layer) {
        return Err(VgsError::config(
            "layer",
            format!("no attention head after GRU layer {layer}"),
        ));
    }
    data.manifest
        .records
        .par_iter()
        .zip(data.utterances.par_iter())
        .map(|(rec, u)| {
            let enc = encode_utterance(u, params).map_err(|e| VgsError::Caption {
                caption_id: rec.caption_id.clone(),
                reason: e.to_string(),
            })?;
            let alpha = enc.attention[&layer].clone();
            let mut peaks = detect_peaks(&alpha, config, &params.config)?;
            assign_peaks(&mut peaks, &rec.tokens);
            Ok(UtteranceAttention {
                caption_id: rec.caption_id.clone(),
                layer,
                alpha,
                peaks,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub peak_config: PeakConfig,
    pub seed: u64,
    pub n_utterances: usize,
    pub n_peaks: usize,
    pub observed: PosDistribution,
    pub baseline: PosDistribution,
    /// Beginning, MiddleBeg, MiddleEnd, End.
    pub quartiles: [f64; 4],
}

/// Observed and baseline distributions plus the quartile table.
pub fn analyze(
    params: &ModelParams,
    data: &Dataset,
    reference: &BTreeMap<String, f64>,
    config: &PeakConfig,
    seed: u64,
) -> Result<(AnalysisReport, Vec<UtteranceAttention>)> {
    let utterances = extract_attention(params, data, config)?;
    let report = summarize(
        &utterances,
        &data
            .manifest
            .records
            .iter()
            .map(|r| r.tokens.as_slice())
            .collect::<Vec<_>>(),
        params,
        reference,
        config,
        seed,
    )?;
    Ok((report, utterances))
}

/// Statistics over already extracted attention; `tokens[k]` belongs to
/// `utterances[k]`.
pub fn summarize(
    utterances: &[UtteranceAttention],
    tokens: &[&[TokenSpan]],
    params: &ModelParams,
    reference: &BTreeMap<String, f64>,
    config: &PeakConfig,
    seed: u64,
) -> Result<AnalysisReport> {
    let all_peaks = utterances.iter().flat_map(|u| &u.peaks);
    let observed = pos_observed(all_peaks.clone(), reference)?;
    let items: Vec<BaselineItem<'_>> = utterances
        .iter()
        .zip(tokens)
        .map(|(u, t)| BaselineItem {
            caption_id: &u.caption_id,
            tokens: t,
            encoder_len: u.alpha.len(),
            n_peaks: u.peaks.len(),
        })
        .collect();
    let baseline = pos_baseline(&items, &params.config, seed)?;
    Ok(AnalysisReport {
        peak_config: config.clone(),
        seed,
        n_utterances: utterances.len(),
        n_peaks: observed.total(),
        quartiles: quartile_table(all_peaks)?,
        observed,
        baseline,
    })
}

#[derive(Serialize)]
struct Table2Row<'a> {
    word: &'a str,
    gloss: &'a str,
    peak_freq_pct: f64,
    ref_freq_pct: f64,
}

#[derive(Serialize)]
struct Fig3Row {
    upos: &'static str,
    observed_pct: f64,
    baseline_pct: f64,
}

/// Writes `table2.csv`, `table3.csv`, `fig3.csv` and `report.json`.
pub fn write_reports(dir: &Path, report: &AnalysisReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| VgsError::io(dir, e))?;
    let mut w = csv::Writer::from_path(dir.join("table2.csv"))?;
    for row in &report.observed.words {
        w.serialize(Table2Row {
            word: &row.word,
            gloss: "",
            peak_freq_pct: row.peak_freq_pct,
            ref_freq_pct: row.ref_freq_pct.unwrap_or(0.0),
        })?;
    }
    w.flush().map_err(|e| VgsError::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("table3.csv"))?;
    w.write_record(quartile_names())?;
    w.write_record(report.quartiles.map(|q| q.to_string()))?;
    w.flush().map_err(|e| VgsError::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("fig3.csv"))?;
    for u in Upos::ALL {
        w.serialize(Fig3Row {
            upos: u.as_str(),
            observed_pct: report.observed.pct(u),
            baseline_pct: report.baseline.pct(u),
        })?;
    }
    w.flush().map_err(|e| VgsError::io(dir, e))?;

    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)? + "\n")
        .map_err(|e| VgsError::io(&path, e))
}

pub fn write_attention(path: &Path, utterances: &[UtteranceAttention]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| VgsError::io(parent, e))?;
    }
    std::fs::write(path, serde_json::to_string(utterances)? + "\n")
        .map_err(|e| VgsError::io(path, e))
}
