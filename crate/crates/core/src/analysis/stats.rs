use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::peaks::{assign_peaks, step_to_time, Peak, Quartile};
use crate::data::{TokenSpan, Upos};
use crate::error::{Result, VgsError};
use crate::model::ModelConfig;
use crate::numcore::Rng;

/// Random positions drawn per true peak for the baseline.
pub const BASELINE_FACTOR: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordFreq {
    pub word: String,
    pub peak_count: usize,
    pub peak_freq_pct: f64,
    pub ref_freq_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosDistribution {
    /// Counts per tag, every tag present.
    pub counts: BTreeMap<Upos, usize>,
    pub percentages: BTreeMap<Upos, f64>,
    /// Peaks that fell on a word.
    pub assigned: usize,
    /// Peaks that fell in silence.
    pub unassigned: usize,
    /// Sorted by descending peak count, then word.
    pub words: Vec<WordFreq>,
}

impl PosDistribution {
    pub fn total(&self) -> usize {
        self.assigned + self.unassigned
    }

    pub fn pct(&self, tag: Upos) -> f64 {
        self.percentages[&tag]
    }
}

/// Token frequencies over a reference corpus, as percentages.
pub fn reference_frequencies<'a>(
    tokens: impl IntoIterator<Item = &'a TokenSpan>,
) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for t in tokens {
        *counts.entry(t.surface.clone()).or_default() += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(w, c)| (w, 100.0 * c as f64 / total as f64))
        .collect()
}

fn distribution<'a>(
    peaks: impl IntoIterator<Item = &'a Peak>,
    reference: Option<&BTreeMap<String, f64>>,
) -> Result<PosDistribution> {
    let mut counts: BTreeMap<Upos, usize> = Upos::ALL.iter().map(|u| (*u, 0)).collect();
    let mut words: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut assigned, mut unassigned) = (0usize, 0usize);
    for p in peaks {
        match &p.word {
            Some(w) => {
                *counts.get_mut(&w.upos).expect("all tags present") += 1;
                *words.entry(w.surface.as_str()).or_default() += 1;
                assigned += 1;
            }
            None => unassigned += 1,
        }
    }
    if assigned == 0 {
        return Err(VgsError::NoAssignedPeaks);
    }
    let pct = |c: usize| 100.0 * c as f64 / assigned as f64;
    let mut table: Vec<WordFreq> = words
        .into_iter()
        .map(|(w, c)| WordFreq {
            word: w.to_string(),
            peak_count: c,
            peak_freq_pct: pct(c),
            ref_freq_pct: reference.map(|r| r.get(w).copied().unwrap_or(0.0)),
        })
        .collect();
    table.sort_by(|a, b| {
        b.peak_count
            .cmp(&a.peak_count)
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(PosDistribution {
        percentages: counts.iter().map(|(u, c)| (*u, pct(*c))).collect(),
        counts,
        assigned,
        unassigned,
        words: table,
    })
}

/// Distribution of words under assigned peaks; the word table's reference
/// frequency comes from `reference` (typically the training tokens).
pub fn pos_observed<'a>(
    peaks: impl IntoIterator<Item = &'a Peak>,
    reference: &BTreeMap<String, f64>,
) -> Result<PosDistribution> {
    distribution(peaks, Some(reference))
}

/// One utterance's input to the baseline: its tokens, encoder length and
/// number of detected peaks.
#[derive(Debug, Clone, Copy)]
pub struct BaselineItem<'a> {
    pub caption_id: &'a str,
    pub tokens: &'a [TokenSpan],
    pub encoder_len: usize,
    pub n_peaks: usize,
}

/// Samples `BASELINE_FACTOR · p` encoder steps per utterance uniformly with
/// replacement and assigns them like real peaks. Each utterance draws from
/// its own stream derived from `seed` and its caption id.
pub fn baseline_samples(item: &BaselineItem<'_>, model: &ModelConfig, seed: u64) -> Vec<Peak> {
    let n = BASELINE_FACTOR * item.n_peaks;
    if n == 0 || item.encoder_len == 0 {
        return Vec::new();
    }
    let mut rng = Rng::derived(seed, &format!("analysis/baseline/{}", item.caption_id));
    let mut peaks: Vec<Peak> = (0..n)
        .map(|_| {
            let step = rng.below(item.encoder_len);
            Peak {
                encoder_step: step,
                weight: 1.0,
                center_time_s: step_to_time(step, model),
                word: None,
                token_index: None,
                quartile: None,
            }
        })
        .collect();
    assign_peaks(&mut peaks, item.tokens);
    peaks
}

pub fn pos_baseline(
    items: &[BaselineItem<'_>],
    model: &ModelConfig,
    seed: u64,
) -> Result<PosDistribution> {
    let samples: Vec<Vec<Peak>> = items
        .iter()
        .map(|i| baseline_samples(i, model, seed))
        .collect();
    distribution(samples.iter().flatten(), None)
}

/// Percentage of assigned peaks in each quartile of their word.
pub fn quartile_table<'a>(peaks: impl IntoIterator<Item = &'a Peak>) -> Result<[f64; 4]> {
    let mut counts = [0usize; 4];
    for p in peaks {
        if let Some(q) = p.quartile {
            counts[q.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(VgsError::NoAssignedPeaks);
    }
    Ok(counts.map(|c| 100.0 * c as f64 / total as f64))
}

pub fn quartile_names() -> [&'static str; 4] {
    Quartile::ALL.map(|q| match q {
        Quartile::Beginning => "Beginning",
        Quartile::MiddleBeg => "MiddleBeg",
        Quartile::MiddleEnd => "MiddleEnd",
        Quartile::End => "End",
    })
}
