use serde::{Deserialize, Serialize};

use crate::data::TokenSpan;
use crate::error::{Result, VgsError};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakConfig {
    /// Peaks below this fraction of the highest candidate are dropped.
    pub rel_threshold: f64,
    /// Minimum distance in encoder steps between kept peaks.
    pub min_separation: usize,
    /// 1-based GRU layer of the attention head to read; `None` means the top head.
    pub layer: Option<usize>,
}

impl Default for PeakConfig {
    fn default() -> Self {
        PeakConfig {
            rel_threshold: 0.6,
            min_separation: 1,
            layer: None,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold <= 1.0) {
            return Err(VgsError::config(
                "rel_threshold",
                format!("must lie in (0, 1], got {}", self.rel_threshold),
            ));
        }
        if self.min_separation < 1 {
            return Err(VgsError::config("min_separation", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quartile {
    Beginning,
    MiddleBeg,
    MiddleEnd,
    End,
}

impl Quartile {
    pub const ALL: [Quartile; 4] = [
        Quartile::Beginning,
        Quartile::MiddleBeg,
        Quartile::MiddleEnd,
        Quartile::End,
    ];

    /// Bin of a relative position `r ∈ [0, 1)`; an edge goes to the upper bin.
    pub fn of(r: f64) -> Quartile {
        match (r * 4.0).floor() as i64 {
            i64::MIN..=0 => Quartile::Beginning,
            1 => Quartile::MiddleBeg,
            2 => Quartile::MiddleEnd,
            _ => Quartile::End,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub encoder_step: usize,
    pub weight: f64,
    pub center_time_s: f64,
    pub word: Option<TokenSpan>,
    pub token_index: Option<usize>,
    pub quartile: Option<Quartile>,
}

/// Local maxima of `alpha` by first-order difference sign change.
///
/// A run of equal values is a candidate when both neighbours are strictly
/// lower; it contributes its center index (the left one for even runs). A
/// run touching either end is a candidate only when it is a single element
/// strictly greater than its one neighbour, so constant inputs and a single
/// element yield nothing. Candidates below `rel_threshold` times the highest
/// candidate are dropped; then peaks closer than `min_separation` to an
/// already kept higher peak are dropped. Returns `(step, weight)` in time order.
pub fn peak_indices(alpha: &[f64], config: &PeakConfig) -> Result<Vec<(usize, f64)>> {
    config.validate()?;
    if alpha.is_empty() {
        return Err(VgsError::config("alpha", "empty attention vector"));
    }
    if let Some(v) = alpha.iter().find(|v| !v.is_finite()) {
        return Err(VgsError::NonFinite(format!("attention weight {v}")));
    }
    let n = alpha.len();
    let mut candidates = Vec::new();
    let mut a = 0;
    while a < n {
        let v = alpha[a];
        let mut b = a;
        while b + 1 < n && alpha[b + 1] == v {
            b += 1;
        }
        let left_lower = a > 0 && alpha[a - 1] < v;
        let right_lower = b + 1 < n && alpha[b + 1] < v;
        let is_peak = match (a == 0, b == n - 1) {
            (true, true) => false,
            (true, false) => a == b && right_lower,
            (false, true) => a == b && left_lower,
            (false, false) => left_lower && right_lower,
        };
        if is_peak && v > 0.0 {
            candidates.push((a + (b - a) / 2, v));
        }
        a = b + 1;
    }
    let Some(max) = candidates.iter().map(|c| c.1).reduce(f64::max) else {
        return Ok(Vec::new());
    };
    candidates.retain(|c| c.1 >= config.rel_threshold * max);
    let mut by_height = candidates;
    by_height.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for c in by_height {
        if kept
            .iter()
            .all(|k| k.0.abs_diff(c.0) >= config.min_separation)
        {
            kept.push(c);
        }
    }
    kept.sort_by_key(|k| k.0);
    Ok(kept)
}

/// Receptive-field center of an encoder step, in seconds.
pub fn step_to_time(step: usize, config: &ModelConfig) -> f64 {
    let center = (step * config.conv_stride) as f64 + (config.conv_kernel as f64 - 1.0) / 2.0;
    center * config.frame_hop_ms / 1000.0
}

pub fn detect_peaks(
    alpha: &[f64],
    peak_config: &PeakConfig,
    model: &ModelConfig,
) -> Result<Vec<Peak>> {
    Ok(peak_indices(alpha, peak_config)?
        .into_iter()
        .map(|(step, weight)| Peak {
            encoder_step: step,
            weight,
            center_time_s: step_to_time(step, model),
            word: None,
            token_index: None,
            quartile: None,
        })
        .collect())
}

/// Index of the token whose `[start_s, end_s)` contains `time_s`.
pub fn token_at(tokens: &[TokenSpan], time_s: f64) -> Option<usize> {
    let k = tokens.partition_point(|t| t.end_s <= time_s);
    (k < tokens.len() && tokens[k].contains(time_s)).then_some(k)
}

/// Attaches the word under each peak and the peak's quartile within it.
pub fn assign_peaks(peaks: &mut [Peak], tokens: &[TokenSpan]) {
    for p in peaks {
        match token_at(tokens, p.center_time_s) {
            Some(k) => {
                let t = &tokens[k];
                let r = (p.center_time_s - t.start_s) / (t.end_s - t.start_s);
                p.quartile = Some(Quartile::of(r));
                p.word = Some(t.clone());
                p.token_index = Some(k);
            }
            None => {
                p.word = None;
                p.token_index = None;
                p.quartile = None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Upos;
    use crate::numcore::Rng;
    use proptest::prelude::*;

    fn steps(alpha: &[f64], rel: f64) -> Vec<usize> {
        let c = PeakConfig {
            rel_threshold: rel,
            ..Default::default()
        };
        peak_indices(alpha, &c)
            .unwrap()
            .into_iter()
            .map(|p| p.0)
            .collect()
    }

    /// Brute force: for each index find the equal-valued run around it,
    /// apply the neighbour and boundary rules, keep only the run's center.
    fn oracle(alpha: &[f64], rel: f64) -> Vec<usize> {
        let n = alpha.len();
        let mut cand = Vec::new();
        for i in 0..n {
            let (mut lo, mut hi) = (i, i);
            while lo > 0 && alpha[lo - 1] == alpha[i] {
                lo -= 1;
            }
            while hi + 1 < n && alpha[hi + 1] == alpha[i] {
                hi += 1;
            }
            if i != lo + (hi - lo) / 2 || alpha[i] <= 0.0 {
                continue;
            }
            let ok = if lo == 0 && hi == n - 1 {
                false
            } else if lo == 0 {
                lo == hi && alpha[i] > alpha[i + 1]
            } else if hi == n - 1 {
                lo == hi && alpha[i] > alpha[i - 1]
            } else {
                alpha[lo - 1] < alpha[i] && alpha[i] > alpha[hi + 1]
            };
            if ok {
                cand.push(i);
            }
        }
        let max = cand
            .iter()
            .map(|&i| alpha[i])
            .fold(f64::NEG_INFINITY, f64::max);
        cand.into_iter()
            .filter(|&i| alpha[i] >= rel * max)
            .collect()
    }

    #[test]
    fn spec_examples() {
        assert!(steps(&[0.25; 4], 0.6).is_empty());
        assert_eq!(steps(&[0.0, 1.0, 0.0, 0.5, 0.0], 0.6), vec![1]);
        assert_eq!(
            steps(&[0.0, 0.9, 0.0, 1.0, 0.0, 0.7, 0.0], 0.6),
            vec![1, 3, 5]
        );
        assert!(peak_indices(&[], &PeakConfig::default()).is_err());
    }

    #[test]
    fn plateaus_and_boundaries() {
        assert_eq!(steps(&[0.1, 0.4, 0.4, 0.1], 0.6), vec![1]);
        assert_eq!(steps(&[0.1, 0.3, 0.3, 0.3, 0.0], 0.6), vec![2]);
        assert_eq!(steps(&[0.5, 0.2, 0.25], 0.6), vec![0]);
        assert_eq!(steps(&[0.5, 0.2, 0.3], 0.6), vec![0, 2]);
        assert_eq!(steps(&[0.2, 0.3, 0.5], 0.6), vec![2]);
        assert!(steps(&[0.5, 0.5, 0.2], 0.6).is_empty());
        assert!(steps(&[1.0], 0.6).is_empty());
    }

    #[test]
    fn min_separation_prefers_higher() {
        let a = [0.0, 0.5, 0.0, 0.9, 0.0, 0.6, 0.0];
        let c = PeakConfig {
            rel_threshold: 0.5,
            min_separation: 3,
            layer: None,
        };
        let got: Vec<usize> = peak_indices(&a, &c).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(got, vec![3]);
        let c = PeakConfig {
            min_separation: 2,
            ..c
        };
        let got: Vec<usize> = peak_indices(&a, &c).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(got, vec![1, 3, 5]);
    }

    #[test]
    fn oracle_on_random_vectors() {
        let mut rng = Rng::new(5);
        for _ in 0..500 {
            let n = rng.range_inclusive(1, 60);
            let levels = rng.range_inclusive(2, 6);
            let raw: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 + 1.0).collect();
            let s: f64 = raw.iter().sum();
            let alpha: Vec<f64> = raw.iter().map(|v| v / s).collect();
            assert_eq!(steps(&alpha, 0.6), oracle(&alpha, 0.6), "{alpha:?}");
        }
    }

    #[test]
    fn step_times() {
        let c = ModelConfig::default();
        assert!((step_to_time(0, &c) - 0.025).abs() < 1e-15);
        assert!((step_to_time(4, &c) - 0.105).abs() < 1e-15);
        let c = ModelConfig {
            conv_kernel: 1,
            conv_stride: 1,
            ..Default::default()
        };
        for t in 0..20 {
            assert_eq!(step_to_time(t, &c), t as f64 * 10.0 / 1000.0);
        }
    }

    fn peak_at(t: f64) -> Peak {
        Peak {
            encoder_step: 0,
            weight: 1.0,
            center_time_s: t,
            word: None,
            token_index: None,
            quartile: None,
        }
    }

    fn word(start: f64, end: f64) -> TokenSpan {
        TokenSpan {
            surface: "w".into(),
            start_s: start,
            end_s: end,
            upos: Upos::Noun,
        }
    }

    #[test]
    fn quartiles() {
        let tokens = [word(1.0, 2.0)];
        let mut p = [
            peak_at(1.0),
            peak_at(1.9),
            peak_at(1.25),
            peak_at(1.5),
            peak_at(2.5),
        ];
        assign_peaks(&mut p, &tokens);
        assert_eq!(p[0].quartile, Some(Quartile::Beginning));
        assert_eq!(p[1].quartile, Some(Quartile::End));
        assert_eq!(p[2].quartile, Some(Quartile::MiddleBeg));
        assert_eq!(p[3].quartile, Some(Quartile::MiddleEnd));
        assert_eq!(p[4].word, None);
        assert_eq!(p[4].quartile, None);
    }

    #[test]
    fn silence_gap_unassigned() {
        let tokens = [word(0.0, 0.2), word(0.3, 0.5)];
        assert_eq!(token_at(&tokens, 0.25), None);
        assert_eq!(token_at(&tokens, 0.2), None);
        assert_eq!(token_at(&tokens, 0.3), Some(1));
        assert_eq!(token_at(&tokens, 0.0), Some(0));
        assert_eq!(token_at(&tokens, 0.5), None);
    }

    proptest! {
        #[test]
        fn kept_peaks_clear_threshold(v in proptest::collection::vec(0.0f64..1.0, 1..80), rel in 0.05f64..1.0) {
            let c = PeakConfig { rel_threshold: rel, ..Default::default() };
            let peaks = peak_indices(&v, &c).unwrap();
            let max = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
            for p in &peaks {
                prop_assert!(p.1 >= rel * max);
                prop_assert!(p.1 > 0.0);
            }
        }

        #[test]
        fn assignment_contains_center(starts in proptest::collection::vec(0.01f64..0.3, 1..8), t in 0.0f64..3.0) {
            let mut tokens = Vec::new();
            let mut s = 0.0;
            for (k, d) in starts.iter().enumerate() {
                let gap = if k % 2 == 0 { 0.0 } else { 0.05 };
                tokens.push(word(s + gap, s + gap + d));
                s += gap + d;
            }
            let mut p = [peak_at(t)];
            assign_peaks(&mut p, &tokens);
            if let Some(w) = &p[0].word {
                prop_assert!(w.start_s <= t && t < w.end_s);
            }
        }
    }
}
