//! Synthetic bilingual grounded corpora.
//!
//! Every image carries a small set of concepts. Its feature vector is the sum
//! of fixed per-concept embeddings plus Gaussian noise. Each caption fills a
//! word-order template of its language: `NOUN` slots name distinct concepts of
//! the image, the remaining slots draw function words with the slot's tag.
//! Each word type owns a fixed acoustic template; an utterance is the
//! concatenation of its words' templates plus per-utterance noise, so token
//! spans tile the utterance exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{write_features, FeatureMatrix};
use super::manifest::{CaptionRecord, Manifest, TokenSpan, DEFAULT_HOP_MS};
use super::upos::Upos;
use crate::error::{Result, VgsError};
use crate::numcore::Rng;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionWord {
    pub surface: String,
    pub upos: Upos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub name: String,
    /// Space-separated UPOS sequences, e.g. `"DET NOUN VERB"`.
    pub templates: Vec<String>,
    pub function_words: Vec<FunctionWord>,
    /// Surface form of each concept; defaults to `<name>_c<index>`.
    #[serde(default)]
    pub nouns: Option<Vec<String>>,
    /// Inclusive frame-length range for word templates.
    pub frames_per_word: [usize; 2],
    pub noise_sigma: f64,
}

fn fw(surface: &str, upos: Upos) -> FunctionWord {
    FunctionWord {
        surface: surface.into(),
        upos,
    }
}

impl LanguageSpec {
    pub fn english() -> Self {
        LanguageSpec {
            name: "en".into(),
            templates: [
                "DET NOUN VERB",
                "DET NOUN VERB ADP DET NOUN",
                "DET NOUN ADP DET NOUN",
                "DET NOUN CONJ DET NOUN VERB",
                "DET NOUN ADP DET NOUN ADP DET NOUN",
            ]
            .map(String::from)
            .to_vec(),
            function_words: vec![
                fw("a", Upos::Det),
                fw("the", Upos::Det),
                fw("on", Upos::Adp),
                fw("with", Upos::Adp),
                fw("near", Upos::Adp),
                fw("and", Upos::Conj),
                fw("sits", Upos::Verb),
                fw("stands", Upos::Verb),
                fw("is", Upos::Verb),
            ],
            nouns: None,
            frames_per_word: [6, 14],
            noise_sigma: 0.5,
        }
    }

    pub fn japanese() -> Self {
        LanguageSpec {
            name: "jp".into(),
            templates: [
                "NOUN PRT VERB",
                "NOUN PRT NOUN PRT VERB",
                "NOUN PRT NOUN PRT NOUN",
                "NOUN PRT NOUN PRT NOUN PRT VERB",
            ]
            .map(String::from)
            .to_vec(),
            function_words: vec![
                fw("ga", Upos::Prt),
                fw("no", Upos::Prt),
                fw("o", Upos::Prt),
                fw("ni", Upos::Prt),
                fw("de", Upos::Prt),
                fw("to", Upos::Prt),
                fw("iru", Upos::Verb),
                fw("aru", Upos::Verb),
            ],
            nouns: None,
            frames_per_word: [6, 14],
            noise_sigma: 0.5,
        }
    }

    fn parsed_templates(&self) -> Result<Vec<Vec<Upos>>> {
        self.templates
            .iter()
            .map(|t| {
                t.split_whitespace()
                    .map(str::parse)
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    }

    fn noun_surfaces(&self, n_concepts: usize) -> Vec<String> {
        match &self.nouns {
            Some(n) => n.clone(),
            None => (0..n_concepts)
                .map(|i| format!("{}_c{i:02}", self.name))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_concepts: usize,
    pub n_images: usize,
    pub captions_per_image: usize,
    pub image_dim: usize,
    pub mfcc_dim: usize,
    /// Inclusive range for the number of concepts per image.
    pub concepts_per_image: [usize; 2],
    pub image_noise_sigma: f64,
    pub val_images: usize,
    pub test_images: usize,
    pub frame_hop_ms: f64,
    pub languages: Vec<LanguageSpec>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_concepts: 16,
            n_images: 400,
            captions_per_image: 5,
            image_dim: 64,
            mfcc_dim: 13,
            concepts_per_image: [1, 3],
            image_noise_sigma: 0.1,
            val_images: 100,
            test_images: 100,
            frame_hop_ms: DEFAULT_HOP_MS,
            languages: vec![LanguageSpec::english(), LanguageSpec::japanese()],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(VgsError::config(field, reason));
        if self.n_concepts < 2 {
            return bad(
                "n_concepts",
                format!("must be at least 2, got {}", self.n_concepts),
            );
        }
        if self.n_images == 0 || self.captions_per_image == 0 {
            return bad(
                "n_images",
                "n_images and captions_per_image must be positive".into(),
            );
        }
        if self.val_images + self.test_images > self.n_images {
            return bad(
                "val_images",
                format!(
                    "val ({}) + test ({}) exceeds n_images ({})",
                    self.val_images, self.test_images, self.n_images
                ),
            );
        }
        if self.image_dim == 0 || self.mfcc_dim == 0 {
            return bad("image_dim", "feature dimensions must be positive".into());
        }
        let [lo, hi] = self.concepts_per_image;
        if lo == 0 || lo > hi || hi > self.n_concepts {
            return bad(
                "concepts_per_image",
                format!("need 1 <= {lo} <= {hi} <= n_concepts ({})", self.n_concepts),
            );
        }
        if self.image_noise_sigma.is_nan()
            || self.image_noise_sigma < 0.0
            || self.frame_hop_ms.is_nan()
            || self.frame_hop_ms <= 0.0
        {
            return bad("image_noise_sigma", "noise must be >= 0 and hop > 0".into());
        }
        if self.languages.is_empty() {
            return bad("languages", "at least one language is required".into());
        }
        let mut names = BTreeSet::new();
        for lang in &self.languages {
            if !names.insert(lang.name.as_str()) {
                return bad("languages", format!("duplicate language {:?}", lang.name));
            }
            let field = |f: &str| format!("languages.{}.{f}", lang.name);
            let [fmin, fmax] = lang.frames_per_word;
            if fmin < 2 || fmin > fmax {
                return Err(VgsError::config(
                    field("frames_per_word"),
                    format!("need 2 <= {fmin} <= {fmax}"),
                ));
            }
            if lang.noise_sigma.is_nan() || lang.noise_sigma < 0.0 {
                return Err(VgsError::config(field("noise_sigma"), "must be >= 0"));
            }
            if let Some(nouns) = &lang.nouns {
                if nouns.len() != self.n_concepts {
                    return Err(VgsError::config(
                        field("nouns"),
                        format!("{} names for {} concepts", nouns.len(), self.n_concepts),
                    ));
                }
            }
            let templates = lang.parsed_templates()?;
            if templates.is_empty() {
                return Err(VgsError::config(field("templates"), "no templates"));
            }
            for (t, text) in templates.iter().zip(&lang.templates) {
                let nouns = t.iter().filter(|u| **u == Upos::Noun).count();
                if nouns == 0 {
                    return Err(VgsError::config(
                        field("templates"),
                        format!("{text:?} has no NOUN slot"),
                    ));
                }
                for u in t.iter().filter(|u| **u != Upos::Noun) {
                    if !lang.function_words.iter().any(|w| w.upos == *u) {
                        return Err(VgsError::config(
                            field("function_words"),
                            format!("no {u} word for template {text:?}"),
                        ));
                    }
                }
            }
            if !templates
                .iter()
                .any(|t| t.iter().filter(|u| **u == Upos::Noun).count() <= lo)
            {
                return Err(VgsError::config(
                    field("templates"),
                    format!("no template with at most {lo} NOUN slots"),
                ));
            }
        }
        Ok(())
    }

    fn split_of(&self, index: usize) -> &'static str {
        let n_train = self.n_images - self.val_images - self.test_images;
        if index < n_train {
            "train"
        } else if index < n_train + self.val_images {
            "val"
        } else {
            "test"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageCorpus {
    pub language: String,
    /// Manifests keyed by split name.
    pub splits: BTreeMap<String, Manifest>,
    /// Concept index → surface form.
    pub nouns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub languages: Vec<LanguageCorpus>,
    /// Image id → concept indices.
    pub image_concepts: BTreeMap<String, Vec<usize>>,
    /// Feature path relative to the corpus root → matrix.
    pub features: BTreeMap<String, FeatureMatrix>,
}

pub fn image_id(index: usize) -> String {
    format!("img{index:05}")
}

fn gaussian_matrix(rows: usize, cols: usize, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    (0..rows * cols).map(|_| sigma * rng.normal()).collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut features = BTreeMap::new();

    let mut concept_rng = Rng::derived(spec.seed, "synth/concepts");
    let embeddings: Vec<Vec<f64>> = (0..spec.n_concepts)
        .map(|_| gaussian_matrix(1, spec.image_dim, 1.0, &mut concept_rng))
        .collect();

    let mut image_rng = Rng::derived(spec.seed, "synth/images");
    let mut image_concepts = BTreeMap::new();
    let mut ids = Vec::with_capacity(spec.n_images);
    for index in 0..spec.n_images {
        let id = image_id(index);
        let k = image_rng.range_inclusive(spec.concepts_per_image[0], spec.concepts_per_image[1]);
        let mut concepts = image_rng.sample_indices(spec.n_concepts, k);
        concepts.sort_unstable();
        let mut v = gaussian_matrix(1, spec.image_dim, spec.image_noise_sigma, &mut image_rng);
        for c in &concepts {
            v.iter_mut().zip(&embeddings[*c]).for_each(|(a, b)| *a += b);
        }
        features.insert(
            format!("images/{id}.vgsf"),
            FeatureMatrix {
                rows: 1,
                cols: spec.image_dim,
                values: v.iter().map(|x| *x as f32).collect(),
            },
        );
        image_concepts.insert(id.clone(), concepts);
        ids.push(id);
    }

    let mut languages = Vec::new();
    for lang in &spec.languages {
        let templates = lang.parsed_templates()?;
        let noun_count: Vec<usize> = templates
            .iter()
            .map(|t| t.iter().filter(|u| **u == Upos::Noun).count())
            .collect();
        let nouns = lang.noun_surfaces(spec.n_concepts);

        // Word types in a fixed order: concepts first, then function words.
        let mut word_rng = Rng::derived(spec.seed, &format!("synth/{}/words", lang.name));
        let mut acoustic = BTreeMap::new();
        let surfaces = nouns
            .iter()
            .chain(lang.function_words.iter().map(|w| &w.surface));
        for surface in surfaces {
            if acoustic.contains_key(surface) {
                continue;
            }
            let frames = word_rng.range_inclusive(lang.frames_per_word[0], lang.frames_per_word[1]);
            acoustic.insert(
                surface.clone(),
                (
                    frames,
                    gaussian_matrix(frames, spec.mfcc_dim, 1.0, &mut word_rng),
                ),
            );
        }

        let mut splits: BTreeMap<String, Manifest> = SPLITS
            .iter()
            .map(|s| (s.to_string(), Manifest::new(*s, "")))
            .collect();
        let mut caption_rng = Rng::derived(spec.seed, &format!("synth/{}/captions", lang.name));
        for (index, id) in ids.iter().enumerate() {
            let concepts = &image_concepts[id];
            let manifest = splits.get_mut(spec.split_of(index)).expect("known split");
            manifest
                .images
                .insert(id.clone(), format!("../images/{id}.vgsf"));
            let usable: Vec<usize> = (0..templates.len())
                .filter(|t| noun_count[*t] <= concepts.len())
                .collect();
            for k in 0..spec.captions_per_image {
                let template = &templates[usable[caption_rng.below(usable.len())]];
                let n_nouns = template.iter().filter(|u| **u == Upos::Noun).count();
                let mut picks = caption_rng
                    .sample_indices(concepts.len(), n_nouns)
                    .into_iter();
                let mut words: Vec<(String, Upos)> = Vec::with_capacity(template.len());
                for slot in template {
                    if *slot == Upos::Noun {
                        let c = concepts[picks.next().expect("enough concepts")];
                        words.push((nouns[c].clone(), Upos::Noun));
                    } else {
                        let options: Vec<&FunctionWord> = lang
                            .function_words
                            .iter()
                            .filter(|w| w.upos == *slot)
                            .collect();
                        let w = options[caption_rng.below(options.len())];
                        words.push((w.surface.clone(), w.upos));
                    }
                }
                let caption_id = format!("{}_{id}_{k}", lang.name);
                let mut values = Vec::new();
                let mut tokens = Vec::with_capacity(words.len());
                let mut frame = 0usize;
                for (surface, upos) in words {
                    let (len, template) = &acoustic[&surface];
                    values.extend(
                        template
                            .iter()
                            .map(|v| v + lang.noise_sigma * caption_rng.normal()),
                    );
                    tokens.push(TokenSpan {
                        surface,
                        start_s: frame as f64 * spec.frame_hop_ms / 1000.0,
                        end_s: (frame + len) as f64 * spec.frame_hop_ms / 1000.0,
                        upos,
                    });
                    frame += len;
                }
                let feature_ref = format!("features/{caption_id}.vgsf");
                features.insert(
                    format!("{}/{feature_ref}", lang.name),
                    FeatureMatrix {
                        rows: frame,
                        cols: spec.mfcc_dim,
                        values: values.iter().map(|x| *x as f32).collect(),
                    },
                );
                manifest.records.push(CaptionRecord {
                    caption_id,
                    image_id: id.clone(),
                    language: lang.name.clone(),
                    feature_ref,
                    n_frames: frame,
                    tokens,
                });
            }
        }
        for m in splits.values() {
            m.validate(spec.frame_hop_ms)?;
        }
        languages.push(LanguageCorpus {
            language: lang.name.clone(),
            splits,
            nouns,
        });
    }
    Ok(SynthCorpus {
        spec: spec.clone(),
        languages,
        image_concepts,
        features,
    })
}

impl SynthCorpus {
    pub fn language(&self, name: &str) -> Option<&LanguageCorpus> {
        self.languages.iter().find(|l| l.language == name)
    }

    /// Writes `images/`, `<lang>/<split>.jsonl` (+ images index),
    /// `<lang>/features/`, `concepts.json` and `spec.json` under `root`.
    pub fn write(&self, root: &Path) -> Result<()> {
        for (rel, m) in &self.features {
            write_features(&root.join(rel), m)?;
        }
        for lang in &self.languages {
            for (split, m) in &lang.splits {
                m.save(&root.join(&lang.language).join(format!("{split}.jsonl")))?;
            }
        }
        let concepts = root.join("concepts.json");
        std::fs::write(
            &concepts,
            serde_json::to_string_pretty(&self.image_concepts)? + "\n",
        )
        .map_err(|e| VgsError::io(&concepts, e))?;
        let spec = root.join("spec.json");
        std::fs::write(&spec, serde_json::to_string_pretty(&self.spec)? + "\n")
            .map_err(|e| VgsError::io(&spec, e))
    }
}

/// Manifest path of `split` for `language` under a written corpus root.
pub fn manifest_path(root: &Path, language: &str, split: &str) -> std::path::PathBuf {
    root.join(language).join(format!("{split}.jsonl"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_concepts: 6,
            n_images: 20,
            captions_per_image: 3,
            image_dim: 8,
            val_images: 4,
            test_images: 4,
            seed: 11,
            ..Default::default()
        }
    }

    fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(dir).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                    out.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn same_seed_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic(&small_spec())
            .unwrap()
            .write(a.path())
            .unwrap();
        generate_synthetic(&small_spec())
            .unwrap()
            .write(b.path())
            .unwrap();
        let (fa, fb) = (collect_files(a.path()), collect_files(b.path()));
        assert!(fa.len() > 100);
        assert_eq!(fa, fb);
    }

    #[test]
    fn caption_counts() {
        let spec = SynthSpec {
            n_images: 100,
            val_images: 0,
            test_images: 0,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        for lang in &corpus.languages {
            let total: usize = lang.splits.values().map(Manifest::len).sum();
            assert_eq!(total, 500);
        }
    }

    #[test]
    fn nouns_name_image_concepts() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        for lang in &corpus.languages {
            for m in lang.splits.values() {
                for rec in &m.records {
                    let allowed: BTreeSet<&str> = corpus.image_concepts[&rec.image_id]
                        .iter()
                        .map(|c| lang.nouns[*c].as_str())
                        .collect();
                    let nouns: Vec<&TokenSpan> =
                        rec.tokens.iter().filter(|t| t.upos == Upos::Noun).collect();
                    assert!(!nouns.is_empty());
                    for t in nouns {
                        assert!(
                            allowed.contains(t.surface.as_str()),
                            "{} in {}",
                            t.surface,
                            rec.caption_id
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn spans_tile_and_languages_align() {
        let corpus = generate_synthetic(&small_spec()).unwrap();
        let (en, jp) = (&corpus.languages[0], &corpus.languages[1]);
        for split in SPLITS {
            assert_eq!(en.splits[split].images, jp.splits[split].images);
            assert_eq!(
                en.splits[split].image_order(),
                jp.splits[split].image_order()
            );
        }
        for lang in &corpus.languages {
            for m in lang.splits.values() {
                for rec in &m.records {
                    assert_eq!(rec.tokens[0].start_s, 0.0);
                    for w in rec.tokens.windows(2) {
                        assert_eq!(w[0].end_s, w[1].start_s);
                    }
                    assert_eq!(
                        rec.tokens.last().unwrap().end_s,
                        rec.n_frames as f64 * 10.0 / 1000.0
                    );
                    let key = format!("{}/{}", lang.language, rec.feature_ref);
                    assert_eq!(corpus.features[&key].rows, rec.n_frames);
                }
            }
        }
        let jp_prt = jp.splits["train"]
            .records
            .iter()
            .flat_map(|r| &r.tokens)
            .any(|t| t.upos == Upos::Prt);
        let en_det = en.splits["train"]
            .records
            .iter()
            .flat_map(|r| &r.tokens)
            .any(|t| t.upos == Upos::Det);
        assert!(jp_prt && en_det);
    }

    #[test]
    fn written_corpus_loads() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_synthetic(&small_spec()).unwrap();
        corpus.write(dir.path()).unwrap();
        let m = super::super::load_manifest(&manifest_path(dir.path(), "jp", "val")).unwrap();
        assert_eq!(m.len(), 12);
        let img = m.image_path("img00012").unwrap();
        assert_eq!(super::super::load_features(&img).unwrap().shape(), &[1, 8]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = small_spec();
        s.n_concepts = 1;
        assert!(generate_synthetic(&s).is_err());
        let mut s = small_spec();
        s.languages[0].frames_per_word = [1, 4];
        assert!(s
            .validate()
            .unwrap_err()
            .to_string()
            .contains("frames_per_word"));
        let mut s = small_spec();
        s.languages[1].templates.push("NOUN ADV".into());
        assert!(s.validate().is_err());
        let json = serde_json::to_string(&small_spec()).unwrap();
        assert_eq!(
            serde_json::from_str::<SynthSpec>(&json).unwrap(),
            small_spec()
        );
    }
}
