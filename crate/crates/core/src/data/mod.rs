//! Corpora: manifests, feature files, part-of-speech tags and the synthetic
//! corpus generator.

pub mod dataset;
pub mod features;
pub mod manifest;
pub mod synth;
pub mod upos;

pub use dataset::{load_images, Dataset};
pub use features::{load_features, read_features, write_features, FeatureMatrix};
pub use manifest::{
    check_disjoint, load_manifest, load_manifest_with_hop, CaptionRecord, Manifest, TokenSpan,
};
pub use synth::{generate_synthetic, LanguageSpec, SynthCorpus, SynthSpec};
pub use upos::{map_upos, Upos, UposMapper};
