//! The 12-category universal part-of-speech tagset and tagger mappings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, VgsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Upos {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Num,
    Conj,
    Prt,
    Punct,
    X,
}

impl Upos {
    pub const ALL: [Upos; 12] = [
        Upos::Noun,
        Upos::Verb,
        Upos::Adj,
        Upos::Adv,
        Upos::Pron,
        Upos::Det,
        Upos::Adp,
        Upos::Num,
        Upos::Conj,
        Upos::Prt,
        Upos::Punct,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Noun => "NOUN",
            Upos::Verb => "VERB",
            Upos::Adj => "ADJ",
            Upos::Adv => "ADV",
            Upos::Pron => "PRON",
            Upos::Det => "DET",
            Upos::Adp => "ADP",
            Upos::Num => "NUM",
            Upos::Conj => "CONJ",
            Upos::Prt => "PRT",
            Upos::Punct => ".",
            Upos::X => "X",
        }
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = VgsError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "NOUN" => Upos::Noun,
            "VERB" => Upos::Verb,
            "ADJ" => Upos::Adj,
            "ADV" => Upos::Adv,
            "PRON" => Upos::Pron,
            "DET" => Upos::Det,
            "ADP" => Upos::Adp,
            "NUM" => Upos::Num,
            "CONJ" => Upos::Conj,
            "PRT" => Upos::Prt,
            "." | "PUNCT" => Upos::Punct,
            "X" => Upos::X,
            _ => {
                return Err(VgsError::UnknownTag {
                    tag: s.to_string(),
                    scheme: "upos".to_string(),
                })
            }
        })
    }
}

impl Serialize for Upos {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Upos {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const TREETAGGER_EN: &str = include_str!("tables/treetagger-en.tsv");
const KYTEA_JA: &str = include_str!("tables/kytea-ja.tsv");

/// Tagger-tag → UPOS tables, keyed by scheme name.
#[derive(Debug, Clone)]
pub struct UposMapper {
    schemes: HashMap<String, HashMap<String, Upos>>,
}

fn parse_table(text: &str, origin: &str) -> Result<HashMap<String, Upos>> {
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(tag), Some(upos), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(VgsError::Manifest {
                path: origin.into(),
                line: n + 1,
                reason: "expected two tab-separated columns".into(),
            });
        };
        map.insert(tag.to_string(), upos.parse()?);
    }
    Ok(map)
}

impl UposMapper {
    /// Mapper with the shipped `treetagger-en` and `kytea-ja` schemes.
    pub fn shipped() -> Self {
        let mut schemes = HashMap::new();
        schemes.insert(
            "treetagger-en".to_string(),
            parse_table(TREETAGGER_EN, "treetagger-en.tsv").expect("shipped table parses"),
        );
        schemes.insert(
            "kytea-ja".to_string(),
            parse_table(KYTEA_JA, "kytea-ja.tsv").expect("shipped table parses"),
        );
        UposMapper { schemes }
    }

    /// Adds or extends a scheme from a JSON object `{tag: "UPOS", ...}`.
    pub fn extend_from_json(&mut self, scheme: &str, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| VgsError::io(path, e))?;
        let table: BTreeMap<String, Upos> = serde_json::from_str(&text)?;
        self.schemes
            .entry(scheme.to_string())
            .or_default()
            .extend(table);
        Ok(())
    }

    pub fn map(&self, tag: &str, scheme: &str) -> Result<Upos> {
        self.schemes
            .get(scheme)
            .and_then(|table| table.get(tag))
            .copied()
            .ok_or_else(|| VgsError::UnknownTag {
                tag: tag.to_string(),
                scheme: scheme.to_string(),
            })
    }
}

/// Maps one tag with the shipped tables.
pub fn map_upos(tag: &str, scheme: &str) -> Result<Upos> {
    UposMapper::shipped().map(tag, scheme)
}
