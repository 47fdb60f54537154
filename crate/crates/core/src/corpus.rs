//! Corpus files beyond the graph itself: lexicon, synonyms and flag
//! entailments, plus the bundled sample corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kg::ingest::{malformed, read_rows};
use crate::kg::{load_triples, GraphSnapshot, IngestMode, IngestReport, KgError, NodeId, RelationRegistry};

/// Flag → categorical classes the flag rules out.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entailments {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl Entailments {
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, KgError> {
        let mut e = Entailments::default();
        for (line, rec) in read_rows(reader, "entailments.csv", &["flag", "excluded_categorical_class"])? {
            let (flag, class) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
            if flag.is_empty() || class.is_empty() {
                return Err(malformed("entailments.csv", line, "flag and class are required"));
            }
            e.insert(flag, class);
        }
        Ok(e)
    }

    pub fn insert(&mut self, flag: &str, class: &str) {
        self.map.entry(flag.to_string()).or_default().insert(class.to_string());
    }

    pub fn classes(&self, flag: &str) -> impl Iterator<Item = &str> {
        self.map.get(flag).into_iter().flatten().map(String::as_str)
    }

    pub fn is_flag(&self, flag: &str) -> bool {
        self.map.contains_key(flag)
    }

    pub fn flags(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn all_classes(&self) -> BTreeSet<&str> {
        self.map.values().flatten().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface_form: String,
    pub node_id: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymEntry {
    pub alias: String,
    pub canonical_surface: String,
}

pub fn read_lexicon<R: Read>(reader: R) -> Result<Vec<LexiconEntry>, KgError> {
    let mut out = Vec::new();
    for (line, rec) in read_rows(reader, "lexicon.csv", &["surface_form", "node_id", "weight"])? {
        let surface = rec.get(0).unwrap_or("");
        let node = rec.get(1).unwrap_or("");
        if surface.is_empty() || node.is_empty() {
            return Err(malformed("lexicon.csv", line, "surface_form and node_id are required"));
        }
        let weight = match rec.get(2).unwrap_or("") {
            "" => 1.0,
            w => w
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| malformed("lexicon.csv", line, format!("bad weight `{w}`")))?,
        };
        out.push(LexiconEntry {
            surface_form: surface.to_string(),
            node_id: NodeId::from(node),
            weight,
        });
    }
    Ok(out)
}

pub fn read_synonyms<R: Read>(reader: R) -> Result<Vec<SynonymEntry>, KgError> {
    let mut out = Vec::new();
    for (line, rec) in read_rows(reader, "synonyms.csv", &["alias", "canonical_surface"])? {
        let (alias, canonical) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if alias.is_empty() || canonical.is_empty() {
            return Err(malformed("synonyms.csv", line, "alias and canonical_surface are required"));
        }
        out.push(SynonymEntry {
            alias: alias.to_string(),
            canonical_surface: canonical.to_string(),
        });
    }
    Ok(out)
}

/// Where the corpus files live. Only `triples` and `attrs` are required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub triples: PathBuf,
    pub attrs: PathBuf,
    #[serde(default)]
    pub relations: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    #[serde(default)]
    pub entailments: Option<PathBuf>,
}

impl CorpusPaths {
    /// The conventional file names inside `dir`, keeping only those that exist
    /// for the optional files.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        CorpusPaths {
            triples: dir.join("triples.csv"),
            attrs: dir.join("attrs.csv"),
            relations: opt("relations.csv"),
            lexicon: opt("lexicon.csv"),
            synonyms: opt("synonyms.csv"),
            entailments: opt("entailments.csv"),
        }
    }
}

/// Raw corpus file contents.
#[derive(Debug, Clone, Default)]
pub struct CorpusText {
    pub triples: String,
    pub attrs: String,
    pub relations: Option<String>,
    pub lexicon: Option<String>,
    pub synonyms: Option<String>,
    pub entailments: Option<String>,
}

pub mod sample {
    //! The bundled sample corpus.
    pub const TRIPLES: &str = include_str!("../data/triples.csv");
    pub const ATTRS: &str = include_str!("../data/attrs.csv");
    pub const RELATIONS: &str = include_str!("../data/relations.csv");
    pub const LEXICON: &str = include_str!("../data/lexicon.csv");
    pub const SYNONYMS: &str = include_str!("../data/synonyms.csv");
    pub const ENTAILMENTS: &str = include_str!("../data/entailments.csv");
    /// Free-text nutrition notes used for enrichment.
    pub const NOTES: &str = include_str!("../data/notes.txt");
}

impl CorpusText {
    pub fn sample() -> Self {
        CorpusText {
            triples: sample::TRIPLES.to_string(),
            attrs: sample::ATTRS.to_string(),
            relations: Some(sample::RELATIONS.to_string()),
            lexicon: Some(sample::LEXICON.to_string()),
            synonyms: Some(sample::SYNONYMS.to_string()),
            entailments: Some(sample::ENTAILMENTS.to_string()),
        }
    }

    pub fn read(paths: &CorpusPaths) -> std::io::Result<Self> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(std::fs::read_to_string).transpose();
        Ok(CorpusText {
            triples: std::fs::read_to_string(&paths.triples)?,
            attrs: std::fs::read_to_string(&paths.attrs)?,
            relations: opt(&paths.relations)?,
            lexicon: opt(&paths.lexicon)?,
            synonyms: opt(&paths.synonyms)?,
            entailments: opt(&paths.entailments)?,
        })
    }
}

/// A loaded corpus: the first graph snapshot plus the language resources.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub snapshot: GraphSnapshot,
    pub report: IngestReport,
    pub lexicon: Vec<LexiconEntry>,
    pub synonyms: Vec<SynonymEntry>,
    pub entailments: Entailments,
}

impl Corpus {
    pub fn load(text: &CorpusText, mode: IngestMode) -> Result<Corpus, KgError> {
        let registry = match &text.relations {
            Some(r) => RelationRegistry::from_csv(r.as_bytes())?,
            None => RelationRegistry::default(),
        };
        let (snapshot, mut report) = load_triples(text.triples.as_bytes(), text.attrs.as_bytes(), &registry, mode)?;
        let mut lexicon = match &text.lexicon {
            Some(l) => read_lexicon(l.as_bytes())?,
            None => Vec::new(),
        };
        lexicon.retain(|e| {
            let known = snapshot.contains_node(e.node_id.as_str());
            if !known {
                report
                    .warnings
                    .push(format!("lexicon entry `{}` points at unknown node `{}`", e.surface_form, e.node_id));
            }
            known
        });
        let synonyms = match &text.synonyms {
            Some(s) => read_synonyms(s.as_bytes())?,
            None => Vec::new(),
        };
        let entailments = match &text.entailments {
            Some(e) => Entailments::from_csv(e.as_bytes())?,
            None => Entailments::default(),
        };
        Ok(Corpus {
            snapshot,
            report,
            lexicon,
            synonyms,
            entailments,
        })
    }

    pub fn sample() -> Corpus {
        Corpus::load(&CorpusText::sample(), IngestMode::Strict).expect("bundled corpus is valid")
    }
}
