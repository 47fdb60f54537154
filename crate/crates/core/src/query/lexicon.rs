//! Phrase lexicon: graph labels, curated surface forms, static synonyms and
//! the fixed query vocabulary, all keyed by lemmatized token sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::constraint::Comparator;
use super::text::{phrase_key, Token};
use crate::corpus::{Corpus, LexiconEntry, SynonymEntry};
use crate::kg::{GraphSnapshot, NodeId, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    /// "no", "without", "avoid", "dislike" ...
    Negative,
    /// "with", "include", "like" ...
    Positive,
    /// "reduce", "less", "low" ...
    Reduce,
    /// "more", "increase", "high" ...
    Increase,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sym {
    Entity(NodeId),
    /// Static synonym: `alias` stands for `canonical`, which names `node`.
    Alias { canonical: String, node: NodeId },
    Nutrient(&'static str),
    Flag(&'static str),
    Class(&'static str),
    Method(&'static str),
    Subjective,
    Cue(Cue),
    Comparator(Comparator),
    Unit(Unit),
    Conj,
    /// Filler that may sit between parts of a phrase ("of", "in").
    Of,
    Stop,
}

pub const SUBJECTIVE_READINGS: [&str; 3] = ["sweet", "savory", "high in umami"];

const NUTRIENTS: &[(&str, &str)] = &[
    ("calorie", "calories"),
    ("calories", "calories"),
    ("energy", "calories"),
    ("protein", "protein"),
    ("proteins", "protein"),
    ("sodium", "sodium"),
    ("salt", "sodium"),
    ("salty", "sodium"),
    ("sugar", "sugar"),
    ("sugars", "sugar"),
    ("fat", "fat"),
    ("fats", "fat"),
    ("fiber", "fiber"),
    ("fibre", "fiber"),
    ("carb", "carbs"),
    ("carbs", "carbs"),
    ("carbohydrate", "carbs"),
    ("carbohydrates", "carbs"),
];

const FLAGS: &[(&str, &str)] = &[
    ("vegan", "isVegan"),
    ("plant based", "isVegan"),
    ("vegetarian", "isVegetarian"),
    ("veggie", "isVegetarian"),
    ("pescatarian", "isPescatarian"),
    ("dairy free", "isDairyFree"),
    ("lactose free", "isDairyFree"),
    ("gluten free", "isGlutenFree"),
    ("shellfish free", "isShellfishFree"),
    ("nut free", "isNutFree"),
    ("low carb", "isLowCarb"),
    ("keto", "isLowCarb"),
];

const CLASSES: &[(&str, &str)] = &[
    ("dairy", "dairy"),
    ("meat", "meat"),
    ("red meat", "meat"),
    ("seafood", "seafood"),
    ("shellfish", "shellfish"),
    ("gluten", "gluten"),
    ("nut", "treeNut"),
    ("tree nut", "treeNut"),
    ("soy", "soy"),
    ("animal product", "animalDerived"),
    ("leafy green", "leafyGreen"),
    ("high carb food", "highCarb"),
];

const METHODS: &[(&str, &str)] = &[
    ("retain nutrient", "highRetainNutrients"),
    ("retains nutrient", "highRetainNutrients"),
    ("retain the nutrient", "highRetainNutrients"),
    ("preserve nutrient", "highRetainNutrients"),
    ("preserve the nutrient", "highRetainNutrients"),
    ("keep nutrient", "highRetainNutrients"),
    ("keep the nutrient", "highRetainNutrients"),
    ("nutrient retention", "highRetainNutrients"),
];

const SUBJECTIVE: &[&str] = &[
    "tasty", "delicious", "yummy", "flavorful", "flavourful", "appetizing", "taste good", "tastes good",
];

const CUES: &[(&str, Cue)] = &[
    ("no", Cue::Negative),
    ("not", Cue::Negative),
    ("never", Cue::Negative),
    ("without", Cue::Negative),
    ("avoid", Cue::Negative),
    ("dislike", Cue::Negative),
    ("hate", Cue::Negative),
    ("exclude", Cue::Negative),
    ("remove", Cue::Negative),
    ("skip", Cue::Negative),
    ("drop", Cue::Negative),
    ("except", Cue::Negative),
    ("minus", Cue::Negative),
    ("replace", Cue::Negative),
    ("swap", Cue::Negative),
    ("instead of", Cue::Negative),
    ("get rid of", Cue::Negative),
    ("allergic to", Cue::Negative),
    ("don t", Cue::Negative),
    ("dont", Cue::Negative),
    ("doesn t", Cue::Negative),
    ("do not", Cue::Negative),
    ("free of", Cue::Negative),
    ("free from", Cue::Negative),
    ("include", Cue::Positive),
    ("including", Cue::Positive),
    ("add", Cue::Positive),
    ("want", Cue::Positive),
    ("like", Cue::Positive),
    ("love", Cue::Positive),
    ("enjoy", Cue::Positive),
    ("prefer", Cue::Positive),
    ("with", Cue::Positive),
    ("containing", Cue::Positive),
    ("contain", Cue::Positive),
    ("use", Cue::Positive),
    ("using", Cue::Positive),
    ("reduce", Cue::Reduce),
    ("reducing", Cue::Reduce),
    ("lower", Cue::Reduce),
    ("lowering", Cue::Reduce),
    ("less", Cue::Reduce),
    ("fewer", Cue::Reduce),
    ("cut", Cue::Reduce),
    ("cut down on", Cue::Reduce),
    ("cut back on", Cue::Reduce),
    ("limit", Cue::Reduce),
    ("limiting", Cue::Reduce),
    ("decrease", Cue::Reduce),
    ("minimize", Cue::Reduce),
    ("low", Cue::Reduce),
    ("low in", Cue::Reduce),
    ("light on", Cue::Reduce),
    ("more", Cue::Increase),
    ("increase", Cue::Increase),
    ("increasing", Cue::Increase),
    ("higher", Cue::Increase),
    ("high", Cue::Increase),
    ("high in", Cue::Increase),
    ("rich in", Cue::Increase),
    ("boost", Cue::Increase),
    ("extra", Cue::Increase),
    ("plenty of", Cue::Increase),
    ("maximize", Cue::Increase),
];

const COMPARATORS: &[(&str, Comparator)] = &[
    ("under", Comparator::Lt),
    ("below", Comparator::Lt),
    ("less than", Comparator::Lt),
    ("fewer than", Comparator::Lt),
    ("lower than", Comparator::Lt),
    ("at most", Comparator::Le),
    ("no more than", Comparator::Le),
    ("not more than", Comparator::Le),
    ("up to", Comparator::Le),
    ("max", Comparator::Le),
    ("maximum", Comparator::Le),
    ("over", Comparator::Gt),
    ("above", Comparator::Gt),
    ("more than", Comparator::Gt),
    ("greater than", Comparator::Gt),
    ("higher than", Comparator::Gt),
    ("at least", Comparator::Ge),
    ("no less than", Comparator::Ge),
    ("not less than", Comparator::Ge),
    ("minimum", Comparator::Ge),
    ("min", Comparator::Ge),
];

const UNITS: &[(&str, Unit)] = &[
    ("kcal", Unit::Kcal),
    ("kcals", Unit::Kcal),
    ("cal", Unit::Kcal),
    ("g", Unit::G),
    ("gr", Unit::G),
    ("gram", Unit::G),
    ("grams", Unit::G),
    ("mg", Unit::Mg),
    ("milligram", Unit::Mg),
    ("milligrams", Unit::Mg),
];

const CONJUNCTIONS: &[&str] = &["and", "or", "nor", "plus", "as well as", "also"];
const FILLERS: &[&str] = &["of", "in", "on"];

pub const STOPWORDS: &[&str] = &[
    "a", "about", "all", "am", "an", "any", "are", "around", "as", "at", "be", "been", "by", "can", "could",
    "day", "daily", "diet", "dish", "dishes", "do", "eat", "eating", "food", "foods", "for", "from", "get",
    "give", "good", "have", "having", "he", "her", "his", "i", "idea", "ideas", "intake", "is", "it",
    "its", "just", "kind", "level", "levels", "lunch", "dinner", "breakfast", "brunch", "snack", "snacks",
    "make", "making", "me", "meal", "meals", "my", "need", "option", "options", "our", "per", "plan",
    "planning", "please", "recipe", "recipes", "related", "serving", "she", "should", "show", "so",
    "some", "something", "suggest", "that", "the", "their", "them", "these", "they", "this", "those",
    "to", "today", "tonight", "too", "try", "us", "very", "was", "we", "week", "which", "will", "would",
    "you", "your", "find", "recommend", "looking", "look", "cook", "cooking", "cooked", "them",
    "consumption", "amount", "amounts", "really", "quite", "bit", "little", "lot", "lots", "what",
    "how", "why", "where", "when", "who", "there", "here", "ones", "t", "s",
    "m", "ve", "ll", "d", "re", "only", "well", "then", "than", "instead", "while", "keeping",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Node(NodeId),
    /// Static synonym; `canonical` is the surface the alias maps to.
    Substitute { alias: String, canonical: String, node: NodeId },
    Unresolved,
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    vocab: HashMap<Vec<String>, Sym>,
    entities: HashMap<Vec<String>, NodeId>,
    aliases: HashMap<Vec<String>, (String, NodeId)>,
    /// (label, id) of every node, sorted by id; candidates for fuzzy proposals.
    labels: Vec<(String, NodeId)>,
    max_len: usize,
}

impl Lexicon {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::build(&corpus.snapshot, &corpus.lexicon, &corpus.synonyms)
    }

    pub fn build(graph: &GraphSnapshot, lexicon: &[LexiconEntry], synonyms: &[SynonymEntry]) -> Self {
        let mut lx = Lexicon::default();
        lx.add_vocab();

        let mut ids = graph.node_ids_sorted();
        ids.dedup();
        for id in &ids {
            let node = graph.node(id.as_str()).expect("sorted ids come from the graph");
            let key = phrase_key(&node.label);
            lx.labels.push((node.label.clone(), id.clone()));
            if key.is_empty() {
                continue;
            }
            lx.max_len = lx.max_len.max(key.len());
            lx.entities.entry(key).or_insert_with(|| id.clone());
        }

        let mut curated: Vec<&LexiconEntry> = lexicon.iter().filter(|e| graph.contains_node(e.node_id.as_str())).collect();
        curated.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.node_id.cmp(&b.node_id)));
        for e in curated {
            let key = phrase_key(&e.surface_form);
            if key.is_empty() {
                continue;
            }
            lx.max_len = lx.max_len.max(key.len());
            lx.entities.entry(key).or_insert_with(|| e.node_id.clone());
        }

        for s in synonyms {
            let key = phrase_key(&s.alias);
            if key.is_empty() || lx.entities.contains_key(&key) {
                continue;
            }
            if let Some(node) = lx.entities.get(&phrase_key(&s.canonical_surface)) {
                lx.max_len = lx.max_len.max(key.len());
                lx.aliases.insert(key, (s.canonical_surface.clone(), node.clone()));
            }
        }
        lx
    }

    fn add_vocab(&mut self) {
        let mut put = |phrase: &str, sym: Sym| {
            let key = phrase_key(phrase);
            self.max_len = self.max_len.max(key.len());
            self.vocab.entry(key).or_insert(sym);
        };
        for (p, n) in NUTRIENTS {
            put(p, Sym::Nutrient(n));
        }
        for (p, f) in FLAGS {
            put(p, Sym::Flag(f));
        }
        for (p, c) in CLASSES {
            put(p, Sym::Class(c));
        }
        for (p, m) in METHODS {
            put(p, Sym::Method(m));
        }
        for p in SUBJECTIVE {
            put(p, Sym::Subjective);
        }
        for (p, c) in COMPARATORS {
            put(p, Sym::Comparator(*c));
        }
        for (p, c) in CUES {
            put(p, Sym::Cue(*c));
        }
        for (p, u) in UNITS {
            put(p, Sym::Unit(*u));
        }
        for p in CONJUNCTIONS {
            put(p, Sym::Conj);
        }
        for p in FILLERS {
            put(p, Sym::Of);
        }
        for p in STOPWORDS {
            put(p, Sym::Stop);
        }
    }

    /// Longest phrase starting at `tokens[i]`, with its length in tokens.
    /// Numbers never start a phrase.
    pub fn lookup(&self, tokens: &[Token], i: usize) -> Option<(usize, Sym)> {
        if tokens[i].number.is_some() && tokens[i].text.as_bytes()[0].is_ascii_digit() {
            return None;
        }
        let max = self.max_len.min(tokens.len() - i);
        for len in (1..=max).rev() {
            let key: Vec<String> = tokens[i..i + len].iter().map(|t| t.lemma.clone()).collect();
            if let Some(sym) = self.lookup_key(&key) {
                return Some((len, sym));
            }
        }
        None
    }

    fn lookup_key(&self, key: &[String]) -> Option<Sym> {
        if let Some(sym) = self.vocab.get(key) {
            return Some(sym.clone());
        }
        if let Some(id) = self.entities.get(key) {
            return Some(Sym::Entity(id.clone()));
        }
        self.aliases
            .get(key)
            .map(|(canonical, node)| Sym::Alias { canonical: canonical.clone(), node: node.clone() })
    }

    /// Links a mention to a graph node: label or curated surface first, then the
    /// static synonym table.
    pub fn resolve_entity(&self, mention: &str) -> Resolution {
        let key = phrase_key(mention);
        if key.is_empty() {
            return Resolution::Unresolved;
        }
        if let Some(id) = self.entities.get(&key) {
            return Resolution::Node(id.clone());
        }
        match self.aliases.get(&key) {
            Some((canonical, node)) => Resolution::Substitute {
                alias: mention.trim().to_ascii_lowercase(),
                canonical: canonical.clone(),
                node: node.clone(),
            },
            None => Resolution::Unresolved,
        }
    }

    pub fn labels(&self) -> &[(String, NodeId)] {
        &self.labels
    }

    pub fn is_stopword(&self, lemma: &str) -> bool {
        matches!(self.vocab.get(&[lemma.to_string()][..]), Some(Sym::Stop))
    }
}
