use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Part-of-speech alphabet of the closed lexicon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Adj,
    Verb,
    Adp,
    Det,
    Cconj,
    Aux,
    Pron,
    Other,
}

impl Pos {
    pub const ALL: [Pos; 9] = [
        Pos::Noun,
        Pos::Adj,
        Pos::Verb,
        Pos::Adp,
        Pos::Det,
        Pos::Cconj,
        Pos::Aux,
        Pos::Pron,
        Pos::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Adj => "ADJ",
            Pos::Verb => "VERB",
            Pos::Adp => "ADP",
            Pos::Det => "DET",
            Pos::Cconj => "CCONJ",
            Pos::Aux => "AUX",
            Pos::Pron => "PRON",
            Pos::Other => "OTHER",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pos::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown POS tag `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexiconEntry {
    pub token: String,
    pub pos: Pos,
    pub visual: bool,
    pub vector: Option<Vec<f64>>,
}

/// Closed function-word set that every lexicon must contain.
pub const FUNCTION_WORDS: [&str; 13] = [
    "a", "the", "of", "that", "is", "was", "and", "but", "at", "near", "on", "in", "with",
];

pub const LEXICON_VERSION: &str = "v1";

const NOUN_GROUPS: [[&str; 4]; 14] = [
    ["man", "guy", "person", "boy"],
    ["woman", "lady", "girl", "mother"],
    ["horse", "pony", "mare", "foal"],
    ["dog", "puppy", "hound", "terrier"],
    ["cat", "kitten", "kitty", "tabby"],
    ["bike", "bicycle", "motorcycle", "scooter"],
    ["car", "truck", "van", "taxi"],
    ["table", "desk", "counter", "bench"],
    ["field", "grass", "meadow", "lawn"],
    ["road", "street", "sidewalk", "path"],
    ["pizza", "sandwich", "cake", "donut"],
    ["banana", "apple", "orange", "pear"],
    ["elephant", "giraffe", "zebra", "cow"],
    ["water", "beach", "ocean", "lake"],
];
const ABSTRACT_NOUNS: [&str; 7] = ["image", "picture", "photo", "closeup", "area", "background", "view"];
const ADJECTIVES: [&str; 12] = [
    "red", "blue", "green", "white", "black", "brown", "yellow", "young", "old", "small", "large", "wooden",
];
const VERBS: [&str; 10] = [
    "riding", "holding", "eating", "watching", "chasing", "carrying", "pulling", "sitting", "standing", "parked",
];
const ADPOSITIONS: [&str; 12] = [
    "on", "in", "with", "at", "near", "of", "behind", "under", "beside", "by", "above", "across",
];
const DETERMINERS: [&str; 4] = ["a", "the", "this", "some"];
const CONJUNCTIONS: [&str; 3] = ["and", "but", "or"];
const AUXILIARIES: [&str; 2] = ["is", "was"];
const PRONOUNS: [&str; 3] = ["it", "they", "his"];
const OTHERS: [&str; 4] = ["that", "there", "very", "together"];

/// Relation words the world generator attaches to object pairs.
pub const RELATION_WORDS: [&str; 16] = [
    "riding", "holding", "eating", "watching", "chasing", "carrying", "pulling", "on", "in", "behind", "under",
    "beside", "above", "across", "near", "by",
];

/// Spread of a noun's vector around its group centre (before renormalization).
const GROUP_SPREAD: f64 = 0.75;

/// Seed of the shipped lexicon.
pub const BUILTIN_SEED: u64 = 20_220_822;
pub const BUILTIN_DIM: usize = 64;

static BUILTIN_TEXT: &str = include_str!("../../data/lexicon.tsv");

/// The closed vocabulary of the synthetic world with POS tags and concept vectors.
#[derive(Clone, Debug)]
pub struct ConceptLexicon {
    dim: usize,
    entries: Vec<LexiconEntry>,
    index: HashMap<String, usize>,
}

impl ConceptLexicon {
    /// The frozen 64-dimensional lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TEXT).expect("shipped lexicon is valid")
    }

    /// Deterministically samples a lexicon of dimension `dim`.
    ///
    /// Nouns come in groups of four related concepts whose unit vectors
    /// scatter around a shared random direction; adjectives get independent
    /// unit vectors; every other entry has no vector.
    pub fn generate(dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let unit = |rng: &mut crate::rng::Rng| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            normalize(v)
        };
        let mut entries = Vec::new();
        for group in NOUN_GROUPS {
            let centre = unit(&mut rng);
            for noun in group {
                let jitter = unit(&mut rng);
                let v = centre.iter().zip(&jitter).map(|(c, j)| c + GROUP_SPREAD * j).collect();
                entries.push(entry(noun, Pos::Noun, true, Some(normalize(v))));
            }
        }
        for noun in ABSTRACT_NOUNS {
            entries.push(entry(noun, Pos::Noun, false, None));
        }
        for adj in ADJECTIVES {
            entries.push(entry(adj, Pos::Adj, false, Some(unit(&mut rng))));
        }
        let closed: [(&[&str], Pos); 7] = [
            (&VERBS, Pos::Verb),
            (&ADPOSITIONS, Pos::Adp),
            (&DETERMINERS, Pos::Det),
            (&CONJUNCTIONS, Pos::Cconj),
            (&AUXILIARIES, Pos::Aux),
            (&PRONOUNS, Pos::Pron),
            (&OTHERS, Pos::Other),
        ];
        for (words, pos) in closed {
            for w in words {
                entries.push(entry(w, pos, false, None));
            }
        }
        Self::from_entries(dim, entries).expect("generated lexicon is valid")
    }

    pub fn from_entries(dim: usize, entries: Vec<LexiconEntry>) -> Result<Self> {
        let index = entries.iter().enumerate().map(|(i, e)| (e.token.clone(), i)).collect();
        let lex = Self { dim, entries, index };
        lex.validate()?;
        Ok(lex)
    }

    fn validate(&self) -> Result<()> {
        if self.index.len() != self.entries.len() {
            return Err(Error::Config("lexicon tokens are not unique".into()));
        }
        for e in &self.entries {
            if e.token.is_empty() || e.token.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
                return Err(Error::Config(format!("bad lexicon token `{}`", e.token)));
            }
            if e.visual && (e.pos != Pos::Noun || e.vector.is_none()) {
                return Err(Error::Config(format!("visual entry `{}` must be a NOUN with a vector", e.token)));
            }
            if let Some(v) = &e.vector {
                if v.len() != self.dim {
                    return Err(Error::Config(format!(
                        "concept vector of `{}` has dimension {}, expected {}",
                        e.token,
                        v.len(),
                        self.dim
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!("non-finite concept vector for `{}`", e.token)));
                }
            }
        }
        let visual = self.visual_nouns().count();
        let relations = self.with_pos(Pos::Verb).count() + self.with_pos(Pos::Adp).count();
        let attributes = self.with_pos(Pos::Adj).count();
        if visual < 40 || relations < 10 || attributes < 10 {
            return Err(Error::Config(format!(
                "lexicon too small: {visual} visual nouns, {relations} relations, {attributes} attributes"
            )));
        }
        if let Some(missing) = FUNCTION_WORDS.iter().find(|w| !self.index.contains_key(**w)) {
            return Err(Error::Config(format!("lexicon lacks function word `{missing}`")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn get(&self, token: &str) -> Option<&LexiconEntry> {
        self.index.get(token).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn pos_of(&self, token: &str) -> Option<Pos> {
        self.get(token).map(|e| e.pos)
    }

    pub fn is_visual(&self, token: &str) -> bool {
        self.get(token).is_some_and(|e| e.visual)
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.get(token).and_then(|e| e.vector.as_deref())
    }

    pub fn with_pos(&self, pos: Pos) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |e| e.pos == pos).map(|e| e.token.as_str())
    }

    pub fn visual_nouns(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|e| e.visual).map(|e| e.token.as_str())
    }

    /// Relation words present in this lexicon, in [`RELATION_WORDS`] order.
    pub fn relation_words(&self) -> Vec<&str> {
        RELATION_WORDS
            .iter()
            .copied()
            .filter(|w| matches!(self.pos_of(w), Some(Pos::Verb | Pos::Adp)))
            .collect()
    }

    /// Visual nouns ranked by cosine similarity to `noun` (most similar
    /// first, ties by token), excluding `noun` itself.
    pub fn nearest_nouns(&self, noun: &str) -> Vec<(&str, f64)> {
        let Some(base) = self.vector(noun) else {
            return Vec::new();
        };
        let mut out: Vec<(&str, f64)> = self
            .entries
            .iter()
            .filter(|e| e.visual && e.token != noun)
            .map(|e| (e.token.as_str(), cosine(base, e.vector.as_deref().expect("visual"))))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    /// Versioned tab-separated text form.
    pub fn to_text(&self) -> String {
        let mut s = format!("#lexicon\t{LEXICON_VERSION}\tdim={}\n", self.dim);
        for e in &self.entries {
            let vector = e
                .vector
                .as_ref()
                .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
                .unwrap_or_default();
            writeln!(s, "{}\t{}\t{}\t{}", e.token, e.pos, u8::from(e.visual), vector).expect("string write");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse("lexicon", 1, "empty file"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 3 || fields[0] != "#lexicon" || fields[1] != LEXICON_VERSION {
            return Err(Error::parse("lexicon", 1, format!("bad header `{header}`")));
        }
        let dim: usize = fields[2]
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::parse("lexicon", 1, "bad dim field"))?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::parse("lexicon", i + 1, "expected 4 tab-separated fields"));
            }
            let pos = f[1].parse().map_err(|e: Error| Error::parse("lexicon", i + 1, e.to_string()))?;
            let visual = match f[2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse("lexicon", i + 1, format!("bad visual flag `{other}`"))),
            };
            let vector = if f[3].is_empty() {
                None
            } else {
                Some(
                    f[3].split(',')
                        .map(|x| x.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::parse("lexicon", i + 1, e.to_string()))?,
                )
            };
            entries.push(LexiconEntry { token: f[0].to_string(), pos, visual, vector });
        }
        Self::from_entries(dim, entries)
    }
}

fn entry(token: &str, pos: Pos, visual: bool, vector: Option<Vec<f64>>) -> LexiconEntry {
    LexiconEntry { token: token.to_string(), pos, visual, vector }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
