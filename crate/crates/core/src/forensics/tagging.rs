use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{ConceptLexicon, Pos};

/// Tags of the merged alphabet used by sentence patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MergedTag {
    #[serde(rename = "NOUN.P")]
    NounP,
    #[serde(rename = "IMAGE.P")]
    ImageP,
    #[serde(rename = "REL")]
    Rel,
    #[serde(rename = "CCONJ")]
    Cconj,
    #[serde(rename = "AUX")]
    Aux,
    #[serde(rename = "OTHER")]
    Other,
}

impl MergedTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MergedTag::NounP => "NOUN.P",
            MergedTag::ImageP => "IMAGE.P",
            MergedTag::Rel => "REL",
            MergedTag::Cconj => "CCONJ",
            MergedTag::Aux => "AUX",
            MergedTag::Other => "OTHER",
        }
    }

    /// One-character code used when matching rules with regexes.
    pub fn code(self) -> char {
        match self {
            MergedTag::NounP => 'N',
            MergedTag::ImageP => 'I',
            MergedTag::Rel => 'R',
            MergedTag::Cconj => 'C',
            MergedTag::Aux => 'A',
            MergedTag::Other => 'O',
        }
    }

    pub fn is_phrase(self) -> bool {
        matches!(self, MergedTag::NounP | MergedTag::ImageP)
    }
}

impl fmt::Display for MergedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A caption with one POS tag per token and its merged-tag sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedCaption {
    pub tokens: Vec<String>,
    pub tags: Vec<Pos>,
    pub merged: Vec<MergedTag>,
    /// Number of NOUN tokens inside each merged element.
    pub merged_nouns: Vec<usize>,
}

impl TaggedCaption {
    pub fn noun_count(&self) -> usize {
        self.tags.iter().filter(|&&t| t == Pos::Noun).count()
    }

    pub fn distinct_nouns(&self) -> usize {
        let mut nouns: Vec<&str> = self
            .tokens
            .iter()
            .zip(&self.tags)
            .filter(|(_, &t)| t == Pos::Noun)
            .map(|(w, _)| w.as_str())
            .collect();
        nouns.sort_unstable();
        nouns.dedup();
        nouns.len()
    }

    /// The merged sequence as tag codes.
    pub fn code_string(&self) -> String {
        self.merged.iter().map(|t| t.code()).collect()
    }
}

fn in_phrase(p: Pos) -> bool {
    matches!(p, Pos::Det | Pos::Adj | Pos::Noun | Pos::Pron)
}

/// Merges a tag sequence: maximal DET/ADJ/NOUN/PRON runs holding a NOUN
/// become one phrase (IMAGE.P when its last noun is "image"), VERB and ADP
/// become REL, AUX and CCONJ stay, and every other token is OTHER.
///
/// Returns the merged tags and the noun count of each.
pub fn merge_tags<S: AsRef<str>>(tokens: &[S], tags: &[Pos]) -> (Vec<MergedTag>, Vec<usize>) {
    let mut merged = Vec::new();
    let mut nouns = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        if in_phrase(tags[i]) {
            let start = i;
            while i < tags.len() && in_phrase(tags[i]) {
                i += 1;
            }
            let run = start..i;
            let head = run.clone().rev().find(|&j| tags[j] == Pos::Noun);
            match head {
                Some(h) => {
                    let tag = if tokens[h].as_ref() == "image" { MergedTag::ImageP } else { MergedTag::NounP };
                    merged.push(tag);
                    nouns.push(run.filter(|&j| tags[j] == Pos::Noun).count());
                }
                None => {
                    for _ in run {
                        merged.push(MergedTag::Other);
                        nouns.push(0);
                    }
                }
            }
            continue;
        }
        merged.push(match tags[i] {
            Pos::Verb | Pos::Adp => MergedTag::Rel,
            Pos::Aux => MergedTag::Aux,
            Pos::Cconj => MergedTag::Cconj,
            _ => MergedTag::Other,
        });
        nouns.push(0);
        i += 1;
    }
    (merged, nouns)
}

/// Tags every token by lexicon lookup (unknown tokens are OTHER).
pub fn pos_tag<S: AsRef<str>>(caption: &[S], lexicon: &ConceptLexicon) -> TaggedCaption {
    let tags: Vec<Pos> = caption.iter().map(|w| lexicon.pos_of(w.as_ref()).unwrap_or(Pos::Other)).collect();
    let (merged, merged_nouns) = merge_tags(caption, &tags);
    TaggedCaption {
        tokens: caption.iter().map(|w| w.as_ref().to_string()).collect(),
        tags,
        merged,
        merged_nouns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MergedTag::*;

    fn tag(s: &str) -> TaggedCaption {
        let words: Vec<&str> = s.split_whitespace().collect();
        pos_tag(&words, &ConceptLexicon::builtin())
    }

    #[test]
    fn bunch_of_bananas() {
        let lex = ConceptLexicon::builtin();
        // "bunch" is not in the closed lexicon; tag it as a noun by hand.
        let words = ["a", "bunch", "of", "bananas"];
        let tags = [Pos::Det, Pos::Noun, Pos::Adp, Pos::Noun];
        assert_eq!(merge_tags(&words, &tags).0, vec![NounP, Rel, NounP]);
        assert_eq!(tag("a banana of a pear").merged, vec![NounP, Rel, NounP]);
        assert!(lex.pos_of("bunch").is_none());
    }

    #[test]
    fn image_prefix() {
        let t = tag("a image image that is");
        assert_eq!(t.merged, vec![ImageP, Other, Aux]);
        assert_eq!(t.merged_nouns, vec![2, 0, 0]);
    }

    #[test]
    fn runs_without_nouns_are_other() {
        assert_eq!(tag("it is a").merged, vec![Other, Aux, Other]);
        assert_eq!(tag("zzz and the old man").merged, vec![Other, Cconj, NounP]);
    }

    #[test]
    fn noun_counts() {
        let t = tag("a cat cat");
        assert_eq!((t.noun_count(), t.distinct_nouns(), t.tokens.len()), (2, 1, 3));
        assert_eq!(t.merged, vec![NounP]);
    }
}
