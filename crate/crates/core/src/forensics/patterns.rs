use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::tagging::{MergedTag, TaggedCaption};
use crate::{Error, Result};

/// Selection stops once the chosen rules cover this fraction of captions.
pub const COVERAGE_TARGET: f64 = 0.9;
pub const MAX_RULES: usize = 5;

/// A sentence pattern over merged tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternRule {
    /// Anchored regex over tag codes (see [`MergedTag::code`]).
    pub regex: String,
    /// Full rendering, e.g. `NOUN.P+REL+NOUN.P`.
    pub rendering: String,
    /// Rendering with the head folded into `Prefix`.
    pub short_rendering: String,
    pub head: Vec<MergedTag>,
    pub matched: usize,
    pub total: usize,
    pub coverage: f64,
}

impl PatternRule {
    pub fn compile(&self) -> Regex {
        Regex::new(&self.regex).expect("rule regexes are built from tag codes")
    }

    pub fn matches(&self, caption: &TaggedCaption) -> bool {
        self.compile().is_match(&caption.code_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Elem {
    tag: MergedTag,
    many: bool,
}

fn collapse(c: &TaggedCaption) -> Vec<Elem> {
    let mut out: Vec<Elem> = Vec::new();
    for (&tag, &nouns) in c.merged.iter().zip(&c.merged_nouns) {
        match out.last_mut() {
            Some(last) if last.tag == tag => last.many = true,
            _ => out.push(Elem { tag, many: nouns > 1 }),
        }
    }
    out
}

struct Shape {
    head: Vec<Elem>,
    units: Vec<Vec<Elem>>,
    tail: Vec<Elem>,
}

// Head runs up to the second phrase; each unit ends at a phrase.
fn shape(elems: Vec<Elem>) -> Shape {
    let phrases: Vec<usize> = (0..elems.len()).filter(|&i| elems[i].tag.is_phrase()).collect();
    if phrases.len() < 2 {
        return Shape { head: elems, units: Vec::new(), tail: Vec::new() };
    }
    let mut units = vec![vec![elems[phrases[1]]]];
    for w in phrases[1..].windows(2) {
        units.push(elems[w[0] + 1..=w[1]].to_vec());
    }
    let last = *phrases.last().unwrap();
    Shape { head: elems[..phrases[1]].to_vec(), units, tail: elems[last + 1..].to_vec() }
}

fn lcs_table(a: &[MergedTag], b: &[MergedTag]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            t[i][j] = if a[i] == b[j] { t[i + 1][j + 1] + 1 } else { t[i + 1][j].max(t[i][j + 1]) };
        }
    }
    t
}

fn supersequence(a: &[MergedTag], b: &[MergedTag]) -> Vec<MergedTag> {
    let t = lcs_table(a, b);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            out.push(a[i]);
            i += 1;
            j += 1;
        } else if t[i + 1][j] >= t[i][j + 1] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

// Positions in `sup` used by `unit` (a subsequence of it), via the same LCS.
fn embed(unit: &[MergedTag], sup: &[MergedTag]) -> Vec<usize> {
    let t = lcs_table(unit, sup);
    let (mut i, mut j) = (0, 0);
    let mut pos = Vec::new();
    while i < unit.len() && j < sup.len() {
        if unit[i] == sup[j] && t[i][j] == t[i + 1][j + 1] + 1 {
            pos.push(j);
            i += 1;
            j += 1;
        } else {
            j += 1;
        }
    }
    pos
}

struct Slot {
    tag: MergedTag,
    many: bool,
    optional: bool,
}

fn render_elem(tag: MergedTag, many: bool) -> String {
    if many {
        format!("({tag})*")
    } else {
        tag.to_string()
    }
}

fn regex_elem(tag: MergedTag, many: bool) -> String {
    if many {
        format!("{}+", tag.code())
    } else {
        tag.code().to_string()
    }
}

struct Candidate {
    head: Vec<Elem>,
    slots: Vec<Slot>,
    repeated: bool,
    tail: Vec<Elem>,
}

impl Candidate {
    fn body(&self) -> (String, String) {
        if self.slots.is_empty() {
            return (String::new(), String::new());
        }
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|s| {
                let base = render_elem(s.tag, s.many);
                if s.optional {
                    format!("({base})?")
                } else {
                    base
                }
            })
            .collect();
        let codes: String = self
            .slots
            .iter()
            .map(|s| {
                let base = regex_elem(s.tag, s.many);
                if s.optional {
                    format!("(?:{base})?")
                } else {
                    base
                }
            })
            .collect();
        let text = parts.join("+");
        if !self.repeated {
            return (text, codes);
        }
        let single_star = self.slots.len() == 1 && self.slots[0].many && !self.slots[0].optional;
        let text = if single_star { text } else { format!("({text})*") };
        (text, format!("(?:{codes})+"))
    }

    fn rule(&self) -> (String, String, String) {
        let join = |elems: &[Elem]| elems.iter().map(|e| render_elem(e.tag, e.many)).collect::<Vec<_>>();
        let (body, body_re) = self.body();
        let mut full = join(&self.head);
        let mut short = vec!["Prefix".to_string()];
        for part in std::iter::once(body).filter(|b| !b.is_empty()).chain(join(&self.tail)) {
            full.push(part.clone());
            short.push(part);
        }
        let mut re = String::from("^");
        re.extend(self.head.iter().map(|e| regex_elem(e.tag, e.many)));
        re.push_str(&body_re);
        re.extend(self.tail.iter().map(|e| regex_elem(e.tag, e.many)));
        re.push('$');
        (re, full.join("+"), short.join("+"))
    }
}

fn merge_flags(into: &mut [Elem], from: &[Elem]) {
    for (a, b) in into.iter_mut().zip(from) {
        a.many |= b.many;
    }
}

/// Summarizes a tagged corpus into at most [`MAX_RULES`] patterns.
///
/// Captions are split into a head (everything before the second noun
/// phrase), units ending at each later phrase, and a tail. Captions sharing
/// head and tail tags form one candidate whose units are aligned into a
/// common supersequence; slots missing from some unit become optional, and
/// a unit seen twice in one caption is starred. Candidates are then taken
/// greedily by the number of not-yet-covered captions they match.
pub fn summarize_patterns(corpus: &[TaggedCaption]) -> Result<Vec<PatternRule>> {
    if corpus.is_empty() {
        return Err(Error::Input("empty pattern corpus".into()));
    }
    type Key = (Vec<MergedTag>, Vec<MergedTag>);
    struct Group {
        head: Vec<Elem>,
        tail: Vec<Elem>,
        units: Vec<Vec<Elem>>,
        repeated: bool,
    }
    let mut groups: BTreeMap<Key, Group> = BTreeMap::new();
    for c in corpus {
        let s = shape(collapse(c));
        let key = (s.head.iter().map(|e| e.tag).collect(), s.tail.iter().map(|e| e.tag).collect());
        let g = groups.entry(key).or_insert_with(|| Group {
            head: s.head.clone(),
            tail: s.tail.clone(),
            units: Vec::new(),
            repeated: false,
        });
        merge_flags(&mut g.head, &s.head);
        merge_flags(&mut g.tail, &s.tail);
        g.repeated |= s.units.len() > 1;
        g.units.extend(s.units);
    }

    let mut candidates = Vec::new();
    for g in groups.into_values() {
        let shapes: BTreeSet<Vec<MergedTag>> = g.units.iter().map(|u| u.iter().map(|e| e.tag).collect()).collect();
        let sup = shapes.iter().fold(Vec::new(), |acc, u| supersequence(&acc, u));
        let mut slots: Vec<Slot> = sup.iter().map(|&tag| Slot { tag, many: false, optional: false }).collect();
        let mut seen = vec![0usize; sup.len()];
        for unit in &g.units {
            let tags: Vec<MergedTag> = unit.iter().map(|e| e.tag).collect();
            for (e, p) in unit.iter().zip(embed(&tags, &sup)) {
                slots[p].many |= e.many;
                seen[p] += 1;
            }
        }
        for (s, &n) in slots.iter_mut().zip(&seen) {
            s.optional = n < g.units.len();
        }
        candidates.push(Candidate { head: g.head, slots, repeated: g.repeated, tail: g.tail });
    }

    let codes: Vec<String> = corpus.iter().map(|c| c.code_string()).collect();
    let total = corpus.len();
    let mut scored: Vec<(PatternRule, Vec<bool>)> = candidates
        .iter()
        .map(|c| {
            let (regex, rendering, short_rendering) = c.rule();
            let re = Regex::new(&regex).expect("tag-code regex");
            let hits: Vec<bool> = codes.iter().map(|s| re.is_match(s)).collect();
            let matched = hits.iter().filter(|&&h| h).count();
            let rule = PatternRule {
                regex,
                rendering,
                short_rendering,
                head: c.head.iter().map(|e| e.tag).collect(),
                matched,
                total,
                coverage: matched as f64 / total as f64,
            };
            (rule, hits)
        })
        .collect();

    let mut covered = vec![false; total];
    let mut chosen = Vec::new();
    while chosen.len() < MAX_RULES && !scored.is_empty() {
        let gain = |hits: &[bool]| hits.iter().zip(&covered).filter(|(&h, &c)| h && !c).count();
        let best = (0..scored.len())
            .max_by(|&a, &b| {
                gain(&scored[a].1)
                    .cmp(&gain(&scored[b].1))
                    .then_with(|| scored[b].0.rendering.cmp(&scored[a].0.rendering))
            })
            .unwrap();
        if gain(&scored[best].1) == 0 {
            break;
        }
        let (rule, hits) = scored.swap_remove(best);
        for (c, h) in covered.iter_mut().zip(hits) {
            *c |= h;
        }
        chosen.push(rule);
        let frac = covered.iter().filter(|&&c| c).count() as f64 / total as f64;
        if frac >= COVERAGE_TARGET {
            break;
        }
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ConceptLexicon;
    use crate::forensics::pos_tag;

    fn tagged(lines: &[&str]) -> Vec<TaggedCaption> {
        let lex = ConceptLexicon::builtin();
        lines
            .iter()
            .map(|l| pos_tag(&l.split_whitespace().collect::<Vec<_>>(), &lex))
            .collect()
    }

    #[test]
    fn single_shape() {
        let rules = summarize_patterns(&tagged(&["a man riding a horse", "the dog near a table"])).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].rendering, "NOUN.P+REL+NOUN.P");
        assert_eq!(rules[0].coverage, 1.0);
    }

    #[test]
    fn worked_example() {
        let corpus = tagged(&["a image that is a a motorcycle bike but a a bicycle but a a road but a a field"]);
        assert_eq!(corpus[0].code_string(), "IOANCNCNCN");
        let rules = summarize_patterns(&corpus).unwrap();
        assert_eq!(rules[0].short_rendering, "Prefix+((CCONJ)?+(NOUN.P)*)*");
        assert_eq!(rules[0].rendering, "IMAGE.P+OTHER+AUX+((CCONJ)?+(NOUN.P)*)*");
        assert_eq!(rules[0].head, vec![MergedTag::ImageP, MergedTag::Other, MergedTag::Aux]);
    }

    #[test]
    fn optional_relation() {
        let rules = summarize_patterns(&tagged(&["a man near a dog near a cat riding a horse"])).unwrap();
        assert_eq!(rules[0].short_rendering, "Prefix+((REL)?+NOUN.P)*");
    }

    #[test]
    fn empty_corpus() {
        assert!(summarize_patterns(&[]).is_err());
    }

    #[test]
    fn supersequence_contains_both() {
        use MergedTag::*;
        let s = supersequence(&[Cconj, NounP], &[Rel, Other, NounP]);
        assert_eq!(s.len(), 4);
        assert_eq!(embed(&[Cconj, NounP], &s).len(), 2);
        assert_eq!(embed(&[Rel, Other, NounP], &s).len(), 3);
    }
}
