use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Word(String),
    Noun,
}

/// A caption template: fixed words and NOUN slots, optionally ending in a
/// group that repeats once per remaining noun.
///
/// Written in `+`-joined notation, e.g. `a+NOUN+(of+a+NOUN)*`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub head: Vec<Slot>,
    pub group: Vec<Slot>,
}

fn slots(text: &str) -> Result<Vec<Slot>> {
    text.split('+')
        .map(|t| match t {
            "" => Err(Error::Config(format!("empty template element in `{text}`"))),
            "NOUN" => Ok(Slot::Noun),
            w => Ok(Slot::Word(w.to_string())),
        })
        .collect()
}

impl Template {
    pub fn parse(id: &str, notation: &str) -> Result<Self> {
        let (head, group) = match notation.find('(') {
            Some(open) => {
                let inner = notation[open + 1..]
                    .strip_suffix(")*")
                    .ok_or_else(|| Error::Config(format!("template `{id}`: group must close with `)*` at the end")))?;
                let head = notation[..open].strip_suffix('+').unwrap_or(&notation[..open]);
                (head, Some(inner))
            }
            None => (notation, None),
        };
        let head = if head.is_empty() { Vec::new() } else { slots(head)? };
        let group = group.map(slots).transpose()?.unwrap_or_default();
        if !group.is_empty() && group.iter().filter(|s| **s == Slot::Noun).count() != 1 {
            return Err(Error::Config(format!("template `{id}`: the repeated group needs exactly one NOUN")));
        }
        if head.iter().chain(&group).all(|s| *s != Slot::Noun) {
            return Err(Error::Config(format!("template `{id}` has no NOUN slot")));
        }
        Ok(Self { id: id.to_string(), head, group })
    }

    /// Nouns needed to fill the fixed part.
    pub fn min_nouns(&self) -> usize {
        self.head.iter().filter(|s| **s == Slot::Noun).count()
    }

    pub fn notation(&self) -> String {
        let join = |s: &[Slot]| {
            s.iter()
                .map(|s| match s {
                    Slot::Noun => "NOUN",
                    Slot::Word(w) => w.as_str(),
                })
                .collect::<Vec<_>>()
                .join("+")
        };
        match (self.head.is_empty(), self.group.is_empty()) {
            (_, true) => join(&self.head),
            (true, false) => format!("({})*", join(&self.group)),
            (false, false) => format!("{}+({})*", join(&self.head), join(&self.group)),
        }
    }

    /// The five fixed templates, one per scorer family studied.
    pub fn standard() -> Vec<Template> {
        [
            ("uniter", "a+NOUN+of+the+(NOUN)*"),
            ("rosita", "a+image+image+that+is+a+a+NOUN+(but+a+a+NOUN)*"),
            ("vilbert", "a+NOUN+that+the+NOUN+(at+the+NOUN)*"),
            ("clip", "a+image+image+of+NOUN+(near+a+NOUN)*"),
            ("lxmert", "a+NOUN+(of+a+NOUN)*"),
        ]
        .into_iter()
        .map(|(id, n)| Template::parse(id, n).expect("built-in template"))
        .collect()
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.notation())
    }
}

impl FromStr for Template {
    type Err = Error;

    /// `id=notation`, or a bare id of a standard template.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((id, notation)) => Template::parse(id.trim(), notation.trim()),
            None => Template::standard()
                .into_iter()
                .find(|t| t.id == s)
                .ok_or_else(|| Error::Config(format!("unknown template `{s}`"))),
        }
    }
}

/// Fills the fixed slots in order, then repeats the group once per
/// remaining noun.
pub fn build_template_caption<S: AsRef<str>>(template: &Template, nouns: &[S]) -> Result<Vec<String>> {
    let min = template.min_nouns();
    if nouns.len() < min {
        return Err(Error::Input(format!(
            "template `{}` needs at least {min} nouns, got {}",
            template.id,
            nouns.len()
        )));
    }
    if template.group.is_empty() && nouns.len() > min {
        return Err(Error::Input(format!("template `{}` takes exactly {min} nouns", template.id)));
    }
    let mut next = nouns.iter().map(|n| n.as_ref().to_string());
    let mut fill = |slots: &[Slot], out: &mut Vec<String>| {
        for s in slots {
            out.push(match s {
                Slot::Word(w) => w.clone(),
                Slot::Noun => next.next().expect("noun count checked"),
            });
        }
    };
    let mut out = Vec::new();
    fill(&template.head, &mut out);
    for _ in min..nouns.len() {
        fill(&template.group, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(id: &str, nouns: &[&str]) -> String {
        let t: Template = id.parse().unwrap();
        build_template_caption(&t, nouns).unwrap().join(" ")
    }

    #[test]
    fn standard_instantiations() {
        let n = ["man", "horse", "field"];
        assert_eq!(build("uniter", &n), "a man of the horse field");
        assert_eq!(build("lxmert", &n), "a man of a horse of a field");
        assert_eq!(build("rosita", &n), "a image image that is a a man but a a horse but a a field");
        assert_eq!(build("vilbert", &n), "a man that the horse at the field");
        assert_eq!(build("clip", &n), "a image image of man near a horse near a field");
    }

    #[test]
    fn minimal_and_too_few() {
        assert_eq!(build("lxmert", &["man"]), "a man");
        let t: Template = "vilbert".parse().unwrap();
        let err = build_template_caption(&t, &["man"]).unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn notation_round_trip() {
        for t in Template::standard() {
            assert_eq!(Template::parse(&t.id, &t.notation()).unwrap(), t);
        }
        assert!(Template::parse("x", "a+of").is_err());
        assert!(Template::parse("x", "a+(of+a)*").is_err());
    }
}
