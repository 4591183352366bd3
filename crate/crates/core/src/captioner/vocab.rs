use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Reserved ids every model needs to know about.
///
/// `masked` ids never appear in a model's output distribution: their logits
/// are forced to `-inf` in training and decoding alike.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specials {
    pub bos: usize,
    pub eos: usize,
    pub masked: Vec<usize>,
}

/// Token/id bijection with reserved `BOS`, `EOS`, `UNK` at ids 0, 1, 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    threshold: usize,
}

impl Vocabulary {
    pub const BOS: usize = 0;
    pub const EOS: usize = 1;
    pub const UNK: usize = 2;

    fn from_tokens(tokens: Vec<String>, threshold: usize) -> Result<Self> {
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Input("duplicate vocabulary token".into()));
        }
        if tokens.len() < 3 || tokens[0] != BOS_TOKEN || tokens[1] != EOS_TOKEN || tokens[2] != UNK_TOKEN {
            return Err(Error::Input("vocabulary must start with <bos>, <eos>, <unk>".into()));
        }
        Ok(Self { tokens, index, threshold })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Word tokens (specials excluded), in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[3..]
    }

    pub fn specials(&self) -> Specials {
        Specials { bos: Self::BOS, eos: Self::EOS, masked: vec![Self::BOS, Self::UNK] }
    }

    /// `[BOS, ids..., EOS]`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Caption {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(Self::BOS);
        ids.extend(words.iter().map(|w| self.id(w.as_ref())));
        ids.push(Self::EOS);
        Caption(ids)
    }

    /// Content words of a caption (BOS and a trailing EOS dropped).
    pub fn decode(&self, caption: &Caption) -> Vec<String> {
        caption.content(Self::EOS).iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// Short content hash identifying the token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("#vocab\tv1\tthreshold={}\n", self.threshold);
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("vocab", 1, "empty file"))?;
        let threshold = header
            .strip_prefix("#vocab\tv1\tthreshold=")
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse("vocab", 1, format!("bad header `{header}`")))?;
        Self::from_tokens(lines.filter(|l| !l.is_empty()).map(String::from).collect(), threshold)
    }
}

/// Keeps tokens seen more than `threshold` times, ordered by descending
/// frequency then lexicographically.
pub fn build_vocabulary<I, S>(corpus: I, threshold: usize) -> Result<Vocabulary>
where
    I: IntoIterator,
    I::Item: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut sentences = 0;
    for sentence in corpus {
        sentences += 1;
        for w in sentence.as_ref() {
            *counts.entry(w.as_ref().to_string()).or_default() += 1;
        }
    }
    if sentences == 0 {
        return Err(Error::Input("empty vocabulary corpus".into()));
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c > threshold).collect();
    if kept.is_empty() {
        return Err(Error::Input(format!("every token occurs at most {threshold} times")));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN]
        .into_iter()
        .map(String::from)
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens, threshold)
}

/// A full token-id sequence `s_0 .. s_T` with `s_0 = BOS`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Caption(pub Vec<usize>);

impl Caption {
    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// Number of predicted positions `T`.
    pub fn predicted_len(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Ids between BOS and a trailing EOS.
    pub fn content(&self, eos: usize) -> &[usize] {
        let body = &self.0[1.min(self.0.len())..];
        match body.last() {
            Some(&last) if last == eos => &body[..body.len() - 1],
            _ => body,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn threshold_one() {
        let corpus = vec![words("a a cat"), words("a dog")];
        let v = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v.words(), &["a".to_string()]);
        assert_eq!(v.id("cat"), Vocabulary::UNK);
        assert_eq!(v.id("dog"), Vocabulary::UNK);
    }

    #[test]
    fn threshold_zero_keeps_everything() {
        let corpus = vec![words("a a cat"), words("a dog")];
        let v = build_vocabulary(&corpus, 0).unwrap();
        assert_eq!(v.words(), &["a".to_string(), "cat".into(), "dog".into()]);
    }

    #[test]
    fn all_dropped_is_an_error() {
        let corpus = vec![words("x y z")];
        assert!(build_vocabulary(&corpus, 1).is_err());
        let empty: Vec<Vec<String>> = vec![];
        assert!(build_vocabulary(&empty, 0).is_err());
    }

    #[test]
    fn matches_hash_count_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(12);
        let alphabet: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let corpus: Vec<Vec<String>> = (0..1000)
            .map(|_| {
                let n = rng.random_range(1..6);
                (0..n).map(|_| alphabet[rng.random_range(0..40usize).pow(2) / 40].clone()).collect()
            })
            .collect();
        let v = build_vocabulary(&corpus, 1).unwrap();
        let mut counts = std::collections::BTreeMap::<&str, usize>::new();
        for s in &corpus {
            for w in s {
                *counts.entry(w).or_default() += 1;
            }
        }
        let expected: std::collections::BTreeSet<&str> = counts.iter().filter(|(_, &c)| c > 1).map(|(w, _)| *w).collect();
        let got: std::collections::BTreeSet<&str> = v.words().iter().map(String::as_str).collect();
        assert_eq!(got, expected);
        for pair in v.words().windows(2) {
            assert!(counts[pair[0].as_str()] >= counts[pair[1].as_str()]);
        }
    }

    #[test]
    fn encode_decode_and_text() {
        let v = build_vocabulary(&[words("a man riding a horse")], 0).unwrap();
        let c = v.encode(&words("a man riding a zebra"));
        assert_eq!(c.0.first(), Some(&Vocabulary::BOS));
        assert_eq!(c.0.last(), Some(&Vocabulary::EOS));
        assert_eq!(v.decode(&c), words("a man riding a <unk>"));
        assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
        assert_eq!(v.hash().len(), 16);
    }
}
