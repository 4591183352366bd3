use std::collections::{BTreeMap, HashMap};

use crate::captioner::{BOS_TOKEN, EOS_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};

const UNK: u32 = 0;
const EOS: u32 = 1;
const BOS: u32 = u32::MAX;

#[derive(Clone, Debug, Default)]
struct Context {
    total: u64,
    followers: HashMap<u32, u64>,
}

/// Interpolated Witten-Bell n-gram model over the training types plus UNK
/// and EOS. The lowest order interpolates with the uniform distribution, so
/// every token of the support has positive probability in every context.
#[derive(Clone, Debug)]
pub struct NgramLm {
    order: usize,
    ids: BTreeMap<String, u32>,
    tables: Vec<HashMap<Vec<u32>, Context>>,
}

impl NgramLm {
    /// The model with no counts: uniform over `words ∪ {UNK, EOS}`.
    pub fn uniform<S: AsRef<str>>(words: &[S], order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Input("n-gram order must be positive".into()));
        }
        let mut ids = BTreeMap::new();
        for w in words {
            let w = w.as_ref();
            if w != UNK_TOKEN && w != EOS_TOKEN && w != BOS_TOKEN && !ids.contains_key(w) {
                let id = ids.len() as u32 + 2;
                ids.insert(w.to_string(), id);
            }
        }
        Ok(Self { order, ids, tables: vec![HashMap::new(); order] })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of predictable tokens: training types, UNK and EOS.
    pub fn support_size(&self) -> usize {
        self.ids.len() + 2
    }

    /// Every predictable token, UNK and EOS first.
    pub fn support(&self) -> Vec<&str> {
        let mut out = vec![UNK_TOKEN, EOS_TOKEN];
        let mut rest: Vec<(&String, &u32)> = self.ids.iter().collect();
        rest.sort_by_key(|(_, &id)| id);
        out.extend(rest.into_iter().map(|(w, _)| w.as_str()));
        out
    }

    fn id(&self, token: &str) -> u32 {
        match token {
            EOS_TOKEN => EOS,
            BOS_TOKEN => BOS,
            _ => self.ids.get(token).copied().unwrap_or(UNK),
        }
    }

    fn prob_ids(&self, ctx: &[u32], w: u32) -> f64 {
        let lower = if ctx.is_empty() { 1.0 / self.support_size() as f64 } else { self.prob_ids(&ctx[1..], w) };
        match self.tables[ctx.len()].get(ctx) {
            Some(c) if c.total > 0 => {
                let types = c.followers.len() as f64;
                let seen = c.followers.get(&w).copied().unwrap_or(0) as f64;
                (seen + types * lower) / (c.total as f64 + types)
            }
            _ => lower,
        }
    }

    /// `P(word | history)`; only the last `order - 1` history tokens matter,
    /// and a short history is padded with BOS.
    pub fn prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let ctx = self.context(history.iter().map(|s| self.id(s.as_ref())));
        self.prob_ids(&ctx, self.id(word))
    }

    fn context(&self, history: impl Iterator<Item = u32>) -> Vec<u32> {
        let mut padded = vec![BOS; self.order - 1];
        padded.extend(history);
        padded[padded.len() - (self.order - 1)..].to_vec()
    }

    /// Log-probabilities of each token of the sentence followed by EOS.
    pub fn sentence_logprobs<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut ids: Vec<u32> = vec![BOS; self.order - 1];
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref())));
        ids.push(EOS);
        let k = self.order - 1;
        (k..ids.len()).map(|i| self.prob_ids(&ids[i - k..i], ids[i]).ln()).collect()
    }
}

/// Counts every order up to `order` with BOS padding and an EOS terminal.
pub fn train_ngram_lm<S: AsRef<str>>(corpus: &[Vec<S>], order: usize) -> Result<NgramLm> {
    if corpus.is_empty() {
        return Err(Error::Input("cannot train a language model on an empty corpus".into()));
    }
    let words: Vec<&str> = corpus.iter().flatten().map(AsRef::as_ref).collect();
    let mut lm = NgramLm::uniform(&words, order)?;
    let k = order - 1;
    for sentence in corpus {
        let mut ids: Vec<u32> = vec![BOS; k];
        ids.extend(sentence.iter().map(|t| lm.id(t.as_ref())));
        ids.push(EOS);
        for i in k..ids.len() {
            for len in 0..=k {
                let c = lm.tables[len].entry(ids[i - len..i].to_vec()).or_default();
                c.total += 1;
                *c.followers.entry(ids[i]).or_insert(0) += 1;
            }
        }
    }
    Ok(lm)
}

/// `exp` of the mean negative log-probability over the sentence's tokens
/// and its EOS; BOS is context only and never counted.
pub fn perplexity<S: AsRef<str>>(lm: &NgramLm, tokens: &[S]) -> f64 {
    let lp = lm.sentence_logprobs(tokens);
    (-lp.iter().sum::<f64>() / lp.len() as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::seq::IndexedRandom;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn uniform_model_perplexity_is_support_size() {
        let lm = NgramLm::uniform(&["a", "b", "c", "d", "e", "f"], 3).unwrap();
        assert_eq!(lm.support_size(), 8);
        assert!((perplexity(&lm, &toks("a f c")) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_sentence_beats_perturbations() {
        let corpus = vec![toks("a man riding a horse"); 5];
        let lm = train_ngram_lm(&corpus, 3).unwrap();
        let base = perplexity(&lm, &toks("a man riding a horse"));
        for p in ["a horse riding a man", "man a riding a horse", "a man riding a", "a man riding a dog"] {
            assert!(perplexity(&lm, &toks(p)) > base, "{p}");
        }
    }

    #[test]
    fn conditionals_normalize() {
        let corpus: Vec<Vec<String>> = ["a man riding a horse", "a dog near a cat", "a cat on a table and a dog", "the man is riding"]
            .iter()
            .map(|s| toks(s))
            .collect();
        let lm = train_ngram_lm(&corpus, 3).unwrap();
        let support: Vec<String> = lm.support().into_iter().map(String::from).collect();
        let mut hist_pool = support.clone();
        hist_pool.push(BOS_TOKEN.into());
        hist_pool.push("zebra".into());
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let h: Vec<&String> = (0..2).map(|_| hist_pool.choose(&mut rng).unwrap()).collect();
            let total: f64 = support.iter().map(|w| lm.prob(&h, w)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{h:?} {total}");
            assert!(support.iter().all(|w| lm.prob(&h, w) > 0.0));
        }
    }

    #[test]
    fn ordering_of_corpus_is_irrelevant() {
        let mut corpus: Vec<Vec<String>> = ["a man riding a horse", "a dog near a cat", "a cat on a table"]
            .iter()
            .map(|s| toks(s))
            .collect();
        let a = train_ngram_lm(&corpus, 3).unwrap();
        corpus.reverse();
        let b = train_ngram_lm(&corpus, 3).unwrap();
        let q = toks("a cat riding a dog");
        assert_eq!(perplexity(&a, &q), perplexity(&b, &q));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(train_ngram_lm::<String>(&[], 3).is_err());
    }
}
