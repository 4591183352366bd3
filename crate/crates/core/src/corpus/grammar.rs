use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};

/// Subject-first chain grammar for reference captions:
///
/// ```text
/// caption := NP (CONN NP)*
/// NP      := "a" [ADJ] NOUN
/// CONN    := relation word, when the scene relates the two objects in that order
///          | one of the generic connectors otherwise
/// ```
///
/// Every object is mentioned exactly once; mention order is free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceGrammar {
    pub determiner: String,
    pub generic_connectors: Vec<String>,
    /// Probability of voicing an object's attribute in a sampled caption.
    pub attribute_prob: f64,
}

impl Default for ReferenceGrammar {
    fn default() -> Self {
        Self {
            determiner: "a".into(),
            generic_connectors: vec!["and".into(), "with".into(), "near".into()],
            attribute_prob: 0.5,
        }
    }
}

impl ReferenceGrammar {
    fn connector_options(&self, scene: &Scene, from: usize, to: usize) -> usize {
        if scene.relation(from, to).is_some() {
            1
        } else {
            self.generic_connectors.len()
        }
    }

    /// Number of distinct captions the grammar can realize for `scene`.
    pub fn count_realizations(&self, scene: &Scene) -> u128 {
        let attributed = scene.objects.iter().filter(|o| o.attribute.is_some()).count() as u32;
        let orders: u128 = permutations(scene.objects.len())
            .iter()
            .map(|perm| {
                perm.windows(2)
                    .map(|w| self.connector_options(scene, w[0], w[1]) as u128)
                    .product::<u128>()
            })
            .sum();
        orders * 2u128.pow(attributed)
    }

    /// Renders one caption from explicit choices.
    pub fn render(&self, scene: &Scene, order: &[usize], connectors: &[&str], with_attribute: &[bool]) -> Vec<String> {
        let mut out = Vec::new();
        for (pos, &obj) in order.iter().enumerate() {
            if pos > 0 {
                out.push(connectors[pos - 1].to_string());
            }
            out.push(self.determiner.clone());
            let o = &scene.objects[obj];
            if let (Some(attr), true) = (&o.attribute, with_attribute[obj]) {
                out.push(attr.clone());
            }
            out.push(o.noun.clone());
        }
        out
    }

    fn sample<R: Rng + ?Sized>(&self, scene: &Scene, rng: &mut R) -> Vec<String> {
        let mut order: Vec<usize> = (0..scene.objects.len()).collect();
        order.shuffle(rng);
        let connectors: Vec<&str> = order
            .windows(2)
            .map(|w| match scene.relation(w[0], w[1]) {
                Some(word) => word,
                None => self.generic_connectors.choose(rng).expect("non-empty").as_str(),
            })
            .collect();
        let with_attribute: Vec<bool> = scene
            .objects
            .iter()
            .map(|o| o.attribute.is_some() && rng.random_bool(self.attribute_prob))
            .collect();
        self.render(scene, &order, &connectors, &with_attribute)
    }
}

/// Samples `k` distinct reference captions for `scene`.
pub fn realize_references<R: Rng + ?Sized>(scene: &Scene, grammar: &ReferenceGrammar, rng: &mut R, k: usize) -> Result<Vec<Vec<String>>> {
    if grammar.generic_connectors.is_empty() {
        return Err(Error::Config("grammar needs at least one generic connector".into()));
    }
    let achievable = grammar.count_realizations(scene);
    if k as u128 > achievable {
        return Err(Error::Unrealizable { requested: k, achievable: achievable as usize });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let caption = grammar.sample(scene, rng);
        if seen.insert(caption.clone()) {
            out.push(caption);
        }
    }
    Ok(out)
}

/// All permutations of `0..n` in lexicographic order.
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::scene::{Relation, SceneObject};
    use crate::corpus::ConceptLexicon;
    use crate::rng::rng_from_seed;

    fn man_riding_horse() -> Scene {
        Scene {
            id: 1,
            objects: vec![
                SceneObject { noun: "man".into(), attribute: None },
                SceneObject { noun: "horse".into(), attribute: None },
            ],
            relations: vec![Relation { subject: 0, word: "riding".into(), object: 1 }],
        }
    }

    /// Independent enumeration: every order, connector and attribute choice.
    fn enumerate(scene: &Scene, g: &ReferenceGrammar) -> HashSet<Vec<String>> {
        let n = scene.objects.len();
        let mut out = HashSet::new();
        for order in permutations(n) {
            let options: Vec<Vec<&str>> = order
                .windows(2)
                .map(|w| match scene.relation(w[0], w[1]) {
                    Some(r) => vec![r],
                    None => g.generic_connectors.iter().map(String::as_str).collect(),
                })
                .collect();
            let combos = options.iter().map(Vec::len).product::<usize>();
            for c in 0..combos {
                let mut rem = c;
                let conns: Vec<&str> = options
                    .iter()
                    .map(|o| {
                        let pick = o[rem % o.len()];
                        rem /= o.len();
                        pick
                    })
                    .collect();
                for mask in 0..(1u32 << n) {
                    let attrs: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                    if attrs.iter().zip(&scene.objects).any(|(a, o)| *a && o.attribute.is_none()) {
                        continue;
                    }
                    out.insert(g.render(scene, &order, &conns, &attrs));
                }
            }
        }
        out
    }

    #[test]
    fn enumerated_set_matches_count_and_output() {
        let g = ReferenceGrammar::default();
        let scene = man_riding_horse();
        let all = enumerate(&scene, &g);
        assert_eq!(all.len() as u128, g.count_realizations(&scene));
        let got: HashSet<_> = realize_references(&scene, &g, &mut rng_from_seed(2), all.len()).unwrap().into_iter().collect();
        assert_eq!(got, all);
        let target: Vec<String> = "a man riding a horse".split(' ').map(String::from).collect();
        assert!(got.contains(&target));
    }

    #[test]
    fn counts_match_enumeration_on_random_scenes() {
        let lex = ConceptLexicon::builtin();
        let cfg = crate::corpus::WorldConfig { max_objects: 4, ..Default::default() };
        let g = ReferenceGrammar::default();
        let mut rng = rng_from_seed(4);
        for i in 0..20 {
            let s = crate::corpus::generate_scene(i, &mut rng, &cfg, &lex).unwrap();
            assert_eq!(enumerate(&s, &g).len() as u128, g.count_realizations(&s));
        }
    }

    #[test]
    fn single_reference() {
        let out = realize_references(&man_riding_horse(), &ReferenceGrammar::default(), &mut rng_from_seed(0), 1).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn too_many_requested_reports_maximum() {
        let err = realize_references(&man_riding_horse(), &ReferenceGrammar::default(), &mut rng_from_seed(0), 5).unwrap_err();
        assert!(matches!(err, Error::Unrealizable { requested: 5, achievable: 4 }));
    }

    #[test]
    fn outputs_are_lexical_and_mention_every_object() {
        let lex = ConceptLexicon::builtin();
        let cfg = crate::corpus::WorldConfig::default();
        let g = ReferenceGrammar::default();
        let mut rng = rng_from_seed(8);
        for i in 0..200 {
            let s = crate::corpus::generate_scene(i, &mut rng, &cfg, &lex).unwrap();
            for caption in realize_references(&s, &g, &mut rng, 3).unwrap() {
                assert!(caption.iter().all(|t| lex.contains(t)));
                for noun in s.nouns() {
                    assert!(caption.iter().any(|t| t == noun));
                }
                for t in caption.iter().filter(|t| lex.is_visual(t)) {
                    assert!(s.nouns().any(|n| n == t));
                }
            }
        }
    }
}
