//! Invariants as property tests.

use alignprobe::captioner::Caption;
use alignprobe::corpus::{ConceptLexicon, ImageFeature};
use alignprobe::forensics::pos_tag;
use alignprobe::matcher::{BagMatcher, Matcher};
use alignprobe::probes::{replace_nonvisual_words, replace_visual_words, WordPools};
use alignprobe::rng::rng_from_seed;
use alignprobe::textmetrics::{bleu, cider};
use proptest::prelude::*;

const V: usize = 12;

fn lexicon_words() -> Vec<String> {
    let mut w: Vec<String> = ConceptLexicon::builtin().entries().iter().map(|e| e.token.clone()).collect();
    w.push("image".into());
    w.push("oov".into());
    w
}

fn caption_strategy() -> impl Strategy<Value = Vec<String>> {
    let words = lexicon_words();
    prop::collection::vec(prop::sample::select(words), 0..15)
}

fn wrap(content: &[usize]) -> Caption {
    Caption([&[0][..], content, &[1]].concat())
}

proptest! {
    #[test]
    fn bag_score_ignores_word_order(
        seed in 0u64..1000,
        content in prop::collection::vec(2usize..V, 0..12),
        shuffle_seed in 0u64..1000,
        x in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let m = BagMatcher::random(V, 5, 4, 1, &mut rng_from_seed(seed));
        let image = ImageFeature::new(0, x);
        let mut perm = content.clone();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng_from_seed(shuffle_seed));
        let a = m.score(&image, &wrap(&content)).value;
        let b = m.score(&image, &wrap(&perm)).value;
        prop_assert!((a - b).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn bleu_of_a_reference_is_one(c in prop::collection::vec("[a-e]", 4..12)) {
        let b = bleu(&[c.clone()], &[vec![c.clone()]], 4).unwrap();
        prop_assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded(
        c in prop::collection::vec("[a-d]", 1..10),
        r in prop::collection::vec("[a-d]", 1..10),
    ) {
        let b = bleu(&[c.clone()], &[vec![r.clone()]], 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        let s = cider(&[c.clone(), r.clone()], &[vec![r.clone()], vec![c.clone()]]).unwrap();
        prop_assert!(s >= 0.0 && s.is_finite());
    }

    #[test]
    fn tagging_is_deterministic_and_aligned(c in caption_strategy()) {
        let lex = ConceptLexicon::builtin();
        let a = pos_tag(&c, &lex);
        prop_assert_eq!(&a, &pos_tag(&c, &lex));
        prop_assert_eq!(a.merged.len(), a.merged_nouns.len());
        prop_assert_eq!(a.merged_nouns.iter().sum::<usize>(), a.noun_count());
        prop_assert!(a.distinct_nouns() <= a.noun_count());
    }

    #[test]
    fn visual_replacement_touches_only_visual_nouns(c in caption_strategy(), seed in 0u64..10_000) {
        let lex = ConceptLexicon::builtin();
        let pools = WordPools::new(&lex);
        let r = replace_visual_words(&c, &pools, &mut rng_from_seed(seed));
        prop_assert_eq!(r.caption.len(), c.len());
        let mut any = false;
        for (old, new) in c.iter().zip(&r.caption) {
            if lex.is_visual(old) {
                any = true;
                prop_assert!(lex.is_visual(new) && new != old);
            } else {
                prop_assert_eq!(old, new);
            }
        }
        prop_assert_eq!(r.changed, any);
    }

    #[test]
    fn other_replacement_keeps_visual_nouns_and_pos(c in caption_strategy(), seed in 0u64..10_000) {
        let lex = ConceptLexicon::builtin();
        let pools = WordPools::new(&lex);
        let r = replace_nonvisual_words(&c, &pools, &mut rng_from_seed(seed));
        for (old, new) in c.iter().zip(&r.caption) {
            if lex.is_visual(old) || !lex.contains(old) {
                prop_assert_eq!(old, new);
            } else if old != new {
                prop_assert!(!lex.is_visual(new));
                prop_assert_eq!(lex.pos_of(old), lex.pos_of(new));
            }
        }
    }
}
