//! Matcher scores recomputed with plain loops over the public weights.

use alignprobe::captioner::{build_vocabulary, Caption};
use alignprobe::corpus::{ConceptLexicon, Dataset, ImageFeature, ReferenceGrammar, Split, WorldConfig};
use alignprobe::matcher::{train_matcher, Matcher, MatcherConfig, MatcherKind, MatcherParams};
use ndarray::{Array1, Array2};

fn matvec(m: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[[i, j]] * x[j]).sum()).collect()
}

fn add(a: &[f64], b: &Array1<f64>) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn dense_score(m: &MatcherParams, x: &[f64], tokens: &[usize]) -> f64 {
    match m {
        MatcherParams::Bag(b) => {
            let u = add(&matvec(&b.img_w, x), &b.img_b);
            let e = b.embed.ncols();
            let mut t = vec![0.0; e];
            for &tok in tokens {
                for k in 0..e {
                    t[k] += b.embed[[tok, k]] / tokens.len() as f64;
                }
            }
            let wt = matvec(&b.bilinear, &t);
            sig(u.iter().zip(&wt).map(|(a, c)| a * c).sum())
        }
        MatcherParams::Sequence(s) => {
            let g = &s.gru;
            let e = s.embed.ncols();
            let mut h = vec![0.0; e];
            for &tok in tokens {
                let x: Vec<f64> = s.embed.row(tok).to_vec();
                let z: Vec<f64> = add(&matvec(&g.w_z, &x), &g.b_z).iter().zip(matvec(&g.u_z, &h)).map(|(a, c)| sig(a + c)).collect();
                let r: Vec<f64> = add(&matvec(&g.w_r, &x), &g.b_r).iter().zip(matvec(&g.u_r, &h)).map(|(a, c)| sig(a + c)).collect();
                let rh: Vec<f64> = r.iter().zip(&h).map(|(a, c)| a * c).collect();
                let n: Vec<f64> = add(&matvec(&g.w_n, &x), &g.b_n).iter().zip(matvec(&g.u_n, &rh)).map(|(a, c)| (a + c).tanh()).collect();
                h = (0..e).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
            }
            let u = add(&matvec(&s.img_w, x), &s.img_b);
            let dot: f64 = u.iter().zip(&h).map(|(a, c)| a * c).sum();
            let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nh = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nu == 0.0 || nh == 0.0 {
                0.0
            } else {
                dot / (nu * nh)
            }
        }
    }
}

#[test]
fn trained_matchers_match_dense_recomputation() {
    let lex = ConceptLexicon::builtin();
    let world = WorldConfig { num_scenes: 120, ..WorldConfig::default() };
    let data = Dataset::generate(&world, &ReferenceGrammar::default(), &lex, 8).unwrap();
    let vocab = build_vocabulary(data.references(Split::Train), 0).unwrap();
    let (train, dev): (Vec<_>, Vec<_>) = (data.split(Split::Train).collect(), data.split(Split::Dev).collect());
    let config = MatcherConfig { epochs: 5, min_accuracy: 0.0, ..MatcherConfig::default() };
    for kind in MatcherKind::ALL {
        let (m, _) = train_matcher(kind, &train, &dev, &vocab, &config, 8).unwrap();
        for rec in data.split(Split::Test) {
            let image: ImageFeature = rec.image();
            for r in &rec.references {
                let c = vocab.encode(r);
                let tokens = c.content(1).to_vec();
                let got = m.score(&image, &Caption(c.0.clone())).value;
                let want = dense_score(&m, &rec.feature, &tokens);
                assert!((got - want).abs() < 1e-10, "{kind:?}: {got} vs {want}");
            }
        }
    }
}
