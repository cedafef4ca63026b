use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::corpus::Vocabulary;
use crate::model::{Architecture, ModelParams};
use crate::ndgrad::{Activation, Tensor};

fn vocab_of(words: &[String]) -> Vocabulary {
    let mut text = String::from("<pad>\t0\t0\n<unk>\t1\t0\n");
    for (i, w) in words.iter().enumerate() {
        text.push_str(&format!("{w}\t{}\t1\n", i + 2));
    }
    Vocabulary::from_text(&text).unwrap()
}

fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i:03}")).collect()
}

// nearest neighbors

#[test]
fn two_real_words_point_at_each_other() {
    let v = vocab_of(&words(2));
    let e = Tensor::matrix(&[vec![0.0, 0.0], vec![9.0, 9.0], vec![1.0, 0.0], vec![4.0, 4.0]]);
    let n = nearest_neighbor("w000", &e, &v).unwrap();
    assert_eq!(n.neighbor, "w001");
    assert_eq!(n.distance, 5.0);
}

#[test]
fn planted_duplicate_has_distance_zero() {
    let v = vocab_of(&words(4));
    let e = Tensor::matrix(&[
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![1.0, 2.0],
        vec![5.0, 5.0],
        vec![1.0, 2.0],
        vec![-3.0, 1.0],
    ]);
    let n = nearest_neighbor("w000", &e, &v).unwrap();
    assert_eq!((n.neighbor.as_str(), n.distance), ("w002", 0.0));
}

#[test]
fn equal_distances_go_to_the_smaller_word() {
    let v = vocab_of(&["m".into(), "zeta".into(), "alpha".into()]);
    let e = Tensor::matrix(&[vec![0.0], vec![0.0], vec![0.0], vec![1.0], vec![-1.0]]);
    assert_eq!(nearest_neighbor("m", &e, &v).unwrap().neighbor, "alpha");
}

#[test]
fn markers_and_missing_words_are_unknown() {
    let v = vocab_of(&words(3));
    let e = Tensor::zeros(&[5, 2]);
    for q in ["<pad>", "<unk>", "nope"] {
        assert_eq!(nearest_neighbor(q, &e, &v).unwrap_err(), AnalysisError::UnknownWord(q.into()));
    }
    let lonely = vocab_of(&words(1));
    assert_eq!(
        nearest_neighbor("w000", &Tensor::zeros(&[3, 2]), &lonely).unwrap_err(),
        AnalysisError::NoCandidates
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn neighbor_matches_exhaustive_scan(seed in any::<u64>(), n in 2usize..60, q in 0usize..60) {
        let q = q % n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ws = words(n);
        let v = vocab_of(&ws);
        // coarse grid so ties actually happen
        let e = Tensor::from_vec(&[n + 2, 3], (0..(n + 2) * 3).map(|_| f64::from(rng.random_range(0..3u8))).collect()).unwrap();
        let mut dist = vec![vec![0.0; n + 2]; n + 2];
        for a in 0..n + 2 {
            for b in 0..n + 2 {
                dist[a][b] = (0..3).map(|c| (e.get2(a, c) - e.get2(b, c)).powi(2)).sum::<f64>().sqrt();
            }
        }
        let qi = q + 2;
        let mut cands: Vec<(f64, &str)> = (2..n + 2).filter(|&i| i != qi).map(|i| (dist[qi][i], ws[i - 2].as_str())).collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let got = nearest_neighbor(&ws[q], &e, &v).unwrap();
        prop_assert_eq!(got.neighbor.as_str(), cands[0].1);
        prop_assert_eq!(got.distance, cands[0].0);
    }
}

// filter n-grams

fn arch(vocab: usize, embed: usize, windows: Vec<usize>, filters: usize) -> Architecture {
    Architecture {
        vocab_size: vocab,
        embed_dim: embed,
        windows,
        filters_per_window: filters,
        dense_units: 2,
        num_labels: 8,
        activation: Activation::Relu,
    }
}

/// One-hot embeddings and a width-3 filter that counts matches of `target`.
fn indicator_model(vocab: usize, target: [usize; 3]) -> ModelParams {
    let mut p = ModelParams::zeros(&arch(vocab, vocab, vec![3], 1));
    p.embedding = Tensor::identity(vocab);
    for (r, &t) in target.iter().enumerate() {
        p.banks[0].weight.set2(0, r * vocab + t, 1.0);
    }
    p.banks[0].bias.data_mut()[0] = -2.0;
    p
}

#[test]
fn planted_trigram_ranks_first() {
    let ws: Vec<String> = ["alpha", "beta", "gamma"].iter().map(|s| s.to_string()).chain(words(20)).collect();
    let v = vocab_of(&ws);
    let p = indicator_model(v.len(), [2, 3, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let notes: Vec<Vec<usize>> = (0..40)
        .map(|i| {
            let mut t: Vec<usize> = (0..20).map(|_| rng.random_range(2..v.len())).collect();
            if i % 4 == 0 {
                let at = rng.random_range(0..17);
                t[at..at + 3].copy_from_slice(&[2, 3, 4]);
            }
            t
        })
        .collect();
    let refs: Vec<&[usize]> = notes.iter().map(Vec::as_slice).collect();
    let f = top_ngrams(&p, 0, 0, &refs, &v, 5);
    assert_eq!(f.top[0].0, "alpha beta gamma");
    assert!(f.top[0].1 > 0.99);
    assert!(f.top[1..].iter().all(|(_, val)| *val < f.top[0].1));
}

#[test]
fn single_window_corpus() {
    let v = vocab_of(&words(5));
    let p = ModelParams::init(&arch(v.len(), 4, vec![3], 2), 0.5, 1);
    let note = [3usize, 5, 6, 0, 0];
    let f = top_ngrams(&p, 0, 1, &[&note], &v, 5);
    assert_eq!(f.top.len(), 1);
    assert_eq!(f.top[0].0, "w001 w003 w004");
    assert_eq!(f.window, 3);
    assert_eq!(f.filter_id, 1);
}

#[test]
fn repeated_text_is_reported_once() {
    let v = vocab_of(&words(6));
    let p = indicator_model(v.len(), [2, 3, 4]);
    let a = [2usize, 3, 4, 7, 2, 3, 4];
    let b = [5usize, 2, 3, 4, 6];
    let f = top_ngrams(&p, 0, 0, &[&a, &b], &v, 5);
    let texts: Vec<&str> = f.top.iter().map(|(t, _)| t.as_str()).collect();
    assert_eq!(texts.iter().filter(|&&t| t == "w000 w001 w002").count(), 1);
    let mut dedup = texts.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), texts.len());
}

#[test]
fn filter_maximum_equals_pooled_value() {
    let v = vocab_of(&words(15));
    let mut p = ModelParams::init(&arch(v.len(), 6, vec![2, 4], 3), 0.6, 3);
    p.arch.activation = Activation::Tanh;
    let note = [4usize, 9, 2, 16, 11, 3, 7, 0];
    let trace = p.forward(&note).unwrap();
    for bank in 0..2 {
        for j in 0..3 {
            let vals = filter_values(&p, bank, j, &note);
            let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((best - trace.pooled[bank * 3 + j]).abs() < 1e-12);
        }
    }
}

/// Every window through the filter formula written out in full.
fn brute_force_top(p: &ModelParams, bank: usize, j: usize, notes: &[Vec<usize>], v: &Vocabulary, top: usize) -> Vec<(String, f64)> {
    let h = p.arch.embed_dim;
    let b = &p.banks[bank];
    let n = b.width;
    let mut best: std::collections::BTreeMap<String, f64> = Default::default();
    for t in notes {
        for i in 0..=t.len().saturating_sub(n) {
            if i + n > t.len() {
                break;
            }
            let mut pre = b.bias.data()[j];
            for r in 0..n {
                for c in 0..h {
                    pre += b.weight.get2(j, r * h + c) * p.embedding.get2(t[i + r], c);
                }
            }
            let normed = b.norm.gamma.data()[j] * (pre - b.norm.running_mean.data()[j])
                / (b.norm.running_var.data()[j] + b.norm.eps).sqrt()
                + b.norm.beta.data()[j];
            let val = p.arch.activation.apply(normed);
            let text = t[i..i + n].iter().map(|&x| v.word(x)).collect::<Vec<_>>().join(" ");
            let e = best.entry(text).or_insert(f64::NEG_INFINITY);
            *e = e.max(val);
        }
    }
    let mut all: Vec<(String, f64)> = best.into_iter().collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(top);
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn report_matches_brute_force(seed in any::<u64>(), num_notes in 1usize..30, top in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vocab_of(&words(10));
        let mut p = ModelParams::init(&arch(v.len(), 4, vec![2, 3], 3), 0.7, seed);
        for b in &mut p.banks {
            for x in b.norm.running_mean.data_mut() {
                *x = rng.random_range(-0.2..0.2);
            }
        }
        let notes: Vec<Vec<usize>> = (0..num_notes)
            .map(|_| (0..rng.random_range(3..12)).map(|_| rng.random_range(2..v.len())).collect())
            .collect();
        let refs: Vec<&[usize]> = notes.iter().map(Vec::as_slice).collect();
        let report = filter_ngram_report(&p, &refs, &v, top);
        prop_assert_eq!(report.filters.len(), 6);
        for (id, f) in report.filters.iter().enumerate() {
            prop_assert_eq!(f.filter_id, id);
            let want = brute_force_top(&p, id / 3, id % 3, &notes, &v, top);
            prop_assert_eq!(f.top.len(), want.len());
            for ((gt, gv), (wt, wv)) in f.top.iter().zip(&want) {
                prop_assert_eq!(gt, wt);
                prop_assert!((gv - wv).abs() < 1e-12);
            }
            prop_assert!(f.top.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }
}

// t-SNE

fn cloud(n: usize, dim: usize, center: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| { let z: f64 = StandardNormal.sample(rng); center + z }).collect::<Vec<f64>>())
        .collect()
}

#[test]
fn rejects_small_inputs_and_bad_perplexity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = TsneConfig {
        perplexity: 2.0,
        ..TsneConfig::default()
    };
    assert_eq!(
        tsne(&cloud(9, 3, 0.0, &mut rng), &cfg).unwrap_err(),
        AnalysisError::TooFewPoints { need: 10, got: 9 }
    );
    let x = cloud(30, 3, 0.0, &mut rng);
    for perp in [10.0, 0.0, -1.0] {
        let cfg = TsneConfig {
            perplexity: perp,
            ..TsneConfig::default()
        };
        assert!(matches!(tsne(&x, &cfg), Err(AnalysisError::BadPerplexity { .. })));
    }
}

#[test]
fn affinities_are_normalized_and_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = cloud(60, 5, 0.0, &mut rng);
    let c = conditional_affinities(&x, 12.0);
    for (i, row) in c.iter().enumerate() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert_eq!(row[i], 0.0);
        let h: f64 = -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
        assert!((h.exp() - 12.0).abs() < 1e-6);
    }
    let p = joint_affinities(&x, 12.0);
    assert!((p.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-8);
    for i in 0..60 {
        for j in 0..60 {
            assert_eq!(p[i][j], p[j][i]);
        }
    }
    let y: Vec<[f64; 2]> = (0..60).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
    let (q, _) = output_affinities(&y);
    assert!((q.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-8);
    assert_eq!(kl_divergence(&q, &q), 0.0);
}

fn two_clusters() -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = cloud(50, 10, 0.0, &mut rng);
    x.extend(cloud(50, 10, 8.0, &mut rng));
    (x, (0..100).map(|i| i / 50).collect())
}

fn mean_distances(coords: &[[f64; 2]], group: &[usize]) -> (f64, f64) {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            let d = ((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt();
            if group[i] == group[j] {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                nx += 1;
            }
        }
    }
    (intra / ni as f64, inter / nx as f64)
}

#[test]
fn separated_clusters_stay_apart() {
    let (x, group) = two_clusters();
    let e = tsne(&x, &TsneConfig::default()).unwrap();
    let (intra, inter) = mean_distances(&e.coords, &group);
    assert!(intra < inter, "{intra} vs {inter}");
    assert!(e.kl_final < e.kl_after_exaggeration);
    assert!(e.kl_final >= 0.0);
    assert!(e.coords.iter().all(|c| c[0].is_finite() && c[1].is_finite()));
}

#[test]
fn same_seed_same_layout() {
    let (x, _) = two_clusters();
    let cfg = TsneConfig {
        iterations: 300,
        ..TsneConfig::default()
    };
    let a = tsne(&x, &cfg).unwrap();
    assert_eq!(a, tsne(&x, &cfg).unwrap());
    let other = TsneConfig { seed: 1, ..cfg };
    assert_ne!(a.coords, tsne(&x, &other).unwrap().coords);
}

#[test]
fn sampling_is_sorted_distinct_and_seeded() {
    assert_eq!(sample_indices(5, 10, 3), vec![0, 1, 2, 3, 4]);
    let s = sample_indices(5000, 2000, 3);
    assert_eq!(s.len(), 2000);
    assert!(s.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(s, sample_indices(5000, 2000, 3));
}

#[test]
fn tsne_csv_has_membership_columns() {
    let e = TsneEmbedding {
        coords: vec![[1.0, 2.0]],
        kl_start: 0.0,
        kl_after_exaggeration: 0.0,
        kl_final: 0.0,
        perplexity: 30.0,
        seed: 0,
    };
    let mut out = Vec::new();
    e.write_csv(&mut out, &["v1".into()], &[vec![1, 0, 0, 0, 0, 0, 0, 1]]).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(
        text,
        "visit_id,x,y,med_0,med_1,med_2,med_3,med_4,med_5,med_6,med_7\nv1,1,2,1,0,0,0,0,0,0,1\n"
    );
}
