use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{generate_synthetic_corpus, CorpusConfig, Dataset, DatasetSplit, SyntheticSpec};
use crate::metrics::MetricsReport;
use crate::note_parser::NoteParser;

fn example(tfidf: SparseVector, admission: Vec<u8>, labels: Vec<u8>) -> EncodedExample {
    EncodedExample {
        visit_id: "t".into(),
        token_indices: vec![],
        tfidf,
        labels,
        admission_med_vector: admission,
    }
}

fn split_of(examples: Vec<EncodedExample>) -> DatasetSplit<EncodedExample> {
    DatasetSplit {
        validation: examples.clone(),
        test: examples.clone(),
        train: examples,
        seed: 0,
    }
}

/// Half the notes contain word 0, the rest word 1; even classes follow word 0.
fn two_word_toy() -> Vec<EncodedExample> {
    (0..40)
        .map(|i| {
            let a = i % 2 == 0;
            let tfidf = vec![(usize::from(!a), 1.5)];
            let labels = (0..8).map(|c| u8::from((c % 2 == 0) == a)).collect();
            example(tfidf, vec![], labels)
        })
        .collect()
}

fn quick(l2: f64) -> BaselineConfig {
    BaselineConfig {
        lr: 0.05,
        l2,
        batch_size: 8,
        max_epochs: 60,
        patience: 60,
        ..BaselineConfig::default()
    }
}

#[test]
fn zero_weights_zero_input_give_half() {
    let p = LrParams::zeros(5);
    assert_eq!(p.probs(&vec![]).unwrap(), vec![0.5; 8]);
}

#[test]
fn out_of_range_feature_is_rejected() {
    let p = LrParams::zeros(3);
    assert_eq!(
        p.logits(&vec![(3, 1.0)]).unwrap_err(),
        BaselineError::FeatureOutOfRange { index: 3, dim: 3 }
    );
}

#[test]
fn separable_toy_is_fit_exactly() {
    let data = two_word_toy();
    let (p, _) = train_lr(&split_of(data.clone()), 2, &quick(1e-3)).unwrap();
    for e in &data {
        assert_eq!(predict_labels(&p.probs(&e.tfidf).unwrap()), e.labels);
    }
}

#[test]
fn huge_penalty_shrinks_weights() {
    // Adam moves each weight by about lr per step, so the step must be small
    // next to the 0.01 bound
    let cfg = BaselineConfig {
        lr: 1e-3,
        ..quick(1e3)
    };
    let (p, _) = train_lr(&split_of(two_word_toy()), 2, &cfg).unwrap();
    assert!(p.linear.weight.squared_norm().sqrt() < 0.01, "{}", p.linear.weight.squared_norm().sqrt());
}

#[test]
fn lr_class_is_blind_to_other_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<EncodedExample> = (0..60)
        .map(|_| {
            let mut tfidf = Vec::new();
            for j in 0..6 {
                if rng.random_bool(0.4) {
                    tfidf.push((j, rng.random_range(0.1..2.0)));
                }
            }
            let labels = (0..8).map(|_| u8::from(rng.random_bool(0.4))).collect();
            example(tfidf, vec![], labels)
        })
        .collect();
    let cfg = BaselineConfig {
        max_epochs: 15,
        patience: 3,
        ..quick(0.1)
    };
    let (a, ha) = train_lr(&split_of(data.clone()), 6, &cfg).unwrap();
    // rotate labels 1..8 among themselves, keep class 0
    let permuted: Vec<EncodedExample> = data
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.labels[1..].rotate_left(3);
            e
        })
        .collect();
    let (b, hb) = train_lr(&split_of(permuted), 6, &cfg).unwrap();
    assert_eq!(ha.best_epoch[0], hb.best_epoch[0]);
    assert_eq!(a.linear.weight.row(0), b.linear.weight.row(0));
    assert_eq!(a.linear.bias.data()[0], b.linear.bias.data()[0]);
}

fn identity_corpus(seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        num_notes: 600,
        admission_overlap: 1.0,
        admission_pool_rate: 0.0,
        ..SyntheticSpec::default()
    };
    let notes = generate_synthetic_corpus(&spec, &NoteParser::default(), seed).unwrap();
    let config = CorpusConfig {
        seq_len: 60,
        min_count: 1,
        tfidf_dim: 50,
        min_tokens: 5,
    };
    Dataset::build(notes, &config, seed).unwrap()
}

fn evaluate(p: &BaselineParams, examples: &[EncodedExample]) -> MetricsReport {
    let preds: Vec<Vec<u8>> = examples.iter().map(|e| predict_labels(&p.probs(e).unwrap())).collect();
    let labels: Vec<Vec<u8>> = examples.iter().map(|e| e.labels.clone()).collect();
    MetricsReport::evaluate(&preds, &labels)
}

#[test]
fn mlp_learns_admission_identity() {
    let ds = identity_corpus(3);
    let (p, _) = train_mlp(&ds.split, &BaselineConfig::mlp()).unwrap();
    let report = evaluate(&BaselineParams::Mlp(p), &ds.split.test);
    assert!(report.macro_avg.f1 >= 0.95, "{}", report.to_text_table());
}

#[test]
fn identity_initialized_mlp_reaches_small_loss() {
    let ds = identity_corpus(4);
    let width = ds.med_vocab.len();
    let cfg = BaselineConfig {
        hidden: width,
        identity_init: true,
        max_epochs: 200,
        patience: 200,
        ..BaselineConfig::mlp()
    };
    let (_, h) = train_mlp(&ds.split, &cfg).unwrap();
    let last = h.epochs.last().unwrap();
    assert!(last.train_loss < 0.05, "{last:?}");
}

#[test]
fn identity_init_needs_square_hidden_layer() {
    let cfg = BaselineConfig {
        hidden: 4,
        identity_init: true,
        ..BaselineConfig::mlp()
    };
    assert!(matches!(MlpParams::init(6, &cfg), Err(BaselineError::InvalidConfig(_))));
}

#[test]
fn mlp_on_blank_inputs_predicts_base_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rates = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
    let data: Vec<EncodedExample> = (0..2000)
        .map(|_| example(vec![], vec![0; 5], rates.iter().map(|&r| u8::from(rng.random_bool(r))).collect()))
        .collect();
    let base: Vec<f64> = (0..8)
        .map(|c| data.iter().map(|e| f64::from(e.labels[c])).sum::<f64>() / data.len() as f64)
        .collect();
    let cfg = BaselineConfig {
        max_epochs: 40,
        ..BaselineConfig::mlp()
    };
    let (p, _) = train_mlp(&split_of(data), &cfg).unwrap();
    for (got, want) in p.probs(&[0; 5]).unwrap().iter().zip(&base) {
        assert!((got - want).abs() < 0.02, "{got} vs {want}");
    }
}

#[test]
fn training_is_deterministic_under_seed() {
    let ds = identity_corpus(5);
    let cfg = BaselineConfig {
        max_epochs: 5,
        ..BaselineConfig::mlp()
    };
    let (a, ha) = train_mlp(&ds.split, &cfg).unwrap();
    let (b, hb) = train_mlp(&ds.split, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let lr_cfg = BaselineConfig {
        max_epochs: 3,
        ..BaselineConfig::default()
    };
    let dim = ds.tfidf.dim();
    assert_eq!(
        train_lr(&ds.split, dim, &lr_cfg).unwrap(),
        train_lr(&ds.split, dim, &lr_cfg).unwrap()
    );
}

#[test]
fn checkpoints_round_trip_with_kind_tags() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut lr = LrParams::zeros(7);
    lr.linear.weight = Tensor::uniform(&[8, 7], -1.0, 1.0, &mut rng);
    let mlp = MlpParams::init(5, &BaselineConfig::mlp()).unwrap();
    for p in [BaselineParams::Lr(lr), BaselineParams::Mlp(mlp)] {
        let ck = p.to_checkpoint();
        assert_eq!(ck.kind, p.kind());
        assert_eq!(BaselineParams::from_checkpoint(&ck).unwrap(), p);
    }
    let mut ck = BaselineParams::Lr(LrParams::zeros(3)).to_checkpoint();
    ck.kind = "cnn".into();
    assert!(matches!(
        BaselineParams::from_checkpoint(&ck),
        Err(BaselineError::BadCheckpoint(_))
    ));
}

#[test]
fn predict_uses_strict_half_threshold() {
    let p = BaselineParams::Lr(LrParams::zeros(2));
    let e = example(vec![(0, 1.0)], vec![], vec![0; 8]);
    assert!(predict_baseline(&p, &e).unwrap().is_empty());

    let mut lr = LrParams::zeros(2);
    lr.linear.bias.data_mut()[0] = 2.0;
    lr.linear.weight.set2(1, 1, 3.0);
    let p = BaselineParams::Lr(lr);
    let got = predict_baseline(&p, &example(vec![(1, 1.0)], vec![], vec![0; 8])).unwrap();
    assert_eq!(got.into_iter().collect::<Vec<_>>(), vec![Medication::Metoprolol, Medication::Furosemide]);
    let got = predict_baseline(&p, &example(vec![], vec![], vec![0; 8])).unwrap();
    assert_eq!(got.len(), 1);
}
