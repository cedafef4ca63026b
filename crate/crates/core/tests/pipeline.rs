use std::collections::HashSet;

use rxpredict_core::baselines::{train_lr, train_mlp};
use rxpredict_core::corpus::generate_synthetic_corpus;
use rxpredict_core::model::{evaluate_model, train};
use rxpredict_core::ndgrad::{read_checkpoint, write_checkpoint};
use rxpredict_core::{
    BaselineConfig, BaselineParams, CorpusConfig, Dataset, ModelParams, NoteParser, SyntheticSpec, TrainConfig,
};

fn dataset(num_notes: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        num_notes,
        ..SyntheticSpec::default()
    };
    let notes = generate_synthetic_corpus(&spec, &NoteParser::default(), seed).unwrap();
    let config = CorpusConfig {
        seq_len: 100,
        min_count: 2,
        tfidf_dim: 300,
        min_tokens: 5,
    };
    Dataset::build(notes, &config, seed).unwrap()
}

fn small_train() -> TrainConfig {
    TrainConfig {
        embed_dim: 16,
        dense_units: 16,
        filters_per_window: 8,
        lr: 0.005,
        keep_rate: 1.0,
        l2: 0.0,
        max_epochs: 4,
        patience: 4,
        ..TrainConfig::default()
    }
}

fn roundtrip(ckpt: &rxpredict_core::Checkpoint) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, ckpt).unwrap();
    let back = read_checkpoint(&mut bytes.as_slice()).unwrap();
    assert_eq!(&back, ckpt);
    bytes
}

#[test]
fn splits_partition_the_corpus() {
    let ds = dataset(300, 2);
    let (tr, va, te) = ds.split.sizes();
    assert_eq!(tr + va + te + ds.dropped, 300);
    assert_eq!((tr, va, te), (240, 30, 30));
    let ids = |s: &[rxpredict_core::EncodedExample]| s.iter().map(|e| e.visit_id.clone()).collect::<HashSet<_>>();
    let (a, b, c) = (ids(&ds.split.train), ids(&ds.split.validation), ids(&ds.split.test));
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    assert_eq!(a.len() + b.len() + c.len(), 300);
}

#[test]
fn trained_cnn_survives_a_checkpoint_roundtrip() {
    let ds = dataset(400, 3);
    let (params, history) = train(&ds.split, ds.vocab.len(), &small_train()).unwrap();
    assert!(history.best_epoch >= 1 && history.best_epoch <= 4);
    let (before, traces) = evaluate_model(&params, &ds.split.test).unwrap();

    let bytes = roundtrip(&params.to_checkpoint());
    let restored = ModelParams::from_checkpoint(&read_checkpoint(&mut bytes.as_slice()).unwrap()).unwrap();
    assert_eq!(restored, params);
    let (after, traces_after) = evaluate_model(&restored, &ds.split.test).unwrap();
    assert_eq!(before, after);
    for (x, y) in traces.iter().zip(&traces_after) {
        assert_eq!(x.probs, y.probs);
    }
}

#[test]
fn training_is_reproducible_and_seed_dependent() {
    let ds = dataset(300, 4);
    let config = TrainConfig {
        max_epochs: 2,
        ..small_train()
    };
    let (a, _) = train(&ds.split, ds.vocab.len(), &config).unwrap();
    let (b, _) = train(&ds.split, ds.vocab.len(), &config).unwrap();
    assert_eq!(a, b);
    let other = TrainConfig { seed: 7, ..config };
    let (c, _) = train(&ds.split, ds.vocab.len(), &other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn baselines_roundtrip_through_checkpoints() {
    let ds = dataset(300, 5);
    let lr_config = BaselineConfig {
        max_epochs: 3,
        ..BaselineConfig::default()
    };
    let (lr, _) = train_lr(&ds.split, ds.tfidf.dim(), &lr_config).unwrap();
    let mlp_config = BaselineConfig {
        max_epochs: 3,
        ..BaselineConfig::mlp()
    };
    let (mlp, _) = train_mlp(&ds.split, &mlp_config).unwrap();
    for params in [BaselineParams::Lr(lr), BaselineParams::Mlp(mlp)] {
        let ckpt = params.to_checkpoint();
        let bytes = roundtrip(&ckpt);
        let restored = BaselineParams::from_checkpoint(&read_checkpoint(&mut bytes.as_slice()).unwrap()).unwrap();
        for e in &ds.split.test {
            assert_eq!(restored.probs(e).unwrap(), params.probs(e).unwrap());
        }
    }
}

#[test]
fn vocabulary_ignores_words_seen_only_outside_training() {
    let spec = SyntheticSpec {
        num_notes: 300,
        ..SyntheticSpec::default()
    };
    let notes = generate_synthetic_corpus(&spec, &NoteParser::default(), 6).unwrap();
    let ds = Dataset::build(notes.clone(), &CorpusConfig { min_count: 2, ..CorpusConfig::default() }, 6).unwrap();
    let train_ids: HashSet<&str> = ds.split.train.iter().map(|e| e.visit_id.as_str()).collect();
    let mut train_df = std::collections::HashMap::<&str, usize>::new();
    for n in notes.iter().filter(|n| train_ids.contains(n.visit_id.as_str())) {
        for w in n.tokens.iter().map(String::as_str).collect::<HashSet<_>>() {
            *train_df.entry(w).or_default() += 1;
        }
    }
    for w in ds.vocab.words().iter().skip(2) {
        assert!(train_df.get(w.as_str()).copied().unwrap_or(0) >= 2, "{w} is not frequent in training notes");
    }
}
