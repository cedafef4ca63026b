//! Subcommand implementations. Each returns its summary so tests can drive
//! the pipeline in-process; `main` only adds argument parsing and exit codes.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rxpredict_core::analysis::{filter_ngram_report, neighbor_report, sample_indices, tsne};
use rxpredict_core::baselines::{train_lr, train_mlp};
use rxpredict_core::corpus::{generate_synthetic_corpus, generate_synthetic_raw};
use rxpredict_core::metrics::{pmi, rank_comparison, PmiMatrix};
use rxpredict_core::model::{medication_covariance, predict_labels, train_with};
use rxpredict_core::ndgrad::{read_checkpoint, write_checkpoint};
use rxpredict_core::{
    BaselineParams, Checkpoint, CovarianceReport, Dataset, EncodedExample, Medication, MetricsReport, ModelParams,
    NoteParser, ParsedNote, RankComparison, SyntheticSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, ModelKind, RunConfig};
use crate::error::CliError;
use crate::io;
use crate::manifest::{aggregate, RunManifest, SeedReport};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MODEL_INFO_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Seeds trained or evaluated at once (at least 1).
    pub jobs: usize,
    /// Suppress per-epoch progress on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }

    fn pick(self, ds: &Dataset) -> &[EncodedExample] {
        match self {
            Self::Train => &ds.split.train,
            Self::Validation => &ds.split.validation,
            Self::Test => &ds.split.test,
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "validation" | "val" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            _ => Err(format!("unknown split `{s}` (train, validation, test)")),
        }
    }
}

// ---------------------------------------------------------------- parse

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub records: usize,
    pub skipped_category: usize,
    pub duplicates: usize,
    /// Notes that could not be parsed (logged and skipped).
    pub malformed: usize,
    /// Notes without any antihypertensive at discharge.
    pub no_label: usize,
    pub parsed: usize,
}

/// Default summary location: `notes.jsonl` gets `notes.summary.json`.
pub fn summary_path(output: &Path) -> PathBuf {
    output.with_extension("summary.json")
}

pub fn cmd_parse(input: &Path, output: &Path, quiet: bool) -> Result<ParseSummary, CliError> {
    let (raw, stats) = io::read_raw_notes(input)?;
    let parser = NoteParser::default();
    let mut parsed = Vec::new();
    let (mut malformed, mut no_label) = (0, 0);
    for note in &raw {
        match parser.parse_note(note) {
            Ok(Some(p)) => parsed.push(p),
            Ok(None) => no_label += 1,
            Err(e) => {
                if !quiet {
                    eprintln!("skipping {}: {e}", note.visit_id);
                }
                malformed += 1;
            }
        }
    }
    io::write_jsonl(output, &parsed)?;
    let summary = ParseSummary {
        records: stats.records,
        skipped_category: stats.skipped_category,
        duplicates: stats.duplicates,
        malformed,
        no_label,
        parsed: parsed.len(),
    };
    io::write_json(&summary_path(output), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub notes: usize,
    pub seed: u64,
    /// Notes carrying each medication label.
    pub label_counts: Vec<usize>,
    pub raw: bool,
}

/// Writes a synthetic corpus: parsed notes, or raw `{visit_id, text}` lines
/// when `raw` is set (input for `parse`).
pub fn cmd_synth(
    spec_path: Option<&Path>,
    output: &Path,
    seed: u64,
    num_notes: Option<usize>,
    raw: bool,
) -> Result<SynthSummary, CliError> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            SyntheticSpec::from_json(&text)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(n) = num_notes {
        spec.num_notes = n;
    }
    let parser = NoteParser::default();
    let labels: Vec<Vec<u8>> = if raw {
        let notes = generate_synthetic_raw(&spec, &parser, seed)?;
        let texts: Vec<_> = notes.iter().map(|(r, _)| r).collect();
        io::write_jsonl(output, &texts)?;
        notes.into_iter().map(|(_, l)| l).collect()
    } else {
        let notes = generate_synthetic_corpus(&spec, &parser, seed)?;
        io::write_jsonl(output, &notes)?;
        notes.into_iter().map(|n| n.labels).collect()
    };
    let k = labels.first().map_or(0, Vec::len);
    Ok(SynthSummary {
        notes: labels.len(),
        seed,
        label_counts: (0..k).map(|i| labels.iter().filter(|l| l[i] == 1).count()).collect(),
        raw,
    })
}

// ---------------------------------------------------------------- datasets

/// The parsed notes a run reads, with their file hash.
pub struct Corpus {
    pub notes: Vec<ParsedNote>,
    pub sha256: String,
}

pub fn load_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    config.require_notes()?;
    Ok(Corpus {
        notes: io::read_parsed_notes(&config.notes)?,
        sha256: io::file_sha256(&config.notes)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Written as `seed-<s>/dataset.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub seed: u64,
    pub notes_sha256: String,
    pub dropped: usize,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub tfidf_dim: usize,
    pub admission_med_vocab: Vec<String>,
    pub ids: SplitIds,
}

pub fn build_dataset(config: &RunConfig, corpus: &Corpus, seed: u64) -> Result<(Dataset, DatasetInfo), CliError> {
    let ds = Dataset::build(corpus.notes.clone(), &config.corpus, seed)?;
    let ids = |v: &[EncodedExample]| v.iter().map(|e| e.visit_id.clone()).collect();
    let info = DatasetInfo {
        seed,
        notes_sha256: corpus.sha256.clone(),
        dropped: ds.dropped,
        vocab_size: ds.vocab.len(),
        vocab_hash: ds.vocab.hash(),
        tfidf_dim: ds.tfidf.dim(),
        admission_med_vocab: ds.med_vocab.clone(),
        ids: SplitIds {
            train: ids(&ds.split.train),
            validation: ids(&ds.split.validation),
            test: ids(&ds.split.test),
        },
    };
    Ok((ds, info))
}

fn write_dataset(dir: &Path, ds: &Dataset, info: &DatasetInfo) -> Result<(), CliError> {
    io::write_json(&dir.join("dataset.json"), info)?;
    io::write_text(&dir.join("vocab.txt"), &ds.vocab.to_text())
}

/// Runs `f` for every seed, at most `jobs` at a time; results keep seed
/// order and the first failure (in seed order) is returned.
pub fn for_each_seed<T: Send>(
    seeds: &[u64],
    jobs: usize,
    f: impl Fn(u64) -> Result<T, CliError> + Sync,
) -> Result<Vec<T>, CliError> {
    let jobs = jobs.clamp(1, seeds.len().max(1));
    if jobs == 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T, CliError>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let r = f(seeds[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every seed ran"))
        .collect()
}

pub fn cmd_build(config: &RunConfig, options: RunOptions) -> Result<Vec<DatasetInfo>, CliError> {
    let corpus = load_corpus(config)?;
    for_each_seed(&config.seeds, options.jobs, |seed| {
        let (ds, info) = build_dataset(config, &corpus, seed)?;
        write_dataset(&config.seed_dir(seed), &ds, &info)?;
        Ok(info)
    })
}

// ---------------------------------------------------------------- train

/// Sidecar written next to every checkpoint as `model.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: ModelKind,
    pub seed: u64,
    pub config_hash: String,
    pub notes_sha256: String,
    pub vocab_hash: String,
    pub checkpoint_sha256: String,
    pub epochs_run: usize,
    /// False for checkpoints that never took an optimizer step.
    pub trained: bool,
}

/// Either trained model, loaded from a checkpoint.
pub enum TrainedModel {
    Cnn(ModelParams),
    Baseline(BaselineParams),
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CliError> {
        match ckpt.kind.as_str() {
            "cnn" => Ok(Self::Cnn(ModelParams::from_checkpoint(ckpt)?)),
            _ => Ok(Self::Baseline(BaselineParams::from_checkpoint(ckpt)?)),
        }
    }

    /// Inference-mode probabilities, one row per example.
    pub fn probs(&self, examples: &[EncodedExample]) -> Result<Vec<Vec<f64>>, CliError> {
        match self {
            Self::Cnn(p) => {
                let tokens: Vec<&[usize]> = examples.iter().map(|e| e.token_indices.as_slice()).collect();
                Ok(p.infer_all(&tokens, 256)?.into_iter().map(|t| t.probs).collect())
            }
            Self::Baseline(p) => Ok(examples.iter().map(|e| p.probs(e)).collect::<Result<_, _>>()?),
        }
    }
}

/// True when every batch-norm running statistic still has its initial
/// value, which no training step leaves intact.
pub fn has_pristine_statistics(params: &ModelParams) -> bool {
    let norms = params.banks.iter().map(|b| &b.norm).chain([&params.dense_norm]);
    norms
        .into_iter()
        .all(|n| n.running_mean.data().iter().all(|&v| v == 0.0) && n.running_var.data().iter().all(|&v| v == 1.0))
}

fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<String, CliError> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, ckpt)?;
    std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let ckpt = read_checkpoint(&mut bytes.as_slice())?;
    Ok((ckpt, sha256_hex(&bytes)))
}

/// Trains one model per seed; writes `dataset.json`, `vocab.txt`,
/// `model.ckpt`, `model.json` and `history.json` under `seed-<s>/`.
pub fn cmd_train(config: &RunConfig, options: RunOptions) -> Result<Vec<ModelInfo>, CliError> {
    let corpus = load_corpus(config)?;
    let config_hash = config.hash();
    for_each_seed(&config.seeds, options.jobs, |seed| {
        let dir = config.seed_dir(seed);
        let (ds, info) = build_dataset(config, &corpus, seed)?;
        write_dataset(&dir, &ds, &info)?;
        let (ckpt, epochs_run) = match config.model {
            ModelKind::Cnn => {
                let train_cfg = rxpredict_core::TrainConfig {
                    seed,
                    ..config.train.clone()
                };
                let (params, history) = train_with(&ds.split, ds.vocab.len(), &train_cfg, |r| {
                    if !options.quiet {
                        eprintln!(
                            "seed {seed} epoch {:>3}  train {:.4}  val {:.4}  val macro-F1 {:.4}",
                            r.epoch, r.train_loss, r.val_loss, r.val_macro_f1
                        );
                    }
                })?;
                io::write_json(&dir.join("history.json"), &history)?;
                (params.to_checkpoint(), history.epochs.len())
            }
            ModelKind::Lr => {
                let cfg = rxpredict_core::BaselineConfig {
                    seed,
                    ..config.lr.clone()
                };
                let (params, history) = train_lr(&ds.split, ds.tfidf.dim(), &cfg)?;
                io::write_json(&dir.join("history.json"), &history)?;
                (BaselineParams::Lr(params).to_checkpoint(), history.epochs.len())
            }
            ModelKind::Mlp => {
                let cfg = rxpredict_core::BaselineConfig {
                    seed,
                    ..config.mlp.clone()
                };
                let (params, history) = train_mlp(&ds.split, &cfg)?;
                io::write_json(&dir.join("history.json"), &history)?;
                (BaselineParams::Mlp(params).to_checkpoint(), history.epochs.len())
            }
        };
        let checkpoint_sha256 = save_checkpoint(&dir.join(CHECKPOINT_FILE), &ckpt)?;
        let model = ModelInfo {
            kind: config.model,
            seed,
            config_hash: config_hash.clone(),
            notes_sha256: corpus.sha256.clone(),
            vocab_hash: info.vocab_hash,
            checkpoint_sha256,
            epochs_run,
            trained: epochs_run > 0,
        };
        io::write_json(&dir.join(MODEL_INFO_FILE), &model)?;
        Ok(model)
    })
}

// ---------------------------------------------------------------- eval

/// Rebuilds the seed's dataset and loads its checkpoint, checking that both
/// still match what training recorded.
fn load_trained(config: &RunConfig, corpus: &Corpus, seed: u64) -> Result<(Dataset, ModelInfo, TrainedModel), CliError> {
    let dir = config.seed_dir(seed);
    let info: ModelInfo = io::read_json(&dir.join(MODEL_INFO_FILE))?;
    if info.notes_sha256 != corpus.sha256 {
        return Err(CliError::Data(format!(
            "{} was trained on different notes than {}",
            dir.display(),
            config.notes.display()
        )));
    }
    let (ckpt, sha) = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    if sha != info.checkpoint_sha256 {
        return Err(CliError::Data(format!("{} does not match its model.json", dir.join(CHECKPOINT_FILE).display())));
    }
    if ckpt.kind != info.kind.as_str() {
        return Err(CliError::Data(format!("checkpoint kind `{}` but model.json says `{}`", ckpt.kind, info.kind.as_str())));
    }
    let (ds, _) = build_dataset(config, corpus, seed)?;
    if ds.vocab.hash() != info.vocab_hash {
        return Err(CliError::Data(format!(
            "vocabulary rebuilt for seed {seed} differs from the trained one (corpus settings changed?)"
        )));
    }
    Ok((ds, info, TrainedModel::from_checkpoint(&ckpt)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub visit_id: String,
    pub probs: Vec<f64>,
    pub predicted: Vec<Medication>,
    pub labels: Vec<u8>,
}

/// Learned correlation against label PMI, both from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub covariance: CovarianceReport,
    pub pmi: PmiMatrix,
    pub ranking: RankComparison,
}

pub fn correlation_report(params: &ModelParams, ds: &Dataset, config: &RunConfig) -> Result<CorrelationReport, CliError> {
    let tokens: Vec<&[usize]> = ds.split.train.iter().map(|e| e.token_indices.as_slice()).collect();
    let covariance = medication_covariance(params, &tokens, config.covariance)?;
    let labels: Vec<Vec<u8>> = ds.split.train.iter().map(|e| e.labels.clone()).collect();
    let pmi = pmi(&labels);
    let ranking = rank_comparison(&covariance.corr, &pmi);
    Ok(CorrelationReport {
        covariance,
        pmi,
        ranking,
    })
}

/// Scores each seed's checkpoint on `split`. Writes `<split>_metrics.{json,csv,txt}`
/// and `<split>_predictions.jsonl`; CNN runs also get `correlation.json`
/// and `rank_comparison.{csv,txt}`.
pub fn cmd_eval(config: &RunConfig, split: Split, options: RunOptions) -> Result<Vec<SeedReport>, CliError> {
    let corpus = load_corpus(config)?;
    for_each_seed(&config.seeds, options.jobs, |seed| {
        let dir = config.seed_dir(seed);
        let (ds, info, model) = load_trained(config, &corpus, seed)?;
        let examples = split.pick(&ds);
        let probs = model.probs(examples)?;
        let preds: Vec<Vec<u8>> = probs.iter().map(|p| predict_labels(p)).collect();
        let labels: Vec<Vec<u8>> = examples.iter().map(|e| e.labels.clone()).collect();
        let metrics = MetricsReport::evaluate(&preds, &labels);

        let name = split.as_str();
        io::write_json(&dir.join(format!("{name}_metrics.json")), &metrics)?;
        metrics.write_csv(io::create(&dir.join(format!("{name}_metrics.csv")))?)?;
        io::write_text(&dir.join(format!("{name}_metrics.txt")), &metrics.to_text_table())?;
        let rows: Vec<Prediction> = examples
            .iter()
            .zip(&probs)
            .zip(&preds)
            .map(|((e, p), bits)| Prediction {
                visit_id: e.visit_id.clone(),
                probs: p.clone(),
                predicted: bits
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b == 1)
                    .filter_map(|(i, _)| Medication::from_index(i))
                    .collect(),
                labels: e.labels.clone(),
            })
            .collect();
        io::write_jsonl(&dir.join(format!("{name}_predictions.jsonl")), &rows)?;

        if let TrainedModel::Cnn(params) = &model {
            let corr = correlation_report(params, &ds, config)?;
            io::write_json(&dir.join("correlation.json"), &corr)?;
            corr.ranking.write_csv(io::create(&dir.join("rank_comparison.csv"))?)?;
            io::write_text(&dir.join("rank_comparison.txt"), &corr.ranking.to_text_table())?;
        }
        Ok(SeedReport {
            seed,
            vocab_hash: info.vocab_hash,
            checkpoint_sha256: info.checkpoint_sha256,
            metrics,
        })
    })
}

// ---------------------------------------------------------------- report

/// Collects every seed's `<split>_metrics.json` into `manifest.json`, plus
/// `aggregate.csv` and `aggregate.txt` (mean and sample std per cell).
pub fn cmd_report(config: &RunConfig, split: Split) -> Result<RunManifest, CliError> {
    config.require_notes()?;
    let notes_sha256 = io::file_sha256(&config.notes)?;
    let mut per_seed = Vec::new();
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let info: ModelInfo = io::read_json(&dir.join(MODEL_INFO_FILE))?;
        if info.notes_sha256 != notes_sha256 || info.kind != config.model {
            return Err(CliError::Data(format!(
                "{} belongs to a different run (notes or model kind changed)",
                dir.display()
            )));
        }
        let metrics: MetricsReport = io::read_json(&dir.join(format!("{}_metrics.json", split.as_str())))?;
        per_seed.push(SeedReport {
            seed,
            vocab_hash: info.vocab_hash,
            checkpoint_sha256: info.checkpoint_sha256,
            metrics,
        });
    }
    let reports: Vec<&MetricsReport> = per_seed.iter().map(|r| &r.metrics).collect();
    let manifest = RunManifest {
        config_hash: config.hash(),
        notes_sha256,
        model: config.model.as_str().to_string(),
        split: split.as_str().to_string(),
        seeds: config.seeds.clone(),
        aggregate: aggregate(&reports),
        per_seed,
    };
    io::write_json(&config.output_dir.join(MANIFEST_FILE), &manifest)?;
    manifest.write_csv(io::create(&config.output_dir.join("aggregate.csv"))?)?;
    io::write_text(&config.output_dir.join("aggregate.txt"), &manifest.to_text_table())?;
    io::write_text(&config.output_dir.join("config.json"), &config.to_json())?;
    Ok(manifest)
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneSummary {
    pub points: usize,
    pub perplexity: f64,
    pub seed: u64,
    pub kl_start: f64,
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
    /// Indices into the test split of the projected notes.
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub seed: u64,
    pub queries: Vec<String>,
    pub ngram_notes: usize,
    pub tsne: TsneSummary,
}

/// Writes `neighbors.csv`, `filter_ngrams.csv`, `tsne.csv` and `tsne.json`
/// under `seed-<s>/analysis/`. Only trained CNN checkpoints are accepted.
pub fn cmd_analyze(config: &RunConfig, options: RunOptions) -> Result<Vec<AnalysisSummary>, CliError> {
    let corpus = load_corpus(config)?;
    for_each_seed(&config.seeds, options.jobs, |seed| {
        let (ds, info, model) = load_trained(config, &corpus, seed)?;
        let TrainedModel::Cnn(params) = model else {
            return Err(CliError::Data(format!(
                "seed {seed}: analysis needs a CNN checkpoint, found `{}`",
                info.kind.as_str()
            )));
        };
        if !info.trained || has_pristine_statistics(&params) {
            return Err(CliError::Data(format!("seed {seed}: checkpoint is untrained")));
        }
        let out = config.seed_dir(seed).join("analysis");
        let a = &config.analysis;

        let queries: Vec<String> = if a.neighbor_queries.is_empty() {
            Medication::ALL
                .iter()
                .map(|m| m.name().to_string())
                .filter(|w| ds.vocab.get(w).is_some())
                .collect()
        } else {
            a.neighbor_queries.clone()
        };
        let q: Vec<&str> = queries.iter().map(String::as_str).collect();
        neighbor_report(&q, &params.embedding, &ds.vocab)?.write_csv(io::create(&out.join("neighbors.csv"))?)?;

        let picked = sample_indices(ds.split.train.len(), a.ngram_max_notes, seed);
        let notes: Vec<&[usize]> = picked
            .iter()
            .map(|&i| {
                let e = &ds.split.train[i];
                &e.token_indices[..e.valid_len()]
            })
            .collect();
        filter_ngram_report(&params, &notes, &ds.vocab, a.top_ngrams)
            .write_csv(io::create(&out.join("filter_ngrams.csv"))?)?;

        let test_indices = sample_indices(ds.split.test.len(), a.tsne_max_points, a.tsne.seed);
        let tokens: Vec<&[usize]> = test_indices.iter().map(|&i| ds.split.test[i].token_indices.as_slice()).collect();
        let factors: Vec<Vec<f64>> = params.infer_all(&tokens, 256)?.into_iter().map(|t| t.factors).collect();
        let emb = tsne(&factors, &a.tsne)?;
        let ids: Vec<String> = test_indices.iter().map(|&i| ds.split.test[i].visit_id.clone()).collect();
        let labels: Vec<Vec<u8>> = test_indices.iter().map(|&i| ds.split.test[i].labels.clone()).collect();
        emb.write_csv(io::create(&out.join("tsne.csv"))?, &ids, &labels)?;
        let summary = TsneSummary {
            points: emb.coords.len(),
            perplexity: emb.perplexity,
            seed: emb.seed,
            kl_start: emb.kl_start,
            kl_after_exaggeration: emb.kl_after_exaggeration,
            kl_final: emb.kl_final,
            test_indices,
        };
        io::write_json(&out.join("tsne.json"), &summary)?;
        Ok(AnalysisSummary {
            seed,
            queries,
            ngram_notes: notes.len(),
            tsne: summary,
        })
    })
}
