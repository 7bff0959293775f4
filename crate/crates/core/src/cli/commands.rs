//! The pipeline stages behind each subcommand, with their on-disk layout:
//!
//! ```text
//! <run_dir>/<name>/prepare/   dataset.json triplets.tsv stats.json manifest.json
//! <run_dir>/<name>/embed/     embeddings.lrde manifest.json
//! <run_dir>/<name>/train/<variant>-seed<k>/  model.lrdc train_log.jsonl metrics.json manifest.json
//! <run_dir>/<name>/analysis/  similarity.csv pairs.csv cases.json
//! <run_dir>/<name>/sweep/     cells.csv marginals.csv sweep.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Config, EmbeddingSource};
use super::manifest::{hash_inputs, RunManifest};
use super::pipeline::{embed, evaluate_split, prepare, train_variant, PreparedData};
use crate::analysis::{
    all_item_pairs, case_traces, relation_similarity, sweep, top_pairs, training_window_pairs, SweepResult,
};
use crate::corpus::{RelationVocab, SplitKind, Triplet};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_seeds, Metrics, MetricsReport, CSV_HEADER};
use crate::io::{read_json, sha256_hex, write_atomic, write_json};
use crate::model::{load_checkpoint, save_checkpoint, Model};
use crate::textembed::{read_binary, write_binary, EmbeddingTable};
use crate::trainer::{log_to_jsonl, Variant};

/// Settings that change what `prepare` produces.
pub const PREPARE_KEYS: &[&str] = &[
    "dataset",
    "interactions",
    "columns",
    "delimiter",
    "has_header",
    "item_text",
    "metadata",
    "cooccurrence",
    "kcore",
    "max_triplets_per_item",
    "eval_negatives",
    "data_seed",
    "max_len",
];

/// Settings that change what `embed` produces.
pub const EMBED_KEYS: &[&str] = &[
    "embedding_source",
    "embedding_file",
    "fallback_dim",
    "fallback_seed",
    "embed_endpoint",
    "embed_model",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(cfg: &Config) -> Self {
        RunLayout { root: cfg.run_path() }
    }

    pub fn prepare(&self) -> PathBuf {
        self.root.join("prepare")
    }

    pub fn embed(&self) -> PathBuf {
        self.root.join("embed")
    }

    pub fn train(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root.join("train").join(format!("{}-seed{seed}", variant.as_str()))
    }

    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }

    pub fn sweep(&self) -> PathBuf {
        self.root.join("sweep")
    }
}

pub const CHECKPOINT_FILE: &str = "model.lrdc";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
const DATASET_FILE: &str = "dataset.json";
const TRIPLETS_FILE: &str = "triplets.tsv";
const STATS_FILE: &str = "stats.json";
const EMBEDDINGS_FILE: &str = "embeddings.lrde";

fn write_triplets(path: &Path, triplets: &[Triplet]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').has_headers(false).from_writer(Vec::new());
    for t in triplets {
        w.serialize((t.head, t.tail, t.relation))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("triplet buffer: {e}")))?;
    write_atomic(path, &bytes)
}

fn read_triplets(path: &Path) -> Result<Vec<Triplet>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .from_path(path)?;
    r.deserialize()
        .map(|row| {
            let (head, tail, relation): (usize, usize, usize) = row?;
            Ok(Triplet { head, tail, relation })
        })
        .collect()
}

fn stage_dataset_hash(dir: &Path) -> Result<String> {
    let a = crate::io::file_sha256(&dir.join(DATASET_FILE))?;
    let b = crate::io::file_sha256(&dir.join(TRIPLETS_FILE))?;
    Ok(sha256_hex(format!("{a}{b}").as_bytes()))
}

pub fn load_prepared(dir: &Path) -> Result<PreparedData> {
    let mut data: PreparedData = read_json(&dir.join(DATASET_FILE))?;
    data.triplets = read_triplets(&dir.join(TRIPLETS_FILE))?;
    Ok(data)
}

/// Prepared data plus the hash identifying it.
pub struct Prepared {
    pub data: PreparedData,
    pub dataset_hash: String,
    pub status: StageStatus,
}

/// Runs `prepare` unless its outputs already match the current inputs and settings.
pub fn run_prepare(cfg: &Config) -> Result<Prepared> {
    let dir = RunLayout::new(cfg).prepare();
    let inputs = hash_inputs(&[&cfg.interactions, &cfg.item_text, &cfg.metadata, &cfg.cooccurrence])?;
    let mut manifest = RunManifest::new("prepare", cfg, inputs, PREPARE_KEYS, &[]);
    if RunManifest::is_current(&dir, &manifest.stage_key) {
        log::info!("prepare: {} is up to date", dir.display());
        return Ok(Prepared {
            data: load_prepared(&dir)?,
            dataset_hash: stage_dataset_hash(&dir)?,
            status: StageStatus::UpToDate,
        });
    }
    let data = prepare(cfg)?;
    log::info!("prepare: {:?}", data.stats);
    write_json(&dir.join(DATASET_FILE), &data)?;
    write_triplets(&dir.join(TRIPLETS_FILE), &data.triplets)?;
    write_json(&dir.join(STATS_FILE), &data.stats)?;
    for f in [DATASET_FILE, TRIPLETS_FILE, STATS_FILE] {
        manifest.record_output(&dir, f)?;
    }
    let dataset_hash = stage_dataset_hash(&dir)?;
    manifest.dataset_hash = Some(dataset_hash.clone());
    manifest.write(&dir)?;
    Ok(Prepared {
        data,
        dataset_hash,
        status: StageStatus::Ran,
    })
}

pub struct Embedded {
    pub table: EmbeddingTable,
    pub hash: String,
    pub status: StageStatus,
}

/// Runs `embed` for prepared data, reusing a current cache.
pub fn run_embed(cfg: &Config, prepared: &Prepared) -> Result<Embedded> {
    let layout = RunLayout::new(cfg);
    let dir = layout.embed();
    let file_inputs: Vec<&str> = match cfg.embedding_source()? {
        EmbeddingSource::File => vec![cfg.embedding_file.as_str()],
        _ => vec![],
    };
    let inputs = hash_inputs(&file_inputs)?;
    let mut manifest = RunManifest::new("embed", cfg, inputs, EMBED_KEYS, &[&prepared.dataset_hash]);
    manifest.dataset_hash = Some(prepared.dataset_hash.clone());
    let path = dir.join(EMBEDDINGS_FILE);
    if RunManifest::is_current(&dir, &manifest.stage_key) {
        log::info!("embed: {} is up to date", dir.display());
        return Ok(Embedded {
            table: read_binary(&path)?,
            hash: crate::io::file_sha256(&path)?,
            status: StageStatus::UpToDate,
        });
    }
    let table = embed(cfg, &prepared.data, &layout.root.join("embed_cache"))?;
    write_binary(&path, &table)?;
    manifest.record_output(&dir, EMBEDDINGS_FILE)?;
    manifest.write(&dir)?;
    // reload so every run trains on exactly the bytes on disk
    Ok(Embedded {
        table: read_binary(&path)?,
        hash: crate::io::file_sha256(&path)?,
        status: StageStatus::Ran,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub valid: Metrics,
    pub test: Metrics,
}

/// Trains one `(variant, seed)` and writes checkpoint, log, metrics and manifest.
pub fn run_train(cfg: &Config, variant: Variant, seed: u64) -> Result<TrainMetrics> {
    let prepared = run_prepare(cfg)?;
    let text = run_embed(cfg, &prepared)?;
    train_prepared(cfg, &prepared, &text, variant, seed)
}

pub fn train_prepared(cfg: &Config, prepared: &Prepared, text: &Embedded, variant: Variant, seed: u64) -> Result<TrainMetrics> {
    let dir = RunLayout::new(cfg).train(variant, seed);
    let data = &prepared.data;
    let outcome = match train_variant(cfg, data, &text.table, variant, seed) {
        Ok(o) => o,
        Err(Error::Diverged { epoch, last_good }) => {
            let base = cfg.base_model_config(data.n_users(), data.n_items(), text.table.dim(), data.relations.len())?;
            let mc = cfg.train_config(variant, seed).model_config(&base);
            let model = Model::from_parts(mc, (*last_good).clone())?;
            let path = dir.join("model.diverged.lrdc");
            save_checkpoint(&model, &path)?;
            log::error!("last good parameters saved to {}", path.display());
            return Err(Error::Diverged { epoch, last_good });
        }
        Err(e) => return Err(e),
    };
    let metrics = TrainMetrics {
        dataset: data.dataset.clone(),
        variant: variant.as_str().to_string(),
        seed,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.log.len(),
        valid: outcome.best_valid,
        test: evaluate_split(&outcome.model, data, SplitKind::Test)?,
    };
    save_checkpoint(&outcome.model, &dir.join(CHECKPOINT_FILE))?;
    write_atomic(&dir.join(TRAIN_LOG_FILE), log_to_jsonl(&outcome.log)?.as_bytes())?;
    write_json(&dir.join(METRICS_FILE), &metrics)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("embeddings".to_string(), text.hash.clone());
    let seed_text = seed.to_string();
    let extra = [prepared.dataset_hash.as_str(), text.hash.as_str(), variant.as_str(), seed_text.as_str()];
    let mut manifest = RunManifest::new("train", cfg, inputs, TRAIN_KEYS, &extra);
    manifest.dataset_hash = Some(prepared.dataset_hash.clone());
    manifest.seed = Some(seed);
    for f in [CHECKPOINT_FILE, TRAIN_LOG_FILE, METRICS_FILE] {
        manifest.record_output(&dir, f)?;
    }
    manifest.write(&dir)?;
    log::info!(
        "{} seed {seed}: best epoch {}, test ndcg@5 {:.4}",
        variant.as_str(),
        metrics.best_epoch,
        metrics.test.ndcg5
    );
    Ok(metrics)
}

/// Settings that change what `train` produces.
pub const TRAIN_KEYS: &[&str] = &[
    "d",
    "agg",
    "max_len",
    "lr",
    "l2",
    "batch_size",
    "gamma",
    "lambda",
    "alpha",
    "num_latent",
    "patience",
    "max_epochs",
    "corrupt_both",
    "freeze_projection",
    "lrd_pairs_per_example",
    "embedding_source",
    "fallback_dim",
];

/// Trains one variant for every seed in `seeds` and writes a seed report.
pub fn run_train_seeds(cfg: &Config, variant: Variant, seeds: &[u64]) -> Result<MetricsReport> {
    let prepared = run_prepare(cfg)?;
    let text = run_embed(cfg, &prepared)?;
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &s in seeds {
        per_seed.push(train_prepared(cfg, &prepared, &text, variant, s)?.test);
    }
    let report = aggregate_seeds(&prepared.data.dataset, variant.as_str(), "test", seeds, &per_seed)?;
    let dir = RunLayout::new(cfg).root.join("train");
    write_json(&dir.join(format!("{}-report.json", variant.as_str())), &report)?;
    write_atomic(
        &dir.join(format!("{}-report.csv", variant.as_str())),
        format!("{CSV_HEADER}\n{}\n", report.csv_row()).as_bytes(),
    )?;
    Ok(report)
}

/// Evaluates a checkpoint on one split and writes `eval_<split>.json` beside it.
pub fn run_evaluate(cfg: &Config, checkpoint: &Path, kind: SplitKind) -> Result<Metrics> {
    let prepared = run_prepare(cfg)?;
    let model = load_checkpoint(checkpoint)?;
    let metrics = evaluate_split(&model, &prepared.data, kind)?;
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    write_json(&dir.join(format!("eval_{}.json", kind.as_str())), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeWhat {
    Sim,
    Pairs,
    Case,
    Sweep,
}

impl std::str::FromStr for AnalyzeWhat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(AnalyzeWhat::Sim),
            "pairs" => Ok(AnalyzeWhat::Pairs),
            "case" => Ok(AnalyzeWhat::Case),
            "sweep" => Ok(AnalyzeWhat::Sweep),
            other => Err(Error::config("what", format!("unknown analysis `{other}` (sim|pairs|case|sweep)"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub relation: Option<usize>,
    pub top: usize,
    /// Raw user IDs; empty traces the first `top` test users.
    pub users: Vec<String>,
    pub full_pool: bool,
}

fn relation_names(data: &PreparedData, model: &Model) -> Vec<String> {
    let vocab = RelationVocab::new(data.relations.clone(), model.config.num_latent);
    (0..vocab.len()).map(|r| vocab.name(r)).collect()
}

fn snippet(text: &str) -> String {
    text.chars().take(80).collect()
}

#[derive(Serialize)]
struct CaseRow<'a> {
    user: &'a str,
    target: &'a str,
    target_text: String,
    target_rank: usize,
    history: Vec<CaseItem<'a>>,
}

#[derive(Serialize)]
struct CaseItem<'a> {
    item: &'a str,
    text: String,
    relation: String,
    scores: BTreeMap<String, f64>,
}

/// Writes the requested analysis outputs and returns their paths.
pub fn run_analyze(cfg: &Config, checkpoint: &Path, what: AnalyzeWhat, opts: &AnalyzeOptions) -> Result<Vec<PathBuf>> {
    if what == AnalyzeWhat::Sweep {
        run_sweep(cfg)?;
        let dir = RunLayout::new(cfg).sweep();
        return Ok(vec![dir.join("cells.csv"), dir.join("marginals.csv")]);
    }
    let prepared = run_prepare(cfg)?;
    let data = &prepared.data;
    let model = load_checkpoint(checkpoint)?;
    super::pipeline::check_compatible(&model, data)?;
    let names = relation_names(data, &model);
    let dir = RunLayout::new(cfg).analysis();
    match what {
        AnalyzeWhat::Sim => {
            let sim = relation_similarity(&model.params)?;
            let path = dir.join("similarity.csv");
            write_atomic(&path, sim.to_csv(&names).as_bytes())?;
            Ok(vec![path])
        }
        AnalyzeWhat::Pairs => {
            let pool = if opts.full_pool {
                all_item_pairs(data.n_items())?
            } else {
                training_window_pairs(&data.split, model.config.max_len)?
            };
            let relations: Vec<usize> = match opts.relation {
                Some(r) => vec![r],
                None => (0..names.len()).collect(),
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["relation", "rank", "item_i", "item_j", "score", "text_i", "text_j"])?;
            for r in relations {
                let ex = top_pairs(&model, r, &pool, opts.top)?;
                for (k, p) in ex.pairs.iter().enumerate() {
                    w.write_record([
                        names[r].clone(),
                        (k + 1).to_string(),
                        data.items.raw(p.item_i).to_string(),
                        data.items.raw(p.item_j).to_string(),
                        format!("{:.6}", p.score),
                        snippet(&data.item_text[p.item_i]),
                        snippet(&data.item_text[p.item_j]),
                    ])?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
            let path = dir.join("pairs.csv");
            write_atomic(&path, &bytes)?;
            Ok(vec![path])
        }
        AnalyzeWhat::Case => {
            let cases: Vec<_> = if opts.users.is_empty() {
                data.test.cases.iter().take(opts.top).cloned().collect()
            } else {
                opts.users
                    .iter()
                    .map(|raw| {
                        let u = data
                            .users
                            .get(raw)
                            .ok_or_else(|| Error::config("user", format!("unknown user `{raw}`")))?;
                        data.test
                            .cases
                            .iter()
                            .find(|c| c.user == u)
                            .cloned()
                            .ok_or_else(|| Error::Data(format!("user `{raw}` has no test case")))
                    })
                    .collect::<Result<_>>()?
            };
            let traces = case_traces(&model, &cases)?;
            let rows: Vec<CaseRow> = traces
                .iter()
                .map(|t| CaseRow {
                    user: data.users.raw(t.user),
                    target: data.items.raw(t.target),
                    target_text: snippet(&data.item_text[t.target]),
                    target_rank: t.target_rank,
                    history: t
                        .history
                        .iter()
                        .map(|h| CaseItem {
                            item: data.items.raw(h.item),
                            text: snippet(&data.item_text[h.item]),
                            relation: names[h.argmax].clone(),
                            scores: names.iter().cloned().zip(h.scores.iter().copied()).collect(),
                        })
                        .collect(),
                })
                .collect();
            let path = dir.join("cases.json");
            write_json(&path, &rows)?;
            Ok(vec![path])
        }
        AnalyzeWhat::Sweep => unreachable!("handled above"),
    }
}

/// Trains the full variant over the `num_latent x lambda` grid and every seed,
/// scoring each cell by test nDCG@5.
pub fn run_sweep(cfg: &Config) -> Result<SweepResult> {
    let prepared = run_prepare(cfg)?;
    let text = run_embed(cfg, &prepared)?;
    let (grid_nl, grid_lambda) = cfg.sweep_grid()?;
    let seeds = cfg.seed_list()?;
    let result = sweep(&grid_nl, &grid_lambda, &seeds, |nl, lambda, seed| {
        let mut c = cfg.clone();
        c.num_latent = nl;
        c.lambda = lambda;
        c.validate()?;
        let out = train_variant(&c, &prepared.data, &text.table, Variant::Full, seed)?;
        Ok(evaluate_split(&out.model, &prepared.data, SplitKind::Test)?.ndcg5)
    })?;
    let dir = RunLayout::new(cfg).sweep();
    write_atomic(&dir.join("cells.csv"), result.cells_csv().as_bytes())?;
    write_atomic(&dir.join("marginals.csv"), result.marginals_csv().as_bytes())?;
    write_json(&dir.join("sweep.json"), &result)?;
    Ok(result)
}
