//! In-process pipeline stages shared by the subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Config, EmbeddingSource};
use crate::corpus::{
    build_attribute_triplets, build_cooccurrence_triplets, build_sequences, kcore_filter, leave_one_out_split,
    load_cooccurrence, load_interactions, load_item_text, load_metadata, ColumnSpec, DatasetSplit, DatasetStats, IdMap,
    SplitKind, Triplet,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, prepare_eval_set, EvalSet, Metrics};
use crate::model::Model;
use crate::textembed::{load_embedding_file, EmbeddingClient, EmbeddingTable, FallbackEncoder};
use crate::trainer::{train, TrainData, TrainOutcome, Variant};

/// Everything `prepare` produces: split, relation triplets and frozen evaluation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub dataset: String,
    pub users: IdMap,
    pub items: IdMap,
    pub split: DatasetSplit,
    /// Predefined relation names in ID order.
    pub relations: Vec<String>,
    #[serde(skip)]
    pub triplets: Vec<Triplet>,
    pub item_text: Vec<String>,
    pub valid: EvalSet,
    pub test: EvalSet,
    pub stats: DatasetStats,
}

impl PreparedData {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn eval_set(&self, kind: SplitKind) -> &EvalSet {
        match kind {
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }
}

fn optional(path: &str) -> Option<&Path> {
    (!path.trim().is_empty()).then(|| Path::new(path))
}

/// Loads, filters and splits the interactions and builds every predefined relation.
///
/// Attribute relations come first in name order, followed by co-occurrence
/// relations in name order.
pub fn prepare(cfg: &Config) -> Result<PreparedData> {
    let spec = ColumnSpec::from_order(&cfg.columns, cfg.delimiter_char()?, cfg.has_header)?;
    let raw = load_interactions(Path::new(&cfg.interactions), &spec)?;
    let data = kcore_filter(&raw, cfg.kcore)?;
    let split = leave_one_out_split(&build_sequences(&data));
    if split.excluded > 0 {
        log::warn!("{} sequences shorter than 3 items excluded", split.excluded);
    }
    if split.users.is_empty() {
        return Err(Error::Data("no user has three or more interactions".into()));
    }
    let cap = (cfg.max_triplets_per_item > 0).then_some(cfg.max_triplets_per_item);

    let mut relations = Vec::new();
    let mut triplets = Vec::new();
    if let Some(path) = optional(&cfg.metadata) {
        let mut by_attr: BTreeMap<String, BTreeMap<usize, Vec<String>>> = BTreeMap::new();
        for row in load_metadata(path)? {
            if let Some(item) = data.items.get(&row.item) {
                by_attr.entry(row.attribute).or_default().entry(item).or_default().push(row.value);
            }
        }
        for (name, attrs) in by_attr {
            let r = relations.len();
            triplets.extend(build_attribute_triplets(&attrs, r, cap));
            relations.push(name);
        }
    }
    if let Some(path) = optional(&cfg.cooccurrence) {
        let mut by_rel: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for row in load_cooccurrence(path)? {
            by_rel.entry(row.relation).or_default().push((row.head, row.tail));
        }
        for (name, pairs) in by_rel {
            let r = relations.len();
            let (t, dropped) = build_cooccurrence_triplets(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())), &data.items, r);
            if dropped > 0 {
                log::info!("{name}: dropped {dropped} pairs outside the filtered vocabulary");
            }
            triplets.extend(t);
            relations.push(name);
        }
    }
    if relations.is_empty() {
        return Err(Error::Data("no predefined relations (set `metadata` or `cooccurrence`)".into()));
    }

    let item_text = match optional(&cfg.item_text) {
        Some(path) => load_item_text(path, &data.items)?,
        None => vec![String::new(); data.n_items()],
    };
    let n_items = data.n_items();
    let valid = prepare_eval_set(&split, SplitKind::Valid, n_items, cfg.eval_negatives, cfg.max_len, cfg.data_seed)?;
    let test = prepare_eval_set(&split, SplitKind::Test, n_items, cfg.eval_negatives, cfg.max_len, cfg.data_seed)?;
    let stats = DatasetStats::compute(data.n_users(), n_items, data.records.len(), relations.len(), triplets.len());
    Ok(PreparedData {
        dataset: cfg.dataset.clone(),
        users: data.users,
        items: data.items,
        split,
        relations,
        triplets,
        item_text,
        valid,
        test,
        stats,
    })
}

/// Text embeddings for every item, in item-index order.
pub fn embed(cfg: &Config, data: &PreparedData, cache_dir: &Path) -> Result<EmbeddingTable> {
    match cfg.embedding_source()? {
        EmbeddingSource::Fallback => Ok(FallbackEncoder::new(cfg.fallback_dim, cfg.fallback_seed).encode_all(&data.item_text)),
        EmbeddingSource::File => {
            let path = optional(&cfg.embedding_file)
                .ok_or_else(|| Error::config("embedding_file", "required when embedding_source = file"))?;
            load_embedding_file(path, &data.items)
        }
        EmbeddingSource::Api => {
            let dir = optional(&cfg.embed_cache_dir).unwrap_or(cache_dir);
            let mut client = EmbeddingClient::from_env(&cfg.embed_endpoint, &cfg.embed_model, &cfg.embed_api_key_env, dir)?;
            client.batch = cfg.embed_batch;
            let (table, stats) = client.fetch(&data.item_text)?;
            log::info!("embedding fetch: {stats:?}");
            Ok(table)
        }
    }
}

/// Trains one variant with one seed.
pub fn train_variant(cfg: &Config, data: &PreparedData, text: &EmbeddingTable, variant: Variant, seed: u64) -> Result<TrainOutcome> {
    let base = cfg.base_model_config(data.n_users(), data.n_items(), text.dim(), data.relations.len())?;
    let tc = cfg.train_config(variant, seed);
    let td = TrainData {
        split: &data.split,
        triplets: &data.triplets,
        text: Some(text),
        valid: &data.valid,
    };
    train(&base, &tc, &td)
}

pub fn evaluate_split(model: &Model, data: &PreparedData, kind: SplitKind) -> Result<Metrics> {
    check_compatible(model, data)?;
    evaluate(model, data.eval_set(kind))
}

pub fn check_compatible(model: &Model, data: &PreparedData) -> Result<()> {
    let c = &model.config;
    if c.n_users != data.n_users() || c.n_items != data.n_items() || c.num_predefined != data.relations.len() {
        return Err(Error::Shape(format!(
            "checkpoint is for {} users, {} items, {} predefined relations; data has {}, {}, {}",
            c.n_users,
            c.n_items,
            c.num_predefined,
            data.n_users(),
            data.n_items(),
            data.relations.len()
        )));
    }
    Ok(())
}
