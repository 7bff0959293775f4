//! Flat `key = value` run configuration.
//!
//! Values are typed by the default they replace. Lines starting with `#` are
//! comments and values may be wrapped in double quotes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Aggregation, ModelConfig, PosteriorInput};
use crate::trainer::{apply_ablation, TrainConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Fallback,
    File,
    Api,
}

impl std::str::FromStr for EmbeddingSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fallback" => Ok(EmbeddingSource::Fallback),
            "file" => Ok(EmbeddingSource::File),
            "api" => Ok(EmbeddingSource::Api),
            other => Err(Error::config("embedding_source", format!("unknown source `{other}` (fallback|file|api)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: String,
    pub interactions: String,
    /// Column order of the interaction file, e.g. `user,item,rating,timestamp`.
    pub columns: String,
    /// `tab`, `comma`, `space` or a single character.
    pub delimiter: String,
    pub has_header: bool,
    pub item_text: String,
    pub metadata: String,
    pub cooccurrence: String,
    pub kcore: usize,
    /// 0 leaves attribute neighbourhoods uncapped.
    pub max_triplets_per_item: usize,
    pub eval_negatives: usize,
    pub data_seed: u64,

    pub embedding_source: String,
    pub embedding_file: String,
    pub fallback_dim: usize,
    pub fallback_seed: u64,
    pub embed_endpoint: String,
    pub embed_model: String,
    pub embed_api_key_env: String,
    pub embed_batch: usize,
    pub embed_cache_dir: String,

    pub d: usize,
    pub agg: String,
    pub max_len: usize,

    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub num_latent: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub variant: String,
    pub corrupt_both: bool,
    pub freeze_projection: bool,
    /// 0 uses every history item of an example.
    pub lrd_pairs_per_example: usize,

    pub run_dir: String,
    pub name: String,
    pub seeds: String,
    pub sweep_num_latent: String,
    pub sweep_lambda: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: "ml-100k".into(),
            interactions: "data/ml-100k/interactions.tsv".into(),
            columns: "user,item,timestamp".into(),
            delimiter: "tab".into(),
            has_header: false,
            item_text: "data/ml-100k/item_text.tsv".into(),
            metadata: "data/ml-100k/metadata.tsv".into(),
            cooccurrence: String::new(),
            kcore: 5,
            max_triplets_per_item: 0,
            eval_negatives: 99,
            data_seed: 0,
            embedding_source: "fallback".into(),
            embedding_file: String::new(),
            fallback_dim: 256,
            fallback_seed: 0,
            embed_endpoint: "https://api.openai.com/v1/embeddings".into(),
            embed_model: "text-embedding-3-small".into(),
            embed_api_key_env: "OPENAI_API_KEY".into(),
            embed_batch: 64,
            embed_cache_dir: String::new(),
            d: 64,
            agg: "mean".into(),
            max_len: 20,
            lr: 1e-3,
            l2: 0.0,
            batch_size: 256,
            gamma: 1.0,
            lambda: 1.0,
            alpha: 0.1,
            num_latent: 5,
            patience: 10,
            max_epochs: 200,
            seed: 1,
            variant: "full".into(),
            corrupt_both: false,
            freeze_projection: false,
            lrd_pairs_per_example: 0,
            run_dir: "runs".into(),
            name: "default".into(),
            seeds: "1,2,3,4,5".into(),
            sweep_num_latent: "5,6,7,8,9,10".into(),
            sweep_lambda: "0.1,1,5,10".into(),
        }
    }
}

fn typed(key: &str, raw: &str, like: &Value) -> Result<Value> {
    let bad = |what: &str| Error::config(key, format!("expected {what}, got `{raw}`"));
    Ok(match like {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("true or false"))?),
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().map_err(|_| bad("a non-negative integer"))?),
        Value::Number(_) => {
            let f: f64 = raw.parse().map_err(|_| bad("a number"))?;
            if !f.is_finite() {
                return Err(bad("a finite number"));
            }
            Value::from(f)
        }
        _ => Value::String(raw.to_string()),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::config(key, format!("bad list entry `{s}`"))))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(items)
}

/// Parses `key = value` lines into pairs, keeping line numbers for errors.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: "expected `key = value`".into(),
        })?;
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        out.push((k.trim().to_string(), v.to_string()));
    }
    Ok(out)
}

impl Config {
    /// Defaults, then `pairs` in order; later pairs win.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Config::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut map = match serde_json::to_value(&*self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serialises to an object"),
        };
        let like = map
            .get(key)
            .ok_or_else(|| Error::config(key, "unknown key"))?;
        let v = typed(key, raw.trim(), like)?;
        map.insert(key.to_string(), v);
        *self = serde_json::from_value(Value::Object(map)).map_err(|e| Error::config(key, e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kcore", self.kcore),
            ("eval_negatives", self.eval_negatives),
            ("fallback_dim", self.fallback_dim),
            ("embed_batch", self.embed_batch),
            ("d", self.d),
            ("max_len", self.max_len),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty single path component"));
        }
        self.delimiter_char()?;
        self.embedding_source()?;
        self.aggregation()?;
        self.variant()?;
        self.seed_list()?;
        self.sweep_grid()?;
        self.base_train_config().validate()
    }

    pub fn delimiter_char(&self) -> Result<char> {
        match self.delimiter.as_str() {
            "tab" | "\\t" => Ok('\t'),
            "comma" => Ok(','),
            "space" => Ok(' '),
            s if s.chars().count() == 1 => Ok(s.chars().next().unwrap()),
            other => Err(Error::config("delimiter", format!("unsupported delimiter `{other}`"))),
        }
    }

    pub fn embedding_source(&self) -> Result<EmbeddingSource> {
        self.embedding_source.parse()
    }

    pub fn aggregation(&self) -> Result<Aggregation> {
        self.agg.parse().map_err(|e: String| Error::config("agg", e))
    }

    pub fn variant(&self) -> Result<Variant> {
        self.variant.parse()
    }

    pub fn seed_list(&self) -> Result<Vec<u64>> {
        parse_list("seeds", &self.seeds)
    }

    pub fn sweep_grid(&self) -> Result<(Vec<usize>, Vec<f64>)> {
        Ok((
            parse_list("sweep_num_latent", &self.sweep_num_latent)?,
            parse_list("sweep_lambda", &self.sweep_lambda)?,
        ))
    }

    /// Training settings before the ablation variant is applied.
    pub fn base_train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            l2: self.l2,
            batch_size: self.batch_size,
            gamma: self.gamma,
            lambda: self.lambda,
            alpha: self.alpha,
            num_latent: self.num_latent,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            posterior_input: PosteriorInput::Text,
            corrupt_both: self.corrupt_both,
            freeze_projection: self.freeze_projection,
            lrd_pairs_per_example: (self.lrd_pairs_per_example > 0).then_some(self.lrd_pairs_per_example),
        }
    }

    pub fn train_config(&self, variant: Variant, seed: u64) -> TrainConfig {
        let mut c = apply_ablation(&self.base_train_config(), variant);
        c.seed = seed;
        c
    }

    /// Model shape without the per-run latent count and classifier input.
    pub fn base_model_config(&self, n_users: usize, n_items: usize, d_text: usize, num_predefined: usize) -> Result<ModelConfig> {
        Ok(ModelConfig {
            n_users,
            n_items,
            d: self.d,
            d_text,
            num_predefined,
            num_latent: self.num_latent,
            agg: self.aggregation()?,
            posterior_input: PosteriorInput::Text,
            max_len: self.max_len,
        })
    }

    pub fn run_path(&self) -> PathBuf {
        Path::new(&self.run_dir).join(&self.name)
    }

    /// Every key with its value rendered as text, for manifests.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m
                .into_iter()
                .map(|(k, v)| {
                    let s = match v {
                        Value::String(s) => s,
                        other => other.to_string(),
                    };
                    (k, s)
                })
                .collect(),
            _ => BTreeMap::new(),
        }
    }
}

/// Reads a config file, then applies `overrides` (flags win over the file).
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Config> {
    let mut pairs = Vec::new();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        pairs = parse_pairs(&text, p)?;
    }
    pairs.extend(overrides.iter().cloned());
    Config::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
}
