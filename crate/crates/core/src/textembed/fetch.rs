use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FetchStats {
    pub requests: usize,
    pub retries: usize,
    pub cache_hits: usize,
}

/// Client for an OpenAI-compatible `/embeddings` endpoint with a content-addressed disk cache.
///
/// Empty texts map to the zero vector without a request.
#[derive(Debug, Clone)]
pub struct EmbeddingClient {
    pub endpoint: String,
    pub model: String,
    api_key: String,
    pub batch: usize,
    pub max_retries: u32,
    pub backoff: Duration,
    pub max_inflight: usize,
    pub cache_dir: PathBuf,
    pub timeout: Duration,
}

enum Attempt {
    Done(Vec<Vec<f64>>),
    Retry(String),
    Fatal(Error),
}

impl EmbeddingClient {
    pub fn new(endpoint: &str, model: &str, api_key: &str, cache_dir: &Path) -> Self {
        EmbeddingClient {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            batch: 64,
            max_retries: 5,
            backoff: Duration::from_millis(500),
            max_inflight: 4,
            cache_dir: cache_dir.to_path_buf(),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the API key from the environment variable `key_var`.
    pub fn from_env(endpoint: &str, model: &str, key_var: &str, cache_dir: &Path) -> Result<Self> {
        let key = std::env::var(key_var)
            .map_err(|_| Error::config("embed_api_key_env", format!("${key_var} is not set")))?;
        Ok(Self::new(endpoint, model, &key, cache_dir))
    }

    fn cache_key(&self, text: &str) -> String {
        crate::io::sha256_hex(format!("{}\n{}", self.model, text).as_bytes())
    }

    fn cache_path(&self, key: &str) -> PathBuf {
        self.cache_dir.join(format!("{key}.f32"))
    }

    fn read_cache(&self, key: &str) -> Option<Vec<f64>> {
        let bytes = fs::read(self.cache_path(key)).ok()?;
        if bytes.is_empty() || bytes.len() % 4 != 0 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        )
    }

    fn write_cache(&self, key: &str, v: &[f64]) -> Result<()> {
        let bytes: Vec<u8> = v.iter().flat_map(|x| (*x as f32).to_le_bytes()).collect();
        crate::io::write_atomic(&self.cache_path(key), &bytes)
    }

    /// One vector per text, in input order.
    pub fn fetch<S: AsRef<str>>(&self, texts: &[S]) -> Result<(EmbeddingTable, FetchStats)> {
        if self.batch == 0 {
            return Err(Error::config("embed_batch", "must be at least 1"));
        }
        let stats_requests = AtomicUsize::new(0);
        let stats_retries = AtomicUsize::new(0);
        let mut cache_hits = 0;

        let keys: Vec<String> = texts.iter().map(|t| self.cache_key(t.as_ref())).collect();
        let mut resolved: HashMap<String, Vec<f64>> = HashMap::new();
        // key -> text, for keys that still need a request
        let mut pending: BTreeMap<String, String> = BTreeMap::new();
        for (t, k) in texts.iter().zip(&keys) {
            let t = t.as_ref();
            if t.trim().is_empty() || resolved.contains_key(k) || pending.contains_key(k) {
                continue;
            }
            match self.read_cache(k) {
                Some(v) => {
                    cache_hits += 1;
                    resolved.insert(k.clone(), v);
                }
                None => {
                    pending.insert(k.clone(), t.to_string());
                }
            }
        }

        let jobs: Vec<Vec<(String, String)>> = pending
            .into_iter()
            .collect::<Vec<_>>()
            .chunks(self.batch)
            .map(<[_]>::to_vec)
            .collect();
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(String, Vec<f64>)>> = Mutex::new(Vec::new());
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let cache_lock = Mutex::new(());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(self.timeout))
            .build()
            .into();

        let workers = self.max_inflight.max(1).min(jobs.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if failure.lock().unwrap().is_some() {
                        return;
                    }
                    let j = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(j) else { return };
                    match self.run_job(&agent, job, &stats_requests, &stats_retries) {
                        Ok(vectors) => {
                            let _guard = cache_lock.lock().unwrap();
                            for ((key, _), v) in job.iter().zip(&vectors) {
                                if let Err(e) = self.write_cache(key, v) {
                                    *failure.lock().unwrap() = Some(e);
                                    return;
                                }
                            }
                            drop(_guard);
                            let mut res = results.lock().unwrap();
                            for ((key, _), v) in job.iter().zip(vectors) {
                                res.push((key.clone(), v));
                            }
                        }
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        for (k, v) in results.into_inner().unwrap() {
            // round through f32 so fresh and cached vectors agree bitwise
            resolved.insert(k, v.into_iter().map(|x| x as f32 as f64).collect());
        }

        let dim = match resolved.values().next() {
            Some(v) => v.len(),
            None => {
                return Err(Error::Network(
                    "no embeddings returned (all texts empty?)".into(),
                ))
            }
        };
        if let Some(v) = resolved.values().find(|v| v.len() != dim) {
            return Err(Error::Network(format!(
                "inconsistent embedding dimensions: {dim} and {}",
                v.len()
            )));
        }
        let mut m = Matrix::zeros(texts.len(), dim);
        for (i, k) in keys.iter().enumerate() {
            if let Some(v) = resolved.get(k) {
                m.row_mut(i).copy_from_slice(v);
            }
        }
        let stats = FetchStats {
            requests: stats_requests.into_inner(),
            retries: stats_retries.into_inner(),
            cache_hits,
        };
        Ok((EmbeddingTable::new(m)?, stats))
    }

    fn run_job(
        &self,
        agent: &ureq::Agent,
        job: &[(String, String)],
        requests: &AtomicUsize,
        retries: &AtomicUsize,
    ) -> Result<Vec<Vec<f64>>> {
        let inputs: Vec<&str> = job.iter().map(|(_, t)| t.as_str()).collect();
        let body = json!({ "model": self.model, "input": inputs });
        let mut attempt = 0u32;
        loop {
            requests.fetch_add(1, Ordering::SeqCst);
            let outcome = self.attempt(agent, &body, inputs.len());
            match outcome {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(why) => {
                    if attempt >= self.max_retries {
                        return Err(Error::Network(format!(
                            "giving up after {} retries: {why}",
                            self.max_retries
                        )));
                    }
                    log::warn!("embedding request failed ({why}), retrying");
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt));
                    attempt += 1;
                    retries.fetch_add(1, Ordering::SeqCst);
                }
            }
        }
    }

    fn attempt(&self, agent: &ureq::Agent, body: &Value, expected: usize) -> Attempt {
        let resp = match agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Attempt::Fatal(Error::Network(format!(
                    "authentication failed (HTTP {status})"
                )))
            }
            429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            _ => return Attempt::Fatal(Error::Network(format!("HTTP {status}"))),
        }
        let value: Value = match resp.into_body().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(format!("unreadable body: {e}")),
        };
        match parse_response(&value, expected) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

/// Extracts `data[*].embedding`, ordered by `data[*].index` when present.
fn parse_response(value: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let bad = |m: &str| Error::Network(format!("malformed response: {m}"));
    let data = value
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `data` array"))?;
    if data.len() != expected {
        return Err(bad(&format!("{} embeddings for {expected} inputs", data.len())));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, entry) in data.iter().enumerate() {
        let idx = entry
            .get("index")
            .and_then(Value::as_u64)
            .map_or(pos, |i| i as usize);
        let emb = entry
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `embedding`"))?;
        let v: Option<Vec<f64>> = emb.iter().map(Value::as_f64).collect();
        let v = v.ok_or_else(|| bad("non-numeric embedding value"))?;
        let slot = out.get_mut(idx).ok_or_else(|| bad("index out of range"))?;
        *slot = Some(v);
    }
    let vectors: Option<Vec<Vec<f64>>> = out.into_iter().collect();
    let vectors = vectors.ok_or_else(|| bad("duplicate index"))?;
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.len() != first.len()) {
            return Err(Error::Network(
                "inconsistent embedding dimensions in one response".into(),
            ));
        }
    }
    Ok(vectors)
}
