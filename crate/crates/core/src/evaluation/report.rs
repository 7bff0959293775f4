use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::error::{Error, Result};

/// Per-seed metrics with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub variant: String,
    pub split: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Metrics>,
    pub mean: Metrics,
    pub std: Metrics,
}

pub const CSV_HEADER: &str = "dataset,variant,split,n_seeds,hr5,hr10,ndcg5,ndcg10,hr5_std,hr10_std,ndcg5_std,ndcg10_std";

pub fn aggregate_seeds(dataset: &str, variant: &str, split: &str, seeds: &[u64], per_seed: &[Metrics]) -> Result<MetricsReport> {
    if seeds.len() != per_seed.len() || seeds.is_empty() {
        return Err(Error::Data(format!(
            "{} seeds but {} metric sets",
            seeds.len(),
            per_seed.len()
        )));
    }
    let n = per_seed.len() as f64;
    let mut mean = [0.0; 4];
    for m in per_seed {
        for (a, v) in mean.iter_mut().zip(m.as_array()) {
            *a += v / n;
        }
    }
    let mut var = [0.0; 4];
    if per_seed.len() > 1 {
        for m in per_seed {
            for ((a, v), mu) in var.iter_mut().zip(m.as_array()).zip(mean) {
                *a += (v - mu) * (v - mu) / (n - 1.0);
            }
        }
    }
    Ok(MetricsReport {
        dataset: dataset.to_string(),
        variant: variant.to_string(),
        split: split.to_string(),
        seeds: seeds.to_vec(),
        per_seed: per_seed.to_vec(),
        mean: Metrics::from_array(mean),
        std: Metrics::from_array(var.map(f64::sqrt)),
    })
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        let m = self.mean.as_array();
        let s = self.std.as_array();
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.dataset,
            self.variant,
            self.split,
            self.seeds.len(),
            m[0],
            m[1],
            m[2],
            m[3],
            s[0],
            s[1],
            s[2],
            s[3]
        )
    }
}
