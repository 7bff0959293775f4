use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(num_latent, lambda)` grid cell averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub num_latent: usize,
    pub lambda: f64,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    /// `None` when any seed failed.
    pub mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    /// Mean over successful cells sharing each `num_latent`.
    pub by_num_latent: Vec<(usize, Option<f64>)>,
    /// Mean over successful cells sharing each `lambda`.
    pub by_lambda: Vec<(f64, Option<f64>)>,
}

pub const SWEEP_CSV_HEADER: &str = "num_latent,lambda,n_seeds,ndcg5_mean,status";

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Runs `run(num_latent, lambda, seed)` for every grid cell and seed. The
/// closure returns the metric to average. A failing cell is recorded and the
/// sweep moves on.
pub fn sweep(
    num_latent: &[usize],
    lambda: &[f64],
    seeds: &[u64],
    mut run: impl FnMut(usize, f64, u64) -> Result<f64>,
) -> Result<SweepResult> {
    if num_latent.is_empty() || lambda.is_empty() || seeds.is_empty() {
        return Err(Error::config("sweep", "grid and seed list must be non-empty"));
    }
    let mut cells = Vec::with_capacity(num_latent.len() * lambda.len());
    for &nl in num_latent {
        for &lam in lambda {
            let mut per_seed = Vec::with_capacity(seeds.len());
            let mut error = None;
            for &seed in seeds {
                match run(nl, lam, seed) {
                    Ok(v) => per_seed.push(v),
                    Err(e) => {
                        log::warn!("sweep cell num_latent={nl} lambda={lam} seed={seed} failed: {e}");
                        error = Some(format!("seed {seed}: {e}"));
                        break;
                    }
                }
            }
            let m = if error.is_none() { mean(per_seed.iter().copied()) } else { None };
            cells.push(SweepCell {
                num_latent: nl,
                lambda: lam,
                seeds: seeds.to_vec(),
                per_seed,
                mean: m,
                error,
            });
        }
    }
    let by_num_latent = num_latent
        .iter()
        .map(|&nl| (nl, mean(cells.iter().filter(|c| c.num_latent == nl).filter_map(|c| c.mean))))
        .collect();
    let by_lambda = lambda
        .iter()
        .map(|&l| (l, mean(cells.iter().filter(|c| c.lambda == l).filter_map(|c| c.mean))))
        .collect();
    Ok(SweepResult {
        cells,
        by_num_latent,
        by_lambda,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl SweepResult {
    pub fn cells_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for c in &self.cells {
            let status = match &c.error {
                None => "ok".to_string(),
                Some(e) => format!("\"failed: {}\"", e.replace('"', "'")),
            };
            out.push_str(&format!("{},{},{},{},{}\n", c.num_latent, c.lambda, c.per_seed.len(), fmt_opt(c.mean), status));
        }
        out
    }

    /// The two marginal curves as `axis,value,ndcg5_mean` rows.
    pub fn marginals_csv(&self) -> String {
        let mut out = String::from("axis,value,ndcg5_mean\n");
        for (nl, m) in &self.by_num_latent {
            out.push_str(&format!("num_latent,{nl},{}\n", fmt_opt(*m)));
        }
        for (l, m) in &self.by_lambda {
            out.push_str(&format!("lambda,{l},{}\n", fmt_opt(*m)));
        }
        out
    }
}
