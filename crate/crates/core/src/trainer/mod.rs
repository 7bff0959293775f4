//! Joint optimisation with Adam and early stopping on validation nDCG@5.

mod adam;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, OptimState, BETA1, BETA2, EPSILON};

use crate::corpus::{seeded_rng, DatasetSplit, Triplet};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalSet, Metrics};
use crate::model::{Model, ModelConfig, ParamStore, PosteriorInput};
use crate::objective::{joint_loss_and_grad, sample_batch, Batch, LossBreakdown, LossWeights, SamplingConfig, TrainSequences};
use crate::textembed::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoLlm,
    NoKge,
    NoLrd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoLlm, Variant::NoKge, Variant::NoLrd];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLlm => "no_llm",
            Variant::NoKge => "no_kge",
            Variant::NoLrd => "no_lrd",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}` (full|no_llm|no_kge|no_lrd)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
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
    pub posterior_input: PosteriorInput,
    pub corrupt_both: bool,
    pub freeze_projection: bool,
    /// Relation-discovery pairs drawn per example (`None` uses the whole window).
    pub lrd_pairs_per_example: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
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
            posterior_input: PosteriorInput::Text,
            corrupt_both: false,
            freeze_projection: false,
            lrd_pairs_per_example: None,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            lambda: self.lambda,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("lr", self.lr), ("l2", self.l2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be a finite non-negative number, got {v}")));
            }
        }
        if self.lr == 0.0 {
            return Err(Error::config("lr", "must be positive"));
        }
        self.weights().validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if self.lrd_pairs_per_example == Some(0) {
            return Err(Error::config("lrd_pairs_per_example", "must be at least 1"));
        }
        Ok(())
    }

    /// Model shape for this run: the base config with this run's latent count and posterior input.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            num_latent: self.num_latent,
            posterior_input: self.posterior_input,
            ..base.clone()
        }
    }
}

/// Ablation switches: `no_llm` feeds ID embeddings to the classifier, `no_kge`
/// drops the KGE term, `no_lrd` drops the discovery term and all latent relations.
pub fn apply_ablation(config: &TrainConfig, variant: Variant) -> TrainConfig {
    let mut c = config.clone();
    match variant {
        Variant::Full => {}
        Variant::NoLlm => c.posterior_input = PosteriorInput::Id,
        Variant::NoKge => c.gamma = 0.0,
        Variant::NoLrd => {
            c.lambda = 0.0;
            c.num_latent = 0;
        }
    }
    c
}

/// Loss and gradient for one batch. Non-finite gradients name the tensor and entry.
pub fn compute_gradients(
    model: &Model,
    text: Option<&EmbeddingTable>,
    batch: &Batch,
    config: &TrainConfig,
) -> Result<(LossBreakdown, ParamStore)> {
    let (loss, grads) = joint_loss_and_grad(model, text, batch, &config.weights(), !config.freeze_projection)?;
    for (name, t) in grads.tensors() {
        if let Some(index) = t.first_non_finite() {
            return Err(Error::NonFinite {
                tensor: format!("grad.{name}"),
                index,
            });
        }
    }
    Ok((loss, grads))
}

/// Patience bookkeeping; improvement means strictly greater.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        if metric > self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_kge: f64,
    pub l_lrd: f64,
    pub mean_entropy: f64,
    pub total: f64,
    pub valid_ndcg5: f64,
    pub valid_hr5: f64,
}

pub struct TrainData<'a> {
    pub split: &'a DatasetSplit,
    pub triplets: &'a [Triplet],
    pub text: Option<&'a EmbeddingTable>,
    pub valid: &'a EvalSet,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid: Metrics,
}

/// Trains from a fresh initialisation. Fully determined by `config.seed`.
pub fn train(base: &ModelConfig, config: &TrainConfig, data: &TrainData) -> Result<TrainOutcome> {
    config.validate()?;
    let model_cfg = config.model_config(base);
    let model = Model::new(model_cfg, &mut seeded_rng(config.seed, 0))?;
    train_from(model, config, data)
}

/// Trains starting from `model`.
pub fn train_from(mut model: Model, config: &TrainConfig, data: &TrainData) -> Result<TrainOutcome> {
    config.validate()?;
    if model.config.posterior_input == PosteriorInput::Text && config.lambda > 0.0 {
        let text = data.text.ok_or_else(|| Error::Data("text embeddings required for relation discovery".into()))?;
        if text.len() != model.config.n_items || text.dim() != model.config.d_text {
            return Err(Error::Shape(format!(
                "text embeddings are {}x{}, model expects {}x{}",
                text.len(),
                text.dim(),
                model.config.n_items,
                model.config.d_text
            )));
        }
    }
    let seqs = TrainSequences::from_split(data.split);
    let mut examples = seqs.examples();
    if examples.is_empty() {
        return Err(Error::Data("no training examples (every train prefix has length 1)".into()));
    }
    let sampling = SamplingConfig {
        max_len: model.config.max_len,
        corrupt_both: config.corrupt_both,
        lrd_pairs_per_example: config.lrd_pairs_per_example,
        sample_lrd: config.lambda > 0.0,
        sample_kge: config.gamma > 0.0,
    };
    let mut shuffle_rng = seeded_rng(config.seed, 1);
    let mut sample_rng = seeded_rng(config.seed, 2);
    let mut state = OptimState::new(&model.params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = (model.clone(), Metrics::default());
    let mut log = Vec::new();

    for epoch in 1..=config.max_epochs {
        examples.shuffle(&mut shuffle_rng);
        let mut sums = [0.0; 5];
        let mut batches = 0usize;
        for chunk in examples.chunks(config.batch_size) {
            let batch = sample_batch(chunk, &seqs, data.triplets, model.config.n_items, &sampling, &mut sample_rng)?;
            let step = compute_gradients(&model, data.text, &batch, config).and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        tensor: "loss".into(),
                        index: 0,
                    });
                }
                adam_step(&mut model.params, &grads, &mut state, config.lr, config.l2)?;
                Ok(loss)
            });
            let loss = match step {
                Ok(l) => l,
                Err(Error::NonFinite { tensor, index }) => {
                    log::error!("non-finite value in `{tensor}` at {index}, epoch {epoch}");
                    return Err(Error::Diverged {
                        epoch,
                        last_good: Box::new(best.0.params),
                    });
                }
                Err(e) => return Err(e),
            };
            for (s, v) in sums.iter_mut().zip([loss.l_rec, loss.l_kge, loss.l_lrd, loss.mean_entropy, loss.total]) {
                *s += v;
            }
            batches += 1;
        }
        let mean = sums.map(|s| s / batches as f64);
        let valid = evaluate(&model, data.valid)?;
        let entry = EpochLog {
            epoch,
            l_rec: mean[0],
            l_kge: mean[1],
            l_lrd: mean[2],
            mean_entropy: mean[3],
            total: mean[4],
            valid_ndcg5: valid.ndcg5,
            valid_hr5: valid.hr5,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (rec {:.5}, kge {:.5}, lrd {:.5}) valid ndcg@5 {:.4}",
            entry.total,
            entry.l_rec,
            entry.l_kge,
            entry.l_lrd,
            entry.valid_ndcg5
        );
        log.push(entry);
        match stopper.observe(epoch, valid.ndcg5) {
            StopDecision::Improved => best = (model.clone(), valid),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        log,
        best_epoch: stopper.best_epoch,
        best_valid: best.1,
    })
}

/// Training log as one JSON object per line.
pub fn log_to_jsonl(log: &[EpochLog]) -> Result<String> {
    let mut out = String::new();
    for e in log {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}
