//! Deterministic minibatch gradient descent for a tabular conditional softmax
//! model under any loss spec, logging the diagnostics the loss family is
//! judged on: loss, mean trade-off, mean weight, exact distance to the clean
//! distribution, and clean/noisy weight separation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    adatailr_gamma, gmm_reweight, loss_truncation, reweight_factor, softmax, LossKind, LossSpec,
    LOG_FLOOR,
};
use crate::simplex::{l1_dist, tvd, Simplex};
use crate::synth::{CleanTask, Dataset};

/// A table of per-context logits; row softmax gives the model's conditionals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitModel {
    pub logits: Vec<Vec<f64>>,
}

impl LogitModel {
    pub fn zeros(num_contexts: usize, vocab: usize) -> Self {
        Self {
            logits: vec![vec![0.0; vocab]; num_contexts],
        }
    }

    pub fn softmax_rows(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|row| softmax(row)).collect()
    }

    pub fn simplex_rows(&self) -> Result<Vec<Simplex>> {
        self.logits
            .iter()
            .map(|row| Simplex::new(softmax(row)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Everything a training run depends on besides the task and data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// When set, the weight floor decays linearly to zero after
    /// `warmup_steps`; off by default (the floor then applies at every step).
    pub delta_anneal: bool,
}

impl TrainConfig {
    pub fn new(loss: LossSpec) -> Self {
        Self {
            loss,
            steps: 5000,
            batch_size: 256,
            learning_rate: 0.5,
            warmup_steps: 0,
            seed: 0,
            eval_every: 50,
            delta_anneal: false,
        }
    }
}

/// One telemetry row, captured before the step's parameter update.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalRow {
    pub step: usize,
    pub train_loss: f64,
    pub mean_gamma: f64,
    pub mean_weight: f64,
    pub tvd_to_clean: f64,
    /// Mann-Whitney AUC of batch weights against clean flags; 0.5 when the
    /// batch holds a single class.
    pub weight_auc: f64,
    pub d_hat: f64,
}

/// Per-eval telemetry for a whole run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMetrics {
    pub rows: Vec<EvalRow>,
}

impl RunMetrics {
    pub const CSV_HEADER: &'static str =
        "step,train_loss,mean_gamma,mean_weight,tvd_to_clean,weight_auc,d_hat";

    /// CSV with the exact header above and floats at nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                row.step,
                row.train_loss,
                row.mean_gamma,
                row.mean_weight,
                row.tvd_to_clean,
                row.weight_auc,
                row.d_hat,
            ));
        }
        out
    }
}

struct StepStats {
    loss_sum: f64,
    gamma_sum: f64,
    weight_sum: f64,
    weights: Vec<f64>,
    clean: Vec<bool>,
}

/// Train a zero-initialized logit table on the dataset with plain gradient
/// descent, bitwise reproducible per seed.
///
/// Gradients are detached-weight: each example contributes
/// `w · (softmax(row) − onehot(target))` to its context, and every context row
/// steps by the mean over its own examples in the batch, so row convergence
/// does not depend on how many contexts share the batch.
pub fn train(task: &CleanTask, data: &Dataset, config: &TrainConfig) -> Result<(LogitModel, RunMetrics)> {
    config.loss.validate()?;
    if config.learning_rate <= 0.0 || !config.learning_rate.is_finite() {
        return Err(Error::NonPositiveLearningRate(config.learning_rate));
    }
    if config.steps < 1 || config.batch_size < 1 || config.eval_every < 1 {
        return Err(Error::BadShape(
            "steps, batch_size and eval_every must be at least 1".into(),
        ));
    }
    if data.task.num_contexts != task.num_contexts || data.task.vocab != task.vocab {
        return Err(Error::ShapeMismatch(format!(
            "data generated for C={} N={}, trained against C={} N={}",
            data.task.num_contexts, data.task.vocab, task.num_contexts, task.vocab
        )));
    }
    if data.examples.is_empty() {
        return Err(Error::BadShape("dataset has no examples".into()));
    }
    let num_contexts = task.num_contexts;
    let vocab = task.vocab;
    for example in &data.examples {
        if example.context >= num_contexts || example.target >= vocab {
            return Err(Error::ShapeMismatch(format!(
                "example ({}, {}) outside C={num_contexts} N={vocab}",
                example.context, example.target
            )));
        }
    }

    let examples = &data.examples;
    let full_batch = config.batch_size >= examples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut model = LogitModel::zeros(num_contexts, vocab);
    let mut metrics = RunMetrics::default();

    let mut probs = vec![vec![0.0; vocab]; num_contexts];
    let mut batch: Vec<usize> = Vec::with_capacity(config.batch_size.min(examples.len()));
    let mut cell_count = vec![vec![0u32; vocab]; num_contexts];
    let mut cell_weight = vec![vec![0.0f64; vocab]; num_contexts];
    let mut touched: Vec<(usize, usize)> = Vec::new();
    let mut ctx_count = vec![0u32; num_contexts];
    let mut ctx_weight_sum = vec![0.0f64; num_contexts];
    let mut last_eval: Option<usize> = None;

    for step in 0..config.steps {
        batch.clear();
        if full_batch {
            batch.extend(0..examples.len());
        } else {
            for _ in 0..config.batch_size {
                batch.push(rng.random_range(0..examples.len()));
            }
        }

        for &(c, y) in &touched {
            cell_count[c][y] = 0;
            cell_weight[c][y] = 0.0;
        }
        touched.clear();
        ctx_count.fill(0);
        ctx_weight_sum.fill(0.0);

        for &i in &batch {
            let e = &examples[i];
            if cell_count[e.context][e.target] == 0 {
                touched.push((e.context, e.target));
            }
            cell_count[e.context][e.target] += 1;
            ctx_count[e.context] += 1;
        }

        for (row, out) in model.logits.iter().zip(probs.iter_mut()) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &z) in out.iter_mut().zip(row) {
                *o = (z - m).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }

        let delta = effective_delta(config, step);
        let stats = accumulate_step(
            config,
            delta,
            &probs,
            examples,
            &batch,
            &touched,
            &mut cell_weight,
            &mut ctx_weight_sum,
        );

        let should_eval = step % config.eval_every == 0 || step + 1 == config.steps;
        if should_eval && last_eval != Some(step) {
            last_eval = Some(step);
            let (tvd_to_clean, d_hat) = distance_to_clean(&probs, task)?;
            let batch_len = batch.len() as f64;
            let auc = match weight_auc(&stats.weights, &stats.clean) {
                Ok(v) => v,
                Err(Error::OneClassOnly) => 0.5,
                Err(e) => return Err(e),
            };
            metrics.rows.push(EvalRow {
                step,
                train_loss: stats.loss_sum / batch_len,
                mean_gamma: stats.gamma_sum / batch_len,
                mean_weight: stats.weight_sum / batch_len,
                tvd_to_clean,
                weight_auc: auc,
                d_hat,
            });
        }

        let lr = config.learning_rate;
        for c in 0..num_contexts {
            if ctx_count[c] == 0 {
                continue;
            }
            let inv = 1.0 / ctx_count[c] as f64;
            let wsum = ctx_weight_sum[c];
            let row = &mut model.logits[c];
            let p = &probs[c];
            for j in 0..vocab {
                row[j] -= lr * inv * (wsum * p[j] - cell_weight[c][j]);
            }
        }
    }

    Ok((model, metrics))
}

fn effective_delta(config: &TrainConfig, step: usize) -> f64 {
    let delta = config.loss.delta;
    if !config.delta_anneal || step < config.warmup_steps {
        return delta;
    }
    let span = config.steps.saturating_sub(config.warmup_steps);
    if span == 0 {
        return 0.0;
    }
    let progress = (step - config.warmup_steps) as f64 / span as f64;
    delta * (1.0 - progress).max(0.0)
}

/// Fill the per-cell weight table and return batch statistics. The weight of
/// a cell multiplies `(softmax − onehot)` in the gradient, so per-example
/// weights from the pooled methods (truncation, mixture re-weighting) are
/// accumulated per cell.
#[allow(clippy::too_many_arguments)]
fn accumulate_step(
    config: &TrainConfig,
    delta: f64,
    probs: &[Vec<f64>],
    examples: &[crate::synth::TokenExample],
    batch: &[usize],
    touched: &[(usize, usize)],
    cell_weight: &mut [Vec<f64>],
    ctx_weight_sum: &mut [f64],
) -> StepStats {
    let spec = &config.loss;
    let mut stats = StepStats {
        loss_sum: 0.0,
        gamma_sum: 0.0,
        weight_sum: 0.0,
        weights: Vec::with_capacity(batch.len()),
        clean: Vec::with_capacity(batch.len()),
    };

    match spec.kind {
        LossKind::Kld | LossKind::TaiLr | LossKind::AdaTaiLr => {
            // Weight, trade-off and loss are functions of (context, target)
            // alone; evaluate each occupied cell once.
            let mut cell_gamma = vec![0.0; touched.len()];
            let mut cell_w = vec![0.0; touched.len()];
            let mut cell_loss = vec![0.0; touched.len()];
            let mut cell_index: std::collections::HashMap<(usize, usize), usize> =
                std::collections::HashMap::with_capacity(touched.len());
            for (slot, &(c, y)) in touched.iter().enumerate() {
                let row = &probs[c];
                let p = row[y];
                let (g, w) = match spec.kind {
                    LossKind::Kld => (0.0, 1.0),
                    LossKind::TaiLr => (spec.gamma, reweight_factor(p, spec.gamma).max(delta)),
                    LossKind::AdaTaiLr => {
                        let g = adatailr_gamma(row, y, spec.lambda);
                        (g, reweight_factor(p, g).max(delta))
                    }
                    _ => unreachable!(),
                };
                cell_gamma[slot] = g;
                cell_w[slot] = w;
                cell_loss[slot] = w * -(p.max(LOG_FLOOR)).ln();
                cell_index.insert((c, y), slot);
            }
            for &i in batch {
                let e = &examples[i];
                let slot = cell_index[&(e.context, e.target)];
                let w = cell_w[slot];
                stats.loss_sum += cell_loss[slot];
                stats.gamma_sum += cell_gamma[slot];
                stats.weight_sum += w;
                stats.weights.push(w);
                stats.clean.push(e.clean);
                cell_weight[e.context][e.target] += w;
                ctx_weight_sum[e.context] += w;
            }
        }
        LossKind::LossTruncation | LossKind::GmmReweight => {
            let base_losses: Vec<f64> = batch
                .iter()
                .map(|&i| {
                    let e = &examples[i];
                    -(probs[e.context][e.target].max(LOG_FLOOR)).ln()
                })
                .collect();
            let example_weights: Vec<f64> = match spec.kind {
                LossKind::LossTruncation => {
                    let truncated = loss_truncation(&base_losses, spec.trunc_frac)
                        .expect("validated trunc_frac");
                    truncated
                        .kept
                        .iter()
                        .map(|&k| if k { 1.0 } else { 0.0 })
                        .collect()
                }
                LossKind::GmmReweight => {
                    if base_losses.len() < 2 * spec.gmm_components {
                        // Too small to fit a mixture; leave the batch unweighted.
                        vec![1.0; base_losses.len()]
                    } else {
                        gmm_reweight(&base_losses, spec.gmm_components)
                            .expect("validated component count")
                            .weights
                    }
                }
                _ => unreachable!(),
            };
            for ((&i, &w), &base) in batch.iter().zip(&example_weights).zip(&base_losses) {
                let e = &examples[i];
                stats.loss_sum += w * base;
                stats.weight_sum += w;
                stats.weights.push(w);
                stats.clean.push(e.clean);
                cell_weight[e.context][e.target] += w;
                ctx_weight_sum[e.context] += w;
            }
        }
    }
    stats
}

fn distance_to_clean(probs: &[Vec<f64>], task: &CleanTask) -> Result<(f64, f64)> {
    let mut tvd_sum = 0.0;
    let mut l1_sum = 0.0;
    for (row, clean) in probs.iter().zip(&task.conditionals) {
        let model_row = Simplex::new(row.clone())?;
        tvd_sum += tvd(&model_row, clean)?;
        l1_sum += 0.5 * l1_dist(&model_row, clean)?;
    }
    let c = task.num_contexts as f64;
    Ok((tvd_sum / c, l1_sum / c))
}

/// Mann-Whitney AUC of `weights` as a score for `clean = true`, ties counted
/// one half, computed through average ranks.
pub fn weight_auc(weights: &[f64], clean: &[bool]) -> Result<f64> {
    if weights.len() != clean.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights vs {} flags",
            weights.len(),
            clean.len()
        )));
    }
    let n_clean = clean.iter().filter(|&&c| c).count();
    let n_noisy = clean.len() - n_clean;
    if n_clean == 0 || n_noisy == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].partial_cmp(&weights[b]).expect("no NaN weights"));
    let mut clean_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && weights[order[j + 1]] == weights[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if clean[idx] {
                clean_rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = clean_rank_sum - (n_clean * (n_clean + 1)) as f64 / 2.0;
    Ok(u / (n_clean as f64 * n_noisy as f64))
}

/// Per-context empirical frequencies with additive smoothing 1e-9; the
/// closed-form optimum the plain likelihood trainer must approach.
pub fn closed_form_mle(data: &Dataset) -> Result<Vec<Simplex>> {
    let c = data.task.num_contexts;
    let n = data.task.vocab;
    let mut counts = vec![vec![0.0f64; n]; c];
    for e in &data.examples {
        counts[e.context][e.target] += 1.0;
    }
    let mut rows = Vec::with_capacity(c);
    for (context, row) in counts.iter().enumerate() {
        if row.iter().sum::<f64>() == 0.0 {
            return Err(Error::EmptyContext(context));
        }
        let smoothed: Vec<f64> = row.iter().map(|&v| v + 1e-9).collect();
        rows.push(crate::simplex::normalize(&smoothed)?);
    }
    Ok(rows)
}

/// Per-example weights the final model assigns to every example in the
/// dataset, per the loss family's own definition. For the pooled methods the
/// mask/posterior is computed over the whole dataset's losses.
pub fn dataset_weights(model: &LogitModel, data: &Dataset, spec: &LossSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let probs = model.softmax_rows();
    let target_prob = |e: &crate::synth::TokenExample| probs[e.context][e.target];
    match spec.kind {
        LossKind::Kld => Ok(vec![1.0; data.examples.len()]),
        LossKind::TaiLr => Ok(data
            .examples
            .iter()
            .map(|e| reweight_factor(target_prob(e), spec.gamma).max(spec.delta))
            .collect()),
        LossKind::AdaTaiLr => Ok(data
            .examples
            .iter()
            .map(|e| {
                let row = &probs[e.context];
                let g = adatailr_gamma(row, e.target, spec.lambda);
                reweight_factor(row[e.target], g).max(spec.delta)
            })
            .collect()),
        LossKind::LossTruncation => {
            let losses: Vec<f64> = data
                .examples
                .iter()
                .map(|e| -(target_prob(e).max(LOG_FLOOR)).ln())
                .collect();
            let truncated = loss_truncation(&losses, spec.trunc_frac)?;
            Ok(truncated
                .kept
                .iter()
                .map(|&k| if k { 1.0 } else { 0.0 })
                .collect())
        }
        LossKind::GmmReweight => {
            let losses: Vec<f64> = data
                .examples
                .iter()
                .map(|e| -(target_prob(e).max(LOG_FLOOR)).ln())
                .collect();
            Ok(gmm_reweight(&losses, spec.gmm_components)?.weights)
        }
    }
}
