//! Token-level training objectives: plain negative log-likelihood, weighted
//! bounds with constant or adaptive trade-off, loss truncation, and
//! Gaussian-mixture loss re-weighting, plus analytic gradients with respect
//! to logits.
//!
//! The weighting factor is always treated as a constant for gradients: the
//! gradient of every weighted objective is `w_i (softmax(logits_i) −
//! onehot(y_i))` with `w_i` held at its forward-pass value.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{onehot_z, Simplex};

/// Probabilities are floored here before entering `ln` or the weighting
/// factor, so degenerate rows produce large finite losses instead of
/// infinities.
pub const LOG_FLOOR: f64 = 1e-12;

/// Variance floor for the one-dimensional Gaussian mixture fit.
pub const GMM_VAR_FLOOR: f64 = 1e-6;

const GMM_MAX_ITERS: usize = 100;
const GMM_LL_TOLERANCE: f64 = 1e-8;
// k-means++ seeding uses a fixed stream so identical inputs always produce
// identical posteriors.
const GMM_INIT_SEED: u64 = 0x676d_6d2d_696e_6974;

/// Which training objective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "kld")]
    Kld,
    #[serde(rename = "tailr")]
    TaiLr,
    #[serde(rename = "adatailr")]
    AdaTaiLr,
    #[serde(rename = "loss-truncation")]
    LossTruncation,
    #[serde(rename = "gmm-reweight")]
    GmmReweight,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Kld,
        LossKind::TaiLr,
        LossKind::AdaTaiLr,
        LossKind::LossTruncation,
        LossKind::GmmReweight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Kld => "kld",
            LossKind::TaiLr => "tailr",
            LossKind::AdaTaiLr => "adatailr",
            LossKind::LossTruncation => "loss-truncation",
            LossKind::GmmReweight => "gmm-reweight",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kld" => Ok(LossKind::Kld),
            "tailr" => Ok(LossKind::TaiLr),
            "adatailr" => Ok(LossKind::AdaTaiLr),
            "loss-truncation" => Ok(LossKind::LossTruncation),
            "gmm-reweight" => Ok(LossKind::GmmReweight),
            other => Err(Error::UnsupportedLossKind(other.to_string())),
        }
    }
}

/// Loss family plus every tunable. Parameters irrelevant to `kind` are
/// ignored by the evaluation but still range-checked by [`LossSpec::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Constant trade-off for `TaiLr`.
    pub gamma: f64,
    /// Ramp slope of the adaptive trade-off for `AdaTaiLr`.
    pub lambda: f64,
    /// Lower bound on the weighting factor (`TaiLr`/`AdaTaiLr`).
    pub delta: f64,
    /// Fraction of the largest losses dropped by `LossTruncation`.
    pub trunc_frac: f64,
    /// Mixture size for `GmmReweight`.
    pub gmm_components: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            gamma: 0.1,
            lambda: 1.0,
            delta: 0.1,
            trunc_frac: 0.2,
            gmm_components: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::GammaOutOfRange(self.gamma));
        }
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(Error::NonPositiveLambda(self.lambda));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::DeltaOutOfRange(self.delta));
        }
        if !(0.0..1.0).contains(&self.trunc_frac) {
            return Err(Error::TruncFracOutOfRange(self.trunc_frac));
        }
        if self.gmm_components < 2 {
            return Err(Error::BadComponentCount(self.gmm_components));
        }
        Ok(())
    }
}

/// A batch of supervised token predictions: one predicted distribution and
/// one target id per position, with optional clean/noisy provenance flags.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    probs: Vec<Simplex>,
    labels: Vec<usize>,
    clean: Option<Vec<bool>>,
}

impl TokenBatch {
    pub fn new(probs: Vec<Simplex>, labels: Vec<usize>) -> Result<Self> {
        Self::build(probs, labels, None)
    }

    pub fn with_clean_flags(
        probs: Vec<Simplex>,
        labels: Vec<usize>,
        clean: Vec<bool>,
    ) -> Result<Self> {
        Self::build(probs, labels, Some(clean))
    }

    fn build(probs: Vec<Simplex>, labels: Vec<usize>, clean: Option<Vec<bool>>) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows vs {} labels",
                probs.len(),
                labels.len()
            )));
        }
        if let Some(flags) = &clean {
            if flags.len() != labels.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels vs {} clean flags",
                    labels.len(),
                    flags.len()
                )));
            }
        }
        let vocab = probs.first().map(Simplex::dim);
        for row in &probs {
            if Some(row.dim()) != vocab {
                return Err(Error::DimMismatch {
                    left: vocab.unwrap_or(0),
                    right: row.dim(),
                });
            }
        }
        for (&label, row) in labels.iter().zip(&probs) {
            if label >= row.dim() {
                return Err(Error::IndexOutOfRange {
                    index: label,
                    dim: row.dim(),
                });
            }
        }
        Ok(Self {
            probs,
            labels,
            clean,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn probs(&self) -> &[Simplex] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clean(&self) -> Option<&[bool]> {
        self.clean.as_deref()
    }

    fn target_prob(&self, i: usize) -> f64 {
        self.probs[i].get(self.labels[i])
    }
}

/// Per-token losses and weights with a sum reduction.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedLoss {
    pub total: f64,
    pub per_token_loss: Vec<f64>,
    pub per_token_weight: Vec<f64>,
    /// Per-token trade-off values; populated by the adaptive loss only.
    pub per_token_gamma: Option<Vec<f64>>,
}

impl WeightedLoss {
    fn from_parts(loss: Vec<f64>, weight: Vec<f64>, gamma: Option<Vec<f64>>) -> Self {
        let total = loss.iter().sum();
        Self {
            total,
            per_token_loss: loss,
            per_token_weight: weight,
            per_token_gamma: gamma,
        }
    }
}

/// The weighting factor `p / (γ + (1−γ) p)` with `p` floored at [`LOG_FLOOR`].
///
/// At `γ = 0` this is exactly 1 for any floored `p`, so the weighted loss
/// degenerates to plain negative log-likelihood bitwise.
pub fn reweight_factor(p: f64, gamma: f64) -> f64 {
    let p = p.max(LOG_FLOOR);
    p / (gamma + (1.0 - gamma) * p)
}

/// Adaptive per-token trade-off from one predicted row: `clamp(½ + λ·(Σ_j
/// p_j(p_j − p_y)), 0, 1)`. Exactly ½ on uniform rows.
pub fn adatailr_gamma(row: &[f64], label: usize, lambda: f64) -> f64 {
    (0.5 + lambda * onehot_z(row, label)).clamp(0.0, 1.0)
}

fn floored_nll(p: f64) -> f64 {
    -(p.max(LOG_FLOOR)).ln()
}

/// Plain negative log-likelihood; every weight is 1.
pub fn kld_loss(batch: &TokenBatch) -> WeightedLoss {
    let n = batch.len();
    let mut loss = Vec::with_capacity(n);
    for i in 0..n {
        loss.push(floored_nll(batch.target_prob(i)));
    }
    WeightedLoss::from_parts(loss, vec![1.0; n], None)
}

/// Constant-trade-off weighted loss: `w = max(δ, p/(γ+(1−γ)p))`,
/// `loss = −w·log p`.
pub fn tailr_loss(batch: &TokenBatch, gamma: f64, delta: f64) -> Result<WeightedLoss> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let n = batch.len();
    let mut loss = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    for i in 0..n {
        let p = batch.target_prob(i);
        let w = reweight_factor(p, gamma).max(delta);
        loss.push(w * floored_nll(p));
        weight.push(w);
    }
    Ok(WeightedLoss::from_parts(loss, weight, None))
}

/// Adaptive weighted loss: per token, the trade-off is recomputed from the
/// predicted row before weighting.
pub fn adatailr_loss(batch: &TokenBatch, lambda: f64, delta: f64) -> Result<WeightedLoss> {
    let (weights, gammas) = adatailr_weights(batch, lambda, delta)?;
    let loss = weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * floored_nll(batch.target_prob(i)))
        .collect();
    Ok(WeightedLoss::from_parts(loss, weights, Some(gammas)))
}

/// The per-token weights and trade-off values of [`adatailr_loss`], without
/// evaluating losses. Used for clean/noisy separation analysis.
pub fn adatailr_weights(batch: &TokenBatch, lambda: f64, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::DeltaOutOfRange(delta));
    }
    let n = batch.len();
    let mut weights = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n);
    for i in 0..n {
        let row = batch.probs[i].probs();
        let g = adatailr_gamma(row, batch.labels[i], lambda);
        weights.push(reweight_factor(batch.target_prob(i), g).max(delta));
        gammas.push(g);
    }
    Ok((weights, gammas))
}

/// Result of dropping the largest losses.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLoss {
    /// `true` where the loss was kept (weight 1), `false` where dropped.
    pub kept: Vec<bool>,
    /// Sum of the kept losses, reduced in index order.
    pub total: f64,
}

/// Drop the `⌈c·n⌉` largest losses; among equal losses the earliest index is
/// kept. `c = 0` is the identity.
pub fn loss_truncation(losses: &[f64], c: f64) -> Result<TruncatedLoss> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::TruncFracOutOfRange(c));
    }
    let n = losses.len();
    let drop_count = ((c * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    // Largest first; ties resolved toward later indices so the earliest stays.
    order.sort_by(|&a, &b| {
        losses[b]
            .partial_cmp(&losses[a])
            .expect("losses must not contain NaN")
            .then(b.cmp(&a))
    });
    let mut kept = vec![true; n];
    for &i in order.iter().take(drop_count) {
        kept[i] = false;
    }
    let total = losses
        .iter()
        .zip(&kept)
        .filter(|&(_, &k)| k)
        .map(|(&l, _)| l)
        .sum();
    Ok(TruncatedLoss { kept, total })
}

/// Posterior re-weighting from a one-dimensional Gaussian mixture fit over
/// sample losses.
#[derive(Debug, Clone)]
pub struct GmmReweight {
    /// Posterior probability of the lowest-mean component, per sample.
    pub weights: Vec<f64>,
    /// Set when every loss is identical; the weights are then forced to 1.
    pub degenerate: bool,
    /// Full per-sample, per-component posteriors (rows sum to 1).
    pub responsibilities: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub mixing: Vec<f64>,
}

/// Fit a `components`-component Gaussian mixture to the losses by EM
/// (k-means++ init, at most 100 iterations, variance floor 1e-6, stop when
/// the log-likelihood improves by less than 1e-8) and return the posterior of
/// the component with the smallest mean.
pub fn gmm_reweight(losses: &[f64], components: usize) -> Result<GmmReweight> {
    if components < 2 {
        return Err(Error::BadComponentCount(components));
    }
    let n = losses.len();
    if n < 2 * components {
        return Err(Error::TooFewSamples {
            needed: 2 * components,
            components,
            got: n,
        });
    }

    let lo = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(GmmReweight {
            weights: vec![1.0; n],
            degenerate: true,
            responsibilities: vec![std::iter::once(1.0)
                .chain(std::iter::repeat(0.0))
                .take(components)
                .collect(); n],
            means: vec![lo; components],
            variances: vec![GMM_VAR_FLOOR; components],
            mixing: vec![1.0 / components as f64; components],
        });
    }

    let centers = kmeans_pp_centers(losses, components);
    let (mut means, mut vars, mut mixing) = init_from_centers(losses, &centers);

    let mut resp = vec![vec![0.0; components]; n];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..GMM_MAX_ITERS {
        // E-step in the log domain.
        let mut ll = 0.0;
        for (i, &x) in losses.iter().enumerate() {
            let mut logp = vec![f64::NEG_INFINITY; components];
            for k in 0..components {
                if mixing[k] > 0.0 {
                    logp[k] = mixing[k].ln() + log_normal_pdf(x, means[k], vars[k]);
                }
            }
            let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (r, &lp) in resp[i].iter_mut().zip(&logp) {
                *r = (lp - m).exp();
                z += *r;
            }
            for r in resp[i].iter_mut() {
                *r /= z;
            }
            ll += m + z.ln();
        }

        // M-step with floored variances.
        for k in 0..components {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if nk <= 0.0 {
                mixing[k] = 0.0;
                continue;
            }
            let mean = resp
                .iter()
                .zip(losses)
                .map(|(r, &x)| r[k] * x)
                .sum::<f64>()
                / nk;
            let var = resp
                .iter()
                .zip(losses)
                .map(|(r, &x)| r[k] * (x - mean) * (x - mean))
                .sum::<f64>()
                / nk;
            means[k] = mean;
            vars[k] = var.max(GMM_VAR_FLOOR);
            mixing[k] = nk / n as f64;
        }

        if (ll - prev_ll).abs() < GMM_LL_TOLERANCE {
            break;
        }
        prev_ll = ll;
    }

    let low = means
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap_or(0);
    let weights = resp.iter().map(|r| r[low]).collect();
    Ok(GmmReweight {
        weights,
        degenerate: false,
        responsibilities: resp,
        means,
        variances: vars,
        mixing,
    })
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

fn kmeans_pp_centers(values: &[f64], k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(GMM_INIT_SEED);
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.random_range(0..values.len())]);
    let mut d2: Vec<f64> = values
        .iter()
        .map(|&v| (v - centers[0]) * (v - centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = values.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            values[chosen]
        } else {
            values[rng.random_range(0..values.len())]
        };
        centers.push(next);
        for (i, &v) in values.iter().enumerate() {
            d2[i] = d2[i].min((v - next) * (v - next));
        }
    }
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    centers
}

fn init_from_centers(values: &[f64], centers: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = centers.len();
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k];
    let mut sumsq = vec![0.0; k];
    for &v in values {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &c) in centers.iter().enumerate() {
            let d = (v - c).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        count[best] += 1;
        sum[best] += v;
        sumsq[best] += v * v;
    }
    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    let mut mixing = Vec::with_capacity(k);
    for j in 0..k {
        if count[j] == 0 {
            means.push(centers[j]);
            vars.push(GMM_VAR_FLOOR);
            mixing.push(1.0 / values.len() as f64);
        } else {
            let m = sum[j] / count[j] as f64;
            means.push(m);
            vars.push((sumsq[j] / count[j] as f64 - m * m).max(GMM_VAR_FLOOR));
            mixing.push(count[j] as f64 / values.len() as f64);
        }
    }
    (means, vars, mixing)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Analytic gradient of `Σ_i −w_i log softmax(logits_i)_{y_i}` with the
/// weights held constant: row `i` is `w_i (softmax(logits_i) − onehot(y_i))`.
///
/// Supports the loss kinds whose weights are per-token functions of the
/// predicted row (`Kld`, `TaiLr`, `AdaTaiLr`).
pub fn loss_grad(logits: &[Vec<f64>], labels: &[usize], spec: &LossSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    match spec.kind {
        LossKind::Kld | LossKind::TaiLr | LossKind::AdaTaiLr => {}
        other => return Err(Error::UnsupportedLossKind(other.name().to_string())),
    }
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::IndexOutOfRange {
                index: y,
                dim: row.len(),
            });
        }
        let probs = softmax(row);
        let w = match spec.kind {
            LossKind::Kld => 1.0,
            LossKind::TaiLr => reweight_factor(probs[y], spec.gamma).max(spec.delta),
            LossKind::AdaTaiLr => {
                let g = adatailr_gamma(&probs, y, spec.lambda);
                reweight_factor(probs[y], g).max(spec.delta)
            }
            _ => unreachable!(),
        };
        let mut g_row: Vec<f64> = probs.iter().map(|&p| w * p).collect();
        g_row[y] -= w;
        grad.push(g_row);
    }
    Ok(grad)
}

/// Finite-difference oracle for the detached-weight objective.
///
/// Kept independent of [`loss_grad`]: the objective is evaluated through its
/// own log-sum-exp route and differentiated numerically.
pub mod gradcheck {
    /// `Σ_i w_i (lse(logits_i) − logits_{i,y_i})`, the weighted negative
    /// log-likelihood with frozen weights.
    pub fn frozen_weight_objective(logits: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> f64 {
        logits
            .iter()
            .zip(labels)
            .zip(weights)
            .map(|((row, &y), &w)| {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
                w * (lse - row[y])
            })
            .sum()
    }

    /// Central finite differences of [`frozen_weight_objective`] with the
    /// given step, entry by entry.
    pub fn central_difference(
        logits: &[Vec<f64>],
        labels: &[usize],
        weights: &[f64],
        step: f64,
    ) -> Vec<Vec<f64>> {
        let mut work = logits.to_vec();
        let mut grad = vec![vec![0.0; logits[0].len()]; logits.len()];
        for i in 0..logits.len() {
            for j in 0..logits[i].len() {
                let orig = work[i][j];
                work[i][j] = orig + step;
                let up = frozen_weight_objective(&work, labels, weights);
                work[i][j] = orig - step;
                let down = frozen_weight_objective(&work, labels, weights);
                work[i][j] = orig;
                grad[i][j] = (up - down) / (2.0 * step);
            }
        }
        grad
    }

    /// Global relative error `‖a − b‖_F / max(‖a‖_F, ‖b‖_F, 1e-12)`.
    pub fn relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mut diff = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for (ra, rb) in a.iter().zip(b) {
            for (&x, &y) in ra.iter().zip(rb) {
                diff += (x - y) * (x - y);
                na += x * x;
                nb += y * y;
            }
        }
        diff.sqrt() / na.sqrt().max(nb.sqrt()).max(1e-12)
    }
}
