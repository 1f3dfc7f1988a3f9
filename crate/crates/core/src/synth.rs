//! Synthetic noisy conditional-token benchmarks with exactly known clean
//! distributions, so distance-to-clean can be computed in closed form.
//!
//! A task is a table of per-context categorical distributions; a dataset is a
//! stream of token draws where each draw came from either the clean
//! conditional or a noise distribution, with the generating branch recorded.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::simplex::{self, Simplex};

/// A table of clean conditional distributions, one per context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanTask {
    #[serde(rename = "C")]
    pub num_contexts: usize,
    #[serde(rename = "N")]
    pub vocab: usize,
    #[serde(rename = "rows")]
    pub conditionals: Vec<Simplex>,
    pub seed: u64,
}

impl CleanTask {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let task: CleanTask = serde_json::from_str(text)?;
        task.validate()?;
        Ok(task)
    }

    fn validate(&self) -> Result<()> {
        if self.conditionals.len() != self.num_contexts {
            return Err(Error::ShapeMismatch(format!(
                "{} rows vs C={}",
                self.conditionals.len(),
                self.num_contexts
            )));
        }
        for row in &self.conditionals {
            if row.dim() != self.vocab {
                return Err(Error::DimMismatch {
                    left: self.vocab,
                    right: row.dim(),
                });
            }
        }
        Ok(())
    }
}

/// How corrupted draws are distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Maximum-entropy noise: uniform over the vocabulary.
    Uniform,
    /// The task's own rows under a seeded permutation of contexts.
    ShuffledTask,
    /// Caller-provided per-context noise rows.
    FixedDistribution,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseKind::Uniform),
            "shuffled-task" => Ok(NoiseKind::ShuffledTask),
            "fixed-distribution" => Ok(NoiseKind::FixedDistribution),
            other => Err(Error::BadShape(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Corruption model: a rate plus the distribution corrupted draws follow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseModel {
    pub rate: f64,
    pub kind: NoiseKind,
    pub noise_conditionals: Option<Vec<Simplex>>,
}

impl NoiseModel {
    pub fn uniform(rate: f64) -> Self {
        Self {
            rate,
            kind: NoiseKind::Uniform,
            noise_conditionals: None,
        }
    }

    pub fn shuffled_task(rate: f64) -> Self {
        Self {
            rate,
            kind: NoiseKind::ShuffledTask,
            noise_conditionals: None,
        }
    }

    pub fn fixed(rate: f64, rows: Vec<Simplex>) -> Self {
        Self {
            rate,
            kind: NoiseKind::FixedDistribution,
            noise_conditionals: Some(rows),
        }
    }

    fn validate(&self, num_contexts: usize, vocab: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::NoiseRateOutOfRange(self.rate));
        }
        if self.kind == NoiseKind::FixedDistribution {
            let rows = self
                .noise_conditionals
                .as_ref()
                .ok_or(Error::MissingNoiseRows)?;
            if rows.len() != num_contexts {
                return Err(Error::ShapeMismatch(format!(
                    "{} noise rows vs C={num_contexts}",
                    rows.len()
                )));
            }
            for row in rows {
                if row.dim() != vocab {
                    return Err(Error::DimMismatch {
                        left: vocab,
                        right: row.dim(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// One supervised token draw. The `clean` flag records the generating branch,
/// never a post-hoc value comparison: a noisy draw that happens to coincide
/// with a likely clean token still carries `clean = false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenExample {
    #[serde(rename = "c")]
    pub context: usize,
    #[serde(rename = "y")]
    pub target: usize,
    pub clean: bool,
}

/// A generated dataset together with the task and noise that produced it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<TokenExample>,
    pub task: CleanTask,
    pub noise: NoiseModel,
    noise_rows: Vec<Simplex>,
}

impl Dataset {
    /// The materialized per-context noise distribution actually used when
    /// sampling (resolves the shuffled permutation).
    pub fn noise_rows(&self) -> &[Simplex] {
        &self.noise_rows
    }

    /// One JSON object per example, newline-delimited.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for example in &self.examples {
            serde_json::to_writer(&mut out, example)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }
}

/// Parse a JSONL example stream written by [`Dataset::write_jsonl`].
pub fn read_examples_jsonl<R: BufRead>(reader: R) -> Result<Vec<TokenExample>> {
    let mut examples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        examples.push(serde_json::from_str(&line)?);
    }
    Ok(examples)
}

/// Draw a task whose rows are symmetric-Dirichlet samples with the given
/// concentration; deterministic per seed.
///
/// Rows are assembled in log space (a Gamma(α+1) draw boosted by
/// `ln(u)/α`, then softmax-normalized), so concentrations far below or above
/// one stay finite instead of underflowing.
pub fn make_task(
    num_contexts: usize,
    vocab: usize,
    concentration: f64,
    seed: u64,
) -> Result<CleanTask> {
    if num_contexts < 1 {
        return Err(Error::BadShape("need at least 1 context".into()));
    }
    if vocab < 2 {
        return Err(Error::BadShape("need a vocabulary of at least 2".into()));
    }
    if concentration <= 0.0 || !concentration.is_finite() {
        return Err(Error::NonPositiveConcentration(concentration));
    }
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("shape >= 1");
    let mut conditionals = Vec::with_capacity(num_contexts);
    for context in 0..num_contexts {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, context as u64));
        let mut log_weights = vec![0.0; vocab];
        for lw in &mut log_weights {
            let boost: f64 = gamma.sample(&mut rng);
            let u = 1.0 - rng.random::<f64>(); // in (0, 1]
            *lw = boost.ln() + u.ln() / concentration;
        }
        let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
        conditionals.push(simplex::normalize(&weights)?);
    }
    Ok(CleanTask {
        num_contexts,
        vocab,
        conditionals,
        seed,
    })
}

fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // Mass tolerance can leave u marginally above the final cumulative sum.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Sample `samples_per_context` tokens per context. Each draw independently
/// follows the clean conditional with probability `1 − rate` and the noise
/// distribution otherwise, with the branch recorded on the example.
pub fn corrupt(
    task: &CleanTask,
    noise: &NoiseModel,
    samples_per_context: usize,
    seed: u64,
) -> Result<Dataset> {
    task.validate()?;
    noise.validate(task.num_contexts, task.vocab)?;
    if samples_per_context < 1 {
        return Err(Error::BadShape("need at least 1 sample per context".into()));
    }

    let noise_rows: Vec<Simplex> = match noise.kind {
        NoiseKind::Uniform => vec![Simplex::uniform(task.vocab)?; task.num_contexts],
        NoiseKind::ShuffledTask => {
            let mut perm: Vec<usize> = (0..task.num_contexts).collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeding::derive(seed, task.num_contexts as u64));
            for i in (1..perm.len()).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            perm.iter()
                .map(|&p| task.conditionals[p].clone())
                .collect()
        }
        NoiseKind::FixedDistribution => noise
            .noise_conditionals
            .clone()
            .ok_or(Error::MissingNoiseRows)?,
    };

    let mut examples = Vec::with_capacity(task.num_contexts * samples_per_context);
    for (context, (clean, noisy)) in task.conditionals.iter().zip(&noise_rows).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, context as u64));
        let clean_row = clean.probs();
        let noise_row = noisy.probs();
        for _ in 0..samples_per_context {
            let noisy = rng.random::<f64>() < noise.rate;
            let row = if noisy { noise_row } else { clean_row };
            let target = sample_categorical(row, rng.random::<f64>());
            examples.push(TokenExample {
                context,
                target,
                clean: !noisy,
            });
        }
    }
    Ok(Dataset {
        examples,
        task: task.clone(),
        noise: noise.clone(),
        noise_rows,
    })
}

/// Mean over contexts of the total variation distance between model rows and
/// the task's clean conditionals.
pub fn exact_model_tvd(model_conditionals: &[Simplex], task: &CleanTask) -> Result<f64> {
    if model_conditionals.len() != task.num_contexts {
        return Err(Error::ShapeMismatch(format!(
            "{} model rows vs C={}",
            model_conditionals.len(),
            task.num_contexts
        )));
    }
    let mut sum = 0.0;
    for (row, clean) in model_conditionals.iter().zip(&task.conditionals) {
        sum += simplex::tvd(row, clean)?;
    }
    Ok(sum / task.num_contexts as f64)
}
