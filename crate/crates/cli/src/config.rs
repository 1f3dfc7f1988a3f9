//! Flat key=value benchmark configuration with typed validation, command-line
//! overrides, and canonical re-serialization for provenance.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};

use adatailr::losses::LossKind;
use adatailr::synth::NoiseKind;

/// Fully-resolved benchmark grid configuration. Unknown keys are rejected;
/// every run re-serializes the resolved form next to its outputs.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub contexts: usize,
    pub vocab: usize,
    pub concentration: f64,
    pub samples_per_context: usize,
    pub noise: NoiseKind,
    pub rhos: Vec<f64>,
    pub losses: Vec<LossKind>,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub delta_anneal: bool,
    pub eval_every: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub delta: f64,
    pub trunc_frac: f64,
    pub gmm_components: usize,
    pub out_dir: PathBuf,
    pub save_models: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            contexts: 32,
            vocab: 32,
            concentration: 1e-4,
            samples_per_context: 2000,
            noise: NoiseKind::Uniform,
            rhos: vec![0.0, 0.2, 0.4],
            losses: LossKind::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            steps: 5000,
            batch_size: 256,
            learning_rate: 0.5,
            warmup_steps: 0,
            delta_anneal: false,
            eval_every: 50,
            gamma: 0.1,
            lambda: 1.0,
            delta: 0.1,
            trunc_frac: 0.2,
            gmm_components: 2,
            out_dir: PathBuf::from("bench_out"),
            save_models: false,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| anyhow!("key `{key}`: bad entry `{v}`: {e}"))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| anyhow!("key `{key}`: bad value `{value}`: {e}"))
}

impl BenchConfig {
    /// Parse the key=value format. Lines may carry `#` comments; blank lines
    /// are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value, got `{line}`", number + 1))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "contexts" => self.contexts = parse_scalar(value, key)?,
            "vocab" => self.vocab = parse_scalar(value, key)?,
            "concentration" => self.concentration = parse_scalar(value, key)?,
            "samples_per_context" => self.samples_per_context = parse_scalar(value, key)?,
            "noise" => {
                self.noise = value
                    .parse()
                    .map_err(|e| anyhow!("key `noise`: {e}"))?
            }
            "rhos" => self.rhos = parse_list(value, key)?,
            "losses" => {
                self.losses = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|v| v.parse().map_err(|e| anyhow!("key `losses`: {e}")))
                    .collect::<Result<_>>()?
            }
            "seeds" => self.seeds = parse_list(value, key)?,
            "steps" => self.steps = parse_scalar(value, key)?,
            "batch_size" => self.batch_size = parse_scalar(value, key)?,
            "learning_rate" => self.learning_rate = parse_scalar(value, key)?,
            "warmup_steps" => self.warmup_steps = parse_scalar(value, key)?,
            "delta_anneal" => self.delta_anneal = parse_scalar(value, key)?,
            "eval_every" => self.eval_every = parse_scalar(value, key)?,
            "gamma" => self.gamma = parse_scalar(value, key)?,
            "lambda" => self.lambda = parse_scalar(value, key)?,
            "delta" => self.delta = parse_scalar(value, key)?,
            "trunc_frac" => self.trunc_frac = parse_scalar(value, key)?,
            "gmm_components" => self.gmm_components = parse_scalar(value, key)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "save_models" => self.save_models = parse_scalar(value, key)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.contexts < 1 || self.vocab < 2 {
            bail!("need contexts >= 1 and vocab >= 2");
        }
        if self.concentration <= 0.0 {
            bail!("concentration must be positive");
        }
        if self.samples_per_context < 1 {
            bail!("samples_per_context must be at least 1");
        }
        if self.rhos.is_empty() || self.losses.is_empty() || self.seeds.is_empty() {
            bail!("rhos, losses and seeds must be non-empty");
        }
        for &rho in &self.rhos {
            if !(0.0..=1.0).contains(&rho) {
                bail!("rho {rho} outside [0, 1]");
            }
        }
        if self.noise == NoiseKind::FixedDistribution {
            bail!("fixed-distribution noise needs explicit rows; use `gen-data --noise-task`");
        }
        // Loss and trainer parameter ranges are enforced by the library.
        Ok(())
    }

    /// Canonical serialization: every key, fixed order. Floats use the `{:?}`
    /// shortest round-trip form so `2.0` stays `2.0`.
    pub fn resolved_text(&self) -> String {
        let join_f64 = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let noise = match self.noise {
            NoiseKind::Uniform => "uniform",
            NoiseKind::ShuffledTask => "shuffled-task",
            NoiseKind::FixedDistribution => "fixed-distribution",
        };
        format!(
            "contexts={}\nvocab={}\nconcentration={:?}\nsamples_per_context={}\nnoise={}\n\
             rhos={}\nlosses={}\nseeds={}\nsteps={}\nbatch_size={}\nlearning_rate={:?}\n\
             warmup_steps={}\ndelta_anneal={}\neval_every={}\ngamma={:?}\nlambda={:?}\ndelta={:?}\ntrunc_frac={:?}\n\
             gmm_components={}\nout_dir={}\nsave_models={}\n",
            self.contexts,
            self.vocab,
            self.concentration,
            self.samples_per_context,
            noise,
            join_f64(&self.rhos),
            self.losses
                .iter()
                .map(|l| l.name().to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.steps,
            self.batch_size,
            self.learning_rate,
            self.warmup_steps,
            self.delta_anneal,
            self.eval_every,
            self.gamma,
            self.lambda,
            self.delta,
            self.trunc_frac,
            self.gmm_components,
            self.out_dir.display(),
            self.save_models,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips_through_resolved_text() {
        let config = BenchConfig::parse("steps=100 # quick\nlambda=2.0\n\nrhos=0,0.4\n").unwrap();
        assert_eq!(config.steps, 100);
        assert_eq!(config.lambda, 2.0);
        assert_eq!(config.rhos, vec![0.0, 0.4]);
        let text = config.resolved_text();
        let reparsed = BenchConfig::parse(&text).unwrap();
        assert_eq!(reparsed.resolved_text(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(BenchConfig::parse("not_a_key=1\n").is_err());
        assert!(BenchConfig::parse("steps 100\n").is_err());
        assert!(BenchConfig::parse("rhos=0,2.5\n").is_err());
        assert!(BenchConfig::parse("losses=kld,unknown\n").is_err());
    }
}
