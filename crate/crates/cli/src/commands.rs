//! Subcommand implementations. Each returns the process exit code: 0 for
//! success, 1 for a failed verification/assertion, while usage and input
//! errors bubble up as `Err` and exit with 2.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use adatailr::corpus::{
    self, corpus_from_jsonl, corpus_from_text, reference_from_ids, reference_from_text, Corpus,
    WhitespaceTokenizer,
};
use adatailr::losses::{self, gradcheck, LossKind, LossSpec};
use adatailr::seeding;
use adatailr::synth::{corrupt, make_task, CleanTask, NoiseKind, NoiseModel};
use adatailr::theorems::{
    verify_lemma_dist_approx, verify_lemma_norms, verify_lemma_sampled_tvd, verify_lemma_smooth,
    verify_lemma_zdiff, verify_theorem1, verify_theorem2, TheoremReport, DEFAULT_DIMS,
    DEFAULT_LAMBDAS,
};
use adatailr::trainer::{dataset_weights, train, weight_auc, TrainConfig};

use crate::config::BenchConfig;
use crate::{BenchArgs, DiversityArgs, GenDataArgs, GradCheckArgs, Suite, VerifyArgs};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn report_json(report: &TheoremReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn run_verify(args: &VerifyArgs) -> Result<u8> {
    let seed = args.seed;
    let trials = |default: usize| args.trials.unwrap_or(default);
    let lambdas = args
        .lambdas
        .clone()
        .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    for &l in &lambdas {
        if l <= 0.0 {
            bail!("lambdas must be positive, got {l}");
        }
    }

    let mut reports = Vec::new();
    if matches!(args.suite, Suite::All | Suite::Theorem1) {
        reports.push(verify_theorem1(
            trials(10_000),
            DEFAULT_DIMS,
            args.grid_points,
            seed,
        ));
    }
    if matches!(args.suite, Suite::All | Suite::Theorem2) {
        reports.push(verify_theorem2(trials(1000), &lambdas, seed)?);
    }
    if matches!(args.suite, Suite::All | Suite::Lemmas) {
        reports.push(verify_lemma_sampled_tvd(trials(10_000), seed));
        reports.push(verify_lemma_norms(trials(10_000), seed));
        reports.push(verify_lemma_zdiff(trials(10_000), seed));
        reports.push(verify_lemma_smooth(&lambdas, -2.0, 2.0, 1e-4)?);
        reports.push(verify_lemma_dist_approx(trials(1000), &lambdas, seed)?);
    }

    let mut all_pass = true;
    for report in &reports {
        write_file(
            &args.out.join(format!("{}.json", report.name)),
            &report_json(report),
        )?;
        println!(
            "{}: {} (max_violation={:.3e}, bound={:.3e}, trials={})",
            report.name,
            if report.pass { "PASS" } else { "FAIL" },
            report.max_violation,
            report.bound,
            report.trials,
        );
        all_pass &= report.pass;
    }
    Ok(if all_pass { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct CellSummary {
    loss: LossKind,
    rho: f64,
    seed: u64,
    final_tvd_to_clean: f64,
    final_weight_auc: f64,
    final_mean_weight: f64,
    final_mean_gamma: f64,
    final_train_loss: f64,
    metrics_file: String,
}

fn loss_spec(config: &BenchConfig, kind: LossKind) -> LossSpec {
    let mut spec = LossSpec::new(kind);
    spec.gamma = config.gamma;
    spec.lambda = config.lambda;
    spec.delta = config.delta;
    spec.trunc_frac = config.trunc_frac;
    spec.gmm_components = config.gmm_components;
    spec
}

pub fn run_bench(args: &BenchArgs) -> Result<u8> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            BenchConfig::parse(&text)?
        }
        None => BenchConfig::default(),
    };
    args.apply_overrides(&mut config)?;
    config.validate()?;

    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    write_file(
        &config.out_dir.join("config.resolved"),
        &config.resolved_text(),
    )?;

    let mut summaries = Vec::new();
    for &kind in &config.losses {
        for &rho in &config.rhos {
            for &seed in &config.seeds {
                let task = make_task(
                    config.contexts,
                    config.vocab,
                    config.concentration,
                    seeding::derive(seed, 0xA),
                )?;
                let noise = match config.noise {
                    NoiseKind::Uniform => NoiseModel::uniform(rho),
                    NoiseKind::ShuffledTask => NoiseModel::shuffled_task(rho),
                    NoiseKind::FixedDistribution => {
                        bail!("fixed-distribution noise is not available in bench")
                    }
                };
                let data = corrupt(
                    &task,
                    &noise,
                    config.samples_per_context,
                    seeding::derive(seed, 0xB),
                )?;
                let mut train_config = TrainConfig::new(loss_spec(&config, kind));
                train_config.steps = config.steps;
                train_config.batch_size = config.batch_size;
                train_config.learning_rate = config.learning_rate;
                train_config.warmup_steps = config.warmup_steps;
                train_config.delta_anneal = config.delta_anneal;
                train_config.eval_every = config.eval_every;
                train_config.seed = seeding::derive(seed, 0xC);

                let (model, metrics) = train(&task, &data, &train_config)?;
                let cell = format!("{}_rho{}_seed{}", kind.name(), rho, seed);
                let metrics_file = format!("{cell}.csv");
                write_file(&config.out_dir.join(&metrics_file), &metrics.to_csv())?;
                if config.save_models {
                    write_file(
                        &config.out_dir.join(format!("{cell}_model.json")),
                        &model.to_json()?,
                    )?;
                }

                let weights = dataset_weights(&model, &data, &train_config.loss)?;
                let clean: Vec<bool> = data.examples.iter().map(|e| e.clean).collect();
                let auc = match weight_auc(&weights, &clean) {
                    Ok(v) => v,
                    Err(adatailr::Error::OneClassOnly) => 0.5,
                    Err(e) => return Err(e.into()),
                };
                let last = metrics.rows.last().expect("at least one eval row");
                summaries.push(CellSummary {
                    loss: kind,
                    rho,
                    seed,
                    final_tvd_to_clean: last.tvd_to_clean,
                    final_weight_auc: auc,
                    final_mean_weight: last.mean_weight,
                    final_mean_gamma: last.mean_gamma,
                    final_train_loss: last.train_loss,
                    metrics_file,
                });
                println!(
                    "{cell}: tvd_to_clean={:.6} weight_auc={:.4}",
                    last.tvd_to_clean, auc
                );
            }
        }
    }

    let mut summary = serde_json::to_string_pretty(&summaries)?;
    summary.push('\n');
    write_file(&config.out_dir.join("summary.json"), &summary)?;
    Ok(0)
}

pub fn run_gen_data(args: &GenDataArgs) -> Result<u8> {
    let task = make_task(args.contexts, args.vocab, args.concentration, args.seed)?;
    let noise = match NoiseKind::from(args.noise) {
        NoiseKind::Uniform => NoiseModel::uniform(args.rho),
        NoiseKind::ShuffledTask => NoiseModel::shuffled_task(args.rho),
        NoiseKind::FixedDistribution => {
            let path = args
                .noise_task
                .as_ref()
                .context("fixed-distribution noise needs --noise-task")?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading noise task {}", path.display()))?;
            let noise_task = CleanTask::from_json(&text)?;
            NoiseModel::fixed(args.rho, noise_task.conditionals)
        }
    };
    let data = corrupt(
        &task,
        &noise,
        args.samples_per_context,
        seeding::derive(args.seed, 1),
    )?;
    write_file(&args.out.join("task.json"), &{
        let mut t = task.to_json()?;
        t.push('\n');
        t
    })?;
    write_file(&args.out.join("dataset.jsonl"), &data.to_jsonl()?)?;
    let clean = data.examples.iter().filter(|e| e.clean).count();
    println!(
        "wrote {} examples ({} clean, {} noisy) for C={} N={} to {}",
        data.examples.len(),
        clean,
        data.examples.len() - clean,
        args.contexts,
        args.vocab,
        args.out.display()
    );
    Ok(0)
}

pub fn run_diversity(args: &DiversityArgs) -> Result<u8> {
    let corpus_text = fs::read_to_string(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let reference_text = fs::read_to_string(&args.reference)
        .with_context(|| format!("reading reference {}", args.reference.display()))?;

    let jsonl = args
        .corpus
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl"));
    let (corpus, reference): (Corpus, BTreeSet<u32>) = if jsonl {
        (
            corpus_from_jsonl(&corpus_text)?,
            reference_from_ids(&reference_text)
                .context("a token-id corpus needs a numeric reference vocabulary")?,
        )
    } else {
        let mut tokenizer = WhitespaceTokenizer::new();
        let corpus = corpus_from_text(&corpus_text, &mut tokenizer);
        let reference = reference_from_text(&reference_text, &mut tokenizer);
        (corpus, reference)
    };

    let count = corpus.documents.len();
    if count == 0 {
        bail!("corpus {} has no documents", args.corpus.display());
    }
    let sizes = match &args.sizes {
        Some(sizes) => sizes.clone(),
        None => default_log_sizes(count),
    };

    let report = corpus::diversity_report(&corpus, &reference, &sizes, args.seed)?;

    let mut report_text = serde_json::to_string_pretty(&report)?;
    report_text.push('\n');
    write_file(&args.out.join("report.json"), &report_text)?;

    let mut histogram = String::from("token_id,count\n");
    for (token, count) in &report.histogram {
        histogram.push_str(&format!("{token},{count}\n"));
    }
    write_file(&args.out.join("histogram.csv"), &histogram)?;

    let mut saturation = String::from("sample_size,unique_in_reference\n");
    for point in &report.saturation {
        saturation.push_str(&format!(
            "{},{}\n",
            point.sample_size, point.unique_in_reference
        ));
    }
    write_file(&args.out.join("saturation.csv"), &saturation)?;

    println!(
        "{} documents, {} unique tokens, {} in reference; outputs in {}",
        count,
        report.unique_total,
        report.unique_in_reference,
        args.out.display()
    );
    Ok(0)
}

/// Ten log-spaced sample sizes from 1 to the document count, deduplicated.
fn default_log_sizes(count: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = (0..10)
        .map(|i| {
            ((count as f64).powf(i as f64 / 9.0)).round() as usize
        })
        .map(|s| s.clamp(1, count))
        .collect();
    sizes.dedup();
    sizes
}

pub fn run_grad_check(args: &GradCheckArgs) -> Result<u8> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut all_ok = true;
    for kind in [LossKind::Kld, LossKind::TaiLr, LossKind::AdaTaiLr] {
        let mut worst: f64 = 0.0;
        for _ in 0..args.trials {
            let rows = 1 + rng.random_range(0..4);
            let vocab = 2 + rng.random_range(0..7);
            let logits: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..vocab).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect())
                .collect();
            let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..vocab)).collect();
            let mut spec = LossSpec::new(kind);
            spec.gamma = rng.random::<f64>();
            spec.lambda = 0.1 + rng.random::<f64>() * 3.9;
            spec.delta = rng.random::<f64>() * 0.5;

            let analytic = losses::loss_grad(&logits, &labels, &spec)?;
            let weights: Vec<f64> = logits
                .iter()
                .zip(&labels)
                .map(|(row, &y)| {
                    let p = losses::softmax(row);
                    match kind {
                        LossKind::Kld => 1.0,
                        LossKind::TaiLr => {
                            losses::reweight_factor(p[y], spec.gamma).max(spec.delta)
                        }
                        LossKind::AdaTaiLr => losses::reweight_factor(
                            p[y],
                            losses::adatailr_gamma(&p, y, spec.lambda),
                        )
                        .max(spec.delta),
                        _ => unreachable!(),
                    }
                })
                .collect();
            let fd = gradcheck::central_difference(&logits, &labels, &weights, args.step);
            worst = worst.max(gradcheck::relative_error(&analytic, &fd));
        }
        let ok = worst <= args.tol;
        all_ok &= ok;
        println!(
            "{}: {} (max relative error {worst:.3e} over {} trials)",
            kind.name(),
            if ok { "PASS" } else { "FAIL" },
            args.trials,
        );
    }
    Ok(if all_ok { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sizes_are_ascending_and_bounded() {
        for count in [1, 2, 9, 10, 1000] {
            let sizes = default_log_sizes(count);
            assert!(!sizes.is_empty());
            assert!(sizes.windows(2).all(|w| w[0] < w[1]) || sizes.len() == 1);
            assert_eq!(*sizes.last().unwrap(), count);
            assert!(*sizes.first().unwrap() >= 1);
        }
    }
}
