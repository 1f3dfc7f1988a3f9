//! Behavioural tests for the command-line surface: exit codes, file outputs,
//! and override plumbing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adatailr"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn verify_all_writes_seven_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let output = run(&[
        "verify",
        "--trials",
        "300",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{output:?}");
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "lemma_dist_approx.json",
            "lemma_norms.json",
            "lemma_sampled_tvd.json",
            "lemma_smooth.json",
            "lemma_zdiff.json",
            "theorem1.json",
            "theorem2.json",
        ]
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theorem1.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["trials"], 300);
}

#[test]
fn verify_rejects_unknown_suite_with_usage_error() {
    let output = run(&["verify", "--suite", "nonsense"]);
    assert_eq!(code(&output), 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("suite"), "stderr: {stderr}");
}

#[test]
fn bench_obeys_overrides_and_writes_cells() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.cfg");
    fs::write(
        &config,
        "contexts=4\nvocab=8\nsamples_per_context=40\nsteps=40\nbatch_size=16\n\
         eval_every=20\nrhos=0,0.4\nlosses=kld,adatailr\nseeds=1,2\n",
    )
    .unwrap();
    let out = dir.path().join("grid_out");
    let output = run(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--lambda",
        "2.0",
    ]);
    assert_eq!(code(&output), 0, "{output:?}");

    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("lambda=2.0"), "resolved: {resolved}");

    // 2 losses x 2 rhos x 2 seeds = 8 metric files + summary + config.
    let csvs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".csv")
        })
        .count();
    assert_eq!(csvs, 8);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 8);
    for cell in summary.as_array().unwrap() {
        assert!(cell["final_tvd_to_clean"].as_f64().unwrap() <= 1.0);
    }

    let csv = fs::read_to_string(out.join("kld_rho0.4_seed1.csv")).unwrap();
    assert!(csv.starts_with("step,train_loss,mean_gamma,mean_weight,tvd_to_clean,weight_auc,d_hat\n"));
}

#[test]
fn bench_rejects_bad_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "no_such_key=5\n").unwrap();
    let output = run(&["bench", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("no_such_key"));
}

#[test]
fn gen_data_rate_extremes_set_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    for (rho, expect_clean) in [("0.0", true), ("1.0", false)] {
        let out = dir.path().join(format!("d{rho}"));
        let output = run(&[
            "gen-data",
            "--contexts",
            "2",
            "--vocab",
            "4",
            "--samples-per-context",
            "25",
            "--rho",
            rho,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "{output:?}");
        let dataset = fs::read_to_string(out.join("dataset.jsonl")).unwrap();
        for line in dataset.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["clean"].as_bool().unwrap(), expect_clean);
        }
        let task: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("task.json")).unwrap()).unwrap();
        assert_eq!(task["C"], 2);
        assert_eq!(task["N"], 4);
    }
}

#[test]
fn gen_data_fixed_distribution_uses_noise_task() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let output = run(&[
        "gen-data",
        "--contexts",
        "3",
        "--vocab",
        "5",
        "--samples-per-context",
        "10",
        "--out",
        base.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);

    // Reuse the generated task as the noise distribution.
    let out = dir.path().join("fixed");
    let noise_task = base.join("task.json");
    let output = run(&[
        "gen-data",
        "--contexts",
        "3",
        "--vocab",
        "5",
        "--samples-per-context",
        "10",
        "--noise",
        "fixed-distribution",
        "--noise-task",
        noise_task.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{output:?}");
    assert!(out.join("dataset.jsonl").exists());

    // Without --noise-task the same request is a usage error.
    let output = run(&[
        "gen-data",
        "--noise",
        "fixed-distribution",
        "--out",
        dir.path().join("missing").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
}

#[test]
fn diversity_counts_match_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("div");
    let output = run(&[
        "diversity",
        "--corpus",
        fixture("toy_corpus.txt").to_str().unwrap(),
        "--reference",
        fixture("toy_reference.txt").to_str().unwrap(),
        "--sizes",
        "1,2,3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{output:?}");

    // Hand counts: 9 distinct tokens, 4 of them ({the, cat, dog, mat}) in the
    // reference; 14 tokens total.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["unique_in_reference"], 4);
    assert_eq!(report["unique_total"], 9);
    let histogram = report["histogram"].as_object().unwrap();
    let total: u64 = histogram.values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 14);

    let saturation = fs::read_to_string(out.join("saturation.csv")).unwrap();
    let mut lines = saturation.lines();
    assert_eq!(lines.next().unwrap(), "sample_size,unique_in_reference");
    let counts: Vec<u64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 3);
    assert!(counts.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(counts[2], 4); // full corpus reaches the diversity count

    let histogram_csv = fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert!(histogram_csv.starts_with("token_id,count\n"));
    assert_eq!(histogram_csv.lines().count(), 10);
}

#[test]
fn diversity_missing_file_is_a_usage_error() {
    let output = run(&[
        "diversity",
        "--corpus",
        "/nonexistent/corpus.txt",
        "--reference",
        fixture("toy_reference.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
}

#[test]
fn grad_check_passes_at_default_tolerance() {
    let output = run(&["grad-check", "--trials", "25"]);
    assert_eq!(code(&output), 0, "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.matches("PASS").count(), 3);
}
