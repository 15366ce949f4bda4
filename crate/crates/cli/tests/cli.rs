//! End-to-end checks of the command-line surface: output shapes, the NA
//! policy, validation messages, and process exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contagion"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn table1_preset_emits_36_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 3\npreset = \"table1\"\nclusters = 40\n\n\
         [estimands]\ncovariate_draws = 20\nhistories = 2\n",
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("CONTAGION_WORKERS", "4")
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,cluster,treatment_scheme,beta1_hat,beta2_hat,ce,se,ie,de,ide"
    );
    assert_eq!(lines.len(), 1 + 36);

    // Block and cluster rows print the NA token in the IDE column; no cell
    // is ever empty.
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 10);
        assert!(cells.iter().all(|c| !c.is_empty()));
        if cells[2] == "block" || cells[2] == "cluster" {
            assert_eq!(cells[9], "NA", "{line}");
        }
    }
    assert!(out.join("run_meta.json").exists());
    assert!(out.join("datasets").read_dir().unwrap().count() == 36);
}

#[test]
fn same_seed_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 5\nclusters = 120\nemit_datasets = false\n\n[estimands]\ncovariate_draws = 30\nhistories = 3\n\n\
         [[cells]]\nscenario = \"decaying_internal\"\nn = 2\nrho = -0.1\n\
         exp_beta1 = 0.5\nexp_beta2 = 0.5\nallocation = { kind = \"bernoulli\", p = 0.5 }\n",
    );
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn block_with_odd_cluster_size_is_a_named_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\n[[cells]]\nscenario = \"constant\"\nn = 5\nrho = 0.0\n\
         exp_beta1 = 0.5\nexp_beta2 = 0.5\nallocation = { kind = \"block\", fraction = 0.5 }\n",
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("allocation.fraction"), "{stderr}");
}

#[test]
fn curves_emit_long_format_with_finite_or_na_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 2\nclusters = 150\n\n[[cells]]\nscenario = \"constant\"\nn = 2\nrho = 0.0\n\
         exp_beta1 = 1.0\nexp_beta2 = 1.0\nallocation = { kind = \"two_stage\", low_coverage = 0.0, high_coverage = 0.5, arm_prob = 0.5 }\n\n\
         [curves]\nt_min = 0.1\nt_max = 0.4\npoints = 4\n",
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["curves", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario,design,t,value,mc_se");
    assert_eq!(lines.len(), 1 + 4);
    for line in &lines[1..] {
        assert!(line.contains("two_stage"));
        for cell in line.split(',') {
            assert!(!cell.is_empty());
        }
    }
}

#[test]
fn oracle_check_exit_codes_signal_failures() {
    let dir = tempfile::tempdir().unwrap();
    let clean = bin()
        .args(["oracle-check", "--out"])
        .arg(dir.path().join("clean"))
        .output()
        .unwrap();
    assert!(clean.status.success());
    let report =
        std::fs::read_to_string(dir.path().join("clean").join("oracle_report.csv")).unwrap();
    assert!(report.lines().count() > 10);
    assert!(!report.contains("false"));

    // The mutation hook must trip at least one check.
    let faulty = bin()
        .args(["oracle-check", "--inject-beta2-sign-flip", "--out"])
        .arg(dir.path().join("faulty"))
        .output()
        .unwrap();
    assert!(!faulty.status.success());
    assert!(faulty.status.code().unwrap() >= 1);
}

#[test]
fn fit_round_trips_an_emitted_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 4\nclusters = 500\n\n[estimands]\ncovariate_draws = 20\nhistories = 2\n\n\
         [[cells]]\nscenario = \"constant\"\nn = 2\nrho = -0.1\n\
         exp_beta1 = 0.5\nexp_beta2 = 0.5\nallocation = { kind = \"bernoulli\", p = 0.5 }\n",
    );
    let out = dir.path().join("out");
    assert!(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let dataset = out
        .join("datasets")
        .read_dir()
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let fit_out = dir.path().join("fit");
    assert!(bin()
        .args(["fit", "--scenario", "constant", "--data"])
        .arg(&dataset)
        .arg("--out")
        .arg(&fit_out)
        .status()
        .unwrap()
        .success());
    let report = std::fs::read_to_string(fit_out.join("fit_report.csv")).unwrap();
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    // The refit coefficients match the run's own fit bit-for-bit.
    let beta1_run = results.lines().nth(1).unwrap().split(',').nth(3).unwrap();
    let beta1_fit = report.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(beta1_run, beta1_fit);
    assert!(fit_out.join("fit_report.jsonl").exists());
}

#[test]
fn estimands_command_reports_exact_hazard_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args([
            "estimands",
            "--scenario",
            "constant",
            "--n",
            "2",
            "--seed",
            "6",
            "--exp-beta1",
            "0.5",
            "--exp-beta2",
            "0.9",
            "--covariate-draws",
            "40",
            "--histories",
            "4",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(out.join("estimands.csv")).unwrap();
    let hse = text.lines().find(|l| l.starts_with("hse,")).unwrap();
    let hie = text.lines().find(|l| l.starts_with("hie,")).unwrap();
    assert!(hse.contains("0.500000"), "{hse}");
    assert!(hie.contains("0.900000"), "{hie}");
}
