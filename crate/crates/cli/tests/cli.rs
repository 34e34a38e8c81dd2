//! End-to-end command tests: generate -> split -> train -> evaluate -> report,
//! exercised through the library entry points and the installed binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ocuclip_cli::{
    cmd_evaluate, cmd_generate, cmd_report, cmd_split, cmd_train, CliError,
    EvaluateArgs, GenerateArgs, GlobalOpts, ReportArgs, RunConfig, SplitArgs,
    TrainArgs, TrainSection,
};
use ocuclip_core::checkpoint::Checkpoint;
use ocuclip_core::eval::{ClassAuc, DatasetEval, EvalReport};
use ocuclip_core::exam::load_manifest;
use ocuclip_core::sample::{VariantConfig, VariantKind};
use ocuclip_core::train::{RunLog, TrainConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ocuclip"))
}

fn global(out: &Path) -> GlobalOpts {
    GlobalOpts {
        config: None,
        seed: Some(11),
        out: Some(out.to_path_buf()),
    }
}

fn generate_args(patients: usize) -> GenerateArgs {
    GenerateArgs {
        patients: Some(patients),
        exams_min: Some(1),
        exams_max: Some(2),
        image_size: Some(16),
        strength: Some(1.0),
        prior_correlation: Some(0.5),
        prior_band: Some(1),
        ungradable_fraction: Some(0.0),
        force: false,
    }
}

/// Byte-level snapshot of a directory tree, keyed by relative path.
fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn generate_is_deterministic_and_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    cmd_generate(&global(&out_a), &generate_args(6)).unwrap();
    cmd_generate(&global(&out_b), &generate_args(6)).unwrap();
    let (a, b) = (tree_bytes(&out_a), tree_bytes(&out_b));
    assert!(!a.is_empty());
    assert_eq!(a, b, "regenerated tree differs");

    // Default configuration yields the canonical four images per exam.
    let records = load_manifest(&out_a.join("manifest.jsonl")).unwrap();
    assert!(records.iter().all(|r| r.images.len() == 4));
}

#[test]
fn generate_rejects_zero_patients_and_occupied_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let err = cmd_generate(&global(&out), &generate_args(0)).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");

    cmd_generate(&global(&out), &generate_args(2)).unwrap();
    let err = cmd_generate(&global(&out), &generate_args(2)).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");

    let mut args = generate_args(2);
    args.force = true;
    cmd_generate(&global(&out), &args).unwrap();
}

fn generate_and_split(dir: &Path, patients: usize) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    cmd_generate(&global(&data), &generate_args(patients)).unwrap();
    let split = dir.join("split");
    cmd_split(
        &global(&split),
        &SplitArgs {
            manifest: Some(data.join("manifest.jsonl")),
            train_ratio: Some(0.8),
        },
    )
    .unwrap();
    (split.join("train.jsonl"), split.join("validation.jsonl"))
}

#[test]
fn split_writes_disjoint_manifests_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let (train_m, val_m) = generate_and_split(dir.path(), 10);
    let train = load_manifest(&train_m).unwrap();
    let val = load_manifest(&val_m).unwrap();
    assert!(!train.is_empty() && !val.is_empty());
    let train_patients: std::collections::BTreeSet<_> =
        train.iter().map(|r| r.patient_id.clone()).collect();
    assert!(val.iter().all(|r| !train_patients.contains(&r.patient_id)));

    let plan =
        ocuclip_core::partition::SplitPlan::load(&dir.path().join("split/split.json"))
            .unwrap();
    assert!(plan.is_disjoint());
    assert_eq!(plan.train.len() + plan.validation.len(), 10);

    // Image paths in the partition manifests resolve from their location.
    let ds = ocuclip_core::train::Dataset::from_manifest(&train_m).unwrap();
    let img =
        ocuclip_core::imageio::resolve_image(&ds.base_dir, &ds.records[0].images[0])
            .unwrap();
    img.validate().unwrap();
}

fn train_args(train_m: &Path, val_m: &Path, variant: &str, epochs: Option<usize>) -> TrainArgs {
    TrainArgs {
        variant: Some(variant.to_string()),
        epochs,
        lr: Some(1e-3),
        batch_size: Some(8),
        train_manifest: Some(train_m.to_path_buf()),
        val_manifest: Some(val_m.to_path_buf()),
    }
}

#[test]
fn train_defaults_to_15_epochs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let (train_m, val_m) = generate_and_split(dir.path(), 8);
    let run = dir.path().join("run");
    cmd_train(
        &global(&run),
        &train_args(&train_m, &val_m, "unilateral-s", None),
    )
    .unwrap();
    let log = RunLog::load(&run.join("run_log.json")).unwrap();
    assert_eq!(log.train_config.epochs, 15);
    assert_eq!(log.epochs.len(), 15);
    assert!(run.join("checkpoint.ckpt").exists());
}

#[test]
fn train_counts_skipped_samples_for_missing_conclusions() {
    let dir = tempfile::tempdir().unwrap();
    let (train_m, val_m) = generate_and_split(dir.path(), 10);

    // Blank out most conclusions in the training manifest.
    let mut records = load_manifest(&train_m).unwrap();
    let keep = 2.min(records.len());
    for rec in records.iter_mut().skip(keep) {
        rec.conclusion_text = String::new();
    }
    // Keep validation populated so checkpoint selection still works.
    ocuclip_core::exam::save_manifest(&records, &train_m).unwrap();

    let run = dir.path().join("run");
    cmd_train(
        &global(&run),
        &train_args(&train_m, &val_m, "bilateral-concl", Some(2)),
    )
    .unwrap();
    let log = RunLog::load(&run.join("run_log.json")).unwrap();
    assert!(log.skipped_samples > 0, "no skips recorded");
    assert!(log.skip_reasons.contains_key("missing conclusion"));
}

#[test]
fn evaluate_two_checkpoints_renders_two_rows_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let (train_m, val_m) = generate_and_split(dir.path(), 8);
    for (name, variant) in [("run1", "unilateral-s"), ("run2", "unilateral-d-labels")] {
        cmd_train(
            &global(&dir.path().join(name)),
            &train_args(&train_m, &val_m, variant, Some(1)),
        )
        .unwrap();
    }

    let eval_out = dir.path().join("eval");
    cmd_evaluate(
        &global(&eval_out),
        &EvaluateArgs {
            checkpoints: vec![
                dir.path().join("run1/checkpoint.ckpt"),
                dir.path().join("run2/checkpoint.ckpt"),
            ],
            manifests: vec![format!(
                "synthetic-val={}",
                val_m.to_string_lossy()
            )],
        },
    )
    .unwrap();

    let table = fs::read_to_string(eval_out.join("table.txt")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "header + two model rows:\n{table}");
    assert!(lines[0].contains("synthetic-val/noDR"));

    // Machine-readable output re-parses to the same in-memory report.
    let report = EvalReport::load(&eval_out.join("report-01-checkpoint.json")).unwrap();
    let ckpt = Checkpoint::load(&dir.path().join("run2/checkpoint.ckpt")).unwrap();
    let ds = ocuclip_core::train::Dataset::from_manifest(&val_m).unwrap();
    let fresh = ocuclip_core::eval::evaluate_checkpoint(
        &ckpt,
        &[("synthetic-val".to_string(), ds)],
        &ocuclip_core::prompt::Prompter::default(),
    )
    .unwrap();
    assert_eq!(report, fresh);
}

#[test]
fn report_merges_runs_with_paper_reported_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = EvalReport {
        model_id: "FLAIR".to_string(),
        config_hash: "paper-table".to_string(),
        datasets: vec![DatasetEval {
            dataset: "holdout-test".to_string(),
            classes: vec![
                ClassAuc {
                    class: "noDR".into(),
                    auc: Some(0.73),
                },
                ClassAuc {
                    class: "mildDR".into(),
                    auc: Some(0.58),
                },
                ClassAuc {
                    class: "modDR".into(),
                    auc: Some(0.814),
                },
            ],
        }],
    };
    let own = EvalReport {
        model_id: "unilateral-d-labels".to_string(),
        config_hash: "deadbeef".to_string(),
        datasets: vec![DatasetEval {
            dataset: "holdout-test".to_string(),
            classes: vec![ClassAuc {
                class: "noDR".into(),
                auc: Some(0.915),
            }],
        }],
    };
    let baseline_path = dir.path().join("flair.json");
    let own_path = dir.path().join("own.json");
    baseline.save(&baseline_path).unwrap();
    own.save(&own_path).unwrap();

    let out = dir.path().join("report");
    cmd_report(
        &global(&out),
        &ReportArgs {
            reports: vec![own_path],
            baselines: vec![baseline_path],
        },
    )
    .unwrap();
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.contains("FLAIR (paper-reported)"), "{table}");
    assert!(table.contains("0.730"));
    assert!(table.contains("0.580"));
    assert!(table.contains("0.814"));
    assert!(table.contains("0.915"));
}

#[test]
fn config_file_drives_train_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let (train_m, val_m) = generate_and_split(dir.path(), 8);
    let cfg = RunConfig {
        seed: Some(5),
        out: Some(dir.path().join("run")),
        train: Some(TrainSection {
            variant: VariantConfig::single(VariantKind::UnilateralS),
            train: TrainConfig {
                epochs: 3,
                base_lr: 1e-3,
                batch_size: 8,
                ..TrainConfig::default()
            },
            train_manifest: train_m,
            val_manifest: val_m,
        }),
        ..RunConfig::default()
    };
    let cfg_path = dir.path().join("run.json");
    fs::write(&cfg_path, cfg.serialize()).unwrap();

    // Flags override the config: epochs 3 -> 2.
    cmd_train(
        &GlobalOpts {
            config: Some(cfg_path),
            seed: None,
            out: None,
        },
        &TrainArgs {
            epochs: Some(2),
            ..TrainArgs::default()
        },
    )
    .unwrap();
    let log = RunLog::load(&dir.path().join("run/run_log.json")).unwrap();
    assert_eq!(log.train_config.epochs, 2);
    assert_eq!(log.train_config.seed, 5);
}

#[test]
fn binary_exit_codes_follow_contract() {
    let dir = tempfile::tempdir().unwrap();

    // Usage error: unknown flag.
    let status = bin().arg("generate").arg("--no-such-flag").status().unwrap();
    assert_eq!(status.code(), Some(1));

    // Usage error: invalid config value.
    let status = bin()
        .args(["generate", "--patients", "0", "--out"])
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Runtime error: missing manifest file.
    let status = bin()
        .args(["split", "--manifest", "/definitely/not/here.jsonl", "--out"])
        .arg(dir.path().join("y"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Success.
    let status = bin()
        .args(["generate", "--patients", "2", "--image-size", "16", "--seed", "3", "--out"])
        .arg(dir.path().join("ok"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // Help exits 0.
    let status = bin().arg("--help").status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn split_rebases_relative_manifest_paths() {
    // Drive the binary with cwd-relative paths; the partition manifests must
    // still resolve images regardless of where they are loaded from.
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let status = bin().args(args).current_dir(dir.path()).status().unwrap();
        assert_eq!(status.code(), Some(0), "command failed: {args:?}");
    };
    run(&[
        "generate", "--seed", "3", "--patients", "4", "--image-size", "16", "--out", "dev",
    ]);
    run(&[
        "split", "--manifest", "dev/manifest.jsonl", "--seed", "3", "--out", "split",
    ]);
    let train_m = dir.path().join("split/train.jsonl");
    let ds = ocuclip_core::train::Dataset::from_manifest(&train_m).unwrap();
    for rec in &ds.records {
        for img in &rec.images {
            ocuclip_core::imageio::resolve_image(&ds.base_dir, img).unwrap();
        }
    }
}

#[test]
fn out_env_var_provides_default_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-root");
    let status = bin()
        .args(["generate", "--patients", "2", "--image-size", "16"])
        .env("OCUCLIP_OUT", &out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("manifest.jsonl").exists());
}
