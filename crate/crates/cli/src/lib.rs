//! Command implementations behind the `ocuclip` binary.
//!
//! Five commands wire the core crate end to end: `generate` a synthetic
//! dataset, `split` it patient-disjointly, `train` a model variant,
//! `evaluate` checkpoints into per-class AUC reports, and `report` to merge
//! reports (plus user-supplied paper-reported baseline rows) into one table.
//!
//! Every command is driven by an optional run-config file; command-line
//! flags override config values. Exit codes: 0 success, 1 usage or config
//! error, 2 runtime failure.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ocuclip_core::checkpoint::Checkpoint;
use ocuclip_core::eval::{evaluate_checkpoint, render_table, EvalReport};
use ocuclip_core::exam::{load_manifest, save_manifest, DrGrade, ExamRecord};
use ocuclip_core::partition::split_patients;
use ocuclip_core::prompt::{AugmentationMap, Prompter, TemplateSet};
use ocuclip_core::sample::VariantConfig;
use ocuclip_core::synthetic::{write_dataset, SyntheticSpec};
use ocuclip_core::train::{train, Dataset, TrainConfig};

pub const OUT_ENV: &str = "OCUCLIP_OUT";

/// Errors carrying their process exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit code 1.
    Usage(String),
    /// Failure while executing a valid request: exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn usage(e: impl fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

// ── Run configuration file ──────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub manifest: PathBuf,
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
}

fn default_train_ratio() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub variant: VariantConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub checkpoints: Vec<PathBuf>,
    pub manifests: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub reports: Vec<PathBuf>,
    #[serde(default)]
    pub baselines: Vec<PathBuf>,
}

/// One config file drives a whole run; each command reads its own section.
/// `parse(serialize(cfg))` is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {path:?}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {path:?}: {e}")))
    }

    pub fn serialize(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Global flags shared by every command; flags win over the config file.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl GlobalOpts {
    fn load_config(&self) -> CliResult<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }

    fn resolve_out(&self, config: &RunConfig) -> CliResult<PathBuf> {
        if let Some(out) = &self.out {
            return Ok(out.clone());
        }
        if let Some(out) = &config.out {
            return Ok(out.clone());
        }
        if let Ok(root) = std::env::var(OUT_ENV) {
            return Ok(PathBuf::from(root));
        }
        Err(CliError::Usage(format!(
            "no output directory: pass --out, set `out` in the config, or set {OUT_ENV}"
        )))
    }

    fn prompter(&self, config: &RunConfig) -> CliResult<Prompter> {
        let templates = match &config.templates {
            Some(path) => TemplateSet::load(path).map_err(CliError::usage)?,
            None => TemplateSet::default(),
        };
        let augmentations = match &config.augmentations {
            Some(path) => AugmentationMap::load(path).map_err(CliError::usage)?,
            None => AugmentationMap::bundled(),
        };
        Ok(Prompter::new(templates, augmentations))
    }
}

// ── generate ────────────────────────────────────────────────────────────────

/// Flag-level overrides for the `generate` section.
#[derive(Debug, Clone, Default)]
pub struct GenerateArgs {
    pub patients: Option<usize>,
    pub exams_min: Option<usize>,
    pub exams_max: Option<usize>,
    pub image_size: Option<usize>,
    pub strength: Option<f64>,
    pub prior_correlation: Option<f64>,
    pub prior_band: Option<u8>,
    pub ungradable_fraction: Option<f64>,
    pub force: bool,
}

pub fn cmd_generate(global: &GlobalOpts, args: &GenerateArgs) -> CliResult<()> {
    let config = global.load_config()?;
    let out_dir = global.resolve_out(&config)?;

    let mut spec = config.generate.clone().unwrap_or_default();
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    if let Some(p) = args.patients {
        spec.n_patients = p;
    }
    if let Some(lo) = args.exams_min {
        spec.exams_per_patient.0 = lo;
    }
    if let Some(hi) = args.exams_max {
        spec.exams_per_patient.1 = hi;
    }
    if let Some(s) = args.image_size {
        spec.image_size = (s, s);
    }
    if let Some(s) = args.strength {
        spec.grade_signal_strength = s;
    }
    if let Some(c) = args.prior_correlation {
        spec.prior_correlation = c;
    }
    if let Some(b) = args.prior_band {
        spec.prior_band = b;
    }
    if let Some(u) = args.ungradable_fraction {
        spec.ungradable_fraction = u;
    }
    spec.validate().map_err(CliError::usage)?;

    if out_dir.exists() && !args.force {
        let occupied = fs::read_dir(&out_dir)
            .map_err(CliError::runtime)?
            .next()
            .is_some();
        if occupied {
            return Err(CliError::Usage(format!(
                "output directory {out_dir:?} is not empty (use --force to overwrite)"
            )));
        }
    }

    let (manifest, records) = write_dataset(&spec, &out_dir).map_err(CliError::runtime)?;
    print_dataset_summary(&records);
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn print_dataset_summary(records: &[ExamRecord]) {
    let patients: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.patient_id.as_str()).collect();
    let mut histogram: BTreeMap<u8, usize> = BTreeMap::new();
    for rec in records {
        if let Some(g) = rec.worst_grade() {
            *histogram.entry(g.ordinal()).or_insert(0) += 1;
        }
    }
    println!("patients: {}", patients.len());
    println!("exams: {}", records.len());
    println!(
        "images: {}",
        records.iter().map(|r| r.images.len()).sum::<usize>()
    );
    print!("grade histogram:");
    for g in DrGrade::ALL {
        print!(
            " {}={}",
            g.token(),
            histogram.get(&g.ordinal()).copied().unwrap_or(0)
        );
    }
    println!();
}

// ── split ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct SplitArgs {
    pub manifest: Option<PathBuf>,
    pub train_ratio: Option<f64>,
}

pub fn cmd_split(global: &GlobalOpts, args: &SplitArgs) -> CliResult<()> {
    let config = global.load_config()?;
    let out_dir = global.resolve_out(&config)?;

    let section = config.split.clone();
    let manifest = args
        .manifest
        .clone()
        .or_else(|| section.as_ref().map(|s| s.manifest.clone()))
        .ok_or_else(|| CliError::Usage("no manifest given (--manifest or config)".into()))?;
    let train_ratio = args
        .train_ratio
        .or(section.as_ref().map(|s| s.train_ratio))
        .unwrap_or_else(default_train_ratio);
    let seed = global.seed.or(config.seed).unwrap_or(0);

    let records = load_manifest(&manifest).map_err(CliError::runtime)?;
    let plan = split_patients(&records, train_ratio, seed).map_err(CliError::usage)?;

    fs::create_dir_all(&out_dir).map_err(CliError::runtime)?;
    plan.save(&out_dir.join("split.json")).map_err(CliError::runtime)?;

    // Partition manifests keep image paths valid by re-anchoring them on the
    // source dataset directory, canonicalized so the result is independent
    // of both the working directory and the output location.
    let base = manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let base = fs::canonicalize(&base).map_err(CliError::runtime)?;
    let rebase = |records: Vec<ExamRecord>| -> Vec<ExamRecord> {
        records
            .into_iter()
            .map(|mut r| {
                for img in r.images.iter_mut() {
                    if let ocuclip_core::exam::ImageRef::Path(p) = &img.reference {
                        if p.is_relative() {
                            img.reference =
                                ocuclip_core::exam::ImageRef::Path(base.join(p));
                        }
                    }
                }
                r
            })
            .collect()
    };
    let train_records: Vec<ExamRecord> = records
        .iter()
        .filter(|r| plan.train.contains(&r.patient_id))
        .cloned()
        .collect();
    let val_records: Vec<ExamRecord> = records
        .iter()
        .filter(|r| plan.validation.contains(&r.patient_id))
        .cloned()
        .collect();
    save_manifest(&rebase(train_records), &out_dir.join("train.jsonl"))
        .map_err(CliError::runtime)?;
    save_manifest(&rebase(val_records), &out_dir.join("validation.jsonl"))
        .map_err(CliError::runtime)?;

    println!(
        "patients: {} train / {} validation (ratio {train_ratio}, seed {seed})",
        plan.train.len(),
        plan.validation.len()
    );
    println!("wrote {}", out_dir.join("split.json").display());
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub variant: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
}

fn parse_variant(name: &str) -> CliResult<VariantConfig> {
    if let Some(rest) = name.strip_prefix("combined:") {
        let kinds = rest
            .split('+')
            .map(|k| serde_json::from_value(serde_json::Value::String(k.to_string())))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Usage(format!("unknown variant in `{name}`")))?;
        Ok(VariantConfig::combined(kinds))
    } else {
        let kind = serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| CliError::Usage(format!("unknown variant `{name}`")))?;
        Ok(VariantConfig::single(kind))
    }
}

pub fn cmd_train(global: &GlobalOpts, args: &TrainArgs) -> CliResult<()> {
    let config = global.load_config()?;
    let out_dir = global.resolve_out(&config)?;
    let prompter = global.prompter(&config)?;

    let section = config.train.clone();
    let variant = match &args.variant {
        Some(name) => parse_variant(name)?,
        None => section
            .as_ref()
            .map(|s| s.variant.clone())
            .ok_or_else(|| CliError::Usage("no variant given (--variant or config)".into()))?,
    };
    let mut train_cfg = section
        .as_ref()
        .map(|s| s.train.clone())
        .unwrap_or_default();
    if let Some(e) = args.epochs {
        train_cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        train_cfg.base_lr = lr;
    }
    if let Some(b) = args.batch_size {
        train_cfg.batch_size = b;
    }
    if let Some(seed) = global.seed.or(config.seed) {
        train_cfg.seed = seed;
    }
    let train_manifest = args
        .train_manifest
        .clone()
        .or_else(|| section.as_ref().map(|s| s.train_manifest.clone()))
        .ok_or_else(|| CliError::Usage("no train manifest (--train-manifest or config)".into()))?;
    let val_manifest = args
        .val_manifest
        .clone()
        .or_else(|| section.as_ref().map(|s| s.val_manifest.clone()))
        .ok_or_else(|| CliError::Usage("no validation manifest (--val-manifest or config)".into()))?;

    variant.validate().map_err(CliError::usage)?;
    train_cfg.validate().map_err(CliError::usage)?;

    let train_ds = Dataset::from_manifest(&train_manifest).map_err(CliError::runtime)?;
    let val_ds = Dataset::from_manifest(&val_manifest).map_err(CliError::runtime)?;

    let outcome =
        train(&variant, &train_cfg, &train_ds, &val_ds, &prompter).map_err(CliError::runtime)?;

    fs::create_dir_all(&out_dir).map_err(CliError::runtime)?;
    let ckpt_path = out_dir.join("checkpoint.ckpt");
    let log_path = out_dir.join("run_log.json");
    outcome.checkpoint.save(&ckpt_path).map_err(CliError::runtime)?;
    outcome.log.save(&log_path).map_err(CliError::runtime)?;

    for e in &outcome.log.epochs {
        println!(
            "epoch {:>2}  loss {:.4}  lr {:.3e}  val macro AUC {}",
            e.epoch,
            e.mean_loss,
            e.lr_last,
            e.val_macro_auc
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    println!(
        "selected epoch {} (val macro AUC {:.4}); skipped samples: {}",
        outcome.log.selected_epoch, outcome.log.selected_val_auc, outcome.log.skipped_samples
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("run log: {}", log_path.display());
    Ok(())
}

// ── evaluate ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub checkpoints: Vec<PathBuf>,
    /// `name=path` pairs or bare paths (named by file stem).
    pub manifests: Vec<String>,
}

fn parse_manifest_arg(arg: &str) -> ManifestEntry {
    match arg.split_once('=') {
        Some((name, path)) => ManifestEntry {
            name: name.to_string(),
            path: PathBuf::from(path),
        },
        None => {
            let path = PathBuf::from(arg);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            ManifestEntry { name, path }
        }
    }
}

pub fn cmd_evaluate(global: &GlobalOpts, args: &EvaluateArgs) -> CliResult<()> {
    let config = global.load_config()?;
    let out_dir = global.resolve_out(&config)?;
    let prompter = global.prompter(&config)?;

    let section = config.evaluate.clone();
    let checkpoints: Vec<PathBuf> = if args.checkpoints.is_empty() {
        section
            .as_ref()
            .map(|s| s.checkpoints.clone())
            .unwrap_or_default()
    } else {
        args.checkpoints.clone()
    };
    let manifests: Vec<ManifestEntry> = if args.manifests.is_empty() {
        section.map(|s| s.manifests).unwrap_or_default()
    } else {
        args.manifests.iter().map(|m| parse_manifest_arg(m)).collect()
    };
    if checkpoints.is_empty() || manifests.is_empty() {
        return Err(CliError::Usage(
            "evaluate needs at least one checkpoint and one manifest".into(),
        ));
    }

    let mut datasets = Vec::with_capacity(manifests.len());
    for entry in &manifests {
        let ds = Dataset::from_manifest(&entry.path).map_err(CliError::runtime)?;
        datasets.push((entry.name.clone(), ds));
    }

    fs::create_dir_all(&out_dir).map_err(CliError::runtime)?;
    let mut reports = Vec::with_capacity(checkpoints.len());
    for (idx, path) in checkpoints.iter().enumerate() {
        let ckpt = Checkpoint::load(path).map_err(CliError::runtime)?;
        let report =
            evaluate_checkpoint(&ckpt, &datasets, &prompter).map_err(CliError::runtime)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into());
        // Index prefix keeps reports distinct when checkpoints share a stem.
        let report_path = out_dir.join(format!("report-{idx:02}-{stem}.json"));
        report.save(&report_path).map_err(CliError::runtime)?;
        println!("wrote {}", report_path.display());
        reports.push(report);
    }

    let table = render_table(&reports);
    print!("{table}");
    fs::write(out_dir.join("table.txt"), &table).map_err(CliError::runtime)?;
    Ok(())
}

// ── report ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct ReportArgs {
    pub reports: Vec<PathBuf>,
    pub baselines: Vec<PathBuf>,
}

pub fn cmd_report(global: &GlobalOpts, args: &ReportArgs) -> CliResult<()> {
    let config = global.load_config()?;
    let out_dir = global.resolve_out(&config)?;

    let section = config.report.clone().unwrap_or_default();
    let report_paths = if args.reports.is_empty() {
        section.reports.clone()
    } else {
        args.reports.clone()
    };
    let baseline_paths = if args.baselines.is_empty() {
        section.baselines.clone()
    } else {
        args.baselines.clone()
    };
    if report_paths.is_empty() && baseline_paths.is_empty() {
        return Err(CliError::Usage("report needs at least one report file".into()));
    }

    let mut reports = Vec::new();
    // Baseline rows are user-supplied paper values, never computed here;
    // label them so the rendered table cannot be misread.
    for path in &baseline_paths {
        let mut report = EvalReport::load(path).map_err(CliError::runtime)?;
        if !report.model_id.ends_with("(paper-reported)") {
            report.model_id = format!("{} (paper-reported)", report.model_id);
        }
        reports.push(report);
    }
    for path in &report_paths {
        reports.push(EvalReport::load(path).map_err(CliError::runtime)?);
    }

    let table = render_table(&reports);
    print!("{table}");
    fs::create_dir_all(&out_dir).map_err(CliError::runtime)?;
    fs::write(out_dir.join("table.txt"), &table).map_err(CliError::runtime)?;
    let merged = serde_json::to_string_pretty(&reports).expect("reports serialize");
    fs::write(out_dir.join("reports.json"), merged).map_err(CliError::runtime)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ocuclip_core::sample::VariantKind;

    #[test]
    fn run_config_roundtrip_is_identity() {
        let cfg = RunConfig {
            seed: Some(7),
            out: Some(PathBuf::from("/tmp/run")),
            templates: None,
            augmentations: None,
            generate: Some(SyntheticSpec {
                seed: 7,
                n_patients: 50,
                ..SyntheticSpec::default()
            }),
            split: Some(SplitSection {
                manifest: PathBuf::from("data/manifest.jsonl"),
                train_ratio: 0.8,
            }),
            train: Some(TrainSection {
                variant: VariantConfig::single(VariantKind::UnilateralDLabels),
                train: TrainConfig::default(),
                train_manifest: PathBuf::from("split/train.jsonl"),
                val_manifest: PathBuf::from("split/validation.jsonl"),
            }),
            evaluate: Some(EvaluateSection {
                checkpoints: vec![PathBuf::from("run/checkpoint.ckpt")],
                manifests: vec![ManifestEntry {
                    name: "synthetic-test".into(),
                    path: PathBuf::from("test/manifest.jsonl"),
                }],
            }),
            report: None,
        };
        let parsed: RunConfig = serde_json::from_str(&cfg.serialize()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn variant_parsing_accepts_known_names() {
        assert_eq!(
            parse_variant("unilateral-d-labels").unwrap(),
            VariantConfig::single(VariantKind::UnilateralDLabels)
        );
        let combined = parse_variant("combined:bilateral-concl+unilateral-s").unwrap();
        assert_eq!(
            combined,
            VariantConfig::combined(vec![
                VariantKind::BilateralConcl,
                VariantKind::UnilateralS
            ])
        );
        assert!(parse_variant("no-such-model").is_err());
    }

    #[test]
    fn manifest_arg_parsing() {
        let named = parse_manifest_arg("holdout-test=/data/test.jsonl");
        assert_eq!(named.name, "holdout-test");
        assert_eq!(named.path, PathBuf::from("/data/test.jsonl"));
        let bare = parse_manifest_arg("/data/messidor.jsonl");
        assert_eq!(bare.name, "messidor");
    }

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 2);
    }
}
