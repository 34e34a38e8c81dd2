//! Training orchestration: variant sample streams, the contrastive step,
//! warm-up cosine scheduling, per-epoch zero-shot validation, and checkpoint
//! selection on validation macro DR AUC.
//!
//! Everything stochastic draws from streams derived from the run seed, so a
//! fixed seed reproduces the selected checkpoint bit-for-bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint, CheckpointMeta};
use crate::encoder::{EncoderConfig, ModelGraph, ModelParams};
use crate::error::{Error, Result};
use crate::eval::{grade_aucs, GradeAucs};
use crate::exam::{load_manifest, patient_ids, ExamRecord};
use crate::fusion::fuse_exam_node;
use crate::graph::NodeId;
use crate::objective::{contrastive_batch_node, MatchTargets};
use crate::optim::{AdamW, AdamWConfig};
use crate::partition::filter_gradable;
use crate::prompt::Prompter;
use crate::rng::{stream_rng, tags};
use crate::sample::{
    build_all, prior_result_lookup, AssembledSample, SampleBuild, VariantConfig,
    VariantKind, VariantSelector,
};
use crate::schedule::WarmupCosineSchedule;

/// Records plus the directory image paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<ExamRecord>,
    pub base_dir: PathBuf,
}

impl Dataset {
    /// Wraps in-memory records (inline image tensors).
    pub fn in_memory(records: Vec<ExamRecord>) -> Dataset {
        Dataset {
            records,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_manifest(path: &Path) -> Result<Dataset> {
        let records = load_manifest(path)?;
        let base_dir = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Dataset { records, base_dir })
    }
}

fn default_epochs() -> usize {
    15
}
fn default_lr() -> f64 {
    1e-4
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_batch_size() -> usize {
    16
}

/// Optimization hyperparameters. Defaults: 15 epochs, AdamW at a base
/// learning rate of 1e-4 with warm-up over the first dataset pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub base_lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            base_lr: default_lr(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            seed: 0,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::invalid("base_lr", "must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size", "must be at least 2"));
        }
        self.encoder.validate()
    }
}

/// Per-epoch training record for the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr_first: f64,
    pub lr_last: f64,
    pub val_macro_auc: Option<f64>,
    pub val_auc_per_grade: Vec<Option<f64>>,
    pub context_applied: usize,
    pub context_total: usize,
}

/// Full run log, serialized next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub model_id: String,
    pub variant: VariantConfig,
    pub train_config: TrainConfig,
    pub train_samples_per_stream: Vec<usize>,
    pub validation_samples: usize,
    pub skipped_samples: usize,
    pub skip_reasons: BTreeMap<String, usize>,
    pub epochs: Vec<EpochLog>,
    pub selected_epoch: usize,
    pub selected_val_auc: f64,
}

impl RunLog {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunLog> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: RunLog,
}

/// The sample-assembly variant used for zero-shot evaluation. Combined
/// models share one encoder; they are evaluated with their first
/// sub-variant's assembly.
pub fn eval_kind(variant: &VariantConfig) -> VariantKind {
    match &variant.variant {
        VariantSelector::Single(k) => *k,
        VariantSelector::Combined(ks) => ks[0],
    }
}

fn assert_patient_disjoint(train: &[ExamRecord], val: &[ExamRecord]) -> Result<()> {
    let train_patients: std::collections::BTreeSet<_> =
        patient_ids(train).into_iter().collect();
    for p in patient_ids(val) {
        if train_patients.contains(&p) {
            return Err(Error::invalid(
                "manifests",
                format!("patient {p} appears in both train and validation"),
            ));
        }
    }
    Ok(())
}

/// Trains one variant and returns the checkpoint that maximized validation
/// macro DR zero-shot AUC (ties resolved to the earliest epoch).
pub fn train(
    variant: &VariantConfig,
    cfg: &TrainConfig,
    train_ds: &Dataset,
    val_ds: &Dataset,
    prompter: &Prompter,
) -> Result<TrainOutcome> {
    variant.validate()?;
    cfg.validate()?;
    if train_ds.records.is_empty() || val_ds.records.is_empty() {
        return Err(Error::empty("manifest records"));
    }
    assert_patient_disjoint(&train_ds.records, &val_ds.records)?;

    // Training keeps ungradable images (their prompts carry the quality
    // token); validation is gradable-only.
    let streams = variant.streams();
    let prior = prior_result_lookup(&train_ds.records);
    let mut stream_samples: Vec<Vec<AssembledSample>> = Vec::new();
    let mut build_totals = SampleBuild::default();
    for kind in &streams {
        let build = build_all(
            &train_ds.records,
            *kind,
            prompter,
            &prior,
            &train_ds.base_dir,
        )?;
        if build.samples.len() < 2 {
            return Err(Error::invalid(
                "train manifest",
                format!(
                    "variant {} assembled only {} samples",
                    kind.token(),
                    build.samples.len()
                ),
            ));
        }
        stream_samples.push(build.samples.clone());
        build_totals.skipped += build.skipped;
        for (k, v) in build.skip_reasons {
            *build_totals.skip_reasons.entry(k).or_insert(0) += v;
        }
    }

    let val_gradable = filter_gradable(&val_ds.records);
    let val_prior = prior_result_lookup(&val_ds.records);
    let val_build = build_all(
        &val_gradable,
        eval_kind(variant),
        prompter,
        &val_prior,
        &val_ds.base_dir,
    )?;
    if val_build.samples.is_empty() {
        return Err(Error::empty("validation samples"));
    }

    let mut params = ModelParams::init(cfg.encoder.clone(), cfg.seed)?;
    let mut optimizer = AdamW::new(
        &params,
        AdamWConfig {
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );

    let steps_per_epoch = stream_samples
        .iter()
        .map(|s| s.len().div_ceil(cfg.batch_size))
        .max()
        .expect("at least one stream");
    let schedule = WarmupCosineSchedule::new(
        cfg.base_lr,
        steps_per_epoch,
        steps_per_epoch * cfg.epochs,
    )?;

    let use_context = eval_kind(variant).context_enabled();
    let mut best: Option<(f64, usize, ModelParams, GradeAucs)> = None;
    let mut epoch_logs = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut orders: Vec<Vec<usize>> = Vec::with_capacity(streams.len());
        for (si, samples) in stream_samples.iter().enumerate() {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            let mut rng = stream_rng(
                cfg.seed,
                tags::EPOCH_SHUFFLE,
                (epoch * streams.len() + si) as u64,
            );
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            orders.push(order);
        }
        let mut text_rng = stream_rng(cfg.seed, tags::TEXT_VARIANT, epoch as u64);
        let mut gate_rng = stream_rng(cfg.seed, tags::CONTEXT_GATE, epoch as u64);

        let mut loss_sum = 0.0;
        let mut context_applied = 0usize;
        let mut context_total = 0usize;
        let (lr_first, lr_last) = (
            schedule.lr_at(global_step),
            schedule.lr_at(global_step + steps_per_epoch - 1),
        );

        for step in 0..steps_per_epoch {
            let mut mg = ModelGraph::new(&params);
            let mut loss_nodes: Vec<NodeId> = Vec::with_capacity(streams.len());
            for (si, kind) in streams.iter().enumerate() {
                let samples = &stream_samples[si];
                let order = &orders[si];
                let batch: Vec<&AssembledSample> = (0..cfg.batch_size)
                    .map(|b| &samples[order[(step * cfg.batch_size + b) % samples.len()]])
                    .collect();

                let mut text_nodes = Vec::with_capacity(batch.len());
                let mut image_nodes = Vec::with_capacity(batch.len());
                let mut categories = Vec::with_capacity(batch.len());
                for sample in &batch {
                    let ctx_node = if kind.context_enabled() {
                        match &sample.bundle.context_text {
                            Some(ctx) => {
                                context_total += 1;
                                if gate_rng.random::<f64>() < variant.context_fraction {
                                    context_applied += 1;
                                    Some(mg.encode_text(&params, ctx)?)
                                } else {
                                    None
                                }
                            }
                            None => None,
                        }
                    } else {
                        None
                    };

                    let imgs: Vec<NodeId> = sample
                        .images
                        .iter()
                        .map(|img| mg.encode_image(&params, img))
                        .collect::<Result<_>>()?;
                    image_nodes.push(fuse_exam_node(&mut mg, &imgs, ctx_node)?);

                    let variants = &sample.bundle.variants;
                    let pick = text_rng.random_range(0..variants.len());
                    text_nodes.push(mg.encode_text(&params, &variants[pick])?);
                    categories.push(sample.category);
                }
                loss_nodes.push(contrastive_batch_node(
                    &mut mg,
                    &params,
                    &text_nodes,
                    &image_nodes,
                    &MatchTargets::Categories(categories),
                )?);
            }

            let total = loss_nodes
                .iter()
                .copied()
                .reduce(|a, b| mg.graph.add(a, b))
                .expect("at least one stream loss");
            let loss_val = mg.graph.value(total).item();
            if !loss_val.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            let grads = mg.param_gradients(&params, total);
            optimizer.step(&mut params, &grads, schedule.lr_at(global_step));
            loss_sum += loss_val;
            global_step += 1;
        }

        let val = grade_aucs(&params, &val_build.samples, prompter, use_context)?;
        let macro_auc = val.macro_auc;
        if let Some(auc) = macro_auc {
            let better = match &best {
                Some((best_auc, _, _, _)) => auc > *best_auc,
                None => true,
            };
            if better {
                best = Some((auc, epoch, params.clone(), val.clone()));
            }
        }
        epoch_logs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / steps_per_epoch as f64,
            lr_first,
            lr_last,
            val_macro_auc: macro_auc,
            val_auc_per_grade: val.per_grade.clone(),
            context_applied,
            context_total,
        });
    }

    let (selected_auc, selected_epoch, selected_params, _) = best.ok_or_else(|| {
        Error::invalid(
            "validation",
            "no epoch produced a validation AUC (no grade had both positives and negatives)",
        )
    })?;

    let meta = CheckpointMeta {
        model_id: variant.id(),
        variant: variant.clone(),
        encoder: cfg.encoder.clone(),
        config_hash: config_hash(&(variant, cfg)),
        selected_epoch: Some(selected_epoch),
        validation_auc: Some(selected_auc),
    };
    let log = RunLog {
        model_id: meta.model_id.clone(),
        variant: variant.clone(),
        train_config: cfg.clone(),
        train_samples_per_stream: stream_samples.iter().map(|s| s.len()).collect(),
        validation_samples: val_build.samples.len(),
        skipped_samples: build_totals.skipped,
        skip_reasons: build_totals.skip_reasons,
        epochs: epoch_logs,
        selected_epoch,
        selected_val_auc: selected_auc,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            meta,
            params: selected_params,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::split_patients;
    use crate::synthetic::{generate_synthetic, SyntheticSpec};

    fn tiny_dataset(seed: u64, n_patients: usize) -> (Dataset, Dataset) {
        let records = generate_synthetic(&SyntheticSpec {
            seed,
            n_patients,
            exams_per_patient: (1, 2),
            image_size: (16, 16),
            grade_signal_strength: 1.0,
            prior_correlation: 0.5,
            prior_band: 1,
            ungradable_fraction: 0.0,
        })
        .unwrap();
        let plan = split_patients(&records, 0.8, seed).unwrap();
        let train: Vec<ExamRecord> = records
            .iter()
            .filter(|r| plan.train.contains(&r.patient_id))
            .cloned()
            .collect();
        let val: Vec<ExamRecord> = records
            .iter()
            .filter(|r| plan.validation.contains(&r.patient_id))
            .cloned()
            .collect();
        (Dataset::in_memory(train), Dataset::in_memory(val))
    }

    fn tiny_config(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            base_lr: 3e-3,
            batch_size: 8,
            seed,
            encoder: EncoderConfig {
                embed_dim: 16,
                vision_channels: vec![4, 8, 8, 8],
                text_bins: 256,
                text_embed_dim: 16,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_reduces_loss_on_learnable_data() {
        let (train_ds, val_ds) = tiny_dataset(21, 12);
        let prompter = Prompter::default();
        let out = train(
            &VariantConfig::single(VariantKind::UnilateralDLabels),
            &tiny_config(4, 0),
            &train_ds,
            &val_ds,
            &prompter,
        )
        .unwrap();
        let first = out.log.epochs.first().unwrap().mean_loss;
        let last = out.log.epochs.last().unwrap().mean_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        // Epoch-mean losses over the first three epochs are non-increasing.
        let means: Vec<f64> = out.log.epochs.iter().map(|e| e.mean_loss).collect();
        assert!(
            means[0] >= means[1] && means[1] >= means[2],
            "first-3-epoch means increased: {means:?}"
        );
        assert_eq!(out.log.epochs.len(), 4);
        assert_eq!(out.checkpoint.meta.selected_epoch, Some(out.log.selected_epoch));
    }

    #[test]
    fn checkpoint_selection_breaks_ties_toward_earliest_epoch() {
        // Strong signal and a small validation set drive validation AUC to a
        // plateau (typically 1.0); the selected epoch must be the first one
        // attaining the maximum.
        let (train_ds, val_ds) = tiny_dataset(31, 14);
        let prompter = Prompter::default();
        let mut cfg = tiny_config(6, 2);
        cfg.base_lr = 5e-3;
        let out = train(
            &VariantConfig::single(VariantKind::UnilateralDLabels),
            &cfg,
            &train_ds,
            &val_ds,
            &prompter,
        )
        .unwrap();
        let best = out.log.selected_val_auc;
        let first_at_best = out
            .log
            .epochs
            .iter()
            .find(|e| e.val_macro_auc == Some(best))
            .unwrap()
            .epoch;
        assert_eq!(out.log.selected_epoch, first_at_best);
        let ties = out
            .log
            .epochs
            .iter()
            .filter(|e| e.val_macro_auc == Some(best))
            .count();
        assert!(ties >= 1);
    }

    #[test]
    fn same_seed_gives_bit_identical_checkpoints() {
        let (train_ds, val_ds) = tiny_dataset(22, 10);
        let prompter = Prompter::default();
        let variant = VariantConfig::single(VariantKind::UnilateralS);
        let cfg = tiny_config(2, 7);
        let a = train(&variant, &cfg, &train_ds, &val_ds, &prompter).unwrap();
        let b = train(&variant, &cfg, &train_ds, &val_ds, &prompter).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.log, b.log);

        let cfg2 = tiny_config(2, 8);
        let c = train(&variant, &cfg2, &train_ds, &val_ds, &prompter).unwrap();
        assert_ne!(a.checkpoint.params, c.checkpoint.params);
    }

    #[test]
    fn shared_patients_are_rejected() {
        let (train_ds, _) = tiny_dataset(23, 8);
        let prompter = Prompter::default();
        let err = train(
            &VariantConfig::single(VariantKind::UnilateralDLabels),
            &tiny_config(1, 0),
            &train_ds,
            &train_ds,
            &prompter,
        )
        .unwrap_err();
        assert!(err.to_string().contains("both train and validation"), "{err}");
    }

    #[test]
    fn context_fraction_is_logged_near_half() {
        let (train_ds, val_ds) = tiny_dataset(24, 30);
        let prompter = Prompter::default();
        let mut variant = VariantConfig::single(VariantKind::ClinicalTemporal);
        variant.context_fraction = 0.5;
        let out = train(&variant, &tiny_config(2, 3), &train_ds, &val_ds, &prompter).unwrap();
        let applied: usize = out.log.epochs.iter().map(|e| e.context_applied).sum();
        let total: usize = out.log.epochs.iter().map(|e| e.context_total).sum();
        assert!(total > 50);
        let fraction = applied as f64 / total as f64;
        assert!((0.35..=0.65).contains(&fraction), "fraction {fraction}");
    }

    #[test]
    fn combined_variant_trains_and_selects_epoch() {
        let (train_ds, val_ds) = tiny_dataset(25, 10);
        let prompter = Prompter::default();
        let variant = VariantConfig::combined(vec![
            VariantKind::BilateralConcl,
            VariantKind::UnilateralS,
        ]);
        let out = train(&variant, &tiny_config(2, 1), &train_ds, &val_ds, &prompter).unwrap();
        assert_eq!(out.log.train_samples_per_stream.len(), 2);
        assert!(out.checkpoint.meta.validation_auc.is_some());
        assert_eq!(out.checkpoint.meta.model_id, "combined(bilateral-concl+unilateral-s)");
    }

    #[test]
    fn divergence_aborts_with_diagnostic() {
        let (train_ds, val_ds) = tiny_dataset(26, 8);
        let prompter = Prompter::default();
        let mut cfg = tiny_config(2, 0);
        cfg.base_lr = 1e60;
        let err = train(
            &VariantConfig::single(VariantKind::UnilateralS),
            &cfg,
            &train_ds,
            &val_ds,
            &prompter,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn projection_gradients_flow_through_batch() {
        // No dead heads: on a random batch, at least 99% of each projection's
        // parameters receive nonzero gradient.
        let (train_ds, _) = tiny_dataset(27, 10);
        let prompter = Prompter::default();
        let prior = prior_result_lookup(&train_ds.records);
        let build = build_all(
            &train_ds.records,
            VariantKind::UnilateralDLabels,
            &prompter,
            &prior,
            &train_ds.base_dir,
        )
        .unwrap();
        let params = ModelParams::init(EncoderConfig::default(), 9).unwrap();
        let mut mg = ModelGraph::new(&params);
        let batch = &build.samples[..8.min(build.samples.len())];
        let mut text_nodes = Vec::new();
        let mut image_nodes = Vec::new();
        let mut categories = Vec::new();
        for s in batch {
            let imgs: Vec<NodeId> = s
                .images
                .iter()
                .map(|img| mg.encode_image(&params, img).unwrap())
                .collect();
            image_nodes.push(fuse_exam_node(&mut mg, &imgs, None).unwrap());
            text_nodes.push(mg.encode_text(&params, &s.bundle.primary_text).unwrap());
            categories.push(s.category);
        }
        let loss = contrastive_batch_node(
            &mut mg,
            &params,
            &text_nodes,
            &image_nodes,
            &MatchTargets::Categories(categories),
        )
        .unwrap();
        let grads = mg.param_gradients(&params, loss);
        for name in ["vision.proj.w", "text.proj.w"] {
            let g = &grads[params.slot(name)];
            let nonzero = g.data().iter().filter(|v| **v != 0.0).count();
            assert!(
                nonzero as f64 >= 0.99 * g.len() as f64,
                "{name}: only {nonzero}/{} nonzero",
                g.len()
            );
        }
    }

    #[test]
    fn combined_step_update_equals_manual_sum_of_gradients() {
        // Two-sample batch, two streams: the update from the summed loss must
        // match an AdamW step fed the manually summed per-loss gradients.
        let (train_ds, _) = tiny_dataset(28, 8);
        let prompter = Prompter::default();
        let prior = prior_result_lookup(&train_ds.records);
        let uni = build_all(
            &train_ds.records,
            VariantKind::UnilateralS,
            &prompter,
            &prior,
            &train_ds.base_dir,
        )
        .unwrap();
        let bil = build_all(
            &train_ds.records,
            VariantKind::BilateralConcl,
            &prompter,
            &prior,
            &train_ds.base_dir,
        )
        .unwrap();
        let params = ModelParams::init(EncoderConfig::default(), 4).unwrap();

        let build_loss = |mg: &mut ModelGraph, samples: &[AssembledSample]| -> NodeId {
            let mut t = Vec::new();
            let mut v = Vec::new();
            let mut c = Vec::new();
            for s in samples {
                let imgs: Vec<NodeId> = s
                    .images
                    .iter()
                    .map(|img| mg.encode_image(&params, img).unwrap())
                    .collect();
                v.push(fuse_exam_node(mg, &imgs, None).unwrap());
                t.push(mg.encode_text(&params, &s.bundle.primary_text).unwrap());
                c.push(s.category);
            }
            contrastive_batch_node(mg, &params, &t, &v, &MatchTargets::Categories(c))
                .unwrap()
        };

        let mut mg = ModelGraph::new(&params);
        let l1 = build_loss(&mut mg, &uni.samples[..2]);
        let l2 = build_loss(&mut mg, &bil.samples[..2]);
        let sum = mg.graph.add(l1, l2);

        let g_sum = mg.param_gradients(&params, sum);
        let g1 = mg.param_gradients(&params, l1);
        let g2 = mg.param_gradients(&params, l2);

        let mut params_a = params.clone();
        let mut opt_a = AdamW::new(&params_a, AdamWConfig::default());
        opt_a.step(&mut params_a, &g_sum, 1e-3);

        let manual: Vec<crate::tensor::Tensor> = (0..params.len())
            .map(|s| {
                let mut t = g1[s].clone();
                t.add_assign(&g2[s]);
                t
            })
            .collect();
        let mut params_b = params.clone();
        let mut opt_b = AdamW::new(&params_b, AdamWConfig::default());
        opt_b.step(&mut params_b, &manual, 1e-3);

        for slot in 0..params.len() {
            for (a, b) in params_a
                .tensor(slot)
                .data()
                .iter()
                .zip(params_b.tensor(slot).data())
            {
                assert!((a - b).abs() <= 1e-10, "slot {slot}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn run_log_roundtrips() {
        let (train_ds, val_ds) = tiny_dataset(29, 8);
        let prompter = Prompter::default();
        let out = train(
            &VariantConfig::single(VariantKind::UnilateralS),
            &tiny_config(1, 0),
            &train_ds,
            &val_ds,
            &prompter,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        out.log.save(&path).unwrap();
        assert_eq!(RunLog::load(&path).unwrap(), out.log);
    }
}
