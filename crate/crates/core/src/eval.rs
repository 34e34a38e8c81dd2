//! Zero-shot classification and per-class AUC evaluation.
//!
//! A sample is scored against each class by the scalar product between its
//! fused image embedding and the ensembled class-prompt embedding. AUC is
//! the Mann-Whitney statistic: the probability that a random positive
//! outscores a random negative, ties counting one half.

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_image, ensemble_text, EmbeddingVector, ModelParams};
use crate::error::{Error, Result};
use crate::exam::DrGrade;
use crate::fusion::{fuse_exam, FusionInput};
use crate::prompt::{grade_class_prompts, PromptBundle, Prompter};
use crate::sample::AssembledSample;
use crate::tensor::ImageTensor;

/// Mann-Whitney AUC from raw scores:
/// (#{pos > neg} + 0.5 * #{pos = neg}) / (|pos| * |neg|),
/// computed via tie-averaged ranks in O(n log n).
pub fn auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::empty("scores"));
    }
    if pos_scores
        .iter()
        .chain(neg_scores)
        .any(|s| !s.is_finite())
    {
        return Err(Error::invalid("scores", "must be finite"));
    }
    let mut combined: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    combined.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i;
        while j + 1 < combined.len() && combined[j + 1].0 == combined[i].0 {
            j += 1;
        }
        // Ranks are 1-based; a tie group spanning ranks i+1..=j+1 shares the
        // mean rank, which is always a multiple of one half.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        let pos_in_group = combined[i..=j].iter().filter(|(_, p)| *p).count();
        pos_rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let np = pos_scores.len() as f64;
    let nn = neg_scores.len() as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Scores of one fused image embedding against class embeddings.
pub fn zero_shot_from_embeddings(
    image: &EmbeddingVector,
    class_embeddings: &[EmbeddingVector],
) -> Result<Vec<f64>> {
    if class_embeddings.is_empty() {
        return Err(Error::empty("class embeddings"));
    }
    class_embeddings.iter().map(|c| image.dot(c)).collect()
}

/// Zero-shot classification of one image set (optionally with a
/// clinical-temporal context text) against class prompt bundles.
pub fn zero_shot_classify(
    params: &ModelParams,
    images: &[ImageTensor],
    context_text: Option<&str>,
    class_prompts: &[PromptBundle],
) -> Result<Vec<f64>> {
    if class_prompts.is_empty() {
        return Err(Error::empty("class prompts"));
    }
    let fused = fuse_images(params, images, context_text)?;
    let class_embeddings: Vec<EmbeddingVector> = class_prompts
        .iter()
        .map(|b| ensemble_text(params, &b.variants))
        .collect::<Result<_>>()?;
    zero_shot_from_embeddings(&fused, &class_embeddings)
}

fn fuse_images(
    params: &ModelParams,
    images: &[ImageTensor],
    context_text: Option<&str>,
) -> Result<EmbeddingVector> {
    let image_embeddings: Vec<EmbeddingVector> = images
        .iter()
        .map(|img| encode_image(params, img))
        .collect::<Result<_>>()?;
    // The context enters as the raw post-projection text feature, exactly as
    // in training; only the fused sum is normalized.
    let context_embedding = match context_text {
        Some(text) => Some(crate::encoder::encode_text(params, text)?),
        None => None,
    };
    let apply = context_embedding.is_some();
    fuse_exam(
        &FusionInput {
            image_embeddings,
            context_embedding,
        },
        apply,
    )
}

/// One-vs-rest AUC per DR grade over assembled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeAucs {
    /// Indexed by grade ordinal; `None` where the grade lacks positives or
    /// negatives.
    pub per_grade: Vec<Option<f64>>,
    /// Unweighted mean of the available per-grade AUCs.
    pub macro_auc: Option<f64>,
    pub n_samples: usize,
}

/// Scores every sample against the six grade prompts and computes
/// one-vs-rest AUCs. Context is used when `use_context` is set and the
/// sample carries a context text.
pub fn grade_aucs(
    params: &ModelParams,
    samples: &[AssembledSample],
    prompter: &Prompter,
    use_context: bool,
) -> Result<GradeAucs> {
    let prompts = grade_class_prompts(prompter)?;
    let class_embeddings: Vec<EmbeddingVector> = prompts
        .iter()
        .map(|(_, b)| ensemble_text(params, &b.variants))
        .collect::<Result<_>>()?;

    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    let mut labels: Vec<DrGrade> = Vec::with_capacity(samples.len());
    for sample in samples {
        let Some(label) = sample.label else { continue };
        let context = if use_context {
            sample.bundle.context_text.as_deref()
        } else {
            None
        };
        let fused = fuse_images(params, &sample.images, context)?;
        scores.push(zero_shot_from_embeddings(&fused, &class_embeddings)?);
        labels.push(label);
    }

    let mut per_grade = Vec::with_capacity(DrGrade::ALL.len());
    for (g, grade) in DrGrade::ALL.iter().enumerate() {
        let pos: Vec<f64> = scores
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == *grade)
            .map(|(s, _)| s[g])
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l != *grade)
            .map(|(s, _)| s[g])
            .collect();
        per_grade.push(if pos.is_empty() || neg.is_empty() {
            None
        } else {
            Some(auc(&pos, &neg)?)
        });
    }
    let available: Vec<f64> = per_grade.iter().flatten().copied().collect();
    let macro_auc = if available.is_empty() {
        None
    } else {
        Some(available.iter().sum::<f64>() / available.len() as f64)
    };
    Ok(GradeAucs {
        per_grade,
        macro_auc,
        n_samples: scores.len(),
    })
}

/// Evaluates a checkpoint on named datasets: per-grade one-vs-rest AUC per
/// dataset, assembled with the checkpoint's own variant. Grades without both
/// positives and negatives in a manifest report as not-applicable.
pub fn evaluate_checkpoint(
    checkpoint: &crate::checkpoint::Checkpoint,
    datasets: &[(String, crate::train::Dataset)],
    prompter: &Prompter,
) -> Result<EvalReport> {
    let kind = crate::train::eval_kind(&checkpoint.meta.variant);
    let mut report = EvalReport {
        model_id: checkpoint.meta.model_id.clone(),
        config_hash: checkpoint.meta.config_hash.clone(),
        datasets: Vec::with_capacity(datasets.len()),
    };
    for (name, dataset) in datasets {
        let prior = crate::sample::prior_result_lookup(&dataset.records);
        let build = crate::sample::build_all(
            &dataset.records,
            kind,
            prompter,
            &prior,
            &dataset.base_dir,
        )?;
        let aucs = grade_aucs(
            &checkpoint.params,
            &build.samples,
            prompter,
            kind.context_enabled(),
        )?;
        report.datasets.push(DatasetEval {
            dataset: name.clone(),
            classes: DrGrade::ALL
                .iter()
                .zip(&aucs.per_grade)
                .map(|(g, auc)| ClassAuc {
                    class: g.token().to_string(),
                    auc: *auc,
                })
                .collect(),
        });
    }
    Ok(report)
}

// ── Report types ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub class: String,
    /// `None` renders as n/a (class absent from the manifest).
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEval {
    pub dataset: String,
    pub classes: Vec<ClassAuc>,
}

/// Per-class AUC table over datasets for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub config_hash: String,
    pub datasets: Vec<DatasetEval>,
}

impl EvalReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<EvalReport> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Renders reports as a fixed-width grid: one row per model, one column per
/// dataset/class pair, AUC to three decimals, `n/a` for missing cells.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut columns: Vec<(String, String)> = Vec::new();
    for report in reports {
        for ds in &report.datasets {
            for class in &ds.classes {
                let key = (ds.dataset.clone(), class.class.clone());
                if !columns.contains(&key) {
                    columns.push(key);
                }
            }
        }
    }
    let headers: Vec<String> = columns
        .iter()
        .map(|(d, c)| format!("{d}/{c}"))
        .collect();
    let model_width = reports
        .iter()
        .map(|r| r.model_id.len())
        .chain(["model".len()])
        .max()
        .unwrap_or(5);
    let widths: Vec<usize> = headers.iter().map(|h| h.len().max(5)).collect();

    let mut out = String::new();
    out.push_str(&format!("{:<model_width$}", "model"));
    for (h, w) in headers.iter().zip(&widths) {
        out.push_str(&format!("  {h:>w$}"));
    }
    out.push('\n');
    for report in reports {
        out.push_str(&format!("{:<model_width$}", report.model_id));
        for ((d, c), w) in columns.iter().zip(&widths) {
            let cell = report
                .datasets
                .iter()
                .find(|ds| ds.dataset == *d)
                .and_then(|ds| ds.classes.iter().find(|cl| cl.class == *c))
                .map(|cl| match cl.auc {
                    Some(v) => format!("{v:.3}"),
                    None => "n/a".to_string(),
                })
                .unwrap_or_else(|| "n/a".to_string());
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }
    out
}
