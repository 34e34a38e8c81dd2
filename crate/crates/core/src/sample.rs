//! Model variants and per-exam sample assembly.
//!
//! Each variant pairs a different image configuration with a different text
//! source: single images with label prompts, per-eye image pairs with label
//! prompts or diagnosis summaries, all four images with the conclusion, or
//! per-eye pairs with an extra clinical-temporal context text. Exams missing
//! a required field or image are skipped and counted, never fabricated.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::fnv1a64;
use crate::error::{Error, Result};
use crate::exam::{
    DrGrade, ExamRecord, EyeImage, FieldOfView, ImageQuality, Laterality,
};
use crate::imageio::resolve_image;
use crate::prompt::{
    exam_result_summary, PromptBundle, Prompter, QualityToken,
};
use crate::tensor::ImageTensor;

/// The five base model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    /// One image per sample, label-template text.
    #[serde(rename = "unilateral-s")]
    UnilateralS,
    /// Two images of one eye, label-template text.
    #[serde(rename = "unilateral-d-labels")]
    UnilateralDLabels,
    /// Two images of one eye, deterministic eye-diagnosis summary text.
    #[serde(rename = "unilateral-d-summary")]
    UnilateralDSummary,
    /// All four exam images, ophthalmologist conclusion text.
    #[serde(rename = "bilateral-concl")]
    BilateralConcl,
    /// Unilateral-D plus clinical-temporal context conditioning.
    #[serde(rename = "clinical-temporal")]
    ClinicalTemporal,
}

impl VariantKind {
    pub const BASE: [VariantKind; 4] = [
        VariantKind::UnilateralS,
        VariantKind::UnilateralDLabels,
        VariantKind::UnilateralDSummary,
        VariantKind::BilateralConcl,
    ];

    pub fn images_per_sample(self) -> usize {
        match self {
            VariantKind::UnilateralS => 1,
            VariantKind::UnilateralDLabels
            | VariantKind::UnilateralDSummary
            | VariantKind::ClinicalTemporal => 2,
            VariantKind::BilateralConcl => 4,
        }
    }

    pub fn text_source(self) -> TextSource {
        match self {
            VariantKind::UnilateralS
            | VariantKind::UnilateralDLabels
            | VariantKind::ClinicalTemporal => TextSource::LabelTemplate,
            VariantKind::UnilateralDSummary => TextSource::EyeSummary,
            VariantKind::BilateralConcl => TextSource::Conclusion,
        }
    }

    pub fn context_enabled(self) -> bool {
        matches!(self, VariantKind::ClinicalTemporal)
    }

    pub fn token(self) -> &'static str {
        match self {
            VariantKind::UnilateralS => "unilateral-s",
            VariantKind::UnilateralDLabels => "unilateral-d-labels",
            VariantKind::UnilateralDSummary => "unilateral-d-summary",
            VariantKind::BilateralConcl => "bilateral-concl",
            VariantKind::ClinicalTemporal => "clinical-temporal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextSource {
    LabelTemplate,
    EyeSummary,
    Conclusion,
}

fn default_context_fraction() -> f64 {
    0.5
}

/// A training target: one variant or a combination whose losses are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: VariantSelector,
    /// Fraction of training samples that receive the context text
    /// (clinical-temporal only).
    #[serde(default = "default_context_fraction")]
    pub context_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariantSelector {
    Single(VariantKind),
    Combined(Vec<VariantKind>),
}

impl VariantConfig {
    pub fn single(kind: VariantKind) -> VariantConfig {
        VariantConfig {
            variant: VariantSelector::Single(kind),
            context_fraction: default_context_fraction(),
        }
    }

    pub fn combined(kinds: Vec<VariantKind>) -> VariantConfig {
        VariantConfig {
            variant: VariantSelector::Combined(kinds),
            context_fraction: default_context_fraction(),
        }
    }

    /// The sample streams trained together (one for single variants).
    pub fn streams(&self) -> Vec<VariantKind> {
        match &self.variant {
            VariantSelector::Single(k) => vec![*k],
            VariantSelector::Combined(ks) => ks.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.context_fraction) {
            return Err(Error::invalid("context_fraction", "must lie in [0, 1]"));
        }
        match &self.variant {
            VariantSelector::Single(_) => Ok(()),
            VariantSelector::Combined(kinds) => {
                if kinds.is_empty() {
                    return Err(Error::empty("combined sub-variants"));
                }
                if kinds.iter().any(|k| k.context_enabled()) {
                    return Err(Error::invalid(
                        "variant",
                        "combined variants may only contain base models",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn id(&self) -> String {
        match &self.variant {
            VariantSelector::Single(k) => k.token().to_string(),
            VariantSelector::Combined(ks) => {
                let names: Vec<&str> = ks.iter().map(|k| k.token()).collect();
                format!("combined({})", names.join("+"))
            }
        }
    }
}

/// One input/text pair ready for encoding.
#[derive(Debug, Clone)]
pub struct AssembledSample {
    pub exam_id: String,
    pub patient_id: String,
    pub images: Vec<ImageTensor>,
    pub bundle: PromptBundle,
    /// Samples with equal keys are mutual positives in a batch.
    pub category: u64,
    /// Evaluation label (eye grade, or worst eye grade for exam-level).
    pub label: Option<DrGrade>,
}

/// Samples plus skip accounting for a record set.
#[derive(Debug, Clone, Default)]
pub struct SampleBuild {
    pub samples: Vec<AssembledSample>,
    pub skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
}

impl SampleBuild {
    fn skip(&mut self, reason: &str) {
        self.skipped += 1;
        *self.skip_reasons.entry(reason.to_string()).or_insert(0) += 1;
    }

    fn merge(&mut self, other: SampleBuild) {
        self.samples.extend(other.samples);
        self.skipped += other.skipped;
        for (k, v) in other.skip_reasons {
            *self.skip_reasons.entry(k).or_insert(0) += v;
        }
    }
}

/// Maps exam_id to the one-line result text used as the next exam's
/// "previous exam showed ..." context.
pub fn prior_result_lookup(records: &[ExamRecord]) -> HashMap<String, String> {
    records
        .iter()
        .map(|r| (r.exam_id.clone(), exam_result_summary(r)))
        .collect()
}

fn find_image(
    exam: &ExamRecord,
    side: Laterality,
    field: FieldOfView,
) -> Option<&EyeImage> {
    exam.images
        .iter()
        .find(|i| i.laterality == side && i.field == field)
}

fn quality_token(images: &[&EyeImage]) -> QualityToken {
    if images.iter().any(|i| i.quality == ImageQuality::Ungradable) {
        QualityToken::PoorQuality
    } else {
        QualityToken::Gradable
    }
}

fn category_of(text: &str) -> u64 {
    fnv1a64(text.as_bytes())
}

fn resolve_all(base_dir: &Path, images: &[&EyeImage]) -> Result<Vec<ImageTensor>> {
    images.iter().map(|i| resolve_image(base_dir, i)).collect()
}

/// Builds every sample a variant derives from one exam. Image pixels are
/// resolved here; missing diagnoses, eyes, or conclusions skip the sample
/// with a counted reason.
pub fn build_samples(
    exam: &ExamRecord,
    kind: VariantKind,
    prompter: &Prompter,
    prior_lookup: &HashMap<String, String>,
    base_dir: &Path,
) -> Result<SampleBuild> {
    let mut out = SampleBuild::default();

    let context_text = if kind.context_enabled() {
        let prior = exam
            .prior_exam_id
            .as_deref()
            .and_then(|id| prior_lookup.get(id))
            .map(|s| s.as_str());
        Some(prompter.clinical_temporal_text(&exam.clinical, prior))
    } else {
        None
    };

    match kind {
        VariantKind::UnilateralS => {
            for image in &exam.images {
                let Some(diag) = exam.diagnosis_for(image.laterality) else {
                    out.skip("missing eye diagnosis");
                    continue;
                };
                let quality = quality_token(&[image]);
                let bundle = prompter.label_prompt(diag.dr_grade.phrase(), quality)?;
                out.samples.push(AssembledSample {
                    exam_id: exam.exam_id.clone(),
                    patient_id: exam.patient_id.clone(),
                    images: resolve_all(base_dir, &[image])?,
                    category: category_of(&bundle.primary_text),
                    bundle,
                    label: Some(diag.dr_grade),
                });
            }
        }
        VariantKind::UnilateralDLabels
        | VariantKind::UnilateralDSummary
        | VariantKind::ClinicalTemporal => {
            for side in [Laterality::Left, Laterality::Right] {
                let Some(diag) = exam.diagnosis_for(side) else {
                    out.skip("missing eye diagnosis");
                    continue;
                };
                let (mac, disc) = (
                    find_image(exam, side, FieldOfView::MaculaCentered),
                    find_image(exam, side, FieldOfView::DiscCentered),
                );
                let (Some(mac), Some(disc)) = (mac, disc) else {
                    out.skip("missing eye image");
                    continue;
                };
                let pair = [mac, disc];
                let mut bundle = match kind.text_source() {
                    TextSource::LabelTemplate => prompter
                        .label_prompt(diag.dr_grade.phrase(), quality_token(&pair))?,
                    TextSource::EyeSummary => {
                        let text = prompter.eye_summary(diag, &exam.conclusion_text);
                        PromptBundle {
                            primary_text: text.clone(),
                            variants: vec![text],
                            context_text: None,
                        }
                    }
                    TextSource::Conclusion => unreachable!("not a unilateral source"),
                };
                bundle.context_text = context_text.clone();
                out.samples.push(AssembledSample {
                    exam_id: exam.exam_id.clone(),
                    patient_id: exam.patient_id.clone(),
                    images: resolve_all(base_dir, &pair)?,
                    category: category_of(&bundle.primary_text),
                    bundle,
                    label: Some(diag.dr_grade),
                });
            }
        }
        VariantKind::BilateralConcl => {
            let conclusion = exam.conclusion_text.trim();
            if conclusion.is_empty() {
                out.skip("missing conclusion");
                return Ok(out);
            }
            let mut four = Vec::with_capacity(4);
            for (side, field) in [
                (Laterality::Left, FieldOfView::MaculaCentered),
                (Laterality::Left, FieldOfView::DiscCentered),
                (Laterality::Right, FieldOfView::MaculaCentered),
                (Laterality::Right, FieldOfView::DiscCentered),
            ] {
                match find_image(exam, side, field) {
                    Some(img) => four.push(img),
                    None => {
                        out.skip("missing eye image");
                        return Ok(out);
                    }
                }
            }
            let bundle = PromptBundle {
                primary_text: conclusion.to_string(),
                variants: vec![conclusion.to_string()],
                context_text: None,
            };
            out.samples.push(AssembledSample {
                exam_id: exam.exam_id.clone(),
                patient_id: exam.patient_id.clone(),
                images: resolve_all(base_dir, &four)?,
                category: category_of(&bundle.primary_text),
                bundle,
                label: exam.worst_grade(),
            });
        }
    }
    Ok(out)
}

/// Assembles all samples of a record list for one variant.
pub fn build_all(
    records: &[ExamRecord],
    kind: VariantKind,
    prompter: &Prompter,
    prior_lookup: &HashMap<String, String>,
    base_dir: &Path,
) -> Result<SampleBuild> {
    let mut out = SampleBuild::default();
    for exam in records {
        out.merge(build_samples(exam, kind, prompter, prior_lookup, base_dir)?);
    }
    Ok(out)
}
