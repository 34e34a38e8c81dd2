//! Text generation for training and zero-shot classification.
//!
//! Three kinds of text are produced: quality-aware label prompts with
//! knowledge augmentations, deterministic per-eye diagnosis summaries, and
//! clinical-temporal context strings describing the patient's clinical data
//! plus the previous exam's result. Templates and the augmentation map ship
//! with defaults and are overridable from JSON files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{DrGrade, ExamRecord, EyeDiagnosis, Laterality};

const DEFAULT_TEMPLATES: &str = include_str!("../assets/templates.json");
const DEFAULT_AUGMENTATIONS: &str = include_str!("../assets/augmentations.json");

/// Values for the `[quality]` slot of the label template. A single token is
/// used for low quality so prompts keep the `a <token> fundus image of ...`
/// shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityToken {
    #[serde(rename = "gradable")]
    Gradable,
    #[serde(rename = "poor-quality")]
    PoorQuality,
}

impl QualityToken {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityToken::Gradable => "gradable",
            QualityToken::PoorQuality => "poor-quality",
        }
    }
}

/// Key -> template, with `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl TemplateSet {
    pub const REQUIRED: [&'static str; 3] = ["label", "clinical_prior", "clinical_first"];

    pub fn from_json(json: &str) -> Result<TemplateSet> {
        let templates: BTreeMap<String, String> = serde_json::from_str(json)?;
        for key in Self::REQUIRED {
            if !templates.contains_key(key) {
                return Err(Error::invalid(
                    "templates",
                    format!("missing required template `{key}`"),
                ));
            }
        }
        Ok(TemplateSet { templates })
    }

    pub fn load(path: &Path) -> Result<TemplateSet> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn render(&self, key: &str, slots: &[(&str, &str)]) -> String {
        let mut text = self.templates[key].clone();
        for (slot, value) in slots {
            text = text.replace(&format!("{{{slot}}}"), value);
        }
        text
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::from_json(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

/// Label -> descriptive phrases used to enrich prompts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentationMap {
    entries: BTreeMap<String, Vec<String>>,
}

impl AugmentationMap {
    pub fn from_json(json: &str) -> Result<AugmentationMap> {
        Ok(AugmentationMap {
            entries: serde_json::from_str(json)?,
        })
    }

    pub fn load(path: &Path) -> Result<AugmentationMap> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> AugmentationMap {
        AugmentationMap::from_json(DEFAULT_AUGMENTATIONS)
            .expect("bundled augmentations are valid")
    }

    pub fn phrases(&self, label: &str) -> Option<&[String]> {
        self.entries.get(label).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, label: &str, phrases: Vec<String>) {
        self.entries.insert(label.to_string(), phrases);
    }
}

/// Generated text for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub primary_text: String,
    /// Augmented variants, deduplicated, order-stable.
    pub variants: Vec<String>,
    pub context_text: Option<String>,
}

/// Produces the free-text summaries that an external text-generation client
/// would otherwise write. The bundled [`TemplateSummaries`] is deterministic;
/// swap in another implementation via [`Prompter::with_summaries`].
pub trait SummarySource: Send + Sync {
    fn eye_diagnosis_summary(&self, diag: &EyeDiagnosis, conclusion: &str) -> String;
    fn clinical_summary(&self, clinical: &BTreeMap<String, String>) -> String;
}

/// Deterministic template-based summaries (the default source).
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateSummaries;

impl SummarySource for TemplateSummaries {
    fn eye_diagnosis_summary(&self, diag: &EyeDiagnosis, conclusion: &str) -> String {
        eye_diagnosis_summary(diag, conclusion)
    }
    fn clinical_summary(&self, clinical: &BTreeMap<String, String>) -> String {
        clinical_summary(clinical)
    }
}

/// Template engine combining a [`TemplateSet`], an [`AugmentationMap`], and
/// a [`SummarySource`].
#[derive(Clone)]
pub struct Prompter {
    pub templates: TemplateSet,
    pub augmentations: AugmentationMap,
    summaries: std::sync::Arc<dyn SummarySource>,
}

impl std::fmt::Debug for Prompter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prompter")
            .field("templates", &self.templates)
            .field("augmentations", &self.augmentations)
            .finish_non_exhaustive()
    }
}

impl Default for Prompter {
    fn default() -> Self {
        Prompter {
            templates: TemplateSet::default(),
            augmentations: AugmentationMap::bundled(),
            summaries: std::sync::Arc::new(TemplateSummaries),
        }
    }
}

impl Prompter {
    pub fn new(templates: TemplateSet, augmentations: AugmentationMap) -> Self {
        Prompter {
            templates,
            augmentations,
            summaries: std::sync::Arc::new(TemplateSummaries),
        }
    }

    /// Replaces the summary source (e.g. with an external client adapter).
    pub fn with_summaries(mut self, summaries: std::sync::Arc<dyn SummarySource>) -> Self {
        self.summaries = summaries;
        self
    }

    /// Per-eye diagnosis summary from the configured source.
    pub fn eye_summary(&self, diag: &EyeDiagnosis, conclusion: &str) -> String {
        self.summaries.eye_diagnosis_summary(diag, conclusion)
    }

    /// Quality-aware label prompt plus one variant per augmentation phrase.
    /// Labels without augmentation entries fall back to the label itself.
    pub fn label_prompt(&self, label: &str, quality: QualityToken) -> Result<PromptBundle> {
        if label.trim().is_empty() {
            return Err(Error::empty("label"));
        }
        let fill = |text: &str| {
            self.templates.render(
                "label",
                &[("quality", quality.as_str()), ("label", text)],
            )
        };
        let primary_text = fill(label);
        let mut variants: Vec<String> = match self.augmentations.phrases(label) {
            Some(phrases) if !phrases.is_empty() => {
                phrases.iter().map(|p| fill(p)).collect()
            }
            _ => vec![primary_text.clone()],
        };
        dedup_in_place(&mut variants);
        Ok(PromptBundle {
            primary_text,
            variants,
            context_text: None,
        })
    }

    /// Clinical-temporal context: clinical summary joined with either the
    /// previous exam's result or the first-exam sentence.
    pub fn clinical_temporal_text(
        &self,
        clinical: &BTreeMap<String, String>,
        prior_result: Option<&str>,
    ) -> String {
        let summary = self.summaries.clinical_summary(clinical);
        let text = match prior_result {
            Some(prior) => self.templates.render(
                "clinical_prior",
                &[("clinical", &summary), ("prior", prior)],
            ),
            None => self
                .templates
                .render("clinical_first", &[("clinical", &summary)]),
        };
        // An empty clinical summary leaves a dangling ". " prefix; drop it.
        text.strip_prefix(". ").unwrap_or(&text).to_string()
    }
}

/// Renders the fixed-vocabulary clinical map into a sentence fragment, e.g.
/// `type 2 diabetes for 12 years, treated with insulin, with hypertension`.
/// Unknown keys are ignored.
pub fn clinical_summary(clinical: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    if let Some(dt) = clinical.get("diabetes_type") {
        out.push_str(dt);
        out.push_str(" diabetes");
        if let Some(years) = clinical.get("years_diabetic") {
            out.push_str(&format!(" for {years} years"));
        }
    }
    if let Some(tr) = clinical.get("treatment") {
        if !out.is_empty() {
            out.push_str(", ");
        }
        out.push_str(&format!("treated with {tr}"));
    }
    if let Some(ht) = clinical.get("hypertension") {
        let clause = if ht == "true" { "with hypertension" } else { "no hypertension" };
        if !out.is_empty() {
            out.push_str(", ");
        }
        out.push_str(clause);
    }
    out
}

/// Deterministic per-eye diagnosis summary: grade phrase, findings, then the
/// conclusion excerpt. Stands in for an LLM-generated summary.
pub fn eye_diagnosis_summary(diag: &EyeDiagnosis, conclusion: &str) -> String {
    let mut out = diag.dr_grade.phrase().to_string();
    if !diag.findings.is_empty() {
        let phrases: Vec<&str> = diag.findings.iter().map(|f| f.phrase()).collect();
        out.push_str(" with ");
        out.push_str(&phrases.join(", "));
    }
    if !diag.other_text.trim().is_empty() {
        out.push_str(&format!(", {}", diag.other_text.trim()));
    }
    let conclusion = conclusion.trim();
    if !conclusion.is_empty() {
        out.push_str(". ");
        out.push_str(conclusion);
    }
    out
}

/// One-line result of an exam for use as the next exam's "previous exam
/// showed ..." text.
pub fn exam_result_summary(record: &ExamRecord) -> String {
    let left = record.diagnosis_for(Laterality::Left).map(|d| d.dr_grade);
    let right = record.diagnosis_for(Laterality::Right).map(|d| d.dr_grade);
    match (left, right) {
        (Some(l), Some(r)) if l == r => format!("{} in both eyes", l.phrase()),
        (Some(l), Some(r)) => format!(
            "{} in the left eye and {} in the right eye",
            l.phrase(),
            r.phrase()
        ),
        (Some(l), None) => format!("{} in the left eye", l.phrase()),
        (None, Some(r)) => format!("{} in the right eye", r.phrase()),
        (None, None) => "no diagnosis recorded".to_string(),
    }
}

/// Class prompts for zero-shot DR grading, quality fixed to `gradable`.
pub fn grade_class_prompts(prompter: &Prompter) -> Result<Vec<(DrGrade, PromptBundle)>> {
    DrGrade::ALL
        .iter()
        .map(|&g| {
            prompter
                .label_prompt(g.phrase(), QualityToken::Gradable)
                .map(|b| (g, b))
        })
        .collect()
}

fn dedup_in_place(items: &mut Vec<String>) {
    let mut seen = std::collections::BTreeSet::new();
    items.retain(|s| seen.insert(s.clone()));
}
