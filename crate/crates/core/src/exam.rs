//! Exam-structured data model: screening visits with per-eye images,
//! per-eye diagnoses, a free-text conclusion, clinical data, and an
//! optional link to the patient's previous exam.
//!
//! Manifests are line-delimited JSON, one exam record per line, with image
//! paths relative to the manifest file. Inline pixel tensors are allowed
//! only for in-memory synthetic datasets and cannot be serialized.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Six-level diabetic retinopathy severity scale, ordered by severity.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum DrGrade {
    #[serde(rename = "noDR")]
    NoDr,
    #[serde(rename = "mildDR")]
    MildDr,
    #[serde(rename = "modDR")]
    ModDr,
    #[serde(rename = "sevDR")]
    SevDr,
    #[serde(rename = "prolDR")]
    ProlDr,
    #[serde(rename = "HR-prolDR")]
    HrProlDr,
}

impl DrGrade {
    pub const ALL: [DrGrade; 6] = [
        DrGrade::NoDr,
        DrGrade::MildDr,
        DrGrade::ModDr,
        DrGrade::SevDr,
        DrGrade::ProlDr,
        DrGrade::HrProlDr,
    ];

    pub fn ordinal(self) -> u8 {
        match self {
            DrGrade::NoDr => 0,
            DrGrade::MildDr => 1,
            DrGrade::ModDr => 2,
            DrGrade::SevDr => 3,
            DrGrade::ProlDr => 4,
            DrGrade::HrProlDr => 5,
        }
    }

    pub fn from_ordinal(ord: u8) -> Option<DrGrade> {
        DrGrade::ALL.get(ord as usize).copied()
    }

    /// Serialized token name.
    pub fn token(self) -> &'static str {
        match self {
            DrGrade::NoDr => "noDR",
            DrGrade::MildDr => "mildDR",
            DrGrade::ModDr => "modDR",
            DrGrade::SevDr => "sevDR",
            DrGrade::ProlDr => "prolDR",
            DrGrade::HrProlDr => "HR-prolDR",
        }
    }

    /// Human-readable phrase used in prompts and summaries.
    pub fn phrase(self) -> &'static str {
        match self {
            DrGrade::NoDr => "no diabetic retinopathy",
            DrGrade::MildDr => "mild diabetic retinopathy",
            DrGrade::ModDr => "moderate diabetic retinopathy",
            DrGrade::SevDr => "severe diabetic retinopathy",
            DrGrade::ProlDr => "proliferative diabetic retinopathy",
            DrGrade::HrProlDr => "high-risk proliferative diabetic retinopathy",
        }
    }
}

impl fmt::Display for DrGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Binary findings recorded per eye in addition to the DR grade.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Finding {
    #[serde(rename = "DME")]
    Dme,
    #[serde(rename = "glaucoma")]
    Glaucoma,
    #[serde(rename = "cataract")]
    Cataract,
    #[serde(rename = "hypertensive retinopathy")]
    HypertensiveRetinopathy,
    #[serde(rename = "macular dystrophy")]
    MacularDystrophy,
}

impl Finding {
    pub fn phrase(self) -> &'static str {
        match self {
            Finding::Dme => "diabetic macular edema",
            Finding::Glaucoma => "glaucoma",
            Finding::Cataract => "cataract",
            Finding::HypertensiveRetinopathy => "hypertensive retinopathy",
            Finding::MacularDystrophy => "macular dystrophy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Laterality {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
}

impl Laterality {
    pub fn name(self) -> &'static str {
        match self {
            Laterality::Left => "left",
            Laterality::Right => "right",
        }
    }
}

/// Which retinal field the photograph is centered on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldOfView {
    #[serde(rename = "macula-centered")]
    MaculaCentered,
    #[serde(rename = "disc-centered")]
    DiscCentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImageQuality {
    #[serde(rename = "gradable")]
    Gradable,
    #[serde(rename = "ungradable")]
    Ungradable,
}

/// Either a path relative to the manifest, or inline pixels (synthetic mode).
#[derive(Debug, Clone, PartialEq)]
pub enum ImageRef {
    Path(PathBuf),
    Inline(ImageTensor),
}

impl ImageRef {
    pub fn as_path(&self) -> Option<&Path> {
        match self {
            ImageRef::Path(p) => Some(p),
            ImageRef::Inline(_) => None,
        }
    }
}

/// One retinal photograph within an exam.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeImage {
    pub reference: ImageRef,
    pub laterality: Laterality,
    pub field: FieldOfView,
    pub quality: ImageQuality,
}

/// Per-eye diagnosis: DR grade, binary findings, free-text remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EyeDiagnosis {
    pub dr_grade: DrGrade,
    #[serde(default)]
    pub findings: BTreeSet<Finding>,
    #[serde(default)]
    pub other_text: String,
}

impl EyeDiagnosis {
    pub fn new(dr_grade: DrGrade) -> Self {
        EyeDiagnosis {
            dr_grade,
            findings: BTreeSet::new(),
            other_text: String::new(),
        }
    }
}

/// One screening visit.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamRecord {
    pub patient_id: String,
    pub exam_id: String,
    /// ISO-8601 date, `YYYY-MM-DD`.
    pub exam_date: String,
    pub images: Vec<EyeImage>,
    pub diagnosis_left: Option<EyeDiagnosis>,
    pub diagnosis_right: Option<EyeDiagnosis>,
    pub conclusion_text: String,
    pub clinical: BTreeMap<String, String>,
    pub prior_exam_id: Option<String>,
}

impl ExamRecord {
    pub fn diagnosis_for(&self, side: Laterality) -> Option<&EyeDiagnosis> {
        match side {
            Laterality::Left => self.diagnosis_left.as_ref(),
            Laterality::Right => self.diagnosis_right.as_ref(),
        }
    }

    /// Worst (highest) DR grade across the diagnosed eyes, if any.
    pub fn worst_grade(&self) -> Option<DrGrade> {
        let l = self.diagnosis_left.as_ref().map(|d| d.dr_grade);
        let r = self.diagnosis_right.as_ref().map(|d| d.dr_grade);
        match (l, r) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }

    /// Per-record invariants (cross-record prior checks live in `validate_records`).
    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() {
            return Err(Error::invariant("patient_id", "must not be empty"));
        }
        if self.exam_id.is_empty() {
            return Err(Error::invariant("exam_id", "must not be empty"));
        }
        validate_iso_date(&self.exam_date)
            .map_err(|m| Error::invariant("exam_date", m))?;
        if self.images.is_empty() {
            return Err(Error::invariant("images", "exam must have at least one image"));
        }
        for img in &self.images {
            if let ImageRef::Inline(t) = &img.reference {
                t.validate()?;
            }
        }
        Ok(())
    }
}

/// Checks ISO-8601 `YYYY-MM-DD`. String comparison then orders by date.
pub fn validate_iso_date(s: &str) -> std::result::Result<(), String> {
    let bytes = s.as_bytes();
    if bytes.len() != 10 || bytes[4] != b'-' || bytes[7] != b'-' {
        return Err(format!("`{s}` is not a YYYY-MM-DD date"));
    }
    let digits = |r: std::ops::Range<usize>| -> std::result::Result<u32, String> {
        s[r.clone()]
            .parse::<u32>()
            .map_err(|_| format!("`{s}` is not a YYYY-MM-DD date"))
    };
    let _year = digits(0..4)?;
    let month = digits(5..7)?;
    let day = digits(8..10)?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(format!("`{s}` has an out-of-range month or day"));
    }
    Ok(())
}

/// Validates a record list, including prior-exam links that resolve within
/// the list: a prior exam must belong to the same patient and be strictly
/// earlier. Dangling prior ids are tolerated (filtered manifests may have
/// dropped the referenced exam).
pub fn validate_records(records: &[ExamRecord]) -> Result<()> {
    let mut by_id: HashMap<&str, &ExamRecord> = HashMap::new();
    for rec in records {
        rec.validate()?;
        by_id.insert(rec.exam_id.as_str(), rec);
    }
    for rec in records {
        if let Some(prior_id) = &rec.prior_exam_id {
            if let Some(prior) = by_id.get(prior_id.as_str()) {
                if prior.patient_id != rec.patient_id {
                    return Err(Error::invariant(
                        "prior_exam_id",
                        format!(
                            "exam {} references prior exam {} of a different patient",
                            rec.exam_id, prior_id
                        ),
                    ));
                }
                if prior.exam_date.as_str() >= rec.exam_date.as_str() {
                    return Err(Error::invariant(
                        "prior_exam_id",
                        format!(
                            "prior exam not earlier: exam {} ({}) references {} ({})",
                            rec.exam_id, rec.exam_date, prior_id, prior.exam_date
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

// ── Manifest wire format ────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireImage {
    path: String,
    laterality: Laterality,
    field: FieldOfView,
    quality: ImageQuality,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    patient_id: String,
    exam_id: String,
    exam_date: String,
    images: Vec<WireImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnosis_left: Option<EyeDiagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnosis_right: Option<EyeDiagnosis>,
    #[serde(default)]
    conclusion_text: String,
    #[serde(default)]
    clinical: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior_exam_id: Option<String>,
}

impl TryFrom<&ExamRecord> for WireRecord {
    type Error = Error;

    fn try_from(rec: &ExamRecord) -> Result<WireRecord> {
        let mut images = Vec::with_capacity(rec.images.len());
        for img in &rec.images {
            let path = match &img.reference {
                ImageRef::Path(p) => p.to_string_lossy().into_owned(),
                ImageRef::Inline(_) => {
                    return Err(Error::invalid(
                        "images",
                        format!(
                            "exam {} holds inline pixels; write them to files before saving",
                            rec.exam_id
                        ),
                    ))
                }
            };
            images.push(WireImage {
                path,
                laterality: img.laterality,
                field: img.field,
                quality: img.quality,
            });
        }
        Ok(WireRecord {
            patient_id: rec.patient_id.clone(),
            exam_id: rec.exam_id.clone(),
            exam_date: rec.exam_date.clone(),
            images,
            diagnosis_left: rec.diagnosis_left.clone(),
            diagnosis_right: rec.diagnosis_right.clone(),
            conclusion_text: rec.conclusion_text.clone(),
            clinical: rec.clinical.clone(),
            prior_exam_id: rec.prior_exam_id.clone(),
        })
    }
}

impl From<WireRecord> for ExamRecord {
    fn from(w: WireRecord) -> ExamRecord {
        ExamRecord {
            patient_id: w.patient_id,
            exam_id: w.exam_id,
            exam_date: w.exam_date,
            images: w
                .images
                .into_iter()
                .map(|i| EyeImage {
                    reference: ImageRef::Path(PathBuf::from(i.path)),
                    laterality: i.laterality,
                    field: i.field,
                    quality: i.quality,
                })
                .collect(),
            diagnosis_left: w.diagnosis_left,
            diagnosis_right: w.diagnosis_right,
            conclusion_text: w.conclusion_text,
            clinical: w.clinical,
            prior_exam_id: w.prior_exam_id,
        }
    }
}

/// Canonical single-line serialization of one record.
pub fn manifest_line(record: &ExamRecord) -> Result<String> {
    let wire = WireRecord::try_from(record)?;
    Ok(serde_json::to_string(&wire)?)
}

/// Loads a line-delimited manifest, validating every record. Record order is
/// preserved. Blank lines are ignored.
pub fn load_manifest(path: &Path) -> Result<Vec<ExamRecord>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord =
            serde_json::from_str(&line).map_err(|e| Error::ManifestParse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(ExamRecord::from(wire));
    }
    validate_records(&records)?;
    Ok(records)
}

/// Writes a manifest, one canonical JSON line per record.
pub fn save_manifest(records: &[ExamRecord], path: &Path) -> Result<()> {
    validate_records(records)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = fs::File::create(path)?;
    for rec in records {
        let line = manifest_line(rec)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Distinct patient ids in input order of first appearance.
pub fn patient_ids(records: &[ExamRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in records {
        if seen.insert(rec.patient_id.as_str()) {
            out.push(rec.patient_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(patient: &str, exam: &str, date: &str) -> ExamRecord {
        ExamRecord {
            patient_id: patient.to_string(),
            exam_id: exam.to_string(),
            exam_date: date.to_string(),
            images: vec![EyeImage {
                reference: ImageRef::Path(PathBuf::from("images/a.png")),
                laterality: Laterality::Left,
                field: FieldOfView::MaculaCentered,
                quality: ImageQuality::Gradable,
            }],
            diagnosis_left: Some(EyeDiagnosis::new(DrGrade::ModDr)),
            diagnosis_right: None,
            conclusion_text: String::new(),
            clinical: BTreeMap::new(),
            prior_exam_id: None,
        }
    }

    #[test]
    fn grade_ordering_and_tokens() {
        assert!(DrGrade::NoDr < DrGrade::MildDr);
        assert!(DrGrade::ProlDr < DrGrade::HrProlDr);
        assert_eq!(DrGrade::ALL.len(), 6);
        for (i, g) in DrGrade::ALL.iter().enumerate() {
            assert_eq!(g.ordinal() as usize, i);
            assert_eq!(DrGrade::from_ordinal(i as u8), Some(*g));
        }
        assert_eq!(DrGrade::HrProlDr.token(), "HR-prolDR");
    }

    #[test]
    fn single_line_manifest_loads_moddr() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let line = r#"{"patient_id":"p1","exam_id":"e1","exam_date":"2015-02-03","images":[{"path":"img/l.png","laterality":"left","field":"macula-centered","quality":"gradable"}],"diagnosis_left":{"dr_grade":"modDR","findings":[],"other_text":""},"conclusion_text":"","clinical":{}}"#;
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let records = load_manifest(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(
            records[0].diagnosis_left.as_ref().unwrap().dr_grade.ordinal(),
            2
        );
    }

    #[test]
    fn later_dated_prior_is_rejected() {
        let mut a = record("p1", "e1", "2015-01-01");
        let b = record("p1", "e2", "2016-01-01");
        a.prior_exam_id = Some("e2".to_string());
        let err = validate_records(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("prior exam not earlier"), "{err}");
    }

    #[test]
    fn prior_of_other_patient_is_rejected() {
        let mut a = record("p1", "e1", "2016-01-01");
        let b = record("p2", "e2", "2015-01-01");
        a.prior_exam_id = Some("e2".to_string());
        assert!(validate_records(&[a, b]).is_err());
    }

    #[test]
    fn dangling_prior_is_tolerated() {
        let mut a = record("p1", "e1", "2016-01-01");
        a.prior_exam_id = Some("missing".to_string());
        assert!(validate_records(std::slice::from_ref(&a)).is_ok());
    }

    #[test]
    fn roundtrip_and_canonical_form() {
        let dir = tempfile::tempdir().unwrap();
        let m1 = dir.path().join("m1.jsonl");
        let m2 = dir.path().join("m2.jsonl");

        let mut second = record("p2", "e2", "2014-05-06");
        second.prior_exam_id = None;
        second.conclusion_text = "stable".to_string();
        let records = vec![record("p1", "e1", "2015-02-03"), second];

        save_manifest(&records, &m1).unwrap();
        let loaded = load_manifest(&m1).unwrap();
        assert_eq!(loaded, records);

        save_manifest(&loaded, &m2).unwrap();
        assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());

        let text = fs::read_to_string(&m1).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn empty_list_gives_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        save_manifest(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = manifest_line(&record("p1", "e1", "2015-02-03")).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn inline_images_cannot_be_saved() {
        let mut rec = record("p1", "e1", "2015-02-03");
        rec.images[0].reference = ImageRef::Inline(ImageTensor::zeros(16, 16));
        let dir = tempfile::tempdir().unwrap();
        assert!(save_manifest(&[rec], &dir.path().join("m.jsonl")).is_err());
    }

    #[test]
    fn bad_dates_are_rejected() {
        assert!(validate_iso_date("2015-13-01").is_err());
        assert!(validate_iso_date("2015-1-01").is_err());
        assert!(validate_iso_date("20150101").is_err());
        assert!(validate_iso_date("2015-02-03").is_ok());
    }
}
