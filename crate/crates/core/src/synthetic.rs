//! Seeded synthetic exam generator.
//!
//! Stands in for a real screening-network dataset: every exam carries four
//! fundus-like images (macula- and disc-centered for each eye), per-eye
//! grades, a templated conclusion, clinical fields, and a link to the
//! patient's previous exam. The visual grade signal is a set of bright
//! lesion-like blobs whose count follows Poisson(1 + 2 * grade * strength)
//! and whose radius grows mildly with grade * strength, on a dark circular
//! disc with per-image illumination jitter and pixel noise.
//!
//! Generation is a pure function of the spec: each patient's stream is
//! derived from (seed, patient index), so output does not depend on
//! iteration order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{
    save_manifest, DrGrade, ExamRecord, EyeDiagnosis, EyeImage, FieldOfView, Finding,
    ImageQuality, ImageRef, Laterality,
};
use crate::imageio::save_png;
use crate::rng::{normal, poisson, stream_rng, tags};
use crate::tensor::ImageTensor;

/// Parameters of a synthetic dataset. Identical specs produce bit-identical
/// datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_patients: usize,
    /// Inclusive (min, max) exams per patient.
    pub exams_per_patient: (usize, usize),
    /// (height, width) of generated images.
    pub image_size: (usize, usize),
    /// 0 = no visual grade signal, 1 = full strength.
    pub grade_signal_strength: f64,
    /// Probability that a follow-up exam's grade stays within
    /// `prior_band` of the previous exam's grade.
    pub prior_correlation: f64,
    /// Band width for correlated follow-up grades (0 = identical grade).
    pub prior_band: u8,
    /// Fraction of images rendered ungradable (heavy blur + low contrast).
    pub ungradable_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            n_patients: 20,
            exams_per_patient: (1, 3),
            image_size: (64, 64),
            grade_signal_strength: 1.0,
            prior_correlation: 0.5,
            prior_band: 1,
            ungradable_fraction: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::invalid("n_patients", "must be at least 1"));
        }
        let (lo, hi) = self.exams_per_patient;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(
                "exams_per_patient",
                "range must satisfy 1 <= min <= max",
            ));
        }
        let (h, w) = self.image_size;
        if h < ImageTensor::MIN_SIDE || w < ImageTensor::MIN_SIDE {
            return Err(Error::invalid(
                "image_size",
                format!("sides must be at least {}", ImageTensor::MIN_SIDE),
            ));
        }
        for (name, v) in [
            ("grade_signal_strength", self.grade_signal_strength),
            ("prior_correlation", self.prior_correlation),
            ("ungradable_fraction", self.ungradable_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Per-exam generation record used by statistical tests: the drawn grade and
/// the drawn blob count of every image.
#[derive(Debug, Clone)]
pub struct ExamStats {
    pub exam_id: String,
    pub grade: DrGrade,
    pub blob_counts: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<ExamRecord>> {
    Ok(generate_synthetic_with_stats(spec)?.0)
}

/// Like [`generate_synthetic`] but also returns the per-exam draw statistics.
pub fn generate_synthetic_with_stats(
    spec: &SyntheticSpec,
) -> Result<(Vec<ExamRecord>, Vec<ExamStats>)> {
    spec.validate()?;
    let mut records = Vec::new();
    let mut stats = Vec::new();
    for p in 0..spec.n_patients {
        let (mut recs, mut sts) = generate_patient(spec, p);
        records.append(&mut recs);
        stats.append(&mut sts);
    }
    Ok((records, stats))
}

fn generate_patient(spec: &SyntheticSpec, index: usize) -> (Vec<ExamRecord>, Vec<ExamStats>) {
    let mut rng = stream_rng(spec.seed, tags::SYNTH_PATIENT, index as u64);
    let patient_id = format!("p{:08x}-{:05}", spec.seed, index);

    let (lo, hi) = spec.exams_per_patient;
    let n_exams = rng.random_range(lo..=hi);

    let diabetes_type = if rng.random::<f64>() < 0.85 { "type 2" } else { "type 1" };
    let years_diabetic = rng.random_range(1..=30u32);
    let treatment = ["insulin", "metformin", "diet alone"][rng.random_range(0..3usize)];
    let hypertension = rng.random::<f64>() < 0.4;

    let mut year = rng.random_range(2005..=2014i32);
    let mut month = rng.random_range(1..=12u32);

    let mut records = Vec::with_capacity(n_exams);
    let mut stats = Vec::with_capacity(n_exams);
    let mut prev: Option<(String, u8)> = None;

    for e in 0..n_exams {
        let exam_id = format!("{patient_id}-e{e:02}");
        let grade_ord = draw_grade(&mut rng, spec, prev.as_ref().map(|(_, g)| *g));
        let grade = DrGrade::from_ordinal(grade_ord).expect("grade ordinal in range");

        let day = rng.random_range(1..=28u32);
        let exam_date = format!("{year:04}-{month:02}-{day:02}");
        // Advance 6-17 months for the next visit.
        let advance = rng.random_range(6..=17u32);
        month += advance;
        year += ((month - 1) / 12) as i32;
        month = (month - 1) % 12 + 1;

        let diag_left = eye_diagnosis(&mut rng, grade);
        let diag_right = eye_diagnosis(&mut rng, grade);

        let mut images = Vec::with_capacity(4);
        let mut blob_counts = Vec::with_capacity(4);
        for (lat, field) in [
            (Laterality::Left, FieldOfView::MaculaCentered),
            (Laterality::Left, FieldOfView::DiscCentered),
            (Laterality::Right, FieldOfView::MaculaCentered),
            (Laterality::Right, FieldOfView::DiscCentered),
        ] {
            let lambda = 1.0 + 2.0 * grade_ord as f64 * spec.grade_signal_strength;
            let blobs = poisson(&mut rng, lambda);
            blob_counts.push(blobs);
            let ungradable = rng.random::<f64>() < spec.ungradable_fraction;
            let img = render_fundus(&mut rng, spec, grade_ord, blobs, field, ungradable);
            images.push(EyeImage {
                reference: ImageRef::Inline(img),
                laterality: lat,
                field,
                quality: if ungradable {
                    ImageQuality::Ungradable
                } else {
                    ImageQuality::Gradable
                },
            });
        }

        let conclusion_text = conclusion_for(grade, &diag_left, &diag_right);
        let mut clinical = BTreeMap::new();
        clinical.insert("diabetes_type".to_string(), diabetes_type.to_string());
        clinical.insert("years_diabetic".to_string(), years_diabetic.to_string());
        clinical.insert("treatment".to_string(), treatment.to_string());
        clinical.insert("hypertension".to_string(), hypertension.to_string());

        records.push(ExamRecord {
            patient_id: patient_id.clone(),
            exam_id: exam_id.clone(),
            exam_date,
            images,
            diagnosis_left: Some(diag_left),
            diagnosis_right: Some(diag_right),
            conclusion_text,
            clinical,
            prior_exam_id: prev.as_ref().map(|(id, _)| id.clone()),
        });
        stats.push(ExamStats {
            exam_id: exam_id.clone(),
            grade,
            blob_counts,
        });
        prev = Some((exam_id, grade_ord));
    }
    (records, stats)
}

fn draw_grade(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, prior: Option<u8>) -> u8 {
    match prior {
        Some(p) if rng.random::<f64>() < spec.prior_correlation => {
            let band = spec.prior_band as i32;
            let delta = rng.random_range(-band..=band);
            (p as i32 + delta).clamp(0, 5) as u8
        }
        _ => rng.random_range(0..6u8),
    }
}

fn eye_diagnosis(rng: &mut ChaCha8Rng, grade: DrGrade) -> EyeDiagnosis {
    let mut findings = BTreeSet::new();
    if grade.ordinal() >= 2 && rng.random::<f64>() < 0.2 {
        findings.insert(Finding::Dme);
    }
    if rng.random::<f64>() < 0.05 {
        findings.insert(Finding::Cataract);
    }
    if rng.random::<f64>() < 0.03 {
        findings.insert(Finding::HypertensiveRetinopathy);
    }
    EyeDiagnosis {
        dr_grade: grade,
        findings,
        other_text: String::new(),
    }
}

fn conclusion_for(grade: DrGrade, left: &EyeDiagnosis, right: &EyeDiagnosis) -> String {
    let mut text = format!("{} in both eyes.", grade.phrase());
    if left.findings.contains(&Finding::Dme) || right.findings.contains(&Finding::Dme) {
        text.push_str(" diabetic macular edema present.");
    }
    let follow_up = match grade.ordinal() {
        0 | 1 => " routine screening in one year.",
        2 | 3 => " follow-up in six months.",
        _ => " urgent referral to ophthalmology.",
    };
    text.push_str(follow_up);
    text
}

fn render_fundus(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    grade_ord: u8,
    blobs: usize,
    field: FieldOfView,
    ungradable: bool,
) -> ImageTensor {
    let (h, w) = spec.image_size;
    let mut img = ImageTensor::zeros(h, w);
    let cy = h as f64 / 2.0;
    let cx = w as f64 / 2.0;
    let disc_r = 0.46 * h.min(w) as f64;

    // Per-image photometric jitter keeps untrained embeddings from encoding
    // grade through global statistics.
    let illum = 0.85 + 0.3 * rng.random::<f64>();
    let grad_theta = std::f64::consts::TAU * rng.random::<f64>();
    let (gs, gc) = grad_theta.sin_cos();

    let base = [0.52, 0.24, 0.08];
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let r = (dx * dx + dy * dy).sqrt();
            if r <= disc_r {
                let falloff = 1.0 - 0.45 * (r / disc_r) * (r / disc_r);
                let slope = 1.0 + 0.12 * (gc * dx + gs * dy) / disc_r;
                for c in 0..3 {
                    img.set(y, x, c, (base[c] * illum * falloff * slope).clamp(0.0, 1.0));
                }
            } else {
                for c in 0..3 {
                    img.set(y, x, c, 0.02);
                }
            }
        }
    }

    // Field-dependent landmark: bright optic disc or darker macula.
    let (ly, lx, lr, bright) = match field {
        FieldOfView::DiscCentered => (cy, cx, 0.16 * disc_r, true),
        FieldOfView::MaculaCentered => (cy, cx, 0.20 * disc_r, false),
    };
    stamp_disc(&mut img, ly, lx, lr, bright);

    // Lesion-like blobs: radius grows deterministically with grade so the
    // visual signal stays separable beyond raw blob counts.
    let strength = spec.grade_signal_strength;
    let sigma = 0.035 * h.min(w) as f64 * (1.0 + 0.6 * (grade_ord as f64 / 5.0) * strength);
    for _ in 0..blobs {
        let rr = disc_r * 0.85 * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let by = cy + rr * theta.sin();
        let bx = cx + rr * theta.cos();
        stamp_blob(&mut img, by, bx, sigma);
    }

    // Pixel noise.
    for p in img.pixels.iter_mut() {
        *p = (*p + 0.02 * normal(rng)).clamp(0.0, 1.0);
    }

    if ungradable {
        degrade(&mut img);
    }
    img
}

fn stamp_disc(img: &mut ImageTensor, cy: f64, cx: f64, radius: f64, bright: bool) {
    let (h, w) = (img.height, img.width);
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let r = (dx * dx + dy * dy).sqrt();
            if r <= radius {
                let t = 1.0 - r / radius;
                for c in 0..3 {
                    let v = img.get(y, x, c);
                    let target = if bright {
                        [0.95, 0.78, 0.45][c]
                    } else {
                        [0.30, 0.10, 0.04][c]
                    };
                    img.set(y, x, c, v + (target - v) * 0.8 * t);
                }
            }
        }
    }
}

fn stamp_blob(img: &mut ImageTensor, by: f64, bx: f64, sigma: f64) {
    let (h, w) = (img.height, img.width);
    let reach = (3.0 * sigma).ceil() as i64;
    let y0 = ((by as i64) - reach).max(0) as usize;
    let y1 = (((by as i64) + reach + 1).min(h as i64)) as usize;
    let x0 = ((bx as i64) - reach).max(0) as usize;
    let x1 = (((bx as i64) + reach + 1).min(w as i64)) as usize;
    let blob_color = [1.0, 0.92, 0.35];
    for y in y0..y1 {
        for x in x0..x1 {
            let dy = y as f64 - by;
            let dx = x as f64 - bx;
            let a = 0.85 * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            for c in 0..3 {
                let v = img.get(y, x, c);
                img.set(y, x, c, v + (blob_color[c] - v) * a);
            }
        }
    }
}

/// Heavy blur plus contrast collapse, marking the image ungradable.
fn degrade(img: &mut ImageTensor) {
    let radius = (img.height.min(img.width) / 10).max(2);
    box_blur(img, radius);
    box_blur(img, radius);
    let mean: f64 = img.pixels.iter().sum::<f64>() / img.pixels.len() as f64;
    for p in img.pixels.iter_mut() {
        *p = (mean + (*p - mean) * 0.25).clamp(0.0, 1.0);
    }
}

fn box_blur(img: &mut ImageTensor, radius: usize) {
    let (h, w) = (img.height, img.width);
    let r = radius as i64;
    let mut out = img.pixels.clone();
    // Horizontal pass.
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dx in -r..=r {
                    let xx = x as i64 + dx;
                    if (0..w as i64).contains(&xx) {
                        acc += img.get(y, xx as usize, c);
                        n += 1.0;
                    }
                }
                out[(y * w + x) * 3 + c] = acc / n;
            }
        }
    }
    img.pixels.copy_from_slice(&out);
    // Vertical pass.
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -r..=r {
                    let yy = y as i64 + dy;
                    if (0..h as i64).contains(&yy) {
                        acc += out[(yy as usize * w + x) * 3 + c];
                        n += 1.0;
                    }
                }
                img.pixels[(y * w + x) * 3 + c] = acc / n;
            }
        }
    }
}

/// Writes inline images under `out_dir/images/` as PNG and returns records
/// whose references are paths relative to `out_dir`. Path references are
/// passed through unchanged.
pub fn materialize_dataset(records: &[ExamRecord], out_dir: &Path) -> Result<Vec<ExamRecord>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut rec = rec.clone();
        for img in rec.images.iter_mut() {
            if let ImageRef::Inline(tensor) = &img.reference {
                let lat = match img.laterality {
                    Laterality::Left => "L",
                    Laterality::Right => "R",
                };
                let field = match img.field {
                    FieldOfView::MaculaCentered => "mac",
                    FieldOfView::DiscCentered => "disc",
                };
                let rel = PathBuf::from("images").join(format!(
                    "{}-{}-{}.png",
                    rec.exam_id, lat, field
                ));
                save_png(tensor, &out_dir.join(&rel))?;
                img.reference = ImageRef::Path(rel);
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Generates, materializes, and writes `manifest.jsonl`; returns the manifest
/// path and the records as written.
pub fn write_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<(PathBuf, Vec<ExamRecord>)> {
    let records = generate_synthetic(spec)?;
    let records = materialize_dataset(&records, out_dir)?;
    let manifest = out_dir.join("manifest.jsonl");
    save_manifest(&records, &manifest)?;
    Ok((manifest, records))
}
