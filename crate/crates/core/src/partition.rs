//! Patient-disjoint dataset partitioning and quality filtering.
//!
//! Splits operate on patients, never on individual images or exams, so no
//! patient's data can leak across partitions. Membership is derived from the
//! sorted patient-id list plus a seeded shuffle, which makes it independent
//! of input record order.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{ExamRecord, ImageQuality};
use crate::rng::{stream_rng, tags};

/// Patient-level split assignment. The test set is reserved for externally
/// supplied held-out manifests and is left empty by [`split_patients`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub train_ratio: f64,
    pub seed: u64,
}

impl SplitPlan {
    /// Pairwise disjointness across the three patient sets.
    pub fn is_disjoint(&self) -> bool {
        self.train.intersection(&self.validation).next().is_none()
            && self.train.intersection(&self.test).next().is_none()
            && self.validation.intersection(&self.test).next().is_none()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SplitPlan> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Records whose patient belongs to the given set, in input order.
    pub fn select<'a>(
        records: &'a [ExamRecord],
        patients: &BTreeSet<String>,
    ) -> Vec<&'a ExamRecord> {
        records
            .iter()
            .filter(|r| patients.contains(&r.patient_id))
            .collect()
    }
}

/// Splits patients into train/validation sets.
///
/// `|train|` is `round(train_ratio * n_patients)`, clamped so neither side is
/// empty. Deterministic given the seed and invariant to record order.
pub fn split_patients(
    records: &[ExamRecord],
    train_ratio: f64,
    seed: u64,
) -> Result<SplitPlan> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::invalid(
            "train_ratio",
            "must lie strictly between 0 and 1",
        ));
    }
    let mut patients: Vec<String> = records
        .iter()
        .map(|r| r.patient_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if patients.len() < 2 {
        return Err(Error::invalid(
            "records",
            format!("need at least 2 distinct patients, got {}", patients.len()),
        ));
    }

    let mut rng = stream_rng(seed, tags::SPLIT, 0);
    patients.shuffle(&mut rng);

    let n = patients.len();
    let n_train = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let train: BTreeSet<String> = patients[..n_train].iter().cloned().collect();
    let validation: BTreeSet<String> = patients[n_train..].iter().cloned().collect();

    Ok(SplitPlan {
        train,
        validation,
        test: BTreeSet::new(),
        train_ratio,
        seed,
    })
}

/// Keeps only gradable images; exams left without any image are dropped.
pub fn filter_gradable(records: &[ExamRecord]) -> Vec<ExamRecord> {
    records
        .iter()
        .filter_map(|rec| {
            let images: Vec<_> = rec
                .images
                .iter()
                .filter(|img| img.quality == ImageQuality::Gradable)
                .cloned()
                .collect();
            if images.is_empty() {
                None
            } else {
                let mut rec = rec.clone();
                rec.images = images;
                Some(rec)
            }
        })
        .collect()
}
