//! Context-aware vision-language contrastive models for exam-structured
//! retinal image datasets.
//!
//! The crate covers the full desk-scale pipeline: a seeded synthetic exam
//! generator whose image statistics track diagnosis labels, patient-disjoint
//! partitioning with gradable-only validation filtering, quality-aware
//! prompt templating with knowledge augmentations and clinical-temporal
//! context strings, tiny reference vision/text encoders projecting into a
//! shared embedding space, RMS fusion of multi-image exams plus additive
//! context conditioning, a bidirectional soft-target contrastive objective
//! with learnable temperature, AdamW training under a warm-up cosine
//! schedule with checkpoint selection on validation zero-shot AUC, and
//! per-class AUC evaluation reports.
//!
//! All model math is f64 on a small reverse-mode tape ([`graph`]), so every
//! gradient path is checkable against central finite differences.

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exam;
pub mod fusion;
pub mod graph;
pub mod imageio;
pub mod objective;
pub mod optim;
pub mod partition;
pub mod prompt;
pub mod rng;
pub mod sample;
pub mod schedule;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use encoder::{EmbeddingVector, EncoderConfig, ModelParams};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use exam::{DrGrade, ExamRecord, EyeDiagnosis, EyeImage, ImageQuality, Laterality};
pub use objective::{LossValue, SimilarityMatrix};
pub use prompt::{PromptBundle, Prompter, QualityToken};
pub use sample::{VariantConfig, VariantKind};
pub use synthetic::SyntheticSpec;
pub use tensor::{ImageTensor, Tensor};
pub use train::{Dataset, RunLog, TrainConfig};
