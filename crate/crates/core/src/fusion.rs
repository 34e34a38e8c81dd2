//! Multi-image and image-text feature fusion.
//!
//! Exam-level image features are built by taking the elementwise root mean
//! square of the per-image post-projection features. Clinical-temporal
//! context embeddings are added to the image feature. Normalization happens
//! once, after fusion, so per-image magnitudes still matter to the RMS.

use crate::encoder::{normalize, EmbeddingVector, ModelGraph};
use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Inputs to exam-level fusion: 1..4 post-projection image embeddings and an
/// optional clinical-temporal context embedding of the same dimension.
#[derive(Debug, Clone)]
pub struct FusionInput {
    pub image_embeddings: Vec<EmbeddingVector>,
    pub context_embedding: Option<EmbeddingVector>,
}

impl FusionInput {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .image_embeddings
            .first()
            .ok_or_else(|| Error::empty("image_embeddings"))?;
        let d = first.dim();
        for e in &self.image_embeddings {
            if e.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: e.dim(),
                });
            }
        }
        if let Some(c) = &self.context_embedding {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Elementwise sqrt of the mean of squares across vectors. Requires at least
/// two vectors; single-image models bypass fusion entirely.
pub fn rms_fuse(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    if vectors.len() < 2 {
        return Err(Error::invalid(
            "vectors",
            format!("rms fusion needs at least 2 vectors, got {}", vectors.len()),
        ));
    }
    let d = vectors[0].dim();
    for v in vectors {
        if v.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.dim(),
            });
        }
    }
    let mut out = vec![0.0; d];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.values()) {
            *o += x * x;
        }
    }
    let k = vectors.len() as f64;
    for o in &mut out {
        *o = (*o / k).sqrt();
    }
    Ok(EmbeddingVector::new(out))
}

/// Elementwise sum of an image feature and a context embedding.
pub fn add_context(
    image_feature: &EmbeddingVector,
    context: &EmbeddingVector,
) -> Result<EmbeddingVector> {
    if image_feature.dim() != context.dim() {
        return Err(Error::DimensionMismatch {
            expected: image_feature.dim(),
            got: context.dim(),
        });
    }
    Ok(EmbeddingVector::new(
        image_feature
            .values()
            .iter()
            .zip(context.values())
            .map(|(a, b)| a + b)
            .collect(),
    ))
}

/// Full exam-level pipeline: RMS over multiple images (identity for one),
/// optional context addition, then a single final normalization.
pub fn fuse_exam(input: &FusionInput, apply_context: bool) -> Result<EmbeddingVector> {
    input.validate()?;
    let image_feature = if input.image_embeddings.len() > 1 {
        rms_fuse(&input.image_embeddings)?
    } else {
        input.image_embeddings[0].clone()
    };
    let combined = match (&input.context_embedding, apply_context) {
        (Some(context), true) => add_context(&image_feature, context)?,
        _ => image_feature,
    };
    normalize(&combined)
}

/// Differentiable counterpart of [`fuse_exam`] on a model tape. The node ids
/// must hold [d] vectors already in the tape.
pub fn fuse_exam_node(
    mg: &mut ModelGraph,
    image_nodes: &[NodeId],
    context_node: Option<NodeId>,
) -> Result<NodeId> {
    if image_nodes.is_empty() {
        return Err(Error::empty("image_nodes"));
    }
    let image_feature = if image_nodes.len() > 1 {
        let stacked = mg.graph.stack(image_nodes.to_vec());
        mg.graph.rms_fuse_rows(stacked)
    } else {
        image_nodes[0]
    };
    let combined = match context_node {
        Some(ctx) => mg.graph.add(image_feature, ctx),
        None => image_feature,
    };
    Ok(mg.graph.l2_normalize(combined))
}
