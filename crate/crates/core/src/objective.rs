//! Contrastive alignment objective.
//!
//! A batch of text and image embeddings is scored by scaled scalar products
//! into an N x N matrix whose element (i, j) is the score of pair
//! (text_i, image_j). The loss is the mean of a softmax cross-entropy over
//! rows (text -> image) and over columns (image -> text). Samples sharing a
//! category key are mutually positive with uniform soft targets, so correct
//! same-class similarity is not penalized. Combined model variants sum their
//! losses into one backward pass.

use crate::encoder::{EmbeddingVector, ModelGraph, ModelParams};
use crate::error::{Error, Result};
use crate::graph::{softmax_ce_rows_fwd, NodeId};
use crate::tensor::Tensor;

const UNIT_NORM_TOL: f64 = 1e-5;

/// Scaled pairwise score matrix between a batch of texts and images.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    scores: Vec<f64>,
    rows: usize,
    cols: usize,
    temperature: f64,
}

impl SimilarityMatrix {
    pub fn from_raw(scores: Vec<f64>, rows: usize, cols: usize, temperature: f64) -> Result<Self> {
        if temperature <= 0.0 {
            return Err(Error::invalid("temperature", "must be positive"));
        }
        if scores.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                message: format!("{} scores for {rows}x{cols} matrix", scores.len()),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores", "matrix must be finite"));
        }
        Ok(SimilarityMatrix {
            scores,
            rows,
            cols,
            temperature,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.cols + j]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn transposed(&self) -> SimilarityMatrix {
        let mut scores = vec![0.0; self.scores.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                scores[j * self.rows + i] = self.scores[i * self.cols + j];
            }
        }
        SimilarityMatrix {
            scores,
            rows: self.cols,
            cols: self.rows,
            temperature: self.temperature,
        }
    }
}

/// Scaled scalar products: scores[i][j] = <text_i, image_j> / tau.
/// Inputs must be unit-norm so the temperature scale is meaningful.
pub fn similarity(
    texts: &[EmbeddingVector],
    images: &[EmbeddingVector],
    tau: f64,
) -> Result<SimilarityMatrix> {
    if texts.len() != images.len() || texts.is_empty() {
        return Err(Error::invalid(
            "embeddings",
            format!(
                "need equal non-empty batches, got {} texts and {} images",
                texts.len(),
                images.len()
            ),
        ));
    }
    if tau <= 0.0 {
        return Err(Error::invalid("tau", "temperature must be positive"));
    }
    for (what, batch) in [("texts", texts), ("images", images)] {
        for v in batch.iter() {
            if (v.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(
                    what,
                    format!("inputs must be unit-norm, got norm {}", v.norm()),
                ));
            }
        }
    }
    let n = texts.len();
    let mut scores = vec![0.0; n * n];
    for (i, t) in texts.iter().enumerate() {
        for (j, v) in images.iter().enumerate() {
            scores[i * n + j] = t.dot(v)? / tau;
        }
    }
    SimilarityMatrix::from_raw(scores, n, n, tau)
}

/// Which samples count as positives for each other.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchTargets {
    /// Sample i matches only sample i.
    Diagonal,
    /// Samples with equal keys are mutually positive (uniform soft targets).
    Categories(Vec<u64>),
}

impl MatchTargets {
    fn keys(&self, n: usize) -> Result<Vec<u64>> {
        match self {
            MatchTargets::Diagonal => Ok((0..n as u64).collect()),
            MatchTargets::Categories(keys) => {
                if keys.len() != n {
                    return Err(Error::ShapeMismatch {
                        message: format!("{} category keys for batch of {n}", keys.len()),
                    });
                }
                Ok(keys.clone())
            }
        }
    }
}

/// Row-normalized target matrix and the target matrix for the transposed
/// logits (columns of the adjacency, normalized).
pub(crate) fn target_matrices(keys: &[u64]) -> (Tensor, Tensor) {
    let n = keys.len();
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if keys[i] == keys[j] {
                adj[i * n + j] = 1.0;
            }
        }
    }
    let mut rows = adj.clone();
    for i in 0..n {
        let sum: f64 = rows[i * n..(i + 1) * n].iter().sum();
        for v in &mut rows[i * n..(i + 1) * n] {
            *v /= sum;
        }
    }
    // Adjacency is symmetric, so column-normalized(A) transposed equals
    // row-normalized(A^T); compute directly for clarity.
    let mut cols_t = vec![0.0; n * n];
    for j in 0..n {
        let sum: f64 = (0..n).map(|i| adj[i * n + j]).sum();
        for i in 0..n {
            cols_t[j * n + i] = adj[i * n + j] / sum;
        }
    }
    (
        Tensor::from_vec(&[n, n], rows),
        Tensor::from_vec(&[n, n], cols_t),
    )
}

/// Bidirectional loss with per-direction components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub text_to_image: f64,
    pub image_to_text: f64,
}

impl LossValue {
    pub fn new(text_to_image: f64, image_to_text: f64) -> LossValue {
        LossValue {
            total: 0.5 * (text_to_image + image_to_text),
            text_to_image,
            image_to_text,
        }
    }
}

/// Mean of softmax cross-entropy over rows and over columns against the
/// match targets.
pub fn contrastive_loss(m: &SimilarityMatrix, targets: &MatchTargets) -> Result<LossValue> {
    if m.n_rows() != m.n_cols() {
        return Err(Error::ShapeMismatch {
            message: format!("loss needs a square matrix, got {}x{}", m.n_rows(), m.n_cols()),
        });
    }
    let n = m.n_rows();
    let keys = targets.keys(n)?;
    let (rows_t, cols_t) = target_matrices(&keys);
    let logits = Tensor::from_vec(&[n, n], m.scores().to_vec());
    let text_to_image = softmax_ce_rows_fwd(&logits, &rows_t);
    let transposed = Tensor::from_vec(&[n, n], m.transposed().scores().to_vec());
    let image_to_text = softmax_ce_rows_fwd(&transposed, &cols_t);
    Ok(LossValue::new(text_to_image, image_to_text))
}

/// Sum of per-model losses, applied before a single backward pass.
pub fn combined_loss(losses: &[LossValue]) -> Result<LossValue> {
    if losses.is_empty() {
        return Err(Error::empty("losses"));
    }
    let t2i = losses.iter().map(|l| l.text_to_image).sum();
    let i2t = losses.iter().map(|l| l.image_to_text).sum();
    Ok(LossValue::new(t2i, i2t))
}

/// Differentiable batch loss on the tape: normalizes both sides, builds the
/// scaled similarity matrix with the learnable log-temperature, and applies
/// the bidirectional soft-target cross-entropy.
pub fn contrastive_batch_node(
    mg: &mut ModelGraph,
    params: &ModelParams,
    text_feats: &[NodeId],
    image_feats: &[NodeId],
    targets: &MatchTargets,
) -> Result<NodeId> {
    if text_feats.len() != image_feats.len() || text_feats.is_empty() {
        return Err(Error::invalid(
            "batch",
            "need equal non-empty text and image batches",
        ));
    }
    let n = text_feats.len();
    let keys = targets.keys(n)?;
    let (rows_t, cols_t) = target_matrices(&keys);

    let t_norm: Vec<NodeId> = text_feats
        .iter()
        .map(|&id| mg.graph.l2_normalize(id))
        .collect();
    let v_norm: Vec<NodeId> = image_feats
        .iter()
        .map(|&id| mg.graph.l2_normalize(id))
        .collect();
    let t_mat = mg.graph.stack(t_norm);
    let v_mat = mg.graph.stack(v_norm);
    let sim = mg.graph.matmul_trans_b(t_mat, v_mat);
    let log_tau = mg.param_node(params, "logit.log_tau");
    let scaled = mg.graph.scale_exp_neg(sim, log_tau);
    let t2i = mg.graph.softmax_ce_rows(scaled, rows_t);
    let transposed = mg.graph.transpose(scaled);
    let i2t = mg.graph.softmax_ce_rows(transposed, cols_t);
    let sum = mg.graph.add(t2i, i2t);
    Ok(mg.graph.scale(sum, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use proptest::prelude::*;

    fn unit(values: &[f64]) -> EmbeddingVector {
        crate::encoder::normalize(&EmbeddingVector::new(values.to_vec())).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let e = unit(&[1.0, 0.0]);
        let m = similarity(std::slice::from_ref(&e), std::slice::from_ref(&e), 1.0).unwrap();
        assert!((m.score(0, 0) - 1.0).abs() < 1e-12);

        let a = unit(&[1.0, 0.0]);
        let b = unit(&[0.0, 1.0]);
        let m = similarity(std::slice::from_ref(&a), &[b], 0.5).unwrap();
        assert!(m.score(0, 0).abs() < 1e-12);

        let anti = unit(&[-1.0, 0.0]);
        let m = similarity(&[a], &[anti], 0.1).unwrap();
        assert!((m.score(0, 0) + 10.0).abs() < 1e-9);
    }

    #[test]
    fn similarity_rejects_bad_inputs() {
        let e = unit(&[1.0, 0.0]);
        let raw = EmbeddingVector::new(vec![3.0, 4.0]);
        let one = std::slice::from_ref(&e);
        assert!(similarity(one, &[e.clone(), e.clone()], 1.0).is_err());
        assert!(similarity(one, one, 0.0).is_err());
        assert!(similarity(one, one, -1.0).is_err());
        assert!(similarity(&[raw], one, 1.0).is_err());
    }

    #[test]
    fn uniform_logits_loss_is_ln_n() {
        let m = SimilarityMatrix::from_raw(vec![0.0; 16], 4, 4, 1.0).unwrap();
        let loss = contrastive_loss(&m, &MatchTargets::Diagonal).unwrap();
        assert!((loss.total - 4.0f64.ln()).abs() < 1e-12);
        assert!((loss.text_to_image - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = SimilarityMatrix::from_raw(vec![2.0, 0.0, 0.0, 2.0], 2, 2, 1.0).unwrap();
        let loss = contrastive_loss(&m, &MatchTargets::Diagonal).unwrap();
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert!((loss.total - expected).abs() < 1e-12);
    }

    #[test]
    fn perfectly_matched_limit_approaches_zero() {
        let m = SimilarityMatrix::from_raw(vec![60.0, 0.0, 0.0, 60.0], 2, 2, 1.0).unwrap();
        let loss = contrastive_loss(&m, &MatchTargets::Diagonal).unwrap();
        assert!(loss.total >= 0.0);
        assert!(loss.total < 1e-20, "loss {}", loss.total);
    }

    #[test]
    fn transpose_swaps_directional_components() {
        let m = SimilarityMatrix::from_raw(
            vec![1.3, -0.2, 0.5, 0.1, 2.0, -0.7, 0.4, 0.9, 1.1],
            3,
            3,
            0.5,
        )
        .unwrap();
        let loss = contrastive_loss(&m, &MatchTargets::Diagonal).unwrap();
        let loss_t = contrastive_loss(&m.transposed(), &MatchTargets::Diagonal).unwrap();
        assert!((loss.total - loss_t.total).abs() < 1e-12);
        assert!((loss.text_to_image - loss_t.image_to_text).abs() < 1e-12);
        assert!((loss.image_to_text - loss_t.text_to_image).abs() < 1e-12);
    }

    #[test]
    fn decreasing_tau_decreases_loss_when_diagonal_dominates() {
        let texts = vec![unit(&[1.0, 0.1, 0.0]), unit(&[0.1, 1.0, 0.1]), unit(&[0.0, 0.1, 1.0])];
        let images = texts.clone();
        let mut prev = f64::INFINITY;
        for tau in [1.0, 0.5, 0.25, 0.1] {
            let m = similarity(&texts, &images, tau).unwrap();
            let loss = contrastive_loss(&m, &MatchTargets::Diagonal).unwrap();
            assert!(
                loss.total < prev,
                "tau {tau}: loss {} not below {prev}",
                loss.total
            );
            prev = loss.total;
        }
    }

    #[test]
    fn same_category_samples_are_mutual_positives() {
        // Diagonal targets push a same-category off-diagonal score down;
        // category targets pull it up toward the shared positives.
        let scores = vec![5.0, 4.5, 0.0, 4.5, 5.0, 0.0, 0.0, 0.0, 5.0];
        let grad_01 = |targets: &MatchTargets| -> f64 {
            let h = 1e-6;
            let mut plus = scores.clone();
            plus[1] += h;
            let mut minus = scores.clone();
            minus[1] -= h;
            let lp = contrastive_loss(
                &SimilarityMatrix::from_raw(plus, 3, 3, 1.0).unwrap(),
                targets,
            )
            .unwrap()
            .total;
            let lm = contrastive_loss(
                &SimilarityMatrix::from_raw(minus, 3, 3, 1.0).unwrap(),
                targets,
            )
            .unwrap()
            .total;
            (lp - lm) / (2.0 * h)
        };
        assert!(grad_01(&MatchTargets::Diagonal) > 0.0);
        assert!(grad_01(&MatchTargets::Categories(vec![7, 7, 9])) < 0.0);
    }

    #[test]
    fn combined_loss_sums_components() {
        let l1 = LossValue::new(0.5, 0.5);
        let l2 = LossValue::new(1.25, 1.25);
        let combined = combined_loss(&[l1, l2]).unwrap();
        assert!((combined.total - 1.75).abs() < 1e-12);
        let single = combined_loss(&[l1]).unwrap();
        assert_eq!(single, l1);
        assert!(combined_loss(&[]).is_err());
    }

    #[test]
    fn graph_loss_matches_value_loss() {
        let params = ModelParams::init(EncoderConfig::default(), 1).unwrap();
        let d = 6;
        let vecs: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..d)
                    .map(|j| ((i * d + j) as f64 * 0.37).sin())
                    .collect()
            })
            .collect();
        let tvecs: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..d)
                    .map(|j| ((i * d + j) as f64 * 0.61).cos())
                    .collect()
            })
            .collect();

        let mut mg = ModelGraph::new(&params);
        let t_ids: Vec<NodeId> = tvecs
            .iter()
            .map(|v| mg.graph.leaf(Tensor::from_vec(&[d], v.clone())))
            .collect();
        let v_ids: Vec<NodeId> = vecs
            .iter()
            .map(|v| mg.graph.leaf(Tensor::from_vec(&[d], v.clone())))
            .collect();
        let keys = vec![1u64, 2, 1, 3];
        let root = contrastive_batch_node(
            &mut mg,
            &params,
            &t_ids,
            &v_ids,
            &MatchTargets::Categories(keys.clone()),
        )
        .unwrap();

        let texts: Vec<EmbeddingVector> = tvecs.iter().map(|v| unit(v)).collect();
        let images: Vec<EmbeddingVector> = vecs.iter().map(|v| unit(v)).collect();
        let m = similarity(&texts, &images, params.temperature()).unwrap();
        let value_loss =
            contrastive_loss(&m, &MatchTargets::Categories(keys)).unwrap();
        assert!(
            (mg.graph.value(root).item() - value_loss.total).abs() < 1e-10,
            "graph {} vs value {}",
            mg.graph.value(root).item(),
            value_loss.total
        );
    }

    #[test]
    fn gradient_of_summed_losses_equals_sum_of_gradients() {
        let params = ModelParams::init(EncoderConfig::default(), 2).unwrap();
        let text = ["no diabetic retinopathy", "severe diabetic retinopathy"];
        let other = ["mild diabetic retinopathy", "cataract in the left eye"];

        let mut mg = ModelGraph::new(&params);
        let t1: Vec<NodeId> = text
            .iter()
            .map(|s| mg.encode_text(&params, s).unwrap())
            .collect();
        let t2: Vec<NodeId> = other
            .iter()
            .map(|s| mg.encode_text(&params, s).unwrap())
            .collect();
        // Cross the streams so both losses share parameters.
        let l1 = contrastive_batch_node(&mut mg, &params, &t1, &t2, &MatchTargets::Diagonal)
            .unwrap();
        let l2 = contrastive_batch_node(&mut mg, &params, &t2, &t1, &MatchTargets::Diagonal)
            .unwrap();
        let sum = mg.graph.add(l1, l2);

        let g_sum = mg.param_gradients(&params, sum);
        let g1 = mg.param_gradients(&params, l1);
        let g2 = mg.param_gradients(&params, l2);
        for slot in 0..params.len() {
            for i in 0..g_sum[slot].len() {
                let lhs = g_sum[slot].data()[i];
                let rhs = g1[slot].data()[i] + g2[slot].data()[i];
                assert!(
                    (lhs - rhs).abs() <= 1e-10,
                    "slot {slot} coord {i}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        // Criterion-level check at embedding granularity: perturb raw
        // embedding coordinates and compare against the value-level loss.
        let params = ModelParams::init(EncoderConfig::default(), 3).unwrap();
        let d = 5;
        let n = 3;
        let mut tvals: Vec<Vec<f64>> = Vec::new();
        let mut vvals: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            tvals.push((0..d).map(|j| ((3 + i * d + j) as f64 * 0.41).sin() + 0.2).collect());
            vvals.push((0..d).map(|j| ((7 + i * d + j) as f64 * 0.29).cos() + 0.1).collect());
        }
        let keys = vec![1u64, 1, 2];

        let mut mg = ModelGraph::new(&params);
        let t_ids: Vec<NodeId> = tvals
            .iter()
            .map(|v| mg.graph.leaf(Tensor::from_vec(&[d], v.clone())))
            .collect();
        let v_ids: Vec<NodeId> = vvals
            .iter()
            .map(|v| mg.graph.leaf(Tensor::from_vec(&[d], v.clone())))
            .collect();
        let root = contrastive_batch_node(
            &mut mg,
            &params,
            &t_ids,
            &v_ids,
            &MatchTargets::Categories(keys.clone()),
        )
        .unwrap();
        let grads = mg.graph.backward(root);

        let value_loss = |t: &[Vec<f64>], v: &[Vec<f64>]| -> f64 {
            let texts: Vec<EmbeddingVector> = t.iter().map(|x| unit(x)).collect();
            let images: Vec<EmbeddingVector> = v.iter().map(|x| unit(x)).collect();
            let m = similarity(&texts, &images, params.temperature()).unwrap();
            contrastive_loss(&m, &MatchTargets::Categories(keys.clone()))
                .unwrap()
                .total
        };

        for (si, ids, _vals, is_text) in
            [(0usize, &t_ids, &tvals, true), (1, &v_ids, &vvals, false)]
        {
            let _ = si;
            for (row, &id) in ids.iter().enumerate() {
                let g = grads.get(id).unwrap();
                for j in 0..d {
                    let h = 1e-6;
                    let mut tp = tvals.clone();
                    let mut vp = vvals.clone();
                    let mut tm = tvals.clone();
                    let mut vm = vvals.clone();
                    if is_text {
                        tp[row][j] += h;
                        tm[row][j] -= h;
                    } else {
                        vp[row][j] += h;
                        vm[row][j] -= h;
                    }
                    let fd =
                        (value_loss(&tp, &vp) - value_loss(&tm, &vm)) / (2.0 * h);
                    let a = g.data()[j];
                    let denom = fd.abs().max(a.abs()).max(1e-8);
                    assert!(
                        ((a - fd) / denom).abs() < 1e-4,
                        "row {row} coord {j}: analytic {a} vs fd {fd}"
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(
            scores in proptest::collection::vec(-5.0f64..5.0, 9),
        ) {
            let m = SimilarityMatrix::from_raw(scores, 3, 3, 1.0).unwrap();
            let loss = contrastive_loss(&m, &MatchTargets::Diagonal).unwrap();
            prop_assert!(loss.total >= 0.0);
            prop_assert!(
                (loss.total - 0.5 * (loss.text_to_image + loss.image_to_text)).abs()
                    < 1e-12
            );
        }
    }
}
