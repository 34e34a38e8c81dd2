//! Tiny reference vision and text encoders behind stable interfaces.
//!
//! Vision: four stride-2 conv blocks, global average pooling, then a linear
//! projection into the shared embedding space. Text: token hashing into a
//! fixed bin vocabulary, embedding lookup, mean pooling, linear projection.
//! Both are small enough to train on a laptop CPU in minutes yet expressive
//! enough to learn the synthetic grade signal. Larger pretrained backbones
//! can replace them behind the same signatures via [`VisionBackbone`] /
//! [`TextBackbone`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph, NodeId};
use crate::rng::{normal, stream_rng, tags};
use crate::tensor::{ImageTensor, Tensor};

pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;
pub const CONV_PAD: usize = 1;
/// Leaky slope for the conv activations; keeps every channel trainable.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Post-projection feature for an image set or a text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector {
            values,
            normalized: false,
        }
    }

    pub(crate) fn new_normalized(values: Vec<f64>) -> Self {
        EmbeddingVector {
            values,
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        graph::l2_norm(&self.values)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.values())
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// Scales a vector to unit Euclidean norm, preserving direction.
pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid("vector", "cannot normalize a zero vector"));
    }
    Ok(EmbeddingVector::new_normalized(
        v.values().iter().map(|x| x / norm).collect(),
    ))
}

/// Encoder hyperparameters; serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Shared embedding dimension d.
    pub embed_dim: usize,
    /// Output channels of the four stride-2 conv blocks.
    pub vision_channels: Vec<usize>,
    /// Token-hash vocabulary size.
    pub text_bins: usize,
    /// Token embedding width before the text projection.
    pub text_embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 64,
            vision_channels: vec![8, 16, 32, 32],
            text_bins: 2048,
            text_embed_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 8 {
            return Err(Error::invalid("embed_dim", "must be at least 8"));
        }
        if self.vision_channels.is_empty() {
            return Err(Error::empty("vision_channels"));
        }
        if self.text_bins < 2 || self.text_embed_dim == 0 {
            return Err(Error::invalid("text_bins", "vocabulary too small"));
        }
        Ok(())
    }
}

/// Initial log-temperature, equivalent to tau = 0.07.
pub const INIT_LOG_TAU: f64 = -2.659_260_036_932_778;
/// Temperature is clamped to this range after every optimizer step.
pub const TAU_RANGE: (f64, f64) = (1e-3, 10.0);

/// Flat named-parameter store for both encoders plus the log-temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Seeded random initialization (He for convs, Glorot for projections).
    pub fn init(config: EncoderConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let mut rng = stream_rng(seed, tags::MODEL_INIT, 0);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut push = |name: String, t: Tensor| {
            names.push(name);
            tensors.push(t);
        };

        let mut cin = 3usize;
        for (i, &cout) in config.vision_channels.iter().enumerate() {
            let std = (2.0 / (cin * CONV_KERNEL * CONV_KERNEL) as f64).sqrt();
            let w = random_tensor(&mut rng, &[cout, cin, CONV_KERNEL, CONV_KERNEL], std);
            push(format!("vision.conv{}.w", i + 1), w);
            push(format!("vision.conv{}.b", i + 1), Tensor::zeros(&[cout]));
            cin = cout;
        }
        let d = config.embed_dim;
        let std = (2.0 / (cin + d) as f64).sqrt();
        push(
            "vision.proj.w".to_string(),
            random_tensor(&mut rng, &[cin, d], std),
        );
        push("vision.proj.b".to_string(), Tensor::zeros(&[d]));

        let e = config.text_embed_dim;
        push(
            "text.embed".to_string(),
            random_tensor(&mut rng, &[config.text_bins, e], 0.1),
        );
        let std = (2.0 / (e + d) as f64).sqrt();
        push(
            "text.proj.w".to_string(),
            random_tensor(&mut rng, &[e, d], std),
        );
        push("text.proj.b".to_string(), Tensor::zeros(&[d]));

        push("logit.log_tau".to_string(), Tensor::scalar(INIT_LOG_TAU));

        Ok(ModelParams {
            config,
            names,
            tensors,
        })
    }

    pub fn from_parts(
        config: EncoderConfig,
        names: Vec<String>,
        tensors: Vec<Tensor>,
    ) -> ModelParams {
        ModelParams {
            config,
            names,
            tensors,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn tensor(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensor(self.slot(name))
    }

    pub fn log_tau(&self) -> f64 {
        self.get("logit.log_tau").item()
    }

    pub fn temperature(&self) -> f64 {
        self.log_tau().exp()
    }

    /// Clamps the learnable temperature into [`TAU_RANGE`].
    pub fn clamp_temperature(&mut self) {
        let slot = self.slot("logit.log_tau");
        let v = self.tensors[slot].item();
        let clamped = v.clamp(TAU_RANGE.0.ln(), TAU_RANGE.1.ln());
        self.tensors[slot] = Tensor::scalar(clamped);
    }

    pub fn total_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

fn random_tensor(rng: &mut rand_chacha::ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| std * normal(rng)).collect())
}

// ── Tokenizer ───────────────────────────────────────────────────────────────

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Lowercases, splits on non-alphanumeric runs, and hashes each token into
/// the bin vocabulary.
pub fn tokenize_hashed(text: &str, bins: usize) -> Vec<u32> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| (fnv1a64(t.as_bytes()) % bins as u64) as u32)
        .collect()
}

// ── Value-level (evaluation-mode) forward passes ────────────────────────────

fn vision_forward_raw(params: &ModelParams, image: &ImageTensor) -> Vec<f64> {
    let mut x = image.to_chw();
    for i in 0..params.config.vision_channels.len() {
        let w = params.get(&format!("vision.conv{}.w", i + 1));
        let b = params.get(&format!("vision.conv{}.b", i + 1));
        x = graph::conv2d_fwd(&x, w, b, CONV_STRIDE, CONV_PAD);
        for v in x.data_mut() {
            if *v < 0.0 {
                *v *= LEAKY_SLOPE;
            }
        }
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut pooled = vec![0.0; c];
    for ci in 0..c {
        pooled[ci] =
            x.data()[ci * h * w..(ci + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
    }
    let pooled = Tensor::from_vec(&[c], pooled);
    graph::linear_fwd(
        &pooled,
        params.get("vision.proj.w"),
        params.get("vision.proj.b"),
    )
    .into_data()
}

/// Post-projection, pre-normalization image feature. Deterministic.
pub fn encode_image(params: &ModelParams, image: &ImageTensor) -> Result<EmbeddingVector> {
    image.validate()?;
    Ok(EmbeddingVector::new(vision_forward_raw(params, image)))
}

fn text_tokens(params: &ModelParams, text: &str) -> Result<Vec<u32>> {
    if text.trim().is_empty() {
        return Err(Error::empty("text"));
    }
    let tokens = tokenize_hashed(text, params.config.text_bins);
    if tokens.is_empty() {
        return Err(Error::empty("text tokens"));
    }
    Ok(tokens)
}

/// Post-projection text feature. Deterministic and free of global state.
pub fn encode_text(params: &ModelParams, text: &str) -> Result<EmbeddingVector> {
    let tokens = text_tokens(params, text)?;
    let pooled = graph::embed_mean_pool_fwd(params.get("text.embed"), &tokens);
    let projected = graph::linear_fwd(
        &pooled,
        params.get("text.proj.w"),
        params.get("text.proj.b"),
    );
    Ok(EmbeddingVector::new(projected.into_data()))
}

/// Normalized mean of the normalized per-variant embeddings.
pub fn ensemble_text(params: &ModelParams, variants: &[String]) -> Result<EmbeddingVector> {
    if variants.is_empty() {
        return Err(Error::empty("variants"));
    }
    let d = params.config.embed_dim;
    let mut mean = vec![0.0; d];
    for text in variants {
        let emb = normalize(&encode_text(params, text)?)?;
        for (m, v) in mean.iter_mut().zip(emb.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= variants.len() as f64;
    }
    normalize(&EmbeddingVector::new(mean))
}

// ── Pluggable backbone interfaces ───────────────────────────────────────────

/// Any image encoder producing post-projection features of a fixed dimension
/// can stand in for the reference model (e.g. a pretrained backbone adapter).
pub trait VisionBackbone {
    fn embed_dim(&self) -> usize;
    fn encode_image(&self, image: &ImageTensor) -> Result<EmbeddingVector>;
}

/// Text-side counterpart of [`VisionBackbone`].
pub trait TextBackbone {
    fn embed_dim(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<EmbeddingVector>;
}

impl VisionBackbone for ModelParams {
    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }
    fn encode_image(&self, image: &ImageTensor) -> Result<EmbeddingVector> {
        encode_image(self, image)
    }
}

impl TextBackbone for ModelParams {
    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }
    fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        encode_text(self, text)
    }
}

// ── Training-mode graph builders ────────────────────────────────────────────

/// A tape with one leaf per model parameter; encoders append their ops here
/// and training reads gradients back by parameter slot.
pub struct ModelGraph {
    pub graph: Graph,
    param_nodes: Vec<NodeId>,
    n_params: usize,
}

impl ModelGraph {
    pub fn new(params: &ModelParams) -> ModelGraph {
        let mut graph = Graph::new();
        let param_nodes = (0..params.len())
            .map(|slot| graph.param(slot, params.tensor(slot).clone()))
            .collect();
        ModelGraph {
            graph,
            param_nodes,
            n_params: params.len(),
        }
    }

    pub fn param_node(&self, params: &ModelParams, name: &str) -> NodeId {
        self.param_nodes[params.slot(name)]
    }

    /// Differentiable image encoding; output node holds the [d] feature.
    pub fn encode_image(
        &mut self,
        params: &ModelParams,
        image: &ImageTensor,
    ) -> Result<NodeId> {
        image.validate()?;
        let mut x = self.graph.leaf(image.to_chw());
        for i in 0..params.config.vision_channels.len() {
            let w = self.param_node(params, &format!("vision.conv{}.w", i + 1));
            let b = self.param_node(params, &format!("vision.conv{}.b", i + 1));
            let conv = self.graph.conv2d(x, w, b, CONV_STRIDE, CONV_PAD);
            x = self.graph.leaky_relu(conv, LEAKY_SLOPE);
        }
        let pooled = self.graph.global_avg_pool(x);
        let w = self.param_node(params, "vision.proj.w");
        let b = self.param_node(params, "vision.proj.b");
        Ok(self.graph.linear(pooled, w, b))
    }

    /// Differentiable text encoding.
    pub fn encode_text(&mut self, params: &ModelParams, text: &str) -> Result<NodeId> {
        let tokens = text_tokens(params, text)?;
        let table = self.param_node(params, "text.embed");
        let pooled = self.graph.embed_mean_pool(table, tokens);
        let w = self.param_node(params, "text.proj.w");
        let b = self.param_node(params, "text.proj.b");
        Ok(self.graph.linear(pooled, w, b))
    }

    /// Backward from a scalar loss; returns one gradient tensor per
    /// parameter slot (zeros where a parameter is unused).
    pub fn param_gradients(&self, params: &ModelParams, root: NodeId) -> Vec<Tensor> {
        let grads = self.graph.backward(root);
        let mut out: Vec<Tensor> = (0..self.n_params)
            .map(|slot| Tensor::zeros(params.tensor(slot).shape()))
            .collect();
        for (slot, g) in self.graph.param_grads(&grads) {
            out[slot] = g;
        }
        out
    }
}
