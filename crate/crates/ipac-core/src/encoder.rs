//! Transformer encoder over phoneme ids: token/position embeddings,
//! post-norm attention blocks with GELU feed-forward, masked mean pooling,
//! a small projection head for contrastive training, and a 7-tag
//! token-classification head. Parameter counts have exact closed forms.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::hash::{fnv1a64_extend, FNV_OFFSET};
use crate::lora::{LoraConfig, LoraTarget};
use crate::numerics::{Graph, NodeId, NumericsError, Tensor};
use crate::phoneme::{PhonemeSequence, BOS, EOS, PAD};
use crate::rng::{mix, Rng};

pub const NUM_TAGS: usize = 7;
pub const LAYER_NORM_EPS: f64 = 1e-12;

/// How a word embedding is pooled from token vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Mean over content tokens (sentinels and padding excluded).
    #[default]
    Mean,
    /// The leading sentinel's vector.
    FirstToken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub proj_dim: usize,
    pub num_tags: usize,
    pub pooling: Pooling,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 12,
            hidden: 768,
            heads: 12,
            ff_dim: 3072,
            vocab_size: 1970,
            max_positions: 128,
            dropout: 0.1,
            proj_dim: 64,
            num_tags: NUM_TAGS,
            pooling: Pooling::Mean,
        }
    }
}

impl EncoderConfig {
    /// Small shape for tests and desk-scale experiments.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            layers: 2,
            hidden: 32,
            heads: 2,
            ff_dim: 64,
            vocab_size,
            max_positions: 64,
            dropout: 0.1,
            proj_dim: 64,
            num_tags: NUM_TAGS,
            pooling: Pooling::Mean,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.ff_dim == 0 {
            return Err(EncoderError::InvalidConfig(
                "layers, hidden, heads and ff_dim must be positive".into(),
            ));
        }
        if self.hidden % self.heads != 0 {
            return Err(EncoderError::InvalidConfig(format!(
                "hidden ({}) must be divisible by heads ({})",
                self.hidden, self.heads
            )));
        }
        if self.vocab_size < 4 {
            return Err(EncoderError::InvalidConfig(
                "vocab_size must cover the four special ids".into(),
            ));
        }
        if self.max_positions == 0 {
            return Err(EncoderError::InvalidConfig(
                "max_positions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.proj_dim == 0 {
            return Err(EncoderError::InvalidConfig("proj_dim must be >= 1".into()));
        }
        if self.num_tags != NUM_TAGS {
            return Err(EncoderError::InvalidConfig(format!(
                "num_tags is fixed at {NUM_TAGS}, got {}",
                self.num_tags
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderError {
    InvalidConfig(String),
    SequenceTooLong { len: usize, max: usize },
    /// Contrastive encoding requested on a model whose projection head has
    /// been removed.
    ProjectionRemoved,
    AlreadyStripped,
    EmptyInput,
    Numerics(NumericsError),
}

impl fmt::Display for EncoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderError::InvalidConfig(msg) => write!(f, "invalid encoder config: {msg}"),
            EncoderError::SequenceTooLong { len, max } => {
                write!(f, "sequence of {len} tokens exceeds max positions {max}")
            }
            EncoderError::ProjectionRemoved => {
                write!(f, "projection head removed; contrastive encoding unavailable")
            }
            EncoderError::AlreadyStripped => write!(f, "projection head already removed"),
            EncoderError::EmptyInput => write!(f, "empty token sequence"),
            EncoderError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EncoderError {}

impl From<NumericsError> for EncoderError {
    fn from(e: NumericsError) -> Self {
        EncoderError::Numerics(e)
    }
}

/// One named parameter tensor with its training flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Ordered parameter store. Entry order is the checkpoint manifest order and
/// never changes except by explicit attach/remove.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn push(&mut self, name: &str, tensor: Tensor, trainable: bool) {
        debug_assert!(self.index_of(name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            trainable,
        });
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.iter_mut().find(|e| e.name == name)
    }

    pub fn remove_prefix(&mut self, prefix: &str) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !e.name.starts_with(prefix));
        before - self.entries.len()
    }

    /// Total scalar count across all entries.
    pub fn total_len(&self) -> u64 {
        self.entries.iter().map(|e| e.tensor.len() as u64).sum()
    }

    /// Total scalar count across trainable entries.
    pub fn trainable_len(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len() as u64)
            .sum()
    }

    /// Order-sensitive digest over names and value bits of the entries whose
    /// name satisfies `filter`.
    pub fn digest<F: Fn(&str) -> bool>(&self, filter: F) -> u64 {
        let mut h = FNV_OFFSET;
        for e in &self.entries {
            if !filter(&e.name) {
                continue;
            }
            h = fnv1a64_extend(h, e.name.as_bytes());
            for v in e.tensor.data() {
                h = fnv1a64_extend(h, &v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Graph handles for every parameter of one forward/backward pass, aligned
/// with [`ParamStore::entries`].
pub struct Bindings {
    ids: Vec<NodeId>,
}

impl Bindings {
    /// Wrap externally created leaves; order must match the parameter store.
    pub fn from_nodes(ids: Vec<NodeId>) -> Self {
        Self { ids }
    }

    pub fn node(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids.iter().copied()
    }
}

/// Per-pass forward context: evaluation vs training and the dropout stream.
pub struct ForwardCtx {
    pub train_mode: bool,
    seed: u64,
    counter: u64,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            train_mode: false,
            seed: 0,
            counter: 0,
        }
    }

    pub fn train(dropout_seed: u64) -> Self {
        Self {
            train_mode: true,
            seed: dropout_seed,
            counter: 0,
        }
    }

    fn next_seed(&mut self) -> u64 {
        self.counter += 1;
        mix(self.seed, self.counter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub params: ParamStore,
    pub lora: Option<LoraConfig>,
    pub projection_active: bool,
}

// --- closed-form parameter counts ---

/// Embeddings, embedding norm, and all transformer blocks.
pub fn count_base_params(cfg: &EncoderConfig) -> u64 {
    let (h, f) = (cfg.hidden as u64, cfg.ff_dim as u64);
    let embeddings = (cfg.vocab_size as u64) * h + (cfg.max_positions as u64) * h + 2 * h;
    let per_layer = 4 * (h * h + h) + 2 * h + (h * f + f) + (f * h + h) + 2 * h;
    embeddings + (cfg.layers as u64) * per_layer
}

/// hidden -> proj_dim linear with bias.
pub fn count_projection_params(cfg: &EncoderConfig) -> u64 {
    (cfg.hidden * cfg.proj_dim + cfg.proj_dim) as u64
}

/// hidden -> 7 linear with bias.
pub fn count_ner_params(cfg: &EncoderConfig) -> u64 {
    (cfg.hidden * cfg.num_tags + cfg.num_tags) as u64
}

/// Which components to include in a parameter count.
#[derive(Debug, Clone, Default)]
pub struct ParamSelection<'a> {
    pub base: bool,
    pub projection: bool,
    pub ner_head: bool,
    pub lora: Option<&'a LoraConfig>,
}

pub fn count_params(cfg: &EncoderConfig, select: &ParamSelection<'_>) -> u64 {
    let mut total = 0;
    if select.base {
        total += count_base_params(cfg);
    }
    if select.projection {
        total += count_projection_params(cfg);
    }
    if select.ner_head {
        total += count_ner_params(cfg);
    }
    if let Some(lora) = select.lora {
        total += crate::lora::count_lora_params(cfg, lora);
    }
    total
}

impl EncoderModel {
    /// Fresh model with seeded Gaussian init (std 0.02) for embeddings and
    /// linear weights, unit scale / zero shift for norms, zero biases.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = Rng::new(mix(seed, 0x1517));
        let mut params = ParamStore::default();
        let h = config.hidden;

        let gaussian = |rows: usize, cols: usize, rng: &mut Rng| -> Tensor {
            let data = (0..rows * cols).map(|_| 0.02 * rng.gaussian()).collect();
            Tensor::matrix(rows, cols, data).unwrap()
        };
        let ones = |n: usize| Tensor::vector(alloc::vec![1.0; n]);
        let zeros_vec = |n: usize| Tensor::vector(alloc::vec![0.0; n]);

        params.push(
            "embeddings.token",
            gaussian(config.vocab_size, h, &mut rng),
            true,
        );
        params.push(
            "embeddings.position",
            gaussian(config.max_positions, h, &mut rng),
            true,
        );
        params.push("embeddings.norm.gamma", ones(h), true);
        params.push("embeddings.norm.beta", zeros_vec(h), true);

        for l in 0..config.layers {
            for role in ["q", "k", "v", "o"] {
                params.push(
                    &format!("layer.{l}.attn.{role}.weight"),
                    gaussian(h, h, &mut rng),
                    true,
                );
                params.push(&format!("layer.{l}.attn.{role}.bias"), zeros_vec(h), true);
            }
            params.push(&format!("layer.{l}.attn.norm.gamma"), ones(h), true);
            params.push(&format!("layer.{l}.attn.norm.beta"), zeros_vec(h), true);
            params.push(
                &format!("layer.{l}.ff.up.weight"),
                gaussian(h, config.ff_dim, &mut rng),
                true,
            );
            params.push(&format!("layer.{l}.ff.up.bias"), zeros_vec(config.ff_dim), true);
            params.push(
                &format!("layer.{l}.ff.down.weight"),
                gaussian(config.ff_dim, h, &mut rng),
                true,
            );
            params.push(&format!("layer.{l}.ff.down.bias"), zeros_vec(h), true);
            params.push(&format!("layer.{l}.ff.norm.gamma"), ones(h), true);
            params.push(&format!("layer.{l}.ff.norm.beta"), zeros_vec(h), true);
        }

        params.push(
            "projection.weight",
            gaussian(h, config.proj_dim, &mut rng),
            true,
        );
        params.push("projection.bias", zeros_vec(config.proj_dim), true);
        params.push("ner.weight", gaussian(h, config.num_tags, &mut rng), true);
        params.push("ner.bias", zeros_vec(config.num_tags), true);

        Ok(Self {
            config,
            params,
            lora: None,
            projection_active: true,
        })
    }

    /// Allocated scalar count; equals the closed-form count for the
    /// components currently present.
    pub fn param_count(&self) -> u64 {
        self.params.total_len()
    }

    /// Register every parameter as a graph leaf, in manifest order.
    pub fn bind_params(&self, g: &mut Graph) -> Bindings {
        let ids = self
            .params
            .entries()
            .iter()
            .map(|e| g.leaf(e.tensor.clone(), e.trainable))
            .collect();
        Bindings { ids }
    }

    fn param_node(&self, binds: &Bindings, name: &str) -> NodeId {
        binds.node(
            self.params
                .index_of(name)
                .unwrap_or_else(|| panic!("missing parameter {name}")),
        )
    }

    /// Linear map with optional low-rank adapter delta.
    fn linear(
        &self,
        g: &mut Graph,
        binds: &Bindings,
        x: NodeId,
        layer: usize,
        target: Option<LoraTarget>,
        weight: &str,
        bias: &str,
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId, EncoderError> {
        let w = self.param_node(binds, weight);
        let b = self.param_node(binds, bias);
        let base = g.matmul(x, w)?;
        let with_delta = match (target, &self.lora) {
            (Some(t), Some(lora)) if lora.targets.contains(&t) => {
                let a = self.param_node(binds, &format!("lora.{layer}.{}.A", t.name()));
                let bmat = self.param_node(binds, &format!("lora.{layer}.{}.B", t.name()));
                let inp = if ctx.train_mode && lora.dropout > 0.0 {
                    let seed = ctx.next_seed();
                    g.dropout(x, lora.dropout, seed)?
                } else {
                    x
                };
                let down = g.matmul(inp, a)?;
                let up = g.matmul(down, bmat)?;
                let scaled = g.scale(up, lora.scaling())?;
                g.add(base, scaled)?
            }
            _ => base,
        };
        Ok(g.add(with_delta, b)?)
    }

    fn hidden_dropout(
        &self,
        g: &mut Graph,
        x: NodeId,
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId, EncoderError> {
        if ctx.train_mode && self.config.dropout > 0.0 {
            let seed = ctx.next_seed();
            Ok(g.dropout(x, self.config.dropout, seed)?)
        } else {
            Ok(x)
        }
    }

    /// Contextual token vectors `[len(ids), hidden]` as a graph node.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        binds: &Bindings,
        ids: &[usize],
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId, EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        if ids.len() > self.config.max_positions {
            return Err(EncoderError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_positions,
            });
        }
        let cfg = &self.config;
        let positions: Vec<usize> = (0..ids.len()).collect();

        let tok_table = self.param_node(binds, "embeddings.token");
        let pos_table = self.param_node(binds, "embeddings.position");
        let tok = g.embedding_lookup(tok_table, ids)?;
        let pos = g.embedding_lookup(pos_table, &positions)?;
        let summed = g.add(tok, pos)?;
        let gamma = self.param_node(binds, "embeddings.norm.gamma");
        let beta = self.param_node(binds, "embeddings.norm.beta");
        let mut x = g.layer_norm(summed, gamma, beta, LAYER_NORM_EPS)?;
        x = self.hidden_dropout(g, x, ctx)?;

        let head_dim = cfg.head_dim();
        let scale = 1.0 / crate::math::sqrt(head_dim as f64);
        for l in 0..cfg.layers {
            let q = self.linear(
                g,
                binds,
                x,
                l,
                Some(LoraTarget::Query),
                &format!("layer.{l}.attn.q.weight"),
                &format!("layer.{l}.attn.q.bias"),
                ctx,
            )?;
            let k = self.linear(
                g,
                binds,
                x,
                l,
                Some(LoraTarget::Key),
                &format!("layer.{l}.attn.k.weight"),
                &format!("layer.{l}.attn.k.bias"),
                ctx,
            )?;
            let v = self.linear(
                g,
                binds,
                x,
                l,
                Some(LoraTarget::Value),
                &format!("layer.{l}.attn.v.weight"),
                &format!("layer.{l}.attn.v.bias"),
                ctx,
            )?;

            let mut head_outputs = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let qh = g.slice_cols(q, h * head_dim, head_dim)?;
                let kh = g.slice_cols(k, h * head_dim, head_dim)?;
                let vh = g.slice_cols(v, h * head_dim, head_dim)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scaled = g.scale(scores, scale)?;
                let mut attn = g.row_softmax(scaled)?;
                attn = self.hidden_dropout(g, attn, ctx)?;
                head_outputs.push(g.matmul(attn, vh)?);
            }
            let merged = g.concat_cols(&head_outputs)?;
            let mut attn_out = self.linear(
                g,
                binds,
                merged,
                l,
                Some(LoraTarget::Output),
                &format!("layer.{l}.attn.o.weight"),
                &format!("layer.{l}.attn.o.bias"),
                ctx,
            )?;
            attn_out = self.hidden_dropout(g, attn_out, ctx)?;
            let residual = g.add(x, attn_out)?;
            let gamma = self.param_node(binds, &format!("layer.{l}.attn.norm.gamma"));
            let beta = self.param_node(binds, &format!("layer.{l}.attn.norm.beta"));
            x = g.layer_norm(residual, gamma, beta, LAYER_NORM_EPS)?;

            let up = self.linear(
                g,
                binds,
                x,
                l,
                Some(LoraTarget::FfUp),
                &format!("layer.{l}.ff.up.weight"),
                &format!("layer.{l}.ff.up.bias"),
                ctx,
            )?;
            let act = g.gelu(up)?;
            let mut down = self.linear(
                g,
                binds,
                act,
                l,
                Some(LoraTarget::FfDown),
                &format!("layer.{l}.ff.down.weight"),
                &format!("layer.{l}.ff.down.bias"),
                ctx,
            )?;
            down = self.hidden_dropout(g, down, ctx)?;
            let residual = g.add(x, down)?;
            let gamma = self.param_node(binds, &format!("layer.{l}.ff.norm.gamma"));
            let beta = self.param_node(binds, &format!("layer.{l}.ff.norm.beta"));
            x = g.layer_norm(residual, gamma, beta, LAYER_NORM_EPS)?;
        }
        Ok(x)
    }

    /// Pooled, projected, unit-norm word embedding `[1, proj_dim]` as a graph
    /// node. Requires the projection head.
    pub fn embed_graph(
        &self,
        g: &mut Graph,
        binds: &Bindings,
        ids: &[usize],
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId, EncoderError> {
        if !self.projection_active {
            return Err(EncoderError::ProjectionRemoved);
        }
        let tokens = self.forward_graph(g, binds, ids, ctx)?;
        let mask: Vec<bool> = match self.config.pooling {
            Pooling::Mean => ids
                .iter()
                .map(|&id| id != PAD && id != BOS && id != EOS)
                .collect(),
            Pooling::FirstToken => {
                let mut m = alloc::vec![false; ids.len()];
                m[0] = true;
                m
            }
        };
        if !mask.iter().any(|&b| b) {
            return Err(EncoderError::EmptyInput);
        }
        let pooled = g.mean_rows(tokens, &mask)?;
        let w = self.param_node(binds, "projection.weight");
        let b = self.param_node(binds, "projection.bias");
        let projected = g.matmul(pooled, w)?;
        let biased = g.add(projected, b)?;
        Ok(g.l2_normalize_rows(biased)?)
    }

    /// Per-token tag scores `[len(ids), num_tags]` as a graph node. Does not
    /// touch the projection head.
    pub fn ner_graph(
        &self,
        g: &mut Graph,
        binds: &Bindings,
        ids: &[usize],
        ctx: &mut ForwardCtx,
    ) -> Result<NodeId, EncoderError> {
        let tokens = self.forward_graph(g, binds, ids, ctx)?;
        let w = self.param_node(binds, "ner.weight");
        let b = self.param_node(binds, "ner.bias");
        let logits = g.matmul(tokens, w)?;
        Ok(g.add(logits, b)?)
    }

    /// Contextual token vectors as plain values. Deterministic when
    /// `train_mode` is false; training-mode convenience calls use a fixed
    /// dropout stream.
    pub fn forward_tokens(&self, ids: &[usize], train_mode: bool) -> Result<Tensor, EncoderError> {
        let mut g = Graph::new();
        let binds = self.bind_params(&mut g);
        let mut ctx = if train_mode {
            ForwardCtx::train(0)
        } else {
            ForwardCtx::eval()
        };
        let out = self.forward_graph(&mut g, &binds, ids, &mut ctx)?;
        Ok(g.value(out).clone())
    }

    /// Unit-norm word embedding `[proj_dim]` for one phoneme sequence.
    /// Sentinels are added here and excluded from pooling.
    pub fn embed_word(
        &self,
        seq: &PhonemeSequence,
        train_mode: bool,
    ) -> Result<Tensor, EncoderError> {
        let mut ids = Vec::with_capacity(seq.ids.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(&seq.ids);
        ids.push(EOS);
        let mut g = Graph::new();
        let binds = self.bind_params(&mut g);
        let mut ctx = if train_mode {
            ForwardCtx::train(0)
        } else {
            ForwardCtx::eval()
        };
        let out = self.embed_graph(&mut g, &binds, &ids, &mut ctx)?;
        Ok(Tensor::vector(g.value(out).data().to_vec()))
    }

    /// Per-token tag logits `[len(ids), 7]`, evaluation mode.
    pub fn ner_logits(&self, ids: &[usize]) -> Result<Tensor, EncoderError> {
        let mut g = Graph::new();
        let binds = self.bind_params(&mut g);
        let mut ctx = ForwardCtx::eval();
        let out = self.ner_graph(&mut g, &binds, ids, &mut ctx)?;
        Ok(g.value(out).clone())
    }

    /// Drop the projection head for inference. The tag head and encoder are
    /// untouched.
    pub fn strip_projection(&mut self) -> Result<(), EncoderError> {
        if !self.projection_active {
            return Err(EncoderError::AlreadyStripped);
        }
        self.params.remove_prefix("projection.");
        self.projection_active = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lora;
    use alloc::vec;

    fn tiny_model(seed: u64) -> EncoderModel {
        EncoderModel::new(EncoderConfig::tiny(16), seed).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = EncoderConfig::tiny(16);
        cfg.heads = 3; // 32 % 3 != 0
        assert!(cfg.validate().is_err());
        let mut cfg = EncoderConfig::tiny(16);
        cfg.num_tags = 5;
        assert!(cfg.validate().is_err());
        assert!(EncoderConfig::tiny(16).validate().is_ok());
    }

    #[test]
    fn allocated_count_matches_closed_form() {
        for vocab in [8, 16, 33] {
            let cfg = EncoderConfig::tiny(vocab);
            let model = EncoderModel::new(cfg.clone(), 1).unwrap();
            let expected = count_params(
                &cfg,
                &ParamSelection {
                    base: true,
                    projection: true,
                    ner_head: true,
                    lora: None,
                },
            );
            assert_eq!(model.param_count(), expected);
        }
    }

    #[test]
    fn projection_count_matches_published_shape() {
        let cfg = EncoderConfig::default();
        assert_eq!(count_projection_params(&cfg), 49_216);
    }

    #[test]
    fn forward_shape_and_determinism() {
        let model = tiny_model(3);
        let ids = vec![2, 5, 9, 3];
        let a = model.forward_tokens(&ids, false).unwrap();
        let b = model.forward_tokens(&ids, false).unwrap();
        assert_eq!(a.shape(), &[4, 32]);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn forward_rejects_too_long() {
        let model = tiny_model(3);
        let ids = vec![5usize; model.config.max_positions + 1];
        assert!(matches!(
            model.forward_tokens(&ids, false),
            Err(EncoderError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn forward_rejects_empty() {
        let model = tiny_model(3);
        assert!(matches!(
            model.forward_tokens(&[], false),
            Err(EncoderError::EmptyInput)
        ));
    }

    #[test]
    fn single_layer_attention_matches_straight_line_oracle() {
        // Straight-line re-implementation of one post-norm block with one
        // head, written independently of the graph ops.
        let mut cfg = EncoderConfig::tiny(8);
        cfg.layers = 1;
        cfg.heads = 1;
        cfg.hidden = 4;
        cfg.ff_dim = 8;
        let model = EncoderModel::new(cfg, 17).unwrap();
        let ids = vec![4, 5];
        let got = model.forward_tokens(&ids, false).unwrap();

        let p = |name: &str| model.params.get(name).unwrap().tensor.clone();
        let h = 4usize;
        let n = ids.len();

        let layer_norm = |x: &[f64], gamma: &[f64], beta: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; x.len()];
            for i in 0..x.len() / h {
                let row = &x[i * h..(i + 1) * h];
                let mean = row.iter().sum::<f64>() / h as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
                let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                for j in 0..h {
                    out[i * h + j] = gamma[j] * (row[j] - mean) * istd + beta[j];
                }
            }
            out
        };
        let linear = |x: &[f64], w: &Tensor, b: &Tensor, rows: usize| -> Vec<f64> {
            let (ins, outs) = (w.rows(), w.cols());
            let mut y = vec![0.0; rows * outs];
            for i in 0..rows {
                for o in 0..outs {
                    let mut acc = 0.0;
                    for k in 0..ins {
                        acc += x[i * ins + k] * w.data()[k * outs + o];
                    }
                    y[i * outs + o] = acc + b.data()[o];
                }
            }
            y
        };

        let tok = p("embeddings.token");
        let pos = p("embeddings.position");
        let mut x = vec![0.0; n * h];
        for (i, &id) in ids.iter().enumerate() {
            for j in 0..h {
                x[i * h + j] = tok.data()[id * h + j] + pos.data()[i * h + j];
            }
        }
        x = layer_norm(
            &x,
            p("embeddings.norm.gamma").data(),
            p("embeddings.norm.beta").data(),
        );

        let q = linear(&x, &p("layer.0.attn.q.weight"), &p("layer.0.attn.q.bias"), n);
        let k = linear(&x, &p("layer.0.attn.k.weight"), &p("layer.0.attn.k.bias"), n);
        let v = linear(&x, &p("layer.0.attn.v.weight"), &p("layer.0.attn.v.bias"), n);
        let scale = 1.0 / (h as f64).sqrt();
        let mut ctx = vec![0.0; n * h];
        for i in 0..n {
            let mut logits = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for d in 0..h {
                    dot += q[i * h + d] * k[j * h + d];
                }
                logits[j] = dot * scale;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for j in 0..n {
                let w = exps[j] / sum;
                for d in 0..h {
                    ctx[i * h + d] += w * v[j * h + d];
                }
            }
        }
        let attn_out = linear(
            &ctx,
            &p("layer.0.attn.o.weight"),
            &p("layer.0.attn.o.bias"),
            n,
        );
        let mut res: Vec<f64> = x.iter().zip(&attn_out).map(|(a, b)| a + b).collect();
        res = layer_norm(
            &res,
            p("layer.0.attn.norm.gamma").data(),
            p("layer.0.attn.norm.beta").data(),
        );
        let up = linear(&res, &p("layer.0.ff.up.weight"), &p("layer.0.ff.up.bias"), n);
        let act: Vec<f64> = up
            .iter()
            .map(|&u| {
                let inner = 0.7978845608028654 * (u + 0.044715 * u * u * u);
                0.5 * u * (1.0 + inner.tanh())
            })
            .collect();
        let down = linear(
            &act,
            &p("layer.0.ff.down.weight"),
            &p("layer.0.ff.down.bias"),
            n,
        );
        let mut out: Vec<f64> = res.iter().zip(&down).map(|(a, b)| a + b).collect();
        out = layer_norm(
            &out,
            p("layer.0.ff.norm.gamma").data(),
            p("layer.0.ff.norm.beta").data(),
        );

        let mut worst = 0.0f64;
        for (a, b) in got.data().iter().zip(&out) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-10, "max abs diff {worst}");
    }

    #[test]
    fn embed_word_is_unit_norm() {
        let model = tiny_model(9);
        let seq = PhonemeSequence {
            segments: vec!["a".into(), "b".into()],
            ids: vec![4, 5],
        };
        let e = model.embed_word(&seq, false).unwrap();
        assert_eq!(e.shape(), &[model.config.proj_dim]);
        let norm: f64 = e.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embed_word_deterministic_cosine_one() {
        let model = tiny_model(11);
        let seq = PhonemeSequence {
            segments: vec!["a".into()],
            ids: vec![7],
        };
        let a = model.embed_word(&seq, false).unwrap();
        let b = model.embed_word(&seq, false).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let cos: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooling_is_arithmetic_mean() {
        let mut g = Graph::new();
        let x = g.leaf(
            Tensor::matrix(2, 2, vec![1.0, 3.0, 3.0, 1.0]).unwrap(),
            false,
        );
        let pooled = g.mean_rows(x, &[true, true]).unwrap();
        assert_eq!(g.value(pooled).data(), &[2.0, 2.0]);
    }

    #[test]
    fn ner_logits_shape_and_stripped_mode() {
        let mut model = tiny_model(5);
        let ids = vec![2, 4, 3];
        let before = model.ner_logits(&ids).unwrap();
        assert_eq!(before.shape(), &[3, NUM_TAGS]);

        model.strip_projection().unwrap();
        let after = model.ner_logits(&ids).unwrap();
        for (x, y) in before.data().iter().zip(after.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }

        let seq = PhonemeSequence {
            segments: vec!["a".into()],
            ids: vec![4],
        };
        assert!(matches!(
            model.embed_word(&seq, false),
            Err(EncoderError::ProjectionRemoved)
        ));
        assert!(matches!(
            model.strip_projection(),
            Err(EncoderError::AlreadyStripped)
        ));
    }

    #[test]
    fn strip_projection_drops_exact_count() {
        let cfg = EncoderConfig::default();
        // Closed form only at full scale; allocation at tiny scale.
        assert_eq!(count_projection_params(&cfg), 49_216);

        let mut model = tiny_model(2);
        let before = model.param_count();
        let expected_drop = count_projection_params(&model.config);
        model.strip_projection().unwrap();
        assert_eq!(before - model.param_count(), expected_drop);
    }

    #[test]
    fn biased_tag_head_decodes_to_outside() {
        let mut model = tiny_model(23);
        {
            let w = model.params.get_mut("ner.weight").unwrap();
            for v in w.tensor.data_mut() {
                *v = 0.0;
            }
            let b = model.params.get_mut("ner.bias").unwrap();
            let data = b.tensor.data_mut();
            for v in data.iter_mut() {
                *v = 0.0;
            }
            data[6] = 10.0; // O tag
        }
        let logits = model.ner_logits(&[2, 4, 5, 3]).unwrap();
        for row in 0..logits.rows() {
            let mut best = 0;
            for j in 0..NUM_TAGS {
                if logits.at(row, j) > logits.at(row, best) {
                    best = j;
                }
            }
            assert_eq!(best, 6);
        }
    }

    #[test]
    fn lora_attach_changes_nothing_at_init() {
        let base = tiny_model(31);
        let mut adapted = tiny_model(31);
        lora::attach_lora(&mut adapted, LoraConfig::default(), 77).unwrap();
        let ids = vec![2, 6, 7, 3];
        let a = base.forward_tokens(&ids, false).unwrap();
        let b = adapted.forward_tokens(&ids, false).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn first_token_pooling_switch() {
        let mut cfg = EncoderConfig::tiny(16);
        cfg.pooling = Pooling::FirstToken;
        let model = EncoderModel::new(cfg, 3).unwrap();
        let seq = PhonemeSequence {
            segments: vec!["a".into(), "b".into()],
            ids: vec![4, 5],
        };
        let e = model.embed_word(&seq, false).unwrap();
        let norm: f64 = e.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
