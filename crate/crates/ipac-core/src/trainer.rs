//! Two-phase training driver.
//!
//! Phase 1 minimises token-level cross-entropy over tagged phoneme sequences
//! with the whole model trainable. Phase 2 freezes the base model and the tag
//! head, attaches low-rank adapters, and minimises the symmetric contrastive
//! loss over cognate pair batches; only adapters and the projection head
//! move. Both phases are bit-reproducible for a fixed seed and resumable
//! from a serialized step count plus optimizer moments.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::contrastive::{ipac_loss_graph, ContrastiveError};
use crate::data::{make_grouped_batches, make_pair_batches};
use crate::encoder::{EncoderError, EncoderModel, ForwardCtx};
use crate::lora::{freeze_base_enable_lora, LoraError};
use crate::numerics::{Graph, NodeId, NumericsError, IGNORE_INDEX};
use crate::optim::{AdamW, LinearSchedule};
use crate::rng::mix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub batch_size: usize,
    pub max_seq: usize,
    /// Phase-1 epochs; no published default, exposed as configuration.
    pub ner_epochs: usize,
    pub ipac_epochs: usize,
    pub temperature: f64,
    pub seed: u64,
    pub korean_cap: usize,
    /// Optional global-norm gradient clip; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            weight_decay: 0.01,
            warmup_ratio: 0.0025,
            batch_size: 128,
            max_seq: 128,
            ner_epochs: 1,
            ipac_epochs: 2,
            temperature: 0.1,
            seed: 0,
            korean_cap: 512,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0) {
            return Err(TrainError::InvalidConfig("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(TrainError::InvalidConfig(
                "warmup_ratio must lie in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(TrainError::InvalidConfig(
                "temperature must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    InvalidConfig(String),
    EmptyCorpus,
    NoAdapters,
    NonPositiveTemperature,
    /// Training aborted on NaN/Inf at the given step; previously emitted
    /// checkpoints stay valid.
    NonFinite { step: u64 },
    Encoder(EncoderError),
    Numerics(NumericsError),
    /// A hook asked to abort (e.g. an IO failure while logging).
    Hook(String),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::InvalidConfig(msg) => write!(f, "invalid training config: {msg}"),
            TrainError::EmptyCorpus => write!(f, "training corpus is empty"),
            TrainError::NoAdapters => write!(f, "contrastive fine-tuning requires adapters"),
            TrainError::NonPositiveTemperature => write!(f, "temperature must be positive"),
            TrainError::NonFinite { step } => {
                write!(f, "non-finite loss or gradient at step {step}")
            }
            TrainError::Encoder(e) => write!(f, "{e}"),
            TrainError::Numerics(e) => write!(f, "{e}"),
            TrainError::Hook(msg) => write!(f, "aborted by hook: {msg}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<EncoderError> for TrainError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Numerics(NumericsError::NonFinite(_)) => TrainError::NonFinite { step: 0 },
            other => TrainError::Encoder(other),
        }
    }
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Numerics(e)
    }
}

impl From<LoraError> for TrainError {
    fn from(e: LoraError) -> Self {
        match e {
            LoraError::NoAdapters => TrainError::NoAdapters,
            other => TrainError::InvalidConfig(alloc::format!("{other}")),
        }
    }
}

impl From<ContrastiveError> for TrainError {
    fn from(e: ContrastiveError) -> Self {
        match e {
            ContrastiveError::NonPositiveTemperature => TrainError::NonPositiveTemperature,
            ContrastiveError::EmptyBatch => TrainError::EmptyCorpus,
            other => TrainError::InvalidConfig(alloc::format!("{other}")),
        }
    }
}

/// One tagged training sequence: token ids (with sentinels) and aligned
/// targets carrying [`IGNORE_INDEX`] on non-first subword tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerExample {
    pub ids: Vec<usize>,
    pub targets: Vec<usize>,
}

/// One cognate pair as token ids without sentinels (added at embed time).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub ids_english: Vec<usize>,
    pub ids_target: Vec<usize>,
}

/// Which phase a step belongs to; carried into hooks and serialized state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Ner,
    Ipac,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Ner => "ner",
            Phase::Ipac => "ipac",
        }
    }

    fn stream(&self) -> u64 {
        match self {
            Phase::Ner => 0x31,
            Phase::Ipac => 0x32,
        }
    }
}

/// Optimizer state plus progress; everything needed to resume a run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub opt: AdamW,
    pub steps_done: u64,
}

impl TrainState {
    pub fn fresh(config: &TrainConfig) -> Self {
        Self {
            opt: AdamW::new(config.weight_decay),
            steps_done: 0,
        }
    }
}

/// Observers for steps and epoch boundaries. Implementations that persist
/// logs or checkpoints live in the companion crate.
pub trait TrainHooks {
    fn on_step(&mut self, _phase: Phase, _step: u64, _loss: f64) -> Result<(), TrainError> {
        Ok(())
    }

    fn on_epoch_end(
        &mut self,
        _phase: Phase,
        _epoch: usize,
        _model: &EncoderModel,
        _state: &TrainState,
    ) -> Result<(), TrainError> {
        Ok(())
    }
}

/// Hooks that observe nothing.
pub struct NullHooks;

impl TrainHooks for NullHooks {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps_done: u64,
    pub last_loss: f64,
}

fn clip_gradients(grads: &mut [Option<Vec<f64>>], clip: f64) {
    let mut total = 0.0;
    for g in grads.iter().flatten() {
        for v in g {
            total += v * v;
        }
    }
    let norm = crate::math::sqrt(total);
    if norm > clip && norm > 0.0 {
        let factor = clip / norm;
        for g in grads.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Shared epoch/batch loop. `build_loss` constructs the scalar loss for one
/// batch on a fresh graph.
#[allow(clippy::too_many_arguments)]
fn run_phase<F>(
    model: &mut EncoderModel,
    phase: Phase,
    n_examples: usize,
    groups: Option<&[usize]>,
    epochs: usize,
    config: &TrainConfig,
    state: &mut TrainState,
    max_steps: Option<u64>,
    hooks: &mut dyn TrainHooks,
    mut build_loss: F,
) -> Result<TrainSummary, TrainError>
where
    F: FnMut(
        &mut EncoderModel,
        &mut Graph,
        &crate::encoder::Bindings,
        &[usize],
        &mut ForwardCtx,
    ) -> Result<NodeId, TrainError>,
{
    config.validate()?;
    if n_examples == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    // Batch order is a pure function of (seed, phase, epoch) so resumed runs
    // rebuild the same order.
    let epoch_batches = |epoch: usize| {
        let seed = mix(config.seed, mix(phase.stream(), epoch as u64));
        match groups {
            Some(g) => make_grouped_batches(g, config.batch_size, seed),
            None => make_pair_batches(n_examples, config.batch_size, seed),
        }
    };
    let batches_per_epoch = epoch_batches(0).len() as u64;
    let total_steps = batches_per_epoch * epochs as u64;
    let schedule = LinearSchedule::from_ratio(config.lr, config.warmup_ratio, total_steps);

    let mut last_loss = f64::NAN;
    while state.steps_done < total_steps {
        if let Some(cap) = max_steps {
            if state.steps_done >= cap {
                break;
            }
        }
        let epoch = (state.steps_done / batches_per_epoch) as usize;
        let batch_index = (state.steps_done % batches_per_epoch) as usize;
        let batches = epoch_batches(epoch);
        let batch = &batches[batch_index];
        let step = state.steps_done + 1;

        let mut graph = Graph::new();
        let binds = model.bind_params(&mut graph);
        let mut ctx = ForwardCtx::train(mix(config.seed, mix(phase.stream() ^ 0xd0, step)));
        let loss_node = match build_loss(model, &mut graph, &binds, batch, &mut ctx) {
            Ok(node) => node,
            Err(TrainError::NonFinite { .. }) => return Err(TrainError::NonFinite { step }),
            Err(TrainError::Numerics(NumericsError::NonFinite(_)))
            | Err(TrainError::Encoder(EncoderError::Numerics(NumericsError::NonFinite(_)))) => {
                return Err(TrainError::NonFinite { step })
            }
            Err(other) => return Err(other),
        };
        let loss = graph.value(loss_node).data()[0];
        match graph.backward(loss_node) {
            Ok(()) => {}
            Err(NumericsError::NonFinite(_)) => return Err(TrainError::NonFinite { step }),
            Err(other) => return Err(other.into()),
        }

        let mut grads: Vec<Option<Vec<f64>>> = model
            .params
            .entries()
            .iter()
            .enumerate()
            .map(|(idx, entry)| {
                if entry.trainable {
                    graph.grad(binds.node(idx)).map(|g| g.to_vec())
                } else {
                    None
                }
            })
            .collect();
        if let Some(clip) = config.grad_clip {
            clip_gradients(&mut grads, clip);
        }
        let grad_refs: Vec<Option<&[f64]>> = grads.iter().map(|g| g.as_deref()).collect();
        let lr = schedule.lr_at(step);
        state.opt.step(lr, &mut model.params, &grad_refs);

        state.steps_done = step;
        last_loss = loss;
        hooks.on_step(phase, step, loss)?;
        if step % batches_per_epoch == 0 {
            hooks.on_epoch_end(phase, epoch, model, state)?;
        }
    }
    Ok(TrainSummary {
        steps_done: state.steps_done,
        last_loss,
    })
}

/// Phase 1: supervised tag pretraining. Minimises token-level cross-entropy
/// over the batch (sentences weighted by their counted-token share) with
/// warmup/decay scheduling; sequences beyond `max_seq` tokens are truncated.
pub fn train_ner(
    model: &mut EncoderModel,
    examples: &[NerExample],
    config: &TrainConfig,
    state: &mut TrainState,
    max_steps: Option<u64>,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainSummary, TrainError> {
    let max_seq = config.max_seq.min(model.config.max_positions);
    run_phase(
        model,
        Phase::Ner,
        examples.len(),
        None,
        config.ner_epochs,
        config,
        state,
        max_steps,
        hooks,
        |model, graph, binds, batch, ctx| {
            let mut sentence_losses = Vec::with_capacity(batch.len());
            let mut total_counted = 0usize;
            for &idx in batch {
                let example = &examples[idx];
                let take = example.ids.len().min(max_seq);
                let ids = &example.ids[..take];
                let targets = &example.targets[..take];
                let counted = targets.iter().filter(|&&t| t != IGNORE_INDEX).count();
                if counted == 0 {
                    continue;
                }
                let logits = model.ner_graph(graph, binds, ids, ctx)?;
                let ce = graph.cross_entropy(logits, targets)?;
                sentence_losses.push((ce, counted));
                total_counted += counted;
            }
            if sentence_losses.is_empty() {
                return Err(TrainError::EmptyCorpus);
            }
            let mut acc: Option<NodeId> = None;
            for (ce, counted) in sentence_losses {
                let weighted = graph.scale(ce, counted as f64 / total_counted as f64)?;
                acc = Some(match acc {
                    None => weighted,
                    Some(prev) => graph.add(prev, weighted)?,
                });
            }
            Ok(acc.unwrap())
        },
    )
}

/// Phase 2: frozen-base contrastive fine-tuning. Requires attached adapters;
/// applies the freeze mask, then minimises the symmetric contrastive loss
/// over shuffled pair batches. Only adapters and the projection head change.
/// `groups` switches from mixed-language shuffling to per-group batches.
pub fn train_ipac(
    model: &mut EncoderModel,
    pairs: &[PairExample],
    groups: Option<&[usize]>,
    config: &TrainConfig,
    state: &mut TrainState,
    max_steps: Option<u64>,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainSummary, TrainError> {
    if model.lora.is_none() {
        return Err(TrainError::NoAdapters);
    }
    if !(config.temperature > 0.0) {
        return Err(TrainError::NonPositiveTemperature);
    }
    if let Some(g) = groups {
        if g.len() != pairs.len() {
            return Err(TrainError::InvalidConfig(
                "group labels must match the pair count".into(),
            ));
        }
    }
    freeze_base_enable_lora(model)?;
    let temperature = config.temperature;
    run_phase(
        model,
        Phase::Ipac,
        pairs.len(),
        groups,
        config.ipac_epochs,
        config,
        state,
        max_steps,
        hooks,
        |model, graph, binds, batch, ctx| {
            let mut english_rows = Vec::with_capacity(batch.len());
            let mut target_rows = Vec::with_capacity(batch.len());
            for &idx in batch {
                let pair = &pairs[idx];
                english_rows.push(embed_ids(model, graph, binds, &pair.ids_english, ctx)?);
                target_rows.push(embed_ids(model, graph, binds, &pair.ids_target, ctx)?);
            }
            let z_e = graph.concat_rows(&english_rows)?;
            let z_t = graph.concat_rows(&target_rows)?;
            Ok(ipac_loss_graph(graph, z_e, z_t, temperature)?)
        },
    )
}

fn embed_ids(
    model: &EncoderModel,
    graph: &mut Graph,
    binds: &crate::encoder::Bindings,
    ids: &[usize],
    ctx: &mut ForwardCtx,
) -> Result<NodeId, TrainError> {
    let mut with_sentinels = Vec::with_capacity(ids.len() + 2);
    with_sentinels.push(crate::phoneme::BOS);
    with_sentinels.extend_from_slice(ids);
    with_sentinels.push(crate::phoneme::EOS);
    Ok(model.embed_graph(graph, binds, &with_sentinels, ctx)?)
}

/// Post-training inference preparation: remove the projection head and
/// optionally fold adapters into the base weights. Tag predictions are
/// unaffected.
pub fn finalize_for_inference(
    model: &mut EncoderModel,
    merge_adapters: bool,
) -> Result<(), TrainError> {
    model.strip_projection()?;
    if merge_adapters && model.lora.is_some() {
        crate::lora::merge_lora(model)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::lora::{attach_lora, LoraConfig};
    use crate::rng::Rng;
    use alloc::vec;

    fn tiny_model(seed: u64) -> EncoderModel {
        let mut cfg = EncoderConfig::tiny(24);
        cfg.dropout = 0.0;
        EncoderModel::new(cfg, seed).unwrap()
    }

    fn synthetic_ner(n: usize, seed: u64) -> Vec<NerExample> {
        // Token id 5 is "inside an entity", everything else is outside.
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| {
                let len = 3 + rng.below(5);
                let mut ids = vec![crate::phoneme::BOS];
                let mut targets = vec![IGNORE_INDEX];
                for _ in 0..len {
                    let id = 4 + rng.below(8);
                    ids.push(id);
                    targets.push(if id == 5 { 0 } else { 6 });
                }
                ids.push(crate::phoneme::EOS);
                targets.push(IGNORE_INDEX);
                NerExample { ids, targets }
            })
            .collect()
    }

    fn synthetic_pairs(n: usize, seed: u64) -> Vec<PairExample> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| {
                let len = 2 + rng.below(4);
                let ids_english: Vec<usize> = (0..len).map(|_| 4 + rng.below(10)).collect();
                let ids_target: Vec<usize> = ids_english.iter().map(|&i| i + 10).collect();
                PairExample {
                    ids_english,
                    ids_target,
                }
            })
            .collect()
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            batch_size: 4,
            ner_epochs: 3,
            ipac_epochs: 1,
            seed,
            ..TrainConfig::default()
        }
    }

    struct Recorder {
        losses: Vec<(u64, f64)>,
        epochs: Vec<usize>,
    }

    impl TrainHooks for Recorder {
        fn on_step(&mut self, _phase: Phase, step: u64, loss: f64) -> Result<(), TrainError> {
            self.losses.push((step, loss));
            Ok(())
        }

        fn on_epoch_end(
            &mut self,
            _phase: Phase,
            epoch: usize,
            _model: &EncoderModel,
            _state: &TrainState,
        ) -> Result<(), TrainError> {
            self.epochs.push(epoch);
            Ok(())
        }
    }

    #[test]
    fn ner_training_reduces_loss_across_epochs() {
        let mut model = tiny_model(1);
        let examples = synthetic_ner(40, 2);
        let config = quick_config(3);
        let mut state = TrainState::fresh(&config);
        let mut rec = Recorder {
            losses: Vec::new(),
            epochs: Vec::new(),
        };
        train_ner(&mut model, &examples, &config, &mut state, None, &mut rec).unwrap();
        let per_epoch = examples.len().div_ceil(config.batch_size);
        let epoch_mean = |e: usize| -> f64 {
            let slice = &rec.losses[e * per_epoch..(e + 1) * per_epoch];
            slice.iter().map(|(_, l)| l).sum::<f64>() / per_epoch as f64
        };
        assert!(
            epoch_mean(2) < epoch_mean(0),
            "epoch means: {} vs {}",
            epoch_mean(2),
            epoch_mean(0)
        );
        assert_eq!(rec.epochs, vec![0, 1, 2]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let run = || {
            let mut model = tiny_model(7);
            let examples = synthetic_ner(20, 5);
            let config = quick_config(11);
            let mut state = TrainState::fresh(&config);
            let mut rec = Recorder {
                losses: Vec::new(),
                epochs: Vec::new(),
            };
            train_ner(&mut model, &examples, &config, &mut state, None, &mut rec).unwrap();
            rec.losses
                .iter()
                .map(|(_, l)| l.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_matches_straight_run() {
        let examples = synthetic_ner(20, 5);
        let config = quick_config(13);

        let mut straight_model = tiny_model(9);
        let mut straight_state = TrainState::fresh(&config);
        let mut straight = Recorder {
            losses: Vec::new(),
            epochs: Vec::new(),
        };
        train_ner(
            &mut straight_model,
            &examples,
            &config,
            &mut straight_state,
            None,
            &mut straight,
        )
        .unwrap();

        let mut resumed_model = tiny_model(9);
        let mut resumed_state = TrainState::fresh(&config);
        let mut first_half = Recorder {
            losses: Vec::new(),
            epochs: Vec::new(),
        };
        train_ner(
            &mut resumed_model,
            &examples,
            &config,
            &mut resumed_state,
            Some(7),
            &mut first_half,
        )
        .unwrap();
        let mut second_half = Recorder {
            losses: Vec::new(),
            epochs: Vec::new(),
        };
        train_ner(
            &mut resumed_model,
            &examples,
            &config,
            &mut resumed_state,
            None,
            &mut second_half,
        )
        .unwrap();

        let mut combined = first_half.losses;
        combined.extend(second_half.losses);
        assert_eq!(combined.len(), straight.losses.len());
        for ((s1, l1), (s2, l2)) in combined.iter().zip(&straight.losses) {
            assert_eq!(s1, s2);
            assert_eq!(l1.to_bits(), l2.to_bits());
        }
        // Final parameters agree bitwise too.
        for (a, b) in straight_model
            .params
            .entries()
            .iter()
            .zip(resumed_model.params.entries())
        {
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{}", a.name);
            }
        }
    }

    #[test]
    fn ipac_requires_adapters() {
        let mut model = tiny_model(3);
        let pairs = synthetic_pairs(8, 1);
        let config = quick_config(1);
        let mut state = TrainState::fresh(&config);
        assert_eq!(
            train_ipac(&mut model, &pairs, None, &config, &mut state, None, &mut NullHooks),
            Err(TrainError::NoAdapters)
        );
    }

    #[test]
    fn ipac_moves_only_adapters_and_projection() {
        let mut model = tiny_model(3);
        attach_lora(&mut model, LoraConfig::default(), 5).unwrap();
        let base_digest = model
            .params
            .digest(|n| !n.starts_with("lora.") && !n.starts_with("projection."));
        let adapter_digest = model.params.digest(|n| n.starts_with("lora."));
        let projection_digest = model.params.digest(|n| n.starts_with("projection."));

        let pairs = synthetic_pairs(12, 4);
        let config = TrainConfig {
            lr: 1e-2,
            batch_size: 4,
            ipac_epochs: 2,
            seed: 21,
            ..TrainConfig::default()
        };
        let mut state = TrainState::fresh(&config);
        train_ipac(&mut model, &pairs, None, &config, &mut state, None, &mut NullHooks).unwrap();

        assert_eq!(
            model
                .params
                .digest(|n| !n.starts_with("lora.") && !n.starts_with("projection.")),
            base_digest,
            "frozen parameters moved"
        );
        assert_ne!(
            model.params.digest(|n| n.starts_with("lora.")),
            adapter_digest,
            "adapters never moved"
        );
        assert_ne!(
            model.params.digest(|n| n.starts_with("projection.")),
            projection_digest,
            "projection never moved"
        );
    }

    #[test]
    fn finalize_keeps_tag_predictions() {
        let mut model = tiny_model(3);
        attach_lora(&mut model, LoraConfig::default(), 5).unwrap();
        // Perturb adapters so merging is non-trivial.
        let mut rng = Rng::new(31);
        for e in model.params.entries_mut() {
            if e.name.starts_with("lora.") && e.name.ends_with(".B") {
                for v in e.tensor.data_mut() {
                    *v = 0.02 * rng.gaussian();
                }
            }
        }
        let ids = vec![2, 5, 9, 3];
        let before = model.ner_logits(&ids).unwrap();

        let mut unmerged = model.clone();
        finalize_for_inference(&mut unmerged, false).unwrap();
        let after_unmerged = unmerged.ner_logits(&ids).unwrap();
        for (x, y) in before.data().iter().zip(after_unmerged.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }

        finalize_for_inference(&mut model, true).unwrap();
        let after_merged = model.ner_logits(&ids).unwrap();
        let mut worst = 0.0f64;
        for (x, y) in before.data().iter().zip(after_merged.data()) {
            worst = worst.max((x - y).abs());
        }
        assert!(worst < 1e-10, "max abs diff {worst}");
        assert!(matches!(
            finalize_for_inference(&mut model, false),
            Err(TrainError::Encoder(EncoderError::AlreadyStripped))
        ));
    }

    #[test]
    fn poisoned_parameter_aborts_as_non_finite() {
        let mut model = tiny_model(3);
        // Position row 0 is consumed by every sequence.
        model
            .params
            .get_mut("embeddings.position")
            .unwrap()
            .tensor
            .data_mut()[0] = f64::NAN;
        let examples = synthetic_ner(8, 1);
        let config = quick_config(1);
        let mut state = TrainState::fresh(&config);
        assert_eq!(
            train_ner(&mut model, &examples, &config, &mut state, None, &mut NullHooks),
            Err(TrainError::NonFinite { step: 1 })
        );
    }

    #[test]
    fn gradient_clipping_bounds_norm() {
        let mut grads = vec![Some(vec![3.0, 4.0]), None, Some(vec![0.0])];
        clip_gradients(&mut grads, 1.0);
        let norm: f64 = grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

