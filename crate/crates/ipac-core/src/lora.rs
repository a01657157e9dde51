//! Low-rank adapters on the encoder's linear maps.
//!
//! Each adapted map `W: [in, out]` gains factors `A: [in, r]` (seeded
//! Gaussian, std 0.02) and `B: [r, out]` (zeros), contributing
//! `scaling * (x · A) · B` with `scaling = alpha / r`. Zero-initialised `B`
//! makes the adapted forward equal the base forward until the first update,
//! which the frozen-base fine-tuning scheme relies on.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::encoder::{EncoderConfig, EncoderModel};
use crate::numerics::{NumericsError, Tensor};
use crate::rng::{index_uniform, mix, Rng};

/// Which linear maps inside a block carry adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LoraTarget {
    Query,
    Key,
    Value,
    Output,
    FfUp,
    FfDown,
}

impl LoraTarget {
    pub const ALL: [LoraTarget; 6] = [
        LoraTarget::Query,
        LoraTarget::Key,
        LoraTarget::Value,
        LoraTarget::Output,
        LoraTarget::FfUp,
        LoraTarget::FfDown,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LoraTarget::Query => "q",
            LoraTarget::Key => "k",
            LoraTarget::Value => "v",
            LoraTarget::Output => "o",
            LoraTarget::FfUp => "up",
            LoraTarget::FfDown => "down",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// (fan_in, fan_out) of the adapted map.
    pub fn dims(&self, cfg: &EncoderConfig) -> (usize, usize) {
        match self {
            LoraTarget::Query | LoraTarget::Key | LoraTarget::Value | LoraTarget::Output => {
                (cfg.hidden, cfg.hidden)
            }
            LoraTarget::FfUp => (cfg.hidden, cfg.ff_dim),
            LoraTarget::FfDown => (cfg.ff_dim, cfg.hidden),
        }
    }

    fn weight_param(&self, layer: usize) -> String {
        match self {
            LoraTarget::Query => format!("layer.{layer}.attn.q.weight"),
            LoraTarget::Key => format!("layer.{layer}.attn.k.weight"),
            LoraTarget::Value => format!("layer.{layer}.attn.v.weight"),
            LoraTarget::Output => format!("layer.{layer}.attn.o.weight"),
            LoraTarget::FfUp => format!("layer.{layer}.ff.up.weight"),
            LoraTarget::FfDown => format!("layer.{layer}.ff.down.weight"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraConfig {
    pub r: usize,
    pub alpha: f64,
    pub dropout: f64,
    /// Sorted, deduplicated target set.
    pub targets: Vec<LoraTarget>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            r: 8,
            alpha: 32.0,
            dropout: 0.1,
            targets: LoraTarget::ALL.to_vec(),
        }
    }
}

impl LoraConfig {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.r as f64
    }

    pub fn validate(&self) -> Result<(), LoraError> {
        if self.r > 0 && self.targets.is_empty() {
            return Err(LoraError::InvalidConfig(
                "positive rank requires a non-empty target set".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LoraError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoraError {
    /// Rank-zero attach, or an adapter-requiring call on a bare model.
    NoAdapters,
    AlreadyAttached,
    InvalidConfig(String),
    Numerics(NumericsError),
}

impl fmt::Display for LoraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoraError::NoAdapters => write!(f, "model has no adapters attached"),
            LoraError::AlreadyAttached => write!(f, "adapters already attached"),
            LoraError::InvalidConfig(msg) => write!(f, "invalid adapter config: {msg}"),
            LoraError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for LoraError {}

impl From<NumericsError> for LoraError {
    fn from(e: NumericsError) -> Self {
        LoraError::Numerics(e)
    }
}

/// Adapter scalar count: `layers * Σ_target r * (fan_in + fan_out)`.
pub fn count_lora_params(cfg: &EncoderConfig, lora: &LoraConfig) -> u64 {
    let per_layer: u64 = lora
        .targets
        .iter()
        .map(|t| {
            let (fan_in, fan_out) = t.dims(cfg);
            (lora.r * (fan_in + fan_out)) as u64
        })
        .sum();
    cfg.layers as u64 * per_layer
}

/// Attach fresh adapters to every configured target in every layer.
pub fn attach_lora(
    model: &mut EncoderModel,
    mut config: LoraConfig,
    seed: u64,
) -> Result<(), LoraError> {
    if model.lora.is_some() {
        return Err(LoraError::AlreadyAttached);
    }
    if config.r == 0 {
        return Err(LoraError::NoAdapters);
    }
    config.targets.sort_unstable();
    config.targets.dedup();
    config.validate()?;

    let mut rng = Rng::new(mix(seed, 0x10ad));
    for layer in 0..model.config.layers {
        for target in &config.targets {
            let (fan_in, fan_out) = target.dims(&model.config);
            let a_data: Vec<f64> = (0..fan_in * config.r)
                .map(|_| 0.02 * rng.gaussian())
                .collect();
            let a = Tensor::matrix(fan_in, config.r, a_data).unwrap();
            let b = Tensor::zeros(&[config.r, fan_out]);
            model
                .params
                .push(&format!("lora.{layer}.{}.A", target.name()), a, true);
            model
                .params
                .push(&format!("lora.{layer}.{}.B", target.name()), b, true);
        }
    }
    model.lora = Some(config);
    Ok(())
}

/// Freeze everything except the adapters and the projection head. Returns the
/// trainable scalar count.
pub fn freeze_base_enable_lora(model: &mut EncoderModel) -> Result<u64, LoraError> {
    if model.lora.is_none() {
        return Err(LoraError::NoAdapters);
    }
    for entry in model.params.entries_mut() {
        entry.trainable =
            entry.name.starts_with("lora.") || entry.name.starts_with("projection.");
    }
    Ok(model.params.trainable_len())
}

/// Fold the adapter deltas into the base weights and drop the adapters:
/// `W += scaling * A · B` per target. Forward outputs are preserved up to
/// floating-point reassociation.
pub fn merge_lora(model: &mut EncoderModel) -> Result<(), LoraError> {
    let config = model.lora.take().ok_or(LoraError::NoAdapters)?;
    for layer in 0..model.config.layers {
        for target in &config.targets {
            let a = model
                .params
                .get(&format!("lora.{layer}.{}.A", target.name()))
                .expect("adapter A missing")
                .tensor
                .clone();
            let b = model
                .params
                .get(&format!("lora.{layer}.{}.B", target.name()))
                .expect("adapter B missing")
                .tensor
                .clone();
            let (fan_in, r) = (a.rows(), a.cols());
            let fan_out = b.cols();
            let scaling = config.scaling();
            let w = &mut model
                .params
                .get_mut(&target.weight_param(layer))
                .expect("base weight missing")
                .tensor;
            for i in 0..fan_in {
                for p in 0..r {
                    let aip = a.data()[i * r + p] * scaling;
                    for o in 0..fan_out {
                        w.data_mut()[i * fan_out + o] += aip * b.data()[p * fan_out + o];
                    }
                }
            }
        }
    }
    model.params.remove_prefix("lora.");
    Ok(())
}

/// Standalone adapted linear map on plain tensors:
/// `y = x · W + b + scaling * (drop(x) · A) · B`, dropout active only in
/// training mode.
#[allow(clippy::too_many_arguments)]
pub fn lora_forward(
    base_w: &Tensor,
    base_b: &Tensor,
    a: &Tensor,
    b: &Tensor,
    scaling: f64,
    dropout: f64,
    dropout_seed: u64,
    x: &Tensor,
    train_mode: bool,
) -> Result<Tensor, LoraError> {
    let (rows, fan_in, fan_out) = (x.rows(), base_w.rows(), base_w.cols());
    if x.cols() != fan_in || a.rows() != fan_in || b.cols() != fan_out || a.cols() != b.rows() {
        return Err(LoraError::Numerics(NumericsError::ShapeMismatch(format!(
            "lora_forward: x {:?}, W {:?}, A {:?}, B {:?}",
            x.shape(),
            base_w.shape(),
            a.shape(),
            b.shape()
        ))));
    }
    let r = a.cols();
    let keep = 1.0 / (1.0 - dropout);
    let mut y = alloc::vec![0.0; rows * fan_out];
    for i in 0..rows {
        for o in 0..fan_out {
            let mut acc = base_b.data()[o];
            for k in 0..fan_in {
                acc += x.data()[i * fan_in + k] * base_w.data()[k * fan_out + o];
            }
            y[i * fan_out + o] = acc;
        }
        // Low-rank delta.
        let mut down = alloc::vec![0.0; r];
        for k in 0..fan_in {
            let mut xv = x.data()[i * fan_in + k];
            if train_mode && dropout > 0.0 {
                let u = index_uniform(dropout_seed, (i * fan_in + k) as u64);
                xv = if u < dropout { 0.0 } else { xv * keep };
            }
            for p in 0..r {
                down[p] += xv * a.data()[k * r + p];
            }
        }
        for p in 0..r {
            let dv = down[p] * scaling;
            for o in 0..fan_out {
                y[i * fan_out + o] += dv * b.data()[p * fan_out + o];
            }
        }
    }
    Ok(Tensor::matrix(rows, fan_out, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{count_params, ParamSelection};
    use alloc::vec;

    fn tiny() -> EncoderModel {
        EncoderModel::new(EncoderConfig::tiny(16), 5).unwrap()
    }

    #[test]
    fn fresh_adapter_is_identity_bitwise() {
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bias = Tensor::vector(vec![0.0, 0.0]);
        let a = Tensor::matrix(2, 1, vec![0.3, -0.7]).unwrap();
        let b = Tensor::zeros(&[1, 2]);
        let x = Tensor::matrix(1, 2, vec![1.5, -2.5]).unwrap();
        let y = lora_forward(&w, &bias, &a, &b, 4.0, 0.1, 9, &x, true).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn hand_worked_delta() {
        // Identity base, rank 1, scaling 1: delta = (x·A)·B = [3, 0].
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bias = Tensor::vector(vec![0.0, 0.0]);
        let a = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let b = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let y = lora_forward(&w, &bias, &a, &b, 1.0, 0.0, 0, &x, false).unwrap();
        assert_eq!(y.data(), &[4.0, 2.0]);
    }

    #[test]
    fn single_map_param_count_formula() {
        // One 4x4 map at rank 2: 2 * (4 + 4) = 16.
        let mut cfg = EncoderConfig::tiny(16);
        cfg.layers = 1;
        cfg.hidden = 4;
        cfg.heads = 1;
        cfg.ff_dim = 8;
        let lora = LoraConfig {
            r: 2,
            alpha: 4.0,
            dropout: 0.0,
            targets: vec![LoraTarget::Query],
        };
        assert_eq!(count_lora_params(&cfg, &lora), 16);
    }

    #[test]
    fn published_adapter_count_at_base_shape() {
        let cfg = EncoderConfig::default();
        let lora = LoraConfig::default();
        assert_eq!(count_lora_params(&cfg, &lora), 1_327_104);
    }

    #[test]
    fn rank_zero_counts_nothing() {
        let cfg = EncoderConfig::default();
        let lora = LoraConfig {
            r: 0,
            ..LoraConfig::default()
        };
        assert_eq!(count_lora_params(&cfg, &lora), 0);
    }

    #[test]
    fn rank_zero_attach_rejected() {
        let mut model = tiny();
        let cfg = LoraConfig {
            r: 0,
            ..LoraConfig::default()
        };
        assert_eq!(attach_lora(&mut model, cfg, 1), Err(LoraError::NoAdapters));
    }

    #[test]
    fn double_attach_rejected() {
        let mut model = tiny();
        attach_lora(&mut model, LoraConfig::default(), 1).unwrap();
        assert_eq!(
            attach_lora(&mut model, LoraConfig::default(), 2),
            Err(LoraError::AlreadyAttached)
        );
    }

    #[test]
    fn count_matches_allocation_across_ranks_and_targets() {
        let mut rng = Rng::new(40);
        for r in [1usize, 2, 4, 8] {
            for _ in 0..4 {
                let mut targets = Vec::new();
                for t in LoraTarget::ALL {
                    if rng.uniform() < 0.5 {
                        targets.push(t);
                    }
                }
                if targets.is_empty() {
                    targets.push(LoraTarget::Value);
                }
                let lora = LoraConfig {
                    r,
                    alpha: 2.0 * r as f64,
                    dropout: 0.0,
                    targets,
                };
                let mut model = tiny();
                let before = model.param_count();
                attach_lora(&mut model, lora.clone(), 3).unwrap();
                assert_eq!(
                    model.param_count() - before,
                    count_lora_params(&model.config, &lora)
                );
            }
        }
    }

    #[test]
    fn freeze_marks_only_adapters_and_projection() {
        let mut model = tiny();
        assert_eq!(
            freeze_base_enable_lora(&mut model),
            Err(LoraError::NoAdapters)
        );
        attach_lora(&mut model, LoraConfig::default(), 1).unwrap();
        let trainable = freeze_base_enable_lora(&mut model).unwrap();
        let expected = count_lora_params(&model.config, model.lora.as_ref().unwrap())
            + count_params(
                &model.config,
                &ParamSelection {
                    projection: true,
                    ..ParamSelection::default()
                },
            );
        assert_eq!(trainable, expected);
        for e in model.params.entries() {
            let should_train =
                e.name.starts_with("lora.") || e.name.starts_with("projection.");
            assert_eq!(e.trainable, should_train, "{}", e.name);
        }
    }

    #[test]
    fn merge_preserves_forward_within_tolerance() {
        let mut model = tiny();
        attach_lora(&mut model, LoraConfig::default(), 21).unwrap();
        // Randomize B so the delta is non-trivial.
        let mut rng = Rng::new(99);
        for e in model.params.entries_mut() {
            if e.name.starts_with("lora.") && e.name.ends_with(".B") {
                for v in e.tensor.data_mut() {
                    *v = 0.02 * rng.gaussian();
                }
            }
        }
        let ids = vec![2, 4, 9, 3];
        let before = model.forward_tokens(&ids, false).unwrap();
        merge_lora(&mut model).unwrap();
        let after = model.forward_tokens(&ids, false).unwrap();
        let mut worst = 0.0f64;
        for (x, y) in before.data().iter().zip(after.data()) {
            worst = worst.max((x - y).abs());
        }
        assert!(worst < 1e-10, "max abs diff {worst}");
        assert!(model.lora.is_none());
    }

    #[test]
    fn merge_of_fresh_adapters_leaves_weights_bitwise() {
        let base = tiny();
        let mut model = tiny();
        attach_lora(&mut model, LoraConfig::default(), 21).unwrap();
        merge_lora(&mut model).unwrap();
        assert_eq!(model.param_count(), base.param_count());
        for (a, b) in base.params.entries().iter().zip(model.params.entries()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{}", a.name);
            }
        }
    }
}
