//! Run configuration files: UTF-8 `key=value` lines covering the encoder
//! shape, training hyperparameters, and adapter settings. `#` lines are
//! comments; unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use ipac_core::encoder::{EncoderConfig, Pooling};
use ipac_core::lora::{LoraConfig, LoraTarget};
use ipac_core::trainer::TrainConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub lora: LoraConfig,
}

fn parse_pooling(value: &str) -> Result<Pooling> {
    match value {
        "mean" => Ok(Pooling::Mean),
        "first" => Ok(Pooling::FirstToken),
        other => Err(Error::data(format!(
            "pooling must be `mean` or `first`, got {other:?}"
        ))),
    }
}

fn pooling_name(p: Pooling) -> &'static str {
    match p {
        Pooling::Mean => "mean",
        Pooling::FirstToken => "first",
    }
}

pub fn parse_targets(value: &str) -> Result<Vec<LoraTarget>> {
    if value == "all" {
        return Ok(LoraTarget::ALL.to_vec());
    }
    let mut targets = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let t = LoraTarget::from_name(part).ok_or_else(|| {
            Error::data(format!(
                "unknown adapter target {part:?} (expected q,k,v,o,up,down)"
            ))
        })?;
        targets.push(t);
    }
    targets.sort_unstable();
    targets.dedup();
    if targets.is_empty() {
        return Err(Error::data("adapter target list is empty"));
    }
    Ok(targets)
}

fn targets_name(targets: &[LoraTarget]) -> String {
    if targets == LoraTarget::ALL {
        return "all".to_string();
    }
    targets
        .iter()
        .map(|t| t.name())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::data(format!("config line {line_no}: expected key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)
                .map_err(|e| Error::data(format!("config line {line_no}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::data(format!("invalid {what} value {value:?}"));
        macro_rules! num {
            ($ty:ty, $what:expr) => {
                value.parse::<$ty>().map_err(|_| bad($what))?
            };
        }
        match key {
            "layers" => self.encoder.layers = num!(usize, "layers"),
            "hidden" => self.encoder.hidden = num!(usize, "hidden"),
            "heads" => self.encoder.heads = num!(usize, "heads"),
            "ff_dim" => self.encoder.ff_dim = num!(usize, "ff_dim"),
            "vocab_size" => self.encoder.vocab_size = num!(usize, "vocab_size"),
            "max_positions" => self.encoder.max_positions = num!(usize, "max_positions"),
            "dropout" => self.encoder.dropout = num!(f64, "dropout"),
            "proj_dim" => self.encoder.proj_dim = num!(usize, "proj_dim"),
            "num_tags" => self.encoder.num_tags = num!(usize, "num_tags"),
            "pooling" => self.encoder.pooling = parse_pooling(value)?,
            "lr" => self.train.lr = num!(f64, "lr"),
            "weight_decay" => self.train.weight_decay = num!(f64, "weight_decay"),
            "warmup_ratio" => self.train.warmup_ratio = num!(f64, "warmup_ratio"),
            "batch_size" => self.train.batch_size = num!(usize, "batch_size"),
            "max_seq" => self.train.max_seq = num!(usize, "max_seq"),
            "ner_epochs" => self.train.ner_epochs = num!(usize, "ner_epochs"),
            "ipac_epochs" => self.train.ipac_epochs = num!(usize, "ipac_epochs"),
            "temperature" => self.train.temperature = num!(f64, "temperature"),
            "seed" => self.train.seed = num!(u64, "seed"),
            "korean_cap" => self.train.korean_cap = num!(usize, "korean_cap"),
            "grad_clip" => {
                self.train.grad_clip = if value == "none" {
                    None
                } else {
                    Some(num!(f64, "grad_clip"))
                }
            }
            "lora_r" => self.lora.r = num!(usize, "lora_r"),
            "lora_alpha" => self.lora.alpha = num!(f64, "lora_alpha"),
            "lora_dropout" => self.lora.dropout = num!(f64, "lora_dropout"),
            "lora_targets" => self.lora.targets = parse_targets(value)?,
            other => return Err(Error::data(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Canonical serialization; `parse` of the output reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let e = &self.encoder;
        let t = &self.train;
        let l = &self.lora;
        let _ = writeln!(out, "layers={}", e.layers);
        let _ = writeln!(out, "hidden={}", e.hidden);
        let _ = writeln!(out, "heads={}", e.heads);
        let _ = writeln!(out, "ff_dim={}", e.ff_dim);
        let _ = writeln!(out, "vocab_size={}", e.vocab_size);
        let _ = writeln!(out, "max_positions={}", e.max_positions);
        let _ = writeln!(out, "dropout={}", e.dropout);
        let _ = writeln!(out, "proj_dim={}", e.proj_dim);
        let _ = writeln!(out, "num_tags={}", e.num_tags);
        let _ = writeln!(out, "pooling={}", pooling_name(e.pooling));
        let _ = writeln!(out, "lr={}", t.lr);
        let _ = writeln!(out, "weight_decay={}", t.weight_decay);
        let _ = writeln!(out, "warmup_ratio={}", t.warmup_ratio);
        let _ = writeln!(out, "batch_size={}", t.batch_size);
        let _ = writeln!(out, "max_seq={}", t.max_seq);
        let _ = writeln!(out, "ner_epochs={}", t.ner_epochs);
        let _ = writeln!(out, "ipac_epochs={}", t.ipac_epochs);
        let _ = writeln!(out, "temperature={}", t.temperature);
        let _ = writeln!(out, "seed={}", t.seed);
        let _ = writeln!(out, "korean_cap={}", t.korean_cap);
        let _ = writeln!(
            out,
            "grad_clip={}",
            t.grad_clip.map_or("none".to_string(), |c| c.to_string())
        );
        let _ = writeln!(out, "lora_r={}", l.r);
        let _ = writeln!(out, "lora_alpha={}", l.alpha);
        let _ = writeln!(out, "lora_dropout={}", l.dropout);
        let _ = writeln!(out, "lora_targets={}", targets_name(&l.targets));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let parsed = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "# comment\nlayers=2\nhidden=32\nheads=2\nff_dim=64\nlr=0.001\nlora_targets=q,v\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.encoder.layers, 2);
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(
            cfg.lora.targets,
            vec![LoraTarget::Query, LoraTarget::Value]
        );
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(RunConfig::parse("bogus=1\n").is_err());
    }

    #[test]
    fn bad_value_is_an_error() {
        assert!(RunConfig::parse("layers=abc\n").is_err());
        assert!(RunConfig::parse("pooling=weird\n").is_err());
        assert!(RunConfig::parse("lora_targets=zz\n").is_err());
    }

    #[test]
    fn grad_clip_none_and_value() {
        let cfg = RunConfig::parse("grad_clip=none\n").unwrap();
        assert_eq!(cfg.train.grad_clip, None);
        let cfg = RunConfig::parse("grad_clip=1.5\n").unwrap();
        assert_eq!(cfg.train.grad_clip, Some(1.5));
    }
}
