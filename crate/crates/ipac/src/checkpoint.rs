//! Binary checkpoint container.
//!
//! Layout: magic bytes `IPAC`, format version (u32 LE), JSON header length
//! (u64 LE), UTF-8 JSON header, then raw parameter data in manifest order.
//! Model checkpoints store parameters as little-endian f32. Train-state
//! checkpoints store parameters and optimizer moments as little-endian f64
//! so a resumed run continues bit-for-bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use ipac_core::encoder::{EncoderConfig, EncoderModel, ParamStore, Pooling};
use ipac_core::lora::{LoraConfig, LoraTarget};
use ipac_core::numerics::Tensor;
use ipac_core::optim::{AdamW, Moments};
use ipac_core::trainer::{Phase, TrainState};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"IPAC";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ConfigJson {
    layers: usize,
    hidden: usize,
    heads: usize,
    ff_dim: usize,
    vocab_size: usize,
    max_positions: usize,
    dropout: f64,
    proj_dim: usize,
    num_tags: usize,
    pooling: String,
}

impl ConfigJson {
    fn from_config(c: &EncoderConfig) -> Self {
        Self {
            layers: c.layers,
            hidden: c.hidden,
            heads: c.heads,
            ff_dim: c.ff_dim,
            vocab_size: c.vocab_size,
            max_positions: c.max_positions,
            dropout: c.dropout,
            proj_dim: c.proj_dim,
            num_tags: c.num_tags,
            pooling: match c.pooling {
                Pooling::Mean => "mean".into(),
                Pooling::FirstToken => "first".into(),
            },
        }
    }

    fn to_config(&self) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            layers: self.layers,
            hidden: self.hidden,
            heads: self.heads,
            ff_dim: self.ff_dim,
            vocab_size: self.vocab_size,
            max_positions: self.max_positions,
            dropout: self.dropout,
            proj_dim: self.proj_dim,
            num_tags: self.num_tags,
            pooling: match self.pooling.as_str() {
                "mean" => Pooling::Mean,
                "first" => Pooling::FirstToken,
                other => {
                    return Err(Error::data(format!("unknown pooling {other:?} in header")))
                }
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LoraJson {
    r: usize,
    alpha: f64,
    dropout: f64,
    targets: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamJson {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainJson {
    phase: String,
    steps_done: u64,
    weight_decay: f64,
    /// Moment buffers follow the parameter payload, `m` then `v` per entry.
    moments: Vec<ParamJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    dtype: String,
    config: ConfigJson,
    vocabulary: String,
    projection_active: bool,
    lora: Option<LoraJson>,
    params: Vec<ParamJson>,
    train: Option<TrainJson>,
}

fn lora_to_json(l: &LoraConfig) -> LoraJson {
    LoraJson {
        r: l.r,
        alpha: l.alpha,
        dropout: l.dropout,
        targets: l.targets.iter().map(|t| t.name().to_string()).collect(),
    }
}

fn lora_from_json(j: &LoraJson) -> Result<LoraConfig> {
    let mut targets = Vec::new();
    for name in &j.targets {
        targets.push(
            LoraTarget::from_name(name)
                .ok_or_else(|| Error::data(format!("unknown adapter target {name:?}")))?,
        );
    }
    Ok(LoraConfig {
        r: j.r,
        alpha: j.alpha,
        dropout: j.dropout,
        targets,
    })
}

fn write_container(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let header_bytes = serde_json::to_vec(header)
        .map_err(|e| Error::data(format!("cannot encode header: {e}")))?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(&MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    file.write_all(payload)?;
    file.flush()?;
    Ok(())
}

fn read_container(path: &Path) -> Result<(Header, Vec<u8>)> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::data(format!("{}: truncated header", path.display())))?;
    if magic != MAGIC {
        return Err(Error::data(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::data(format!(
            "{}: unsupported format version {version}",
            path.display()
        )));
    }
    let mut long = [0u8; 8];
    file.read_exact(&mut long)?;
    let header_len = u64::from_le_bytes(long) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::data(format!("{}: bad header: {e}", path.display())))?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    Ok((header, payload))
}

fn param_manifest(params: &ParamStore) -> Vec<ParamJson> {
    params
        .entries()
        .iter()
        .map(|e| ParamJson {
            name: e.name.clone(),
            shape: e.tensor.shape().to_vec(),
        })
        .collect()
}

/// Save an inference/model checkpoint (f32 parameters).
pub fn save_model(path: &Path, model: &EncoderModel, vocabulary_ref: &str) -> Result<()> {
    let header = Header {
        kind: "model".into(),
        dtype: "f32".into(),
        config: ConfigJson::from_config(&model.config),
        vocabulary: vocabulary_ref.into(),
        projection_active: model.projection_active,
        lora: model.lora.as_ref().map(lora_to_json),
        params: param_manifest(&model.params),
        train: None,
    };
    let mut payload = Vec::new();
    for e in model.params.entries() {
        for v in e.tensor.data() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_container(path, &header, &payload)
}

/// Save a resumable train-state checkpoint (f64 parameters and moments).
pub fn save_state(
    path: &Path,
    model: &EncoderModel,
    state: &TrainState,
    phase: Phase,
    vocabulary_ref: &str,
) -> Result<()> {
    let moments: Vec<ParamJson> = state
        .opt
        .moments()
        .iter()
        .map(|(name, m)| ParamJson {
            name: name.clone(),
            shape: vec![m.m.len()],
        })
        .collect();
    let header = Header {
        kind: "train-state".into(),
        dtype: "f64".into(),
        config: ConfigJson::from_config(&model.config),
        vocabulary: vocabulary_ref.into(),
        projection_active: model.projection_active,
        lora: model.lora.as_ref().map(lora_to_json),
        params: param_manifest(&model.params),
        train: Some(TrainJson {
            phase: phase.name().into(),
            steps_done: state.steps_done,
            weight_decay: state.opt.weight_decay,
            moments,
        }),
    };
    let mut payload = Vec::new();
    for e in model.params.entries() {
        for v in e.tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (_, m) in state.opt.moments() {
        for v in &m.m {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for v in &m.v {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_container(path, &header, &payload)
}

pub struct LoadedModel {
    pub model: EncoderModel,
    pub vocabulary_ref: String,
}

pub struct LoadedState {
    pub model: EncoderModel,
    pub state: TrainState,
    pub phase: Phase,
    pub vocabulary_ref: String,
}

struct PayloadCursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> PayloadCursor<'a> {
    fn take_f32(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n * 4;
        if self.offset + need > self.bytes.len() {
            return Err(Error::data("checkpoint payload truncated"));
        }
        let out = self.bytes[self.offset..self.offset + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        self.offset += need;
        Ok(out)
    }

    fn take_f64(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n * 8;
        if self.offset + need > self.bytes.len() {
            return Err(Error::data("checkpoint payload truncated"));
        }
        let out = self.bytes[self.offset..self.offset + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        self.offset += need;
        Ok(out)
    }
}

fn rebuild_model(header: &Header, cursor: &mut PayloadCursor<'_>) -> Result<EncoderModel> {
    let config = header.config.to_config()?;
    let wide = header.dtype == "f64";
    let mut params = ParamStore::default();
    for p in &header.params {
        let n: usize = p.shape.iter().product();
        let data = if wide {
            cursor.take_f64(n)?
        } else {
            cursor.take_f32(n)?
        };
        let tensor = Tensor::new(&p.shape, data)
            .map_err(|e| Error::data(format!("parameter {}: {e}", p.name)))?;
        params.push(&p.name, tensor, true);
    }
    let lora = header.lora.as_ref().map(lora_from_json).transpose()?;
    Ok(EncoderModel {
        config,
        params,
        lora,
        projection_active: header.projection_active,
    })
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let (header, payload) = read_container(path)?;
    if header.kind != "model" && header.kind != "train-state" {
        return Err(Error::data(format!(
            "{}: unknown checkpoint kind {:?}",
            path.display(),
            header.kind
        )));
    }
    let mut cursor = PayloadCursor {
        bytes: &payload,
        offset: 0,
    };
    let model = rebuild_model(&header, &mut cursor)?;
    Ok(LoadedModel {
        model,
        vocabulary_ref: header.vocabulary,
    })
}

pub fn load_state(path: &Path) -> Result<LoadedState> {
    let (header, payload) = read_container(path)?;
    if header.kind != "train-state" {
        return Err(Error::data(format!(
            "{}: not a train-state checkpoint",
            path.display()
        )));
    }
    let train = header
        .train
        .as_ref()
        .ok_or_else(|| Error::data("train-state header missing train section"))?;
    let mut cursor = PayloadCursor {
        bytes: &payload,
        offset: 0,
    };
    let model = rebuild_model(&header, &mut cursor)?;
    let mut moments = BTreeMap::new();
    for p in &train.moments {
        let n: usize = p.shape.iter().product();
        let m = cursor.take_f64(n)?;
        let v = cursor.take_f64(n)?;
        moments.insert(p.name.clone(), Moments { m, v });
    }
    let phase = match train.phase.as_str() {
        "ner" => Phase::Ner,
        "ipac" => Phase::Ipac,
        other => return Err(Error::data(format!("unknown phase {other:?}"))),
    };
    let state = TrainState {
        opt: AdamW::restore(train.weight_decay, train.steps_done, moments),
        steps_done: train.steps_done,
    };
    Ok(LoadedState {
        model,
        state,
        phase,
        vocabulary_ref: header.vocabulary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipac_core::encoder::EncoderConfig;
    use ipac_core::lora::attach_lora;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("ipac-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn model_round_trip_is_f32_exact() {
        let mut model = EncoderModel::new(EncoderConfig::tiny(12), 7).unwrap();
        attach_lora(&mut model, LoraConfig::default(), 3).unwrap();
        let path = tmp("model.ipac");
        save_model(&path, &model, "vocab.txt").unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.vocabulary_ref, "vocab.txt");
        assert_eq!(loaded.model.config, model.config);
        assert_eq!(loaded.model.lora, model.lora);
        for (a, b) in model
            .params
            .entries()
            .iter()
            .zip(loaded.model.params.entries())
        {
            assert_eq!(a.name, b.name);
            assert_eq!(a.tensor.shape(), b.tensor.shape());
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
    }

    #[test]
    fn state_round_trip_is_f64_exact() {
        let model = EncoderModel::new(EncoderConfig::tiny(12), 9).unwrap();
        let mut state = TrainState {
            opt: AdamW::new(0.01),
            steps_done: 25,
        };
        // Populate moments with one synthetic step.
        let grads: Vec<Option<Vec<f64>>> = model
            .params
            .entries()
            .iter()
            .map(|e| Some(vec![0.125; e.tensor.len()]))
            .collect();
        let grad_refs: Vec<Option<&[f64]>> = grads.iter().map(|g| g.as_deref()).collect();
        let mut model = model;
        state.opt.step(1e-3, &mut model.params, &grad_refs);

        let path = tmp("state.ipacstate");
        save_state(&path, &model, &state, Phase::Ner, "v.txt").unwrap();
        let loaded = load_state(&path).unwrap();
        assert_eq!(loaded.state.steps_done, 25);
        assert_eq!(loaded.phase, Phase::Ner);
        for (a, b) in model
            .params
            .entries()
            .iter()
            .zip(loaded.model.params.entries())
        {
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{}", a.name);
            }
        }
        assert_eq!(loaded.state.opt.moments(), state.opt.moments());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = tmp("junk.ipac");
        std::fs::write(&path, b"NOPE aaaaaaaaaaaaaaaa").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn magic_and_version_prefix_layout() {
        let model = EncoderModel::new(EncoderConfig::tiny(12), 7).unwrap();
        let path = tmp("layout.ipac");
        save_model(&path, &model, "").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"IPAC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value =
            serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
        assert_eq!(header["kind"], "model");
        assert_eq!(header["dtype"], "f32");
        assert!(header["params"].as_array().unwrap().len() > 4);
        // Payload is exactly 4 bytes per scalar in manifest order.
        let total: usize = header["params"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| {
                p["shape"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|d| d.as_u64().unwrap() as usize)
                    .product::<usize>()
            })
            .sum();
        assert_eq!(bytes.len(), 16 + header_len + 4 * total);
    }
}
