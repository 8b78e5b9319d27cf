//! Self-describing binary checkpoint container.
//!
//! Layout: magic `MDSUMCKP`, format version (u32 LE), section count
//! (u32 LE), then sections sorted by name. Each section is a length-prefixed
//! UTF-8 name, a one-byte kind tag, and either raw bytes (kind 0, u64 LE
//! length prefix) or an f64 tensor (kind 1: u32 LE rank, u64 LE dims,
//! f64 LE values).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dependency::RelationVocab;
use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::training::adam::AdamState;

const MAGIC: &[u8; 8] = b"MDSUMCKP";
const VERSION: u32 = 1;
const KIND_RAW: u8 = 0;
const KIND_TENSOR: u8 = 1;

/// Full optimizer-resumable training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Completed optimizer updates.
    pub step: u64,
    /// Root seed every random stream is derived from.
    pub seed: u64,
    /// Token vocabulary labels, index order, when the run carries one.
    pub token_vocab: Option<Vec<String>>,
    pub relation_vocab: Option<RelationVocab>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    step: u64,
    seed: u64,
}

impl Checkpoint {
    /// Untrained state for a configuration: freshly drawn parameters and
    /// zeroed moments at step 0.
    pub fn fresh(model: ModelConfig, seed: u64) -> Result<Checkpoint> {
        let params = ModelParams::init(&model, seed)?;
        let adam = AdamState::zeros_like(&params);
        Ok(Checkpoint {
            model,
            params,
            adam,
            step: 0,
            seed,
            token_vocab: None,
            relation_vocab: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.params.validate_shapes(&self.model)?;
        self.adam.validate_against(&self.params)
    }
}

enum Payload {
    Raw(Vec<u8>),
    Tensor(Tensor),
}

fn push_section(out: &mut Vec<u8>, name: &str, payload: &Payload) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    match payload {
        Payload::Raw(bytes) => {
            out.push(KIND_RAW);
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(bytes);
        }
        Payload::Tensor(t) => {
            out.push(KIND_TENSOR);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &dim in t.shape() {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

fn encode(cp: &Checkpoint) -> Result<Vec<u8>> {
    let mut sections: BTreeMap<String, Payload> = BTreeMap::new();
    sections.insert(
        "meta".to_string(),
        Payload::Raw(serde_json::to_vec(&Meta {
            step: cp.step,
            seed: cp.seed,
        })?),
    );
    sections.insert(
        "model_config".to_string(),
        Payload::Raw(serde_json::to_vec(&cp.model)?),
    );
    for (name, tensor) in cp.params.iter() {
        sections.insert(format!("param.{name}"), Payload::Tensor(tensor.clone()));
    }
    for (name, tensor) in &cp.adam.m {
        sections.insert(format!("adam.m.{name}"), Payload::Tensor(tensor.clone()));
    }
    for (name, tensor) in &cp.adam.v {
        sections.insert(format!("adam.v.{name}"), Payload::Tensor(tensor.clone()));
    }
    if let Some(vocab) = &cp.token_vocab {
        sections.insert("token_vocab".to_string(), Payload::Raw(serde_json::to_vec(vocab)?));
    }
    if let Some(vocab) = &cp.relation_vocab {
        sections.insert(
            "relation_vocab".to_string(),
            Payload::Raw(serde_json::to_vec(vocab)?),
        );
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, payload) in &sections {
        push_section(&mut out, name, payload);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: String,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> CoreError {
        CoreError::Checkpoint {
            section: self.section.clone(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| self.fail("file ends inside this section"))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(buf: &[u8]) -> Result<BTreeMap<String, Payload>> {
    let mut r = Reader {
        buf,
        pos: 0,
        section: "header".to_string(),
    };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(r.fail("bad magic bytes, not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!(
            "format version {version} is not the supported version {VERSION}"
        )));
    }
    let count = r.u32()?;
    let mut sections = BTreeMap::new();
    for index in 0..count {
        r.section = format!("#{index}");
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.fail("section name is not UTF-8"))?
            .to_string();
        r.section = name.clone();
        let payload = match r.u8()? {
            KIND_RAW => {
                let len = usize::try_from(r.u64()?)
                    .map_err(|_| r.fail("raw payload length overflows"))?;
                Payload::Raw(r.take(len)?.to_vec())
            }
            KIND_TENSOR => {
                let rank = r.u32()? as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(
                        usize::try_from(r.u64()?)
                            .map_err(|_| r.fail("tensor dimension overflows"))?,
                    );
                }
                let numel: usize = shape.iter().try_fold(1usize, |a, &d| {
                    a.checked_mul(d)
                        .ok_or_else(|| r.fail("tensor element count overflows"))
                })?;
                let bytes = r.take(numel * 8)?;
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Payload::Tensor(
                    Tensor::from_vec(shape, data)
                        .map_err(|e| r.fail(format!("tensor rejected: {e}")))?,
                )
            }
            kind => return Err(r.fail(format!("unknown section kind {kind}"))),
        };
        if sections.insert(name.clone(), payload).is_some() {
            return Err(r.fail("duplicate section name"));
        }
    }
    if r.pos != buf.len() {
        r.section = "trailer".to_string();
        return Err(r.fail(format!("{} trailing bytes after last section", buf.len() - r.pos)));
    }
    Ok(sections)
}

fn section_error(section: &str, message: impl Into<String>) -> CoreError {
    CoreError::Checkpoint {
        section: section.to_string(),
        message: message.into(),
    }
}

fn take_raw(sections: &mut BTreeMap<String, Payload>, name: &str) -> Result<Vec<u8>> {
    match sections.remove(name) {
        Some(Payload::Raw(bytes)) => Ok(bytes),
        Some(Payload::Tensor(_)) => Err(section_error(name, "expected raw bytes, found a tensor")),
        None => Err(section_error(name, "section missing")),
    }
}

/// Serializes a checkpoint to `path`, writing through a sibling temp file so
/// an interrupted save never clobbers an existing good checkpoint.
pub fn save_checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    cp.validate()?;
    let bytes = encode(cp)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path)?;
    let mut sections = decode(&buf)?;

    let meta: Meta = serde_json::from_slice(&take_raw(&mut sections, "meta")?)
        .map_err(|e| section_error("meta", format!("invalid JSON: {e}")))?;
    let model: ModelConfig = serde_json::from_slice(&take_raw(&mut sections, "model_config")?)
        .map_err(|e| section_error("model_config", format!("invalid JSON: {e}")))?;
    let token_vocab = match sections.contains_key("token_vocab") {
        true => Some(
            serde_json::from_slice(&take_raw(&mut sections, "token_vocab")?)
                .map_err(|e| section_error("token_vocab", format!("invalid JSON: {e}")))?,
        ),
        false => None,
    };
    let relation_vocab = match sections.contains_key("relation_vocab") {
        true => Some(
            serde_json::from_slice(&take_raw(&mut sections, "relation_vocab")?)
                .map_err(|e| section_error("relation_vocab", format!("invalid JSON: {e}")))?,
        ),
        false => None,
    };

    let mut params = BTreeMap::new();
    let mut adam = AdamState::default();
    for (name, payload) in sections {
        let tensor = match payload {
            Payload::Tensor(t) => t,
            Payload::Raw(_) => {
                return Err(section_error(&name, "expected a tensor, found raw bytes"))
            }
        };
        if let Some(p) = name.strip_prefix("param.") {
            params.insert(p.to_string(), tensor);
        } else if let Some(p) = name.strip_prefix("adam.m.") {
            adam.m.insert(p.to_string(), tensor);
        } else if let Some(p) = name.strip_prefix("adam.v.") {
            adam.v.insert(p.to_string(), tensor);
        } else {
            return Err(section_error(&name, "unrecognized section"));
        }
    }
    let params = ModelParams::from_named(params)
        .map_err(|e| section_error("param", format!("parameter table rejected: {e}")))?;

    let cp = Checkpoint {
        model,
        params,
        adam,
        step: meta.step,
        seed: meta.seed,
        token_vocab,
        relation_vocab,
    };
    cp.validate()?;
    Ok(cp)
}
