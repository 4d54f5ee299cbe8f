//! `EGNOCKPT` files: trained parameters plus everything needed to rebuild
//! the model that owns them.

use std::path::Path;

use egno_core::container::{write_container, ContainerReader};
use egno_core::dataset::ArrayDecl;
use egno_core::model::{Egno, EgnoConfig};
use egno_tensor::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::variant::{self, ModelVariant};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EGNOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    variant: String,
    config: EgnoConfig,
    k_raw: usize,
    edge_attr_dim: usize,
    seed: u64,
    epoch: usize,
    valid_loss: f64,
    tensors: Vec<ArrayDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: String,
    /// Model configuration after the variant's adjustments.
    pub config: EgnoConfig,
    pub k_raw: usize,
    pub edge_attr_dim: usize,
    pub seed: u64,
    /// Epoch whose parameters these are; 0 is the initialization.
    pub epoch: usize,
    pub valid_loss: f64,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn variant(&self) -> Result<&'static dyn ModelVariant> {
        variant::lookup(&self.variant)
    }

    pub fn model(&self) -> Result<Egno> {
        Ok(Egno::new(self.config.clone(), self.k_raw, self.edge_attr_dim)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            variant: self.variant.clone(),
            config: self.config.clone(),
            k_raw: self.k_raw,
            edge_attr_dim: self.edge_attr_dim,
            seed: self.seed,
            epoch: self.epoch,
            valid_loss: self.valid_loss,
            tensors: self
                .params
                .iter()
                .map(|(name, t)| ArrayDecl {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let arrays: Vec<&[f64]> = self.params.iter().map(|(_, t)| t.data()).collect();
        let mut buf = Vec::new();
        write_container(
            &mut buf,
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            &serde_json::to_vec(&header)?,
            &arrays,
        )?;
        Ok(buf)
    }

    /// Parses a whole checkpoint and checks its tensors against the model
    /// structure named in the header; nothing is returned on any failure.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, raw) = ContainerReader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
        let header: Header = serde_json::from_slice(raw)?;
        let mut params = ParamSet::new();
        for decl in &header.tensors {
            let data = r.f64s(decl.shape.iter().product())?;
            params.insert(decl.name.clone(), Tensor::new(decl.shape.clone(), data)?);
        }
        r.finish()?;
        variant::lookup(&header.variant)?;
        let ck = Self {
            variant: header.variant,
            config: header.config,
            k_raw: header.k_raw,
            edge_attr_dim: header.edge_attr_dim,
            seed: header.seed,
            epoch: header.epoch,
            valid_loss: header.valid_loss,
            params,
        };
        ck.check_structure()?;
        Ok(ck)
    }

    fn check_structure(&self) -> Result<()> {
        let reference = self.model()?.init(0);
        if reference.len() != self.params.len() {
            return Err(HarnessError::Checkpoint(format!(
                "{} tensors stored, model has {}",
                self.params.len(),
                reference.len()
            )));
        }
        for (name, t) in reference.iter() {
            match self.params.get(name) {
                Some(s) if s.shape() == t.shape() => {}
                Some(s) => {
                    return Err(HarnessError::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, model expects {:?}",
                        s.shape(),
                        t.shape()
                    )))
                }
                None => return Err(HarnessError::Checkpoint(format!("missing tensor `{name}`"))),
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
