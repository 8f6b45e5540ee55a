//! Binary checkpoint format.
//!
//! ```text
//! magic   8 bytes  "XAICKPT\0"
//! version u32 LE
//! step    u64 LE
//! meta    u32 LE length + UTF-8 JSON (model config, tensor layout, fingerprint)
//! count   u64 LE
//! values  count x f64 LE, tensors in layout order
//! ```
//!
//! The checkpoint id is the SHA-256 of the whole byte sequence.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Standardization;
use crate::diffcore::MlpSpec;
use crate::error::{Error, Result};
use crate::interpretcc::{FeatureGatingConfig, FeatureGatingModel, InterpretCCConfig, InterpretCCModel};
use crate::model::{AnyModel, Classifier, MlpClassifier};
use crate::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"XAICKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const STD_MEAN: &str = "standardization.mean";
const STD_SCALE: &str = "standardization.std";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    MlpBlackbox { spec: MlpSpec },
    FeatureGating(FeatureGatingConfig),
    InterpretccMoe(InterpretCCConfig),
}

impl ModelConfig {
    pub fn of(model: &AnyModel) -> Self {
        match model {
            AnyModel::Mlp(m) => Self::MlpBlackbox { spec: m.spec().clone() },
            AnyModel::FeatureGating(m) => Self::FeatureGating(m.config().clone()),
            AnyModel::InterpretCC(m) => Self::InterpretccMoe(m.config().clone()),
        }
    }

    fn build(self, store: ParamStore) -> Result<AnyModel> {
        Ok(match self {
            Self::MlpBlackbox { spec } => AnyModel::Mlp(MlpClassifier::from_store(store, spec)?),
            Self::FeatureGating(c) => AnyModel::FeatureGating(FeatureGatingModel::from_store(c, store)?),
            Self::InterpretccMoe(c) => AnyModel::InterpretCC(InterpretCCModel::from_store(c, store)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    tool_version: String,
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
    constant_features: Option<Vec<usize>>,
    fingerprint: Option<serde_json::Value>,
}

/// A model plus everything needed to reproduce its predictions on raw inputs.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub checkpoint_id: String,
    pub step: u64,
    pub model: AnyModel,
    /// Applied to raw features before the model sees them.
    pub standardization: Option<Standardization>,
    /// Serialized run configuration of the producing command.
    pub fingerprint: Option<serde_json::Value>,
}

pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode(
    model: &AnyModel,
    step: u64,
    standardization: Option<&Standardization>,
    fingerprint: Option<&serde_json::Value>,
) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (_, name, t) in model.store().iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            trainable: t.requires_grad(),
        });
        values.extend_from_slice(t.values());
    }
    if let Some(s) = standardization {
        for (name, v) in [(STD_MEAN, &s.mean), (STD_SCALE, &s.std)] {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: vec![v.len()],
                trainable: false,
            });
            values.extend_from_slice(v);
        }
    }
    let meta = Meta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        model: ModelConfig::of(model),
        tensors,
        constant_features: standardization.map(|s| s.constant_features.clone()),
        fingerprint: fingerprint.cloned(),
    };
    let meta = serde_json::to_vec(&meta)?;
    let meta_len = u32::try_from(meta.len()).map_err(|_| Error::Format("checkpoint metadata too large".into()))?;
    let mut out = Vec::with_capacity(32 + meta.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    /// Captures `model` at `step`.
    pub fn snapshot(
        model: &AnyModel,
        step: u64,
        standardization: Option<&Standardization>,
        fingerprint: Option<&serde_json::Value>,
    ) -> Result<Self> {
        let bytes = encode(model, step, standardization, fingerprint)?;
        Ok(Self {
            checkpoint_id: content_id(&bytes),
            step,
            model: model.clone(),
            standardization: standardization.cloned(),
            fingerprint: fingerprint.cloned(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode(&self.model, self.step, self.standardization.as_ref(), self.fingerprint.as_ref())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let step = r.u64()?;
        let meta_len = r.u32()? as usize;
        let meta: Meta = serde_json::from_slice(r.take(meta_len)?)?;
        let count = r.u64()? as usize;
        let expected: usize = meta.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if count != expected {
            return Err(Error::Format(format!(
                "checkpoint holds {count} values but its layout needs {expected}"
            )));
        }
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("value count overflows".into()))?)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut store = ParamStore::new();
        let (mut mean, mut scale) = (None, None);
        for entry in &meta.tensors {
            let n: usize = entry.shape.iter().product();
            let v: Vec<f64> = values.by_ref().take(n).collect();
            match entry.name.as_str() {
                STD_MEAN => mean = Some(v),
                STD_SCALE => scale = Some(v),
                _ => {
                    store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), v)?, entry.trainable)?;
                }
            }
        }
        let standardization = match (mean, scale) {
            (Some(mean), Some(std)) => Some(Standardization {
                mean,
                std,
                constant_features: meta.constant_features.clone().unwrap_or_default(),
            }),
            (None, None) => None,
            _ => return Err(Error::Format("checkpoint has partial standardization statistics".into())),
        };
        Ok(Self {
            checkpoint_id: content_id(bytes),
            step,
            model: meta.model.build(store)?,
            standardization,
            fingerprint: meta.fingerprint,
        })
    }

    /// Raw features mapped into the model's input space.
    pub fn prepare(&self, raw: &[f64]) -> Vec<f64> {
        match &self.standardization {
            Some(s) => s.apply_row(raw),
            None => raw.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpretcc::FeatureGroupSpec;
    use crate::Rng;

    fn models() -> Vec<AnyModel> {
        let mut rng = Rng::new(3);
        let groups = FeatureGroupSpec::contiguous(5, 2).unwrap();
        vec![
            AnyModel::Mlp(MlpClassifier::new(5, &[6, 4], 3, &mut rng).unwrap()),
            AnyModel::FeatureGating(
                FeatureGatingModel::new(FeatureGatingConfig::new(crate::data::Dataset::default_names(5), 2), &mut rng)
                    .unwrap(),
            ),
            AnyModel::InterpretCC(InterpretCCModel::new(InterpretCCConfig::new(groups, 2), &mut rng).unwrap()),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let stats = Standardization {
            mean: vec![0.1, -0.2, 1.0 / 3.0, 0.0, 5.0],
            std: vec![1.0, 2.0, 0.7, 1.0, 1e-3],
            constant_features: vec![3],
        };
        let fp = serde_json::json!({"seed": 0, "lambda": 0.1});
        for model in models() {
            let ckpt = Checkpoint::snapshot(&model, 42, Some(&stats), Some(&fp)).unwrap();
            let bytes = ckpt.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back.to_bytes().unwrap(), bytes);
            assert_eq!(back.checkpoint_id, ckpt.checkpoint_id);
            assert_eq!(back.standardization.as_ref(), Some(&stats));
            assert_eq!(back.step, 42);
            let x = [0.3, -1.2, 2.0, 0.0, 0.5];
            let a = model.predict_proba(&x).unwrap();
            let b = back.model.predict_proba(&x).unwrap();
            assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ids_follow_content() {
        let model = models().remove(0);
        let a = Checkpoint::snapshot(&model, 1, None, None).unwrap();
        let b = Checkpoint::snapshot(&model, 1, None, None).unwrap();
        assert_eq!(a.checkpoint_id, b.checkpoint_id);
        assert_ne!(a.checkpoint_id, Checkpoint::snapshot(&model, 2, None, None).unwrap().checkpoint_id);
        let mut changed = model.clone();
        let id = changed.store().iter().next().unwrap().0;
        changed.store_mut().get_mut(id).values_mut()[0] += 1e-12;
        assert_ne!(a.checkpoint_id, Checkpoint::snapshot(&changed, 1, None, None).unwrap().checkpoint_id);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = Checkpoint::snapshot(&models().remove(0), 0, None, None).unwrap().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"not a checkpoint at all").is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
        let mut wrong_version = bytes;
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).unwrap_err().to_string().contains("version"));
    }
}
