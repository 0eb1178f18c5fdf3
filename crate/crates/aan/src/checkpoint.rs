//! Versioned model checkpoints: hyperparameters, every named parameter
//! tensor (batch-norm running statistics included), the aspect list, and a
//! vocabulary content hash. Loading validates tensor shapes against the
//! stored hyperparameters; applying a checkpoint to a corpus validates the
//! vocabulary hash.

use crate::error::{Error, Result};
use crate::model::{AanParameters, HyperParams};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyper: HyperParams,
    /// Aspect names in head order.
    pub aspects: Vec<String>,
    pub vocab_hash: String,
    pub vocab_size: usize,
    /// True when the checkpoint was trained with uniform pooling weights
    /// (no relevance scorer); evaluation must encode the same way.
    #[serde(default)]
    pub uniform_pooling: bool,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_params(
        params: &AanParameters,
        hyper: &HyperParams,
        aspects: &[String],
        vocab_hash: &str,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            hyper: hyper.clone(),
            aspects: aspects.to_vec(),
            vocab_hash: vocab_hash.to_string(),
            vocab_size: params.vocab_size(),
            uniform_pooling: false,
            tensors: params
                .named()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    /// Rebuild parameters, verifying that every expected tensor is present
    /// with the shape implied by the stored hyperparameters.
    pub fn to_params(&self) -> Result<AanParameters> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint version {} (expected {})",
                self.version, CHECKPOINT_VERSION
            )));
        }
        let mut params =
            AanParameters::init(&self.hyper, self.vocab_size, self.aspects.len(), 0);
        for (name, expected) in params.named() {
            let got = self.tensors.get(&name).ok_or_else(|| {
                Error::Incompatible(format!("checkpoint is missing tensor {name:?}"))
            })?;
            if got.dims() != expected.dims() {
                return Err(Error::Incompatible(format!(
                    "tensor {name:?} has shape {:?}, expected {:?}",
                    got.dims(),
                    expected.dims()
                )));
            }
        }
        for (name, value) in &self.tensors {
            match params.get_mut(name) {
                Some(slot) => *slot = value.clone(),
                None => {
                    return Err(Error::Incompatible(format!(
                        "checkpoint has unknown tensor {name:?}"
                    )))
                }
            }
        }
        Ok(params)
    }

    /// Error unless the checkpoint was trained against this vocabulary.
    pub fn verify_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::Incompatible(format!(
                "vocabulary hash mismatch: checkpoint {} vs corpus {}",
                self.vocab_hash, vocab_hash
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hyper() -> HyperParams {
        HyperParams {
            embed_dim: 4,
            conv_features: 5,
            hidden_size: 6,
            ..HyperParams::default()
        }
    }

    #[test]
    fn roundtrip_preserves_every_tensor_exactly() {
        let hyper = small_hyper();
        let params = AanParameters::init(&hyper, 20, 2, 9);
        let ck = Checkpoint::from_params(
            &params,
            &hyper,
            &["a".into(), "b".into()],
            "deadbeef",
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let rebuilt = back.to_params().unwrap();
        for ((n1, t1), (n2, t2)) in params.named().iter().zip(rebuilt.named().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.data(), t2.data(), "tensor {n1} drifted");
        }
        // Serialized bytes are stable as well.
        assert_eq!(ck.to_bytes().unwrap(), back.to_bytes().unwrap());
    }

    #[test]
    fn missing_tensor_is_rejected() {
        let hyper = small_hyper();
        let params = AanParameters::init(&hyper, 20, 2, 9);
        let mut ck = Checkpoint::from_params(&params, &hyper, &["a".into(), "b".into()], "x");
        ck.tensors.remove("conv_filters");
        assert!(matches!(ck.to_params(), Err(Error::Incompatible(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let hyper = small_hyper();
        let params = AanParameters::init(&hyper, 20, 2, 9);
        let mut ck = Checkpoint::from_params(&params, &hyper, &["a".into(), "b".into()], "x");
        ck.tensors
            .insert("conv_bias".into(), Tensor::zeros(vec![3]));
        assert!(matches!(ck.to_params(), Err(Error::Incompatible(_))));
    }

    #[test]
    fn vocab_hash_mismatch_names_both_hashes() {
        let hyper = small_hyper();
        let params = AanParameters::init(&hyper, 20, 2, 9);
        let ck = Checkpoint::from_params(&params, &hyper, &["a".into(), "b".into()], "aaa111");
        let err = ck.verify_vocab("bbb222").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("aaa111") && msg.contains("bbb222"), "{msg}");
    }
}
