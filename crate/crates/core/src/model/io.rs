use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FsCapConfig, FsCapModel, ModelError};
use crate::nn::{Matrix, Module, Scalar};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "fscap-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    /// Row-major values, each the hex of its IEEE-754 bit pattern.
    pub data: String,
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub format_version: u32,
    pub dtype: String,
    pub config: FsCapConfig,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

fn encode<T: Scalar>(name: String, m: &Matrix<T>) -> TensorRecord {
    let mut data = String::with_capacity(m.as_slice().len() * T::HEX_WIDTH);
    for v in m.as_slice() {
        data.push_str(&v.to_hex());
    }
    TensorRecord {
        name,
        shape: [m.rows(), m.cols()],
        data,
    }
}

fn decode_into<T: Scalar>(record: &TensorRecord, target: &mut Matrix<T>) -> Result<(), ModelError> {
    let bad = |reason: String| ModelError::Tensor {
        name: record.name.clone(),
        reason,
    };
    if record.shape != [target.rows(), target.cols()] {
        return Err(bad(format!(
            "shape {:?} does not match expected [{}, {}]",
            record.shape,
            target.rows(),
            target.cols()
        )));
    }
    let n = target.as_slice().len();
    if !record.data.is_ascii() || record.data.len() != n * T::HEX_WIDTH {
        return Err(bad(format!(
            "{} hex digits for {} values",
            record.data.len(),
            n
        )));
    }
    for (i, slot) in target.as_mut_slice().iter_mut().enumerate() {
        let s = &record.data[i * T::HEX_WIDTH..(i + 1) * T::HEX_WIDTH];
        *slot = T::from_hex(s).ok_or_else(|| bad(format!("bad hex value {s:?}")))?;
    }
    Ok(())
}

impl<T: Scalar> FsCapModel<T> {
    pub fn to_file(&self, metadata: BTreeMap<String, serde_json::Value>) -> ModelFile {
        let mut tensors: Vec<TensorRecord> = self
            .params()
            .into_iter()
            .map(|(n, p)| encode(n, &p.value))
            .collect();
        tensors.extend(self.buffers().into_iter().map(|(n, b)| encode(n, b)));
        ModelFile {
            format: FORMAT_TAG.into(),
            format_version: FORMAT_VERSION,
            dtype: T::DTYPE.into(),
            config: self.config().clone(),
            metadata,
            tensors,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, ModelError> {
        if file.format != FORMAT_TAG {
            return Err(ModelError::Corrupt(format!("unknown format tag {:?}", file.format)));
        }
        if file.format_version != FORMAT_VERSION {
            return Err(ModelError::Version {
                found: file.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if file.dtype != T::DTYPE {
            return Err(ModelError::DType {
                found: file.dtype.clone(),
                expected: T::DTYPE.into(),
            });
        }
        let mut model = FsCapModel::<T>::new(file.config.clone(), 0)?;
        let mut records: BTreeMap<&str, &TensorRecord> = BTreeMap::new();
        for r in &file.tensors {
            if records.insert(r.name.as_str(), r).is_some() {
                return Err(ModelError::Tensor {
                    name: r.name.clone(),
                    reason: "appears twice".into(),
                });
            }
        }
        let mut take = |name: &str, target: &mut Matrix<T>| -> Result<(), ModelError> {
            let record = records.remove(name).ok_or_else(|| ModelError::Tensor {
                name: name.to_string(),
                reason: "missing".into(),
            })?;
            decode_into(record, target)
        };
        for (name, p) in model.params_mut() {
            take(&name, &mut p.value)?;
        }
        for (name, b) in model.buffers_mut() {
            take(&name, b)?;
        }
        if let Some(extra) = records.keys().next() {
            return Err(ModelError::Tensor {
                name: extra.to_string(),
                reason: "not part of this model".into(),
            });
        }
        Ok(model)
    }
}

pub fn save_model<T: Scalar>(
    model: &FsCapModel<T>,
    metadata: BTreeMap<String, serde_json::Value>,
    path: &Path,
) -> Result<(), ModelError> {
    let json = serde_json::to_string(&model.to_file(metadata))
        .map_err(|e| ModelError::Corrupt(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

/// Load a model and its metadata.
pub fn load_model<T: Scalar>(
    path: &Path,
) -> Result<(FsCapModel<T>, BTreeMap<String, serde_json::Value>), ModelError> {
    let text = fs::read_to_string(path)?;
    let file = parse_model_file(&text)?;
    let model = FsCapModel::from_file(&file)?;
    Ok((model, file.metadata))
}

/// Parse a model document, reporting a version mismatch ahead of any
/// structural problem it may cause.
pub fn parse_model_file(text: &str) -> Result<ModelFile, ModelError> {
    match serde_json::from_str::<ModelFile>(text) {
        Ok(f) => Ok(f),
        Err(e) => {
            if let Ok(VersionProbe {
                format_version: Some(v),
            }) = serde_json::from_str(text)
            {
                if v != FORMAT_VERSION {
                    return Err(ModelError::Version {
                        found: v,
                        expected: FORMAT_VERSION,
                    });
                }
            }
            Err(ModelError::Corrupt(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use crate::model::{Episode, Variant};
    use crate::nn::LrSchedule;
    use crate::model::Trainer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config() -> FsCapConfig {
        FsCapConfig {
            nbits: 64,
            radius: 2,
            encoding_dim: 8,
            n_layers: 4,
            mlp_width: 16,
            dropout_p: 0.1,
            n_context: 2,
            variant: Variant::Full,
            attention_layers: 1,
            attention_heads: 2,
        }
    }

    fn episodes() -> Vec<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fp = |rng: &mut ChaCha8Rng| {
            let idx: Vec<usize> = (0..8).map(|_| rng.gen_range(0..64)).collect();
            Fingerprint::from_indices(64, &idx).unwrap()
        };
        (0..6)
            .map(|_| Episode {
                assay_id: "x".into(),
                query: fp(&mut rng),
                contexts: (0..2).map(|_| (fp(&mut rng), rng.gen_range(0.0..3.0))).collect(),
                target: 1.0,
            })
            .collect()
    }

    fn trained(variant: Variant) -> FsCapModel<f32> {
        let mut m = FsCapModel::<f32>::new(FsCapConfig { variant, ..config() }, 3).unwrap();
        let mut t = Trainer::new(LrSchedule::new(1e-2, 1, 5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            t.train_step(&mut m, &episodes(), &mut rng).unwrap();
        }
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for v in Variant::ALL {
            let m = trained(v);
            let path = dir.path().join(format!("{v}.json"));
            let mut meta = BTreeMap::new();
            meta.insert("heldout_assays".into(), serde_json::json!(["a", "b"]));
            save_model(&m, meta.clone(), &path).unwrap();
            let (back, meta_back) = load_model::<f32>(&path).unwrap();
            assert_eq!(meta, meta_back);
            let a: Vec<u64> = m.predict(&episodes()).unwrap().iter().map(|p| p.to_bits()).collect();
            let b: Vec<u64> = back.predict(&episodes()).unwrap().iter().map(|p| p.to_bits()).collect();
            assert_eq!(a, b, "{v}");
            assert_eq!(m.to_file(BTreeMap::new()), back.to_file(BTreeMap::new()));
        }
    }

    #[test]
    fn version_mismatch_names_both() {
        let m = trained(Variant::Full);
        let mut file = m.to_file(BTreeMap::new());
        file.format_version = 0;
        let text = serde_json::to_string(&file).unwrap();
        let err = parse_model_file(&text)
            .and_then(|f| FsCapModel::<f32>::from_file(&f))
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ModelError::Version { found: 0, expected: 1 }));
        assert!(msg.contains('0') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&trained(Variant::Full), BTreeMap::new(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model::<f32>(&path), Err(ModelError::Corrupt(_))));
    }

    #[test]
    fn structural_errors() {
        let m = trained(Variant::Full);
        let good = m.to_file(BTreeMap::new());

        let mut f = good.clone();
        f.tensors[0].shape = [1, 1];
        assert!(matches!(FsCapModel::<f32>::from_file(&f), Err(ModelError::Tensor { .. })));

        let mut f = good.clone();
        let gone = f.tensors.pop().unwrap().name;
        match FsCapModel::<f32>::from_file(&f) {
            Err(ModelError::Tensor { name, .. }) => assert_eq!(name, gone),
            other => panic!("{other:?}"),
        }

        let mut f = good.clone();
        let mut extra = f.tensors[0].clone();
        extra.name = "bogus".into();
        f.tensors.push(extra);
        assert!(matches!(FsCapModel::<f32>::from_file(&f), Err(ModelError::Tensor { .. })));

        assert!(matches!(FsCapModel::<f64>::from_file(&good), Err(ModelError::DType { .. })));
    }
}
