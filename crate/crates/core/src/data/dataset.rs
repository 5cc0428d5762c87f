use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::fingerprint::Fingerprint;

pub const DATASET_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "fscap-dataset";

#[derive(Debug, Clone, PartialEq)]
pub struct Compound {
    pub smiles: String,
    pub fingerprint: Fingerprint,
    /// log10 nM, within the clipping range.
    pub activity: f64,
}

/// Where a dataset came from and what the filters removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source: String,
    pub input_rows: usize,
    pub stored_rows: usize,
    pub dropped_malformed: usize,
    pub dropped_unparseable: usize,
    pub dropped_too_few_atoms: usize,
    pub dropped_too_many_atoms: usize,
    pub dropped_bad_activity: usize,
    pub dropped_duplicate: usize,
    pub dropped_small_assay: usize,
    pub small_assays_removed: usize,
    pub clipped_low: usize,
    pub clipped_high: usize,
}

impl Provenance {
    pub fn total_dropped(&self) -> usize {
        self.dropped_malformed
            + self.dropped_unparseable
            + self.dropped_too_few_atoms
            + self.dropped_too_many_atoms
            + self.dropped_bad_activity
            + self.dropped_duplicate
            + self.dropped_small_assay
    }

    /// Every input row is either stored or counted by exactly one rule.
    pub fn is_balanced(&self) -> bool {
        self.input_rows == self.stored_rows + self.total_dropped()
    }

    /// `rule<TAB>count` lines, header first.
    pub fn to_tsv(&self) -> String {
        let rows = [
            ("input_rows", self.input_rows),
            ("stored_rows", self.stored_rows),
            ("dropped_malformed", self.dropped_malformed),
            ("dropped_unparseable", self.dropped_unparseable),
            ("dropped_too_few_atoms", self.dropped_too_few_atoms),
            ("dropped_too_many_atoms", self.dropped_too_many_atoms),
            ("dropped_bad_activity", self.dropped_bad_activity),
            ("dropped_duplicate", self.dropped_duplicate),
            ("dropped_small_assay", self.dropped_small_assay),
            ("small_assays_removed", self.small_assays_removed),
            ("clipped_low", self.clipped_low),
            ("clipped_high", self.clipped_high),
        ];
        let mut out = String::from("rule\tcount\n");
        for (k, v) in rows {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        out
    }
}

/// Assays keyed by id, each a list of fingerprinted compounds. Immutable
/// once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    nbits: usize,
    radius: usize,
    assays: BTreeMap<String, Vec<Compound>>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        nbits: usize,
        radius: usize,
        assays: BTreeMap<String, Vec<Compound>>,
        provenance: Provenance,
    ) -> Self {
        Dataset {
            nbits,
            radius,
            assays,
            provenance,
        }
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn assays(&self) -> &BTreeMap<String, Vec<Compound>> {
        &self.assays
    }

    pub fn assay(&self, id: &str) -> Option<&[Compound]> {
        self.assays.get(id).map(Vec::as_slice)
    }

    pub fn assay_ids(&self) -> impl Iterator<Item = &str> {
        self.assays.keys().map(String::as_str)
    }

    pub fn n_assays(&self) -> usize {
        self.assays.len()
    }

    pub fn n_compounds(&self) -> usize {
        self.assays.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.assays.is_empty()
    }

    /// Subset holding only the named assays; unknown ids are ignored.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Dataset {
        let assays = ids
            .into_iter()
            .filter_map(|id| self.assays.get(id).map(|c| (id.to_string(), c.clone())))
            .collect();
        Dataset {
            nbits: self.nbits,
            radius: self.radius,
            assays,
            provenance: self.provenance.clone(),
        }
    }

    /// Disjoint assay-level split, deterministic in `seed`. Returns
    /// `(train, test)`.
    pub fn split_assays(&self, n_test: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        if n_test > 0 && n_test >= self.n_assays() {
            return Err(DataError::BadSplit {
                n_test,
                n_assays: self.n_assays(),
            });
        }
        let mut ids: Vec<&str> = self.assay_ids().collect();
        ids.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (test, train) = ids.split_at(n_test);
        Ok((self.subset(train.iter().copied()), self.subset(test.iter().copied())))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompoundRecord {
    smiles: String,
    activity: f64,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssayRecord {
    assay_id: String,
    compounds: Vec<CompoundRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: String,
    format_version: u32,
    nbits: usize,
    radius: usize,
    provenance: Provenance,
    assays: Vec<AssayRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

impl Dataset {
    /// JSON dump; fingerprints are hex of their little-endian byte layout.
    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            format: FORMAT_TAG.into(),
            format_version: DATASET_FORMAT_VERSION,
            nbits: self.nbits,
            radius: self.radius,
            provenance: self.provenance.clone(),
            assays: self
                .assays
                .iter()
                .map(|(id, cs)| AssayRecord {
                    assay_id: id.clone(),
                    compounds: cs
                        .iter()
                        .map(|c| CompoundRecord {
                            smiles: c.smiles.clone(),
                            activity: c.activity,
                            fingerprint: hex::encode(c.fingerprint.to_le_bytes()),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Dataset, DataError> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| {
            if let Ok(VersionProbe {
                format_version: Some(v),
            }) = serde_json::from_str(text)
            {
                if v != DATASET_FORMAT_VERSION {
                    return DataError::Version {
                        found: v,
                        expected: DATASET_FORMAT_VERSION,
                    };
                }
            }
            DataError::Corrupt(e.to_string())
        })?;
        if file.format != FORMAT_TAG {
            return Err(DataError::Corrupt(format!("unknown format tag {:?}", file.format)));
        }
        if file.format_version != DATASET_FORMAT_VERSION {
            return Err(DataError::Version {
                found: file.format_version,
                expected: DATASET_FORMAT_VERSION,
            });
        }
        let mut assays = BTreeMap::new();
        for a in file.assays {
            let mut compounds = Vec::with_capacity(a.compounds.len());
            for c in a.compounds {
                let bytes = hex::decode(&c.fingerprint)
                    .map_err(|e| DataError::Corrupt(format!("{}: {e}", c.smiles)))?;
                let fingerprint = Fingerprint::from_le_bytes(file.nbits, &bytes)
                    .map_err(|e| DataError::Corrupt(format!("{}: {e}", c.smiles)))?;
                compounds.push(Compound {
                    smiles: c.smiles,
                    fingerprint,
                    activity: c.activity,
                });
            }
            if assays.insert(a.assay_id.clone(), compounds).is_some() {
                return Err(DataError::Corrupt(format!("assay {:?} appears twice", a.assay_id)));
            }
        }
        Ok(Dataset {
            nbits: file.nbits,
            radius: file.radius,
            assays,
            provenance: file.provenance,
        })
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    fs::write(path, dataset.to_json())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    Dataset::from_json(&fs::read_to_string(path)?)
}
