use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Compound, DataError, Dataset, Provenance, ACTIVITY_MAX, ACTIVITY_MIN, MAX_HEAVY_ATOMS, MIN_HEAVY_ATOMS};
use crate::fingerprint::{morgan_fingerprint, Fingerprint, DEFAULT_NBITS, DEFAULT_RADIUS};
use crate::smiles::parse_smiles;

/// Parameters of a synthetic assay collection.
///
/// Each assay belongs to a family with a sparse weight vector over
/// fingerprint bits. Families come in sign-opposed pairs (family `2j + 1`
/// uses the negated weights of family `2j`), so a compound's structure alone
/// says nothing about its activity until the assay is identified. Weights
/// are rescaled so that `<w, fp>` has unit variance over a calibration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_assays: usize,
    pub molecules_per_assay: usize,
    /// Fraction of fingerprint bits with a nonzero weight.
    pub weight_sparsity: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub n_families: usize,
    pub scale_range: (f64, f64),
    pub offset_range: (f64, f64),
    pub heavy_atoms: (usize, usize),
    /// When set, every assay draws its molecules from one shared library of
    /// this size instead of generating its own. A shared library means the
    /// same compound has different activities in different assays, as in
    /// real screening collections.
    pub library_size: Option<usize>,
    pub nbits: usize,
    pub radius: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_assays: 240,
            molecules_per_assay: 60,
            weight_sparsity: 0.05,
            noise_sd: 0.25,
            seed: 0,
            n_families: 2,
            scale_range: (0.6, 1.4),
            offset_range: (2.0, 3.0),
            heavy_atoms: (10, 40),
            library_size: Some(1500),
            nbits: DEFAULT_NBITS,
            radius: DEFAULT_RADIUS,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Spec(m));
        if self.n_assays == 0 || self.molecules_per_assay < 2 {
            return bad("need at least one assay of two molecules".into());
        }
        if !(0.0..=1.0).contains(&self.weight_sparsity) {
            return bad(format!("weight_sparsity {} outside [0, 1]", self.weight_sparsity));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {}", self.noise_sd));
        }
        if self.n_families == 0 {
            return bad("n_families must be positive".into());
        }
        for (name, (lo, hi)) in [("scale_range", self.scale_range), ("offset_range", self.offset_range)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("{name} ({lo}, {hi})"));
            }
        }
        let (lo, hi) = self.heavy_atoms;
        if lo < MIN_HEAVY_ATOMS || hi > MAX_HEAVY_ATOMS || lo > hi {
            return bad(format!(
                "heavy_atoms ({lo}, {hi}) must lie within [{MIN_HEAVY_ATOMS}, {MAX_HEAVY_ATOMS}]"
            ));
        }
        if let Some(l) = self.library_size {
            if l < self.molecules_per_assay {
                return bad(format!("library of {l} cannot fill assays of {}", self.molecules_per_assay));
            }
        }
        if self.nbits < 64 || !self.nbits.is_power_of_two() {
            return bad(format!("nbits {}", self.nbits));
        }
        Ok(())
    }
}

/// Ground truth for one assay: `activity = clip(scale * <weights, fp> + offset + noise)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssayTruth {
    pub family: usize,
    pub scale: f64,
    pub offset: f64,
    pub weights: Vec<f64>,
}

impl AssayTruth {
    /// Noise-free activity, before clipping.
    pub fn signal(&self, fp: &Fingerprint) -> f64 {
        self.scale * fp.ones().map(|i| self.weights[i]).sum::<f64>() + self.offset
    }

    /// Noise-free activity after clipping.
    pub fn activity(&self, fp: &Fingerprint) -> f64 {
        self.signal(fp).clamp(ACTIVITY_MIN, ACTIVITY_MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub assays: BTreeMap<String, AssayTruth>,
}

/// Random SMILES built from alkyl, ether-oxygen, branch and benzene
/// fragments, with a heavy-atom count drawn uniformly from `min..=max`.
pub fn random_molecule_smiles<R: Rng + ?Sized>(rng: &mut R, min: usize, max: usize) -> String {
    const FRAGMENTS: [(&str, usize); 9] = [
        ("C", 1),
        ("C", 1),
        ("O", 1),
        ("C(C)", 2),
        ("C(CC)", 3),
        ("C(OC)", 3),
        ("C(C)(C)", 3),
        ("c1ccccc1", 6),
        ("c1ccc(cc1)", 6),
    ];
    let target = rng.gen_range(min..=max);
    let mut out = String::new();
    let mut atoms = 0;
    let mut last_oxygen = true;
    while atoms < target {
        let room = target - atoms;
        let (mut frag, mut n) = FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())];
        if frag == "c1ccccc1" && rng.gen_bool(0.5) {
            frag = "c1cccc(c1)";
        }
        if n > room || (frag == "O" && last_oxygen) {
            (frag, n) = ("C", 1);
        }
        out.push_str(frag);
        atoms += n;
        last_oxygen = frag == "O";
    }
    out
}

fn fingerprint_of(smiles: &str, spec: &SyntheticSpec) -> Fingerprint {
    let mol = parse_smiles(smiles).expect("grammar emits valid SMILES");
    morgan_fingerprint(&mol, spec.radius, spec.nbits).expect("nbits validated")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate a dataset from `spec` together with its hidden ground truth.
/// Output is a deterministic function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SyntheticTruth), DataError> {
    spec.validate()?;
    let (min_atoms, max_atoms) = spec.heavy_atoms;
    let mut cache: HashMap<String, Fingerprint> = HashMap::new();
    let mut fp = |s: &str| -> Fingerprint {
        cache.entry(s.to_string()).or_insert_with(|| fingerprint_of(s, spec)).clone()
    };

    let library: Option<Vec<String>> = spec.library_size.map(|size| {
        let mut rng = rng_for(spec.seed, 1);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            let s = random_molecule_smiles(&mut rng, min_atoms, max_atoms);
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        out
    });

    // Base weight vectors, centred and scaled on a calibration set.
    let n_base = spec.n_families.div_ceil(2);
    let mut wrng = rng_for(spec.seed, 0);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let base: Vec<Vec<f64>> = (0..n_base)
        .map(|_| {
            (0..spec.nbits)
                .map(|_| {
                    if wrng.gen_bool(spec.weight_sparsity) {
                        standard.sample(&mut wrng)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let calibration: Vec<Fingerprint> = match &library {
        Some(lib) => lib.iter().map(|s| fp(s)).collect(),
        None => {
            let mut rng = rng_for(spec.seed, 2);
            (0..512)
                .map(|_| fp(&random_molecule_smiles(&mut rng, min_atoms, max_atoms)))
                .collect()
        }
    };
    let moments: Vec<(f64, f64)> = base
        .iter()
        .map(|w| {
            let s: Vec<f64> = calibration
                .iter()
                .map(|f| f.ones().map(|i| w[i]).sum())
                .collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64;
            (mean, var.sqrt())
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| DataError::Spec(e.to_string()))?;
    let mut assays = BTreeMap::new();
    let mut truths = BTreeMap::new();
    for k in 0..spec.n_assays {
        let id = format!("syn{k:04}");
        let mut rng = rng_for(spec.seed, 16 + k as u64);
        let family = k % spec.n_families;
        let sign = if family % 2 == 0 { 1.0 } else { -1.0 };
        let (mean, sd) = moments[family / 2];
        let unit = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        let scale = rng.gen_range(spec.scale_range.0..=spec.scale_range.1);
        let raw_offset = rng.gen_range(spec.offset_range.0..=spec.offset_range.1);
        let truth = AssayTruth {
            family,
            scale,
            offset: raw_offset - scale * sign * mean * unit,
            weights: base[family / 2].iter().map(|w| sign * w * unit).collect(),
        };

        let smiles: Vec<String> = match &library {
            Some(lib) => index::sample(&mut rng, lib.len(), spec.molecules_per_assay)
                .into_iter()
                .map(|i| lib[i].clone())
                .collect(),
            None => {
                let mut seen = HashSet::new();
                let mut out = Vec::with_capacity(spec.molecules_per_assay);
                while out.len() < spec.molecules_per_assay {
                    let s = random_molecule_smiles(&mut rng, min_atoms, max_atoms);
                    if seen.insert(s.clone()) {
                        out.push(s);
                    }
                }
                out
            }
        };
        let compounds = smiles
            .into_iter()
            .map(|s| {
                let fingerprint = fp(&s);
                let eps = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let activity = (truth.signal(&fingerprint) + eps).clamp(ACTIVITY_MIN, ACTIVITY_MAX);
                Compound {
                    smiles: s,
                    fingerprint,
                    activity,
                }
            })
            .collect();
        assays.insert(id.clone(), compounds);
        truths.insert(id, truth);
    }
    let total = spec.n_assays * spec.molecules_per_assay;
    let provenance = Provenance {
        source: format!("synthetic(seed={})", spec.seed),
        input_rows: total,
        stored_rows: total,
        ..Provenance::default()
    };
    Ok((
        Dataset::new(spec.nbits, spec.radius, assays, provenance),
        SyntheticTruth { assays: truths },
    ))
}
