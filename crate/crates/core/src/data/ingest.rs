use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{
    Compound, DataError, Dataset, Provenance, ACTIVITY_MAX, ACTIVITY_MIN, MAX_HEAVY_ATOMS,
    MIN_ASSAY_SIZE, MIN_HEAVY_ATOMS,
};
use crate::fingerprint::{morgan_fingerprint, DEFAULT_NBITS, DEFAULT_RADIUS};
use crate::smiles::{parse_smiles, Molecule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub nbits: usize,
    pub radius: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            nbits: DEFAULT_NBITS,
            radius: DEFAULT_RADIUS,
        }
    }
}

struct Row {
    line: usize,
    smiles: String,
    assay: String,
    molecule: Molecule,
    activity: f64,
}

pub fn ingest_tsv(path: &Path, options: &IngestOptions) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path)?;
    ingest_tsv_str(&text, &path.display().to_string(), options)
}

/// Ingest TSV text with columns `smiles`, `assay_id` and `activity_nm` (in
/// any order, extra columns ignored). Blank lines are skipped; every other
/// line after the header is one input row.
pub fn ingest_tsv_str(text: &str, source: &str, options: &IngestOptions) -> Result<Dataset, DataError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(DataError::NoHeader),
        }
    };
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &'static str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or(DataError::MissingColumn(name))
    };
    let (c_smiles, c_assay, c_activity) = (find("smiles")?, find("assay_id")?, find("activity_nm")?);
    let width = c_smiles.max(c_assay).max(c_activity) + 1;

    let mut prov = Provenance {
        source: source.to_string(),
        ..Provenance::default()
    };
    let mut rows = Vec::new();
    for (line, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        prov.input_rows += 1;
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        if fields.len() < width || fields[c_assay].is_empty() {
            prov.dropped_malformed += 1;
            continue;
        }
        let smiles = fields[c_smiles];
        let molecule = match parse_smiles(smiles) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("line {line}: {smiles:?}: {e}");
                prov.dropped_unparseable += 1;
                continue;
            }
        };
        let heavy = molecule.heavy_atom_count();
        if heavy < MIN_HEAVY_ATOMS {
            prov.dropped_too_few_atoms += 1;
            continue;
        }
        if heavy > MAX_HEAVY_ATOMS {
            prov.dropped_too_many_atoms += 1;
            continue;
        }
        let nm = match fields[c_activity].parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => v,
            _ => {
                prov.dropped_bad_activity += 1;
                continue;
            }
        };
        rows.push(Row {
            line,
            smiles: smiles.to_string(),
            assay: fields[c_assay].to_string(),
            molecule,
            activity: nm.log10(),
        });
    }

    // Last occurrence of an (assay, smiles) pair wins.
    let mut last: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        last.insert((&r.assay, &r.smiles), i);
    }
    let keep: Vec<bool> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| last[&(r.assay.as_str(), r.smiles.as_str())] == i)
        .collect();
    drop(last);
    let mut grouped: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (r, k) in rows.into_iter().zip(keep) {
        if k {
            grouped.entry(r.assay.clone()).or_default().push(r);
        } else {
            log::debug!("line {}: duplicate of a later row", r.line);
            prov.dropped_duplicate += 1;
        }
    }

    let mut assays = BTreeMap::new();
    for (id, rows) in grouped {
        if rows.len() < MIN_ASSAY_SIZE {
            prov.dropped_small_assay += rows.len();
            prov.small_assays_removed += 1;
            continue;
        }
        let mut compounds = Vec::with_capacity(rows.len());
        for r in rows {
            let fingerprint = morgan_fingerprint(&r.molecule, options.radius, options.nbits)
                .map_err(|e| DataError::Corrupt(e.to_string()))?;
            let activity = if r.activity < ACTIVITY_MIN {
                prov.clipped_low += 1;
                ACTIVITY_MIN
            } else if r.activity > ACTIVITY_MAX {
                prov.clipped_high += 1;
                ACTIVITY_MAX
            } else {
                r.activity
            };
            compounds.push(Compound {
                smiles: r.smiles,
                fingerprint,
                activity,
            });
        }
        prov.stored_rows += compounds.len();
        assays.insert(id, compounds);
    }
    debug_assert!(prov.is_balanced());
    Ok(Dataset::new(options.nbits, options.radius, assays, prov))
}
