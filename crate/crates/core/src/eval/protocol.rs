use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{enrichment, mean_per_group_r, roc_auc, CorrelationReport, EvalError, ScoredSet};
use crate::data::{sample_contexts, Constraint, DataError, Dataset};
use crate::fingerprint::{morgan_fingerprint, tanimoto_baseline_score, Fingerprint};
use crate::model::{Episode, FsCapModel};
use crate::nn::Scalar;
use crate::smiles::parse_smiles;

/// Anything that scores episodes. Scores are oriented like activities in
/// log10 nM: lower means more potent.
pub trait Scorer {
    fn score(&self, episodes: &[Episode]) -> Result<Vec<f64>, EvalError>;
}

impl<T: Scalar> Scorer for FsCapModel<T> {
    fn score(&self, episodes: &[Episode]) -> Result<Vec<f64>, EvalError> {
        Ok(self.predict(episodes)?)
    }
}

/// Maximum Tanimoto similarity to the contexts, negated so that more
/// similar queries score as more potent.
#[derive(Debug, Clone, Copy, Default)]
pub struct TanimotoScorer;

impl Scorer for TanimotoScorer {
    fn score(&self, episodes: &[Episode]) -> Result<Vec<f64>, EvalError> {
        episodes
            .iter()
            .map(|e| Ok(-tanimoto_baseline_score(e.contexts.iter().map(|c| &c.0), &e.query)?))
            .collect()
    }
}

/// Every compound of every assay as a query, each with
/// `episodes_per_query` freshly drawn context sets. Queries whose context
/// pool is too small are skipped; the count is returned alongside.
pub fn pearson_episodes(
    dataset: &Dataset,
    n_context: usize,
    constraint: Constraint,
    episodes_per_query: usize,
    seed: u64,
) -> Result<(Vec<Vec<Episode>>, usize), EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut skipped = 0;
    for (id, compounds) in dataset.assays() {
        for (q, query) in compounds.iter().enumerate() {
            let mut eps = Vec::with_capacity(episodes_per_query);
            for _ in 0..episodes_per_query.max(1) {
                match sample_contexts(id, compounds, q, n_context, constraint, &mut rng) {
                    Ok(contexts) => eps.push(Episode {
                        assay_id: id.clone(),
                        query: query.fingerprint.clone(),
                        contexts,
                        target: query.activity,
                    }),
                    Err(DataError::InsufficientContexts { .. }) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            if eps.len() == episodes_per_query.max(1) {
                out.push(eps);
            } else {
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} queries skipped for lack of eligible contexts");
    }
    Ok((out, skipped))
}

/// Mean per-assay Pearson r between averaged scores and true activities.
pub fn run_pearson(
    scorer: &dyn Scorer,
    queries: &[Vec<Episode>],
) -> Result<CorrelationReport, EvalError> {
    let flat: Vec<Episode> = queries.iter().flatten().cloned().collect();
    let scores = scorer.score(&flat)?;
    let mut set = ScoredSet::default();
    let mut at = 0;
    for eps in queries {
        let mean = scores[at..at + eps.len()].iter().sum::<f64>() / eps.len() as f64;
        at += eps.len();
        set.push(&eps[0].assay_id, mean, eps[0].target);
    }
    mean_per_group_r(&set)
}

/// One assay of a screening benchmark: continuous-valued contexts and
/// binary-labelled compounds to rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenAssay {
    pub assay_id: String,
    pub contexts: Vec<(Fingerprint, f64)>,
    pub compounds: Vec<(Fingerprint, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenGroup {
    pub assay_id: String,
    pub n: usize,
    pub n_active: usize,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    pub enrichment: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenReport {
    pub ks: Vec<f64>,
    pub groups: Vec<ScreenGroup>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ScreenReport {
    pub fn mean_roc_auc(&self) -> Option<f64> {
        mean_defined(self.groups.iter().map(|g| g.roc_auc))
    }

    pub fn mean_enrichment(&self, k_index: usize) -> Option<f64> {
        mean_defined(self.groups.iter().map(|g| g.enrichment[k_index]))
    }

    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut out = String::from("group\tn\tn_active\troc_auc");
        for k in &self.ks {
            let _ = write!(out, "\tenrichment_{k}");
        }
        out.push('\n');
        for g in &self.groups {
            let _ = write!(out, "{}\t{}\t{}\t{}", g.assay_id, g.n, g.n_active, fmt(g.roc_auc));
            for e in &g.enrichment {
                let _ = write!(out, "\t{}", fmt(*e));
            }
            out.push('\n');
        }
        let n: usize = self.groups.iter().map(|g| g.n).sum();
        let a: usize = self.groups.iter().map(|g| g.n_active).sum();
        let _ = write!(out, "MEAN\t{n}\t{a}\t{}", fmt(self.mean_roc_auc()));
        for i in 0..self.ks.len() {
            let _ = write!(out, "\t{}", fmt(self.mean_enrichment(i)));
        }
        out.push('\n');
        out
    }
}

/// Rank each assay's compounds by score and report ROC-AUC and top-k%
/// enrichment. Assays with more contexts than `n_context` are scored
/// against `episodes_per_query` random subsets and the scores averaged.
pub fn run_screen(
    scorer: &dyn Scorer,
    assays: &[ScreenAssay],
    n_context: usize,
    ks: &[f64],
    episodes_per_query: usize,
    seed: u64,
) -> Result<ScreenReport, EvalError> {
    for &k in ks {
        if !(k > 0.0 && k <= 100.0) {
            return Err(EvalError::BadK(k));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::with_capacity(assays.len());
    for assay in assays {
        if assay.contexts.len() < n_context {
            return Err(EvalError::Protocol(format!(
                "assay {:?} has {} contexts, model needs {n_context}",
                assay.assay_id,
                assay.contexts.len()
            )));
        }
        let draws: Vec<Vec<(Fingerprint, f64)>> = if assay.contexts.len() == n_context {
            vec![assay.contexts.clone()]
        } else {
            (0..episodes_per_query.max(1))
                .map(|_| {
                    index::sample(&mut rng, assay.contexts.len(), n_context)
                        .into_iter()
                        .map(|i| assay.contexts[i].clone())
                        .collect()
                })
                .collect()
        };
        let mut scores = vec![0.0; assay.compounds.len()];
        for contexts in &draws {
            let episodes: Vec<Episode> = assay
                .compounds
                .iter()
                .map(|(fp, _)| Episode {
                    assay_id: assay.assay_id.clone(),
                    query: fp.clone(),
                    contexts: contexts.clone(),
                    target: f64::NAN,
                })
                .collect();
            for (s, v) in scores.iter_mut().zip(scorer.score(&episodes)?) {
                *s += v / draws.len() as f64;
            }
        }
        let labels: Vec<bool> = assay.compounds.iter().map(|c| c.1).collect();
        let n_active = labels.iter().filter(|&&l| l).count();
        let roc = match roc_auc(&scores, &labels, true) {
            Ok(v) => Some(v),
            Err(EvalError::SingleClass) => None,
            Err(e) => return Err(e),
        };
        let enrich = ks
            .iter()
            .map(|&k| match enrichment(&scores, &labels, k, true) {
                Ok(v) => Ok(Some(v)),
                Err(EvalError::NoActives) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>, _>>()?;
        groups.push(ScreenGroup {
            assay_id: assay.assay_id.clone(),
            n: labels.len(),
            n_active,
            roc_auc: roc,
            enrichment: enrich,
        });
    }
    Ok(ScreenReport {
        ks: ks.to_vec(),
        groups,
    })
}

struct TsvTable<'a> {
    columns: Vec<&'a str>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn read_table<'a>(text: &'a str, required: &[&'static str]) -> Result<(TsvTable<'a>, Vec<usize>), EvalError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| EvalError::Protocol("file has no header line".into()))?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let idx = required
        .iter()
        .map(|name| {
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| EvalError::Protocol(format!("header is missing column {name:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = lines
        .map(|(n, l)| (n, l.split('\t').map(str::trim).collect()))
        .collect();
    Ok((TsvTable { columns, rows }, idx))
}

fn fingerprint_smiles(smiles: &str, nbits: usize, radius: usize) -> Option<Fingerprint> {
    let mol = parse_smiles(smiles).ok()?;
    morgan_fingerprint(&mol, radius, nbits).ok()
}

/// Screening labels: TSV with `smiles`, `assay_id` and a binary `active`
/// column (`0`/`1`). Unparseable SMILES are skipped with a warning.
pub fn load_screen_labels(
    path: &Path,
    nbits: usize,
    radius: usize,
) -> Result<BTreeMap<String, Vec<(Fingerprint, bool)>>, EvalError> {
    let text = fs::read_to_string(path)?;
    let (table, idx) = read_table(&text, &["smiles", "assay_id"])?;
    let Some(c_active) = table.columns.iter().position(|c| *c == "active") else {
        return Err(EvalError::Protocol(
            "screen protocol needs binary labels in an \"active\" column".into(),
        ));
    };
    let mut out: BTreeMap<String, Vec<(Fingerprint, bool)>> = BTreeMap::new();
    for (line, f) in table.rows {
        let get = |i: usize| f.get(i).copied().unwrap_or("");
        let active = match get(c_active) {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(EvalError::Protocol(format!(
                    "line {line}: label {other:?} is not binary (expected 0 or 1)"
                )))
            }
        };
        match fingerprint_smiles(get(idx[0]), nbits, radius) {
            Some(fp) => out.entry(get(idx[1]).to_string()).or_default().push((fp, active)),
            None => log::warn!("line {line}: skipping unparseable SMILES {:?}", get(idx[0])),
        }
    }
    Ok(out)
}

/// Screening contexts: TSV with `smiles`, `assay_id` and
/// `activity_log10_nm`.
pub fn load_screen_contexts(
    path: &Path,
    nbits: usize,
    radius: usize,
) -> Result<BTreeMap<String, Vec<(Fingerprint, f64)>>, EvalError> {
    let text = fs::read_to_string(path)?;
    let (table, idx) = read_table(&text, &["smiles", "assay_id", "activity_log10_nm"])?;
    let mut out: BTreeMap<String, Vec<(Fingerprint, f64)>> = BTreeMap::new();
    for (line, f) in table.rows {
        let get = |i: usize| f.get(i).copied().unwrap_or("");
        let activity: f64 = get(idx[2])
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| EvalError::Protocol(format!("line {line}: bad activity {:?}", get(idx[2]))))?;
        match fingerprint_smiles(get(idx[0]), nbits, radius) {
            Some(fp) => out.entry(get(idx[1]).to_string()).or_default().push((fp, activity)),
            None => log::warn!("line {line}: skipping unparseable SMILES {:?}", get(idx[0])),
        }
    }
    Ok(out)
}

/// Write one TSV row per episode: its assay id and the context-set
/// encoding.
pub fn export_encodings<T: Scalar>(
    model: &FsCapModel<T>,
    episodes: &[Episode],
    path: &Path,
) -> Result<(), EvalError> {
    let mut out = String::from("label");
    for i in 0..model.config().encoding_dim {
        let _ = write!(out, "\tx{i}");
    }
    out.push('\n');
    for ep in episodes {
        out.push_str(&ep.assay_id);
        for v in model.encode_context_set(&ep.contexts)? {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
