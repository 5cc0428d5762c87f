use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Compound, DataError, Dataset};
use crate::model::{BatchSource, Episode, ModelError};

/// Contexts must be weaker than 10 µM, i.e. above 4 in log10 nM.
pub const WEAK_THRESHOLD: f64 = 4.0;

/// Which compounds may serve as contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    None,
    WeakOnly,
}

impl Constraint {
    pub fn admits(self, activity: f64) -> bool {
        match self {
            Constraint::None => true,
            Constraint::WeakOnly => activity > WEAK_THRESHOLD,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constraint::None => "none",
            Constraint::WeakOnly => "weak_only",
        }
    }
}

impl FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "none" => Ok(Constraint::None),
            "weak_only" => Ok(Constraint::WeakOnly),
            _ => Err(format!("unknown constraint {s:?} (expected none or weak-only)")),
        }
    }
}

/// Draw `n_context` contexts for the compound at `query` in `compounds`.
///
/// Without a constraint, contexts are drawn without replacement when the
/// pool allows it and with replacement otherwise. Under `WeakOnly` a pool
/// smaller than `n_context` is an error.
pub fn sample_contexts<R: Rng + ?Sized>(
    assay_id: &str,
    compounds: &[Compound],
    query: usize,
    n_context: usize,
    constraint: Constraint,
    rng: &mut R,
) -> Result<Vec<(crate::Fingerprint, f64)>, DataError> {
    let pool: Vec<usize> = (0..compounds.len())
        .filter(|&i| i != query && constraint.admits(compounds[i].activity))
        .collect();
    let insufficient = DataError::InsufficientContexts {
        assay: assay_id.to_string(),
        eligible: pool.len(),
        needed: n_context,
    };
    let picks: Vec<usize> = if pool.len() >= n_context {
        index::sample(rng, pool.len(), n_context).into_iter().collect()
    } else if constraint == Constraint::None && !pool.is_empty() {
        (0..n_context).map(|_| rng.gen_range(0..pool.len())).collect()
    } else {
        return Err(insufficient);
    };
    Ok(picks
        .into_iter()
        .map(|p| {
            let c = &compounds[pool[p]];
            (c.fingerprint.clone(), c.activity)
        })
        .collect())
}

/// One episode from `assay_id`: a uniformly drawn query and its contexts.
pub fn sample_episode<R: Rng + ?Sized>(
    dataset: &Dataset,
    assay_id: &str,
    n_context: usize,
    constraint: Constraint,
    rng: &mut R,
) -> Result<Episode, DataError> {
    let compounds = dataset
        .assay(assay_id)
        .ok_or_else(|| DataError::UnknownAssay(assay_id.to_string()))?;
    if compounds.is_empty() {
        return Err(DataError::InsufficientContexts {
            assay: assay_id.to_string(),
            eligible: 0,
            needed: n_context,
        });
    }
    let q = rng.gen_range(0..compounds.len());
    let contexts = sample_contexts(assay_id, compounds, q, n_context, constraint, rng)?;
    Ok(Episode {
        assay_id: assay_id.to_string(),
        query: compounds[q].fingerprint.clone(),
        contexts,
        target: compounds[q].activity,
    })
}

/// Split assay ids into those where every query can be given `n_context`
/// contexts, and those that would be skipped.
pub fn eligible_assays(dataset: &Dataset, n_context: usize, constraint: Constraint) -> (Vec<String>, Vec<String>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for (id, compounds) in dataset.assays() {
        let admitted = compounds.iter().filter(|c| constraint.admits(c.activity)).count();
        let good = match constraint {
            Constraint::None => compounds.len() >= 2,
            Constraint::WeakOnly => admitted > n_context,
        };
        if good {
            ok.push(id.clone());
        } else {
            skipped.push(id.clone());
        }
    }
    (ok, skipped)
}

/// Training batches: each episode picks an eligible assay uniformly, then a
/// query uniformly within it.
#[derive(Debug, Clone)]
pub struct EpisodeSampler<'a> {
    dataset: &'a Dataset,
    assays: Vec<String>,
    skipped: Vec<String>,
    n_context: usize,
    constraint: Constraint,
    batch_size: usize,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(
        dataset: &'a Dataset,
        n_context: usize,
        constraint: Constraint,
        batch_size: usize,
    ) -> Result<Self, DataError> {
        let (assays, skipped) = eligible_assays(dataset, n_context, constraint);
        for id in &skipped {
            log::warn!(
                "skipping assay {id:?}: too few eligible contexts for {n_context} under constraint {}",
                constraint.name()
            );
        }
        if assays.is_empty() || batch_size == 0 {
            return Err(DataError::NoAssays);
        }
        Ok(EpisodeSampler {
            dataset,
            assays,
            skipped,
            n_context,
            constraint,
            batch_size,
        })
    }

    pub fn assays(&self) -> &[String] {
        &self.assays
    }

    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Episode, DataError> {
        let id = &self.assays[rng.gen_range(0..self.assays.len())];
        sample_episode(self.dataset, id, self.n_context, self.constraint, rng)
    }
}

impl BatchSource for EpisodeSampler<'_> {
    fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Episode>, ModelError> {
        (0..self.batch_size)
            .map(|_| self.sample(rng).map_err(|e| ModelError::Source(e.to_string())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::Fingerprint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn dataset(activities: &[f64]) -> Dataset {
        let cs = activities
            .iter()
            .enumerate()
            .map(|(i, &a)| Compound {
                smiles: format!("m{i}"),
                fingerprint: Fingerprint::from_indices(64, &[i]).unwrap(),
                activity: a,
            })
            .collect();
        let mut assays = BTreeMap::new();
        assays.insert("a".to_string(), cs);
        Dataset::new(64, 2, assays, Provenance::default())
    }

    #[test]
    fn weak_only_filters_contexts() {
        let ds = dataset(&[1.0, 3.9, 4.2, 5.0]);
        let compounds = ds.assay("a").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = sample_contexts("a", compounds, 0, 2, Constraint::WeakOnly, &mut rng).unwrap();
        let mut acts: Vec<f64> = ctx.iter().map(|c| c.1).collect();
        acts.sort_by(f64::total_cmp);
        assert_eq!(acts, [4.2, 5.0]);
        let err = sample_contexts("a", compounds, 0, 3, Constraint::WeakOnly, &mut rng).unwrap_err();
        assert!(matches!(err, DataError::InsufficientContexts { eligible: 2, needed: 3, .. }));
    }

    #[test]
    fn full_pool_uses_every_other_compound() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let ep = sample_episode(&ds, "a", 5, Constraint::None, &mut rng).unwrap();
            let mut acts: Vec<f64> = ep.contexts.iter().map(|c| c.1).collect();
            acts.push(ep.target);
            acts.sort_by(f64::total_cmp);
            assert_eq!(acts, [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        }
    }

    #[test]
    fn small_pool_samples_with_replacement() {
        let ds = dataset(&[0.0, 1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ep = sample_episode(&ds, "a", 8, Constraint::None, &mut rng).unwrap();
        assert_eq!(ep.contexts.len(), 8);
        assert!(ep.contexts.iter().all(|c| c.0 != ep.query));
    }

    #[test]
    fn same_seed_same_episode() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let draw = |s| sample_episode(&ds, "a", 3, Constraint::None, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_eq!(draw(9), draw(9));
        assert!(matches!(
            sample_episode(&ds, "zz", 3, Constraint::None, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DataError::UnknownAssay(_))
        ));
    }

    #[test]
    fn sampler_skips_assays_without_weak_contexts() {
        let ds = dataset(&[1.0, 2.0, 4.5, 5.0]);
        assert!(matches!(
            EpisodeSampler::new(&ds, 2, Constraint::WeakOnly, 4),
            Err(DataError::NoAssays)
        ));
        let s = EpisodeSampler::new(&ds, 1, Constraint::WeakOnly, 4).unwrap();
        assert_eq!(s.assays(), ["a"]);
        assert!("weak-only".parse::<Constraint>().unwrap() == Constraint::WeakOnly);
    }
}
