use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::EvalError;

fn check_finite(xs: &[f64]) -> Result<(), EvalError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Sample Pearson correlation, clamped to [-1, 1].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// (score, target) pairs grouped by assay or cell line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredSet {
    pub groups: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl ScoredSet {
    pub fn push(&mut self, group: &str, score: f64, target: f64) {
        let g = self.groups.entry(group.to_string()).or_default();
        g.0.push(score);
        g.1.push(target);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCorrelation {
    pub group: String,
    pub n: usize,
    /// `None` when the correlation is undefined and the group was skipped.
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub mean_r: f64,
    pub groups: Vec<GroupCorrelation>,
}

impl CorrelationReport {
    pub fn skipped(&self) -> usize {
        self.groups.iter().filter(|g| g.r.is_none()).count()
    }

    pub fn valid(&self) -> usize {
        self.groups.len() - self.skipped()
    }

    /// `group  n  r` rows, `NA` for skipped groups, then a `MEAN` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("group\tn\tpearson_r\n");
        for g in &self.groups {
            match g.r {
                Some(r) => out.push_str(&format!("{}\t{}\t{r:.6}\n", g.group, g.n)),
                None => out.push_str(&format!("{}\t{}\tNA\n", g.group, g.n)),
            }
        }
        out.push_str(&format!("MEAN\t{}\t{:.6}\n", self.valid(), self.mean_r));
        out
    }
}

/// Unweighted mean of per-group correlations over the groups where it is
/// defined.
pub fn mean_per_group_r(scored: &ScoredSet) -> Result<CorrelationReport, EvalError> {
    let mut groups = Vec::with_capacity(scored.groups.len());
    let mut sum = 0.0;
    let mut valid = 0usize;
    for (name, (s, t)) in &scored.groups {
        let r = match pearson_r(s, t) {
            Ok(r) => Some(r),
            Err(EvalError::ConstantInput | EvalError::TooFew { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(r) = r {
            sum += r;
            valid += 1;
        }
        groups.push(GroupCorrelation {
            group: name.clone(),
            n: s.len(),
            r,
        });
    }
    let skipped = groups.len() - valid;
    if valid == 0 {
        return Err(EvalError::NoValidGroups { skipped });
    }
    Ok(CorrelationReport {
        mean_r: sum / valid as f64,
        groups,
    })
}

fn oriented(scores: &[f64], invert: bool) -> Result<Vec<f64>, EvalError> {
    check_finite(scores)?;
    Ok(scores.iter().map(|&s| if invert { -s } else { s }).collect())
}

/// Probability that an active outscores an inactive, ties counting half.
/// `invert` negates scores first (for predicted concentrations, where
/// lower means more active).
pub fn roc_auc(scores: &[f64], labels: &[bool], invert: bool) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let s = oriented(scores, invert)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Ordering::Equal));
    // Sum of 1-based average ranks of the actives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && s[order[j + 1]] == s[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Percent increase of the active rate among the top `k_pct` percent of
/// scores over the overall active rate. The top set holds
/// `max(1, floor(k_pct * n / 100))` items; ties at the cutoff go to the
/// earlier item.
pub fn enrichment(scores: &[f64], labels: &[bool], k_pct: f64, invert: bool) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if !(k_pct > 0.0 && k_pct <= 100.0) {
        return Err(EvalError::BadK(k_pct));
    }
    let s = oriented(scores, invert)?;
    let n = s.len();
    let actives = labels.iter().filter(|&&l| l).count();
    if actives == 0 {
        return Err(EvalError::NoActives);
    }
    let top = ((k_pct * n as f64 / 100.0).floor() as usize).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(Ordering::Equal));
    let hits = order[..top].iter().filter(|&&i| labels[i]).count();
    let hit_rate = hits as f64 / top as f64;
    let base_rate = actives as f64 / n as f64;
    Ok(100.0 * (hit_rate / base_rate - 1.0))
}
