//! Correlation-based feature selection with a range filter.
//!
//! Candidate subsets are scored with the CFS merit
//! `k * r_cf / sqrt(k + k(k-1) * r_ff)` and explored best-first from the
//! empty set. The winning subset is then pruned: for each retained feature
//! an interval centred on `(max + min) / 2` with half-width `(max + min) / 4`
//! is computed, and features whose values rarely fall inside it are dropped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::stats;

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooShort {
            what: "pearson correlation",
            need: 2,
            got: a.len(),
        });
    }
    let ma = stats::mean(a);
    let mb = stats::mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn pearson_or_zero(a: &[f64], b: &[f64]) -> Result<f64> {
    match pearson(a, b) {
        Err(Error::ConstantInput) => Ok(0.0),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major, `names.len()` squared.
    pub feature_feature: Vec<Vec<f64>>,
    pub feature_class: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// CFS merit of the features at `idx` (order-insensitive).
    pub fn merit_of(&self, idx: &[usize]) -> f64 {
        let k = idx.len();
        if k == 0 {
            return 0.0;
        }
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        let r_cf = sorted.iter().map(|&i| self.feature_class[i].abs()).sum::<f64>() / k as f64;
        let mut pair_sum = 0.0;
        for (a, &i) in sorted.iter().enumerate() {
            for &j in &sorted[a + 1..] {
                pair_sum += self.feature_feature[i][j].abs();
            }
        }
        // k(k-1) * mean over distinct pairs == 2 * sum over pairs
        let denom = (k as f64 + 2.0 * pair_sum).sqrt();
        k as f64 * r_cf / denom
    }
}

/// Feature-feature and point-biserial feature-class correlations. Constant
/// columns correlate 0 with everything (1 with themselves).
pub fn correlation_matrix(fm: &FeatureMatrix) -> Result<CorrelationMatrix> {
    if fm.n_rows() < 2 {
        return Err(Error::TooShort {
            what: "correlation matrix rows",
            need: 2,
            got: fm.n_rows(),
        });
    }
    let classes = fm.class_count();
    if classes != 2 {
        return Err(Error::ClassCount(classes));
    }
    let d = fm.n_features();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| fm.column(j)).collect();
    let labels: Vec<f64> = fm.labels.iter().map(|&l| f64::from(l)).collect();
    let feature_class = cols
        .iter()
        .map(|c| pearson_or_zero(c, &labels))
        .collect::<Result<Vec<_>>>()?;
    let mut ff = vec![vec![0.0; d]; d];
    for i in 0..d {
        ff[i][i] = 1.0;
        for j in i + 1..d {
            let r = pearson_or_zero(&cols[i], &cols[j])?;
            ff[i][j] = r;
            ff[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: fm.names.clone(),
        feature_feature: ff,
        feature_class,
    })
}

/// CFS merit of a named subset.
pub fn cfs_merit<S: AsRef<str>>(subset: &[S], cm: &CorrelationMatrix) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Config("merit of an empty subset".into()));
    }
    let idx = subset
        .iter()
        .map(|n| cm.index_of(n.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(cm.merit_of(&idx))
}

/// Open-list entry: highest merit first, then lexicographically smallest
/// subset.
#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    merit: f64,
    subset: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.merit
            .total_cmp(&other.merit)
            .then_with(|| other.subset.cmp(&self.subset))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Whether `(merit, subset)` beats the incumbent under the shared ordering.
fn better(merit: f64, subset: &[usize], best: &Candidate) -> bool {
    match merit.total_cmp(&best.merit) {
        Ordering::Greater => true,
        Ordering::Equal => subset < best.subset.as_slice(),
        Ordering::Less => false,
    }
}

/// Best-first forward search over feature subsets.
///
/// Each expansion pops the best open subset and evaluates every one-feature
/// extension not seen before. The search stops once `stall_limit`
/// consecutive expansions fail to raise the best merit, or when the lattice
/// is exhausted (`None` = no stall limit). Returns feature indices in
/// ascending order; never empty when `cm` has at least one feature.
pub fn best_first_search_indices(cm: &CorrelationMatrix, stall_limit: Option<usize>) -> Vec<usize> {
    let d = cm.len();
    if d == 0 {
        return Vec::new();
    }
    let mut open = BinaryHeap::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let start = Candidate {
        merit: 0.0,
        subset: Vec::new(),
    };
    seen.insert(Vec::new());
    open.push(start.clone());
    let mut best = start;
    let mut stale = 0usize;

    while let Some(current) = open.pop() {
        let mut improved = false;
        for f in 0..d {
            if current.subset.binary_search(&f).is_ok() {
                continue;
            }
            let mut child = current.subset.clone();
            let pos = child.partition_point(|&x| x < f);
            child.insert(pos, f);
            if !seen.insert(child.clone()) {
                continue;
            }
            let merit = cm.merit_of(&child);
            if better(merit, &child, &best) {
                if merit > best.merit {
                    improved = true;
                }
                best = Candidate {
                    merit,
                    subset: child.clone(),
                };
            }
            open.push(Candidate { merit, subset: child });
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stall_limit.is_some_and(|limit| stale >= limit) {
                break;
            }
        }
    }

    if best.subset.is_empty() {
        vec![strongest_feature(cm, 0..d)]
    } else {
        best.subset
    }
}

/// Feature with the largest |r_cf| among `candidates`, lowest index on ties.
fn strongest_feature(cm: &CorrelationMatrix, candidates: impl IntoIterator<Item = usize>) -> usize {
    candidates
        .into_iter()
        .fold(None::<usize>, |acc, i| match acc {
            Some(b) if cm.feature_class[b].abs() >= cm.feature_class[i].abs() => Some(b),
            _ => Some(i),
        })
        .unwrap_or(0)
}

/// Named variant of [`best_first_search_indices`]; names come back in matrix
/// column order.
pub fn best_first_search(cm: &CorrelationMatrix, stall_limit: Option<usize>) -> Vec<String> {
    best_first_search_indices(cm, stall_limit)
        .into_iter()
        .map(|i| cm.names[i].clone())
        .collect()
}

/// `[(max+min)/2 - (max+min)/4, (max+min)/2 + (max+min)/4]`, swapped into
/// ascending order when `max + min < 0`.
pub fn range_bounds(values: &[f64]) -> (f64, f64) {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let sum = max + min;
    let (lo, hi) = (sum / 2.0 - sum / 4.0, sum / 2.0 + sum / 4.0);
    if lo > hi {
        (hi, lo)
    } else {
        (lo, hi)
    }
}

/// Fraction of `values` inside `[lo, hi]`.
pub fn in_range_fraction(values: &[f64], (lo, hi): (f64, f64)) -> f64 {
    values.iter().filter(|&&v| v >= lo && v <= hi).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Consecutive non-improving expansions before the search stops.
    pub stall_limit: Option<usize>,
    /// A feature is dropped when fewer than `1 - threshold` of its values
    /// fall inside its range bounds.
    pub threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            stall_limit: Some(5),
            threshold: 0.8,
        }
    }
}

/// Per-feature range diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeStat {
    pub lo: f64,
    pub hi: f64,
    pub in_range_fraction: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    /// Retained features, matrix column order.
    pub names: Vec<String>,
    /// CFS merit of `names`.
    pub merit: f64,
    /// Subset found by the search before range filtering.
    pub pre_filter: Vec<String>,
    pub pre_filter_merit: f64,
    pub range_bounds: BTreeMap<String, RangeStat>,
    pub eliminated_by_range: Vec<String>,
}

/// Applies the range filter to `subset`.
///
/// When every feature would be eliminated, the one with the strongest
/// feature-class correlation is kept.
pub fn range_filter<S: AsRef<str>>(fm: &FeatureMatrix, subset: &[S], threshold: f64) -> Result<FeatureSubset> {
    let sub = fm.select_columns(subset)?;
    let cm = correlation_matrix(&sub)?;
    let mut kept = Vec::new();
    let mut eliminated = Vec::new();
    let mut bounds = BTreeMap::new();
    for (j, name) in sub.names.iter().enumerate() {
        let col = sub.column(j);
        let (lo, hi) = range_bounds(&col);
        let frac = in_range_fraction(&col, (lo, hi));
        bounds.insert(
            name.clone(),
            RangeStat {
                lo,
                hi,
                in_range_fraction: frac,
                mean: stats::mean(&col),
            },
        );
        if frac < 1.0 - threshold {
            eliminated.push(j);
        } else {
            kept.push(j);
        }
    }
    if kept.is_empty() && !eliminated.is_empty() {
        let keep = strongest_feature(&cm, eliminated.iter().copied());
        eliminated.retain(|&j| j != keep);
        kept.push(keep);
    }
    let all: Vec<usize> = (0..sub.n_features()).collect();
    Ok(FeatureSubset {
        names: kept.iter().map(|&j| sub.names[j].clone()).collect(),
        merit: cm.merit_of(&kept),
        pre_filter: sub.names.clone(),
        pre_filter_merit: cm.merit_of(&all),
        range_bounds: bounds,
        eliminated_by_range: eliminated.iter().map(|&j| sub.names[j].clone()).collect(),
    })
}

/// Largest feature count searched without a stall limit.
pub const MAX_UNBOUNDED_FEATURES: usize = 20;

fn check_search(fm: &FeatureMatrix, cfg: &SelectionConfig) -> Result<()> {
    if cfg.stall_limit.is_none() && fm.n_features() > MAX_UNBOUNDED_FEATURES {
        return Err(Error::Config(format!(
            "unbounded search over {} features is exponential; set a stall limit (at most {MAX_UNBOUNDED_FEATURES} features without one)",
            fm.n_features()
        )));
    }
    Ok(())
}

/// Correlation matrix, best-first CFS search, then range filter.
pub fn select_features(fm: &FeatureMatrix, cfg: &SelectionConfig) -> Result<FeatureSubset> {
    check_search(fm, cfg)?;
    let cm = correlation_matrix(fm)?;
    let pre = best_first_search(&cm, cfg.stall_limit);
    let out = range_filter(fm, &pre, cfg.threshold)?;
    log::debug!(
        "selected {} of {} features ({} before range filter)",
        out.names.len(),
        fm.n_features(),
        pre.len()
    );
    Ok(out)
}

/// CFS search alone, without the range filter.
pub fn select_cfs_only(fm: &FeatureMatrix, cfg: &SelectionConfig) -> Result<Vec<String>> {
    check_search(fm, cfg)?;
    let cm = correlation_matrix(fm)?;
    Ok(best_first_search(&cm, cfg.stall_limit))
}
