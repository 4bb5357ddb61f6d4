//! Repeated (stratified) k-fold cross-validation and weighted accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed;
use crate::selection::{self, FeatureSubset, SelectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub n_folds: usize,
    pub n_repeats: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_folds: 10,
            n_repeats: 20,
            seed: 0,
            stratified: true,
        }
    }
}

/// Where feature selection runs relative to the folds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Select on each training fold.
    #[default]
    PerFold,
    /// Select once on all rows, then cross-validate.
    Global,
    /// Use every feature.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fold assignment for one repeat.
///
/// Stratified splits shuffle each class separately and deal its members
/// round-robin across folds, continuing the fold cursor from one class to
/// the next so fold sizes differ by at most one.
pub fn kfold_split(n: usize, labels: &[u8], cfg: &CvConfig, repeat: usize) -> Result<Vec<Fold>> {
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if cfg.n_folds < 2 {
        return Err(Error::Config("n_folds must be at least 2".into()));
    }
    if cfg.n_folds > n {
        return Err(Error::Config(format!("{} folds for {n} rows", cfg.n_folds)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[repeat as u64]));
    let groups: Vec<Vec<usize>> = if cfg.stratified {
        let mut classes: Vec<u8> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        classes
            .iter()
            .map(|&c| (0..n).filter(|&i| labels[i] == c).collect::<Vec<_>>())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    if cfg.stratified {
        if let Some(g) = groups.iter().find(|g| g.len() < cfg.n_folds) {
            return Err(Error::Config(format!(
                "{} folds exceed the size of a class with {} rows",
                cfg.n_folds,
                g.len()
            )));
        }
    }
    let mut assignment = vec![0usize; n];
    let mut cursor = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            assignment[i] = cursor % cfg.n_folds;
            cursor += 1;
        }
    }
    Ok((0..cfg.n_folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    /// Percent.
    pub mean: f64,
    /// Population standard deviation over repeats, percent.
    pub std: f64,
    pub per_repeat: Vec<f64>,
    /// Average number of features used per fold.
    pub mean_features: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Repeated cross-validated accuracy of `classifier` on `fm`.
///
/// Each repeat draws a fresh fold split; its accuracy pools correct
/// predictions over all folds. Classifier seeds derive from
/// `(cfg.seed, repeat, fold)`.
pub fn run_cv(
    fm: &FeatureMatrix,
    classifier: &ClassifierConfig,
    cfg: &CvConfig,
    mode: SelectionMode,
    selection_cfg: &SelectionConfig,
) -> Result<CvOutcome> {
    if cfg.n_repeats == 0 {
        return Err(Error::Config("n_repeats must be at least 1".into()));
    }
    if fm.class_count() != 2 {
        return Err(Error::ClassCount(fm.class_count()));
    }
    let global = match mode {
        SelectionMode::Global => Some(selection::select_features(fm, selection_cfg)?.names),
        SelectionMode::None => Some(fm.names.clone()),
        SelectionMode::PerFold => None,
    };

    let splits = (0..cfg.n_repeats)
        .map(|r| kfold_split(fm.n_rows(), &fm.labels, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.n_repeats)
        .flat_map(|r| (0..cfg.n_folds).map(move |f| (r, f)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(r, f)| {
            let fold = &splits[r][f];
            let train = fm.subset_rows(&fold.train);
            let test = fm.subset_rows(&fold.test);
            if train.class_count() != 2 {
                return Err(Error::Degenerate(format!("repeat {r} fold {f}: training fold has one class")));
            }
            let names = match &global {
                Some(n) => n.clone(),
                None => selection::select_features(&train, selection_cfg)?.names,
            };
            let train = train.select_columns(&names)?;
            let test = test.select_columns(&names)?;
            let model = classifier.fit(&train, seed::derive(cfg.seed, &[r as u64, f as u64, 0xf0]))?;
            let pred = model.predict(&test.rows)?;
            let correct = pred.iter().zip(&test.labels).filter(|(p, t)| p == t).count();
            Ok((r, correct, test.n_rows(), names.len()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut correct = vec![0usize; cfg.n_repeats];
    let mut total = vec![0usize; cfg.n_repeats];
    let mut feature_count = 0usize;
    for (r, c, t, k) in &results {
        correct[*r] += c;
        total[*r] += t;
        feature_count += k;
    }
    let per_repeat: Vec<f64> = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| 100.0 * c as f64 / t as f64)
        .collect();
    let (mean, std) = mean_std(&per_repeat);
    Ok(CvOutcome {
        mean,
        std,
        per_repeat,
        mean_features: feature_count as f64 / results.len() as f64,
    })
}

/// `sum(w_i * x_i) / sum(w_i)`.
pub fn weighted_accuracy(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::Config("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("total weight is zero".into()));
    }
    Ok(values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total)
}

/// Per-case accuracy summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub mean: f64,
    pub std: f64,
    /// Number of channels in the case (its weight in the average).
    pub weight: usize,
    pub per_repeat: Vec<f64>,
    pub mean_features: f64,
    /// Selection on the full case matrix, for reporting.
    pub selected_features: Option<FeatureSubset>,
    /// CFS subset size without the range filter, for comparison.
    pub cfs_only_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classifier: String,
    pub cases: Vec<CaseResult>,
    pub weighted_average: f64,
}

impl EvaluationReport {
    pub fn new(classifier: &str, cases: Vec<CaseResult>) -> Result<Self> {
        let values: Vec<f64> = cases.iter().map(|c| c.mean).collect();
        let weights: Vec<f64> = cases.iter().map(|c| c.weight as f64).collect();
        let weighted_average = weighted_accuracy(&values, &weights)?;
        Ok(EvaluationReport {
            classifier: classifier.to_string(),
            cases,
            weighted_average,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{KnnConfig, RfConfig};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(n0: usize, n1: usize) -> Vec<u8> {
        std::iter::repeat_n(0, n0).chain(std::iter::repeat_n(1, n1)).collect()
    }

    fn separable(seed: u64, n0: usize, n1: usize, shift: f64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = labels(n0, n1);
        let rows = labels
            .iter()
            .map(|&l| {
                (0..6)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        10.0 + z + if j < 2 { shift * f64::from(l) } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        FeatureMatrix {
            names: (0..6).map(|j| format!("f{j}")).collect(),
            rows,
            labels,
        }
    }

    #[test]
    fn folds_partition_indices() {
        let lab = labels(200, 100);
        let cfg = CvConfig::default();
        let folds = kfold_split(300, &lab, &cfg, 0).unwrap();
        assert_eq!(folds.len(), 10);
        let mut seen = vec![0usize; 300];
        for f in &folds {
            assert_eq!(f.test.len(), 30);
            assert_eq!(f.train.len(), 270);
            let zeros = f.test.iter().filter(|&&i| lab[i] == 0).count();
            assert!((19..=21).contains(&zeros));
            for &i in &f.test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, kfold_split(300, &lab, &cfg, 0).unwrap());
        assert_ne!(folds, kfold_split(300, &lab, &cfg, 1).unwrap());
    }

    #[test]
    fn uneven_stratified_folds_stay_balanced() {
        let lab = labels(37, 23);
        let folds = kfold_split(60, &lab, &CvConfig::default(), 3).unwrap();
        for f in &folds {
            let ones = f.test.iter().filter(|&&i| lab[i] == 1).count();
            assert!((2..=3).contains(&ones));
            assert_eq!(f.test.len(), 6);
        }
        let plain = CvConfig { stratified: false, ..Default::default() };
        assert_eq!(kfold_split(60, &lab, &plain, 0).unwrap().len(), 10);
    }

    #[test]
    fn too_many_folds_rejected() {
        let lab = labels(20, 5);
        assert!(kfold_split(25, &lab, &CvConfig::default(), 0).is_err());
        let one = CvConfig { n_folds: 1, ..Default::default() };
        assert!(kfold_split(25, &lab, &one, 0).is_err());
    }

    #[test]
    fn separable_case_scores_high() {
        let fm = separable(1, 60, 30, 8.0);
        let cv = CvConfig { n_repeats: 3, seed: 4, ..Default::default() };
        let rf = ClassifierConfig::Rf(RfConfig { trees: 20, ..Default::default() });
        let out = run_cv(&fm, &rf, &cv, SelectionMode::PerFold, &SelectionConfig::default()).unwrap();
        assert!(out.mean >= 99.0, "{out:?}");
        assert!(out.mean_features <= 6.0);
        assert_eq!(out, run_cv(&fm, &rf, &cv, SelectionMode::PerFold, &SelectionConfig::default()).unwrap());
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let mut means = Vec::new();
        for seed in 0..5 {
            let mut fm = separable(seed, 50, 50, 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            fm.labels.shuffle(&mut rng);
            let cv = CvConfig { n_repeats: 4, seed, ..Default::default() };
            let knn = ClassifierConfig::Knn(KnnConfig::default());
            means.push(run_cv(&fm, &knn, &cv, SelectionMode::None, &SelectionConfig::default()).unwrap().mean);
        }
        let avg = means.iter().sum::<f64>() / means.len() as f64;
        assert!((40.0..=60.0).contains(&avg), "{means:?}");
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let fm = separable(2, 30, 30, 1.0);
        let cv = CvConfig { n_repeats: 1, ..Default::default() };
        let knn = ClassifierConfig::Knn(KnnConfig::default());
        let out = run_cv(&fm, &knn, &cv, SelectionMode::Global, &SelectionConfig::default()).unwrap();
        assert_eq!(out.std, 0.0);
        assert_eq!(out.per_repeat.len(), 1);
    }

    #[test]
    fn row_permutation_keeps_accuracy_distribution() {
        let fm = separable(3, 40, 40, 1.0);
        let mut idx: Vec<usize> = (0..80).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let permuted = fm.subset_rows(&idx);
        let cv = CvConfig { seed: 11, ..Default::default() };
        let knn = ClassifierConfig::Knn(KnnConfig::default());
        let a = run_cv(&fm, &knn, &cv, SelectionMode::None, &SelectionConfig::default()).unwrap();
        let b = run_cv(&permuted, &knn, &cv, SelectionMode::None, &SelectionConfig::default()).unwrap();
        let tol = a.std.max(b.std).max(0.5) / (cv.n_repeats as f64).sqrt() * 3.0;
        assert!((a.mean - b.mean).abs() <= tol, "{} vs {} (tol {tol})", a.mean, b.mean);
    }

    #[test]
    fn weighted_accuracy_cases() {
        let w = [300.0, 300.0, 500.0];
        assert!((weighted_accuracy(&[98.73, 96.20, 97.40], &w).unwrap() - 97.44).abs() <= 0.005);
        assert!((weighted_accuracy(&[98.60, 96.20, 96.96], &w).unwrap() - 97.20).abs() <= 0.005);
        assert!((weighted_accuracy(&[1.0, 2.0, 6.0], &[2.0, 2.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);
        assert!(weighted_accuracy(&[1.0], &[1.0, 2.0]).is_err());
        assert!(weighted_accuracy(&[1.0], &[0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..100.0)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..10.0)).collect();
            let c = rng.random_range(0.01..100.0);
            let wc: Vec<f64> = w.iter().map(|v| v * c).collect();
            assert!((weighted_accuracy(&x, &w).unwrap() - weighted_accuracy(&x, &wc).unwrap()).abs() < 1e-12);
        }
    }
}
