//! k-nearest neighbours, Gaussian naive Bayes and random forest behind one
//! fit/predict surface.
//!
//! All models are binary (labels 0 and 1) and immutable once fitted. New
//! model families plug in as further [`ClassifierConfig`] / [`ModelParams`]
//! variants.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::seed;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Nb,
    Rf,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Nb => "nb",
            ClassifierKind::Rf => "rf",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knn" | "k-nn" => Ok(ClassifierKind::Knn),
            "nb" | "naive_bayes" => Ok(ClassifierKind::Nb),
            "rf" | "random_forest" => Ok(ClassifierKind::Rf),
            other => Err(Error::Config(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    /// z-score features with training statistics before measuring distance.
    pub standardize: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 3, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbConfig {
    pub var_floor: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig { var_floor: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub trees: usize,
    /// Base seed for the forest; when unset the caller's seed is used.
    pub seed: Option<u64>,
    /// Features tried per node; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            trees: 100,
            seed: None,
            max_features: None,
            bootstrap: true,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierConfig {
    Knn(KnnConfig),
    Nb(NbConfig),
    Rf(RfConfig),
}

impl ClassifierConfig {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierConfig::Knn(_) => ClassifierKind::Knn,
            ClassifierConfig::Nb(_) => ClassifierKind::Nb,
            ClassifierConfig::Rf(_) => ClassifierKind::Rf,
        }
    }

    /// Fits the configured model. `seed` only matters for randomized models.
    pub fn fit(&self, train: &FeatureMatrix, seed: u64) -> Result<TrainedModel> {
        match self {
            ClassifierConfig::Knn(cfg) => knn_fit(train, cfg),
            ClassifierConfig::Nb(cfg) => nb_fit(train, cfg),
            ClassifierConfig::Rf(cfg) => rf_fit(train, cfg, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Knn(KnnModel),
    Nb(NbModel),
    Rf(RandomForest),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub feature_names: Vec<String>,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<u8> {
        if row.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Knn(m) => m.predict(row),
            ModelParams::Nb(m) => m.predict(row),
            ModelParams::Rf(m) => m.predict(row),
        })
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

fn check_training(train: &FeatureMatrix) -> Result<()> {
    if train.n_rows() == 0 {
        return Err(Error::TooShort {
            what: "training set",
            need: 1,
            got: 0,
        });
    }
    if let Some(&l) = train.labels.iter().find(|&&l| l > 1) {
        return Err(Error::Config(format!("label {l} is not binary")));
    }
    if let Some(r) = train.rows.iter().find(|r| r.len() != train.n_features()) {
        return Err(Error::LengthMismatch {
            expected: train.n_features(),
            got: r.len(),
        });
    }
    Ok(())
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl KnnModel {
    fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn predict(&self, row: &[f64]) -> u8 {
        let q = self.transform(row);
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(&q, r), i))
            .collect();
        // distance ties go to the lower training index
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = [0usize; 2];
        for &(_, i) in dist.iter().take(self.k) {
            votes[usize::from(self.labels[i])] += 1;
        }
        u8::from(votes[1] > votes[0])
    }
}

pub fn knn_fit(train: &FeatureMatrix, cfg: &KnnConfig) -> Result<TrainedModel> {
    check_training(train)?;
    if cfg.k == 0 || cfg.k > train.n_rows() {
        return Err(Error::Config(format!(
            "k = {} must lie in 1..={}",
            cfg.k,
            train.n_rows()
        )));
    }
    let d = train.n_features();
    let (mean, scale) = if cfg.standardize {
        (0..d)
            .map(|j| {
                let col = train.column(j);
                let sd = stats::sample_variance(&col).sqrt();
                (stats::mean(&col), if sd > 0.0 { sd } else { 1.0 })
            })
            .unzip()
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let mut model = KnnModel {
        k: cfg.k,
        mean,
        scale,
        rows: Vec::new(),
        labels: train.labels.clone(),
    };
    model.rows = train.rows.iter().map(|r| model.transform(r)).collect();
    Ok(TrainedModel {
        kind: ClassifierKind::Knn,
        feature_names: train.names.clone(),
        params: ModelParams::Knn(model),
    })
}

/// Fits k-NN on `train` and labels `test_rows`.
pub fn knn_fit_predict(train: &FeatureMatrix, test_rows: &[Vec<f64>], cfg: &KnnConfig) -> Result<Vec<u8>> {
    knn_fit(train, cfg)?.predict(test_rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl NbModel {
    /// Log prior plus summed Gaussian log-likelihoods, per class.
    pub fn log_scores(&self, row: &[f64]) -> [f64; 2] {
        let score = |c: usize| {
            self.log_prior[c]
                + row
                    .iter()
                    .zip(&self.mean[c])
                    .zip(&self.var[c])
                    .map(|((x, m), v)| {
                        -0.5 * (std::f64::consts::TAU * v).ln() - (x - m) * (x - m) / (2.0 * v)
                    })
                    .sum::<f64>()
        };
        [score(0), score(1)]
    }

    fn predict(&self, row: &[f64]) -> u8 {
        let s = self.log_scores(row);
        u8::from(s[1] > s[0])
    }
}

/// Gaussian naive Bayes: per-class feature means and maximum-likelihood
/// variances (floored at `var_floor`), class priors from frequencies.
pub fn nb_fit(train: &FeatureMatrix, cfg: &NbConfig) -> Result<TrainedModel> {
    check_training(train)?;
    let n = train.n_rows() as f64;
    let mut log_prior = [0.0; 2];
    let mut mean: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut var: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for c in 0..2u8 {
        let rows: Vec<&Vec<f64>> = train
            .rows
            .iter()
            .zip(&train.labels)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r)
            .collect();
        if rows.is_empty() {
            return Err(Error::ClassCount(1));
        }
        let ci = usize::from(c);
        log_prior[ci] = (rows.len() as f64 / n).ln();
        for j in 0..train.n_features() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            mean[ci].push(stats::mean(&col));
            var[ci].push(stats::population_variance(&col).max(cfg.var_floor));
        }
    }
    Ok(TrainedModel {
        kind: ClassifierKind::Nb,
        feature_names: train.names.clone(),
        params: ModelParams::Nb(NbModel { log_prior, mean, var }),
    })
}

pub fn nb_predict(model: &TrainedModel, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    model.predict(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        votes: [usize; 2],
    },
}

impl TreeNode {
    fn leaf_label(votes: [usize; 2]) -> u8 {
        u8::from(votes[1] > votes[0])
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { votes } => return Self::leaf_label(*votes),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Binary classification tree with `(feature, threshold)` splits.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
}

/// Split quality as an exact rational: child purity
/// `(l0^2 + l1^2) / nl + (r0^2 + r1^2) / nr`, stored as numerator and
/// denominator. Larger purity means a larger Gini decrease.
#[derive(Debug, Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(left: [usize; 2], right: [usize; 2]) -> Self {
        let sq = |c: [usize; 2]| (c[0] * c[0] + c[1] * c[1]) as u128;
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        Purity {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn gt(&self, other: &Purity) -> bool {
        self.num * other.den > other.num * self.den
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    purity: Purity,
}

/// Best threshold on one feature over the given sample indices.
fn best_threshold(rows: &[Vec<f64>], labels: &[u8], idx: &[usize], feature: usize) -> Option<SplitChoice> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
    let mut total = [0usize; 2];
    for &i in idx {
        total[usize::from(labels[i])] += 1;
    }
    let mut left = [0usize; 2];
    let mut best: Option<SplitChoice> = None;
    for w in 0..order.len() - 1 {
        left[usize::from(labels[order[w]])] += 1;
        let (a, b) = (rows[order[w]][feature], rows[order[w + 1]][feature]);
        if a == b {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let purity = Purity::new(left, right);
        if best.as_ref().is_none_or(|s| purity.gt(&s.purity)) {
            best = Some(SplitChoice {
                feature,
                threshold: a + (b - a) / 2.0,
                purity,
            });
        }
    }
    best
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    max_features: usize,
    max_depth: Option<usize>,
}

impl TreeBuilder<'_> {
    fn build(&self, idx: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let mut votes = [0usize; 2];
        for &i in idx {
            votes[usize::from(self.labels[i])] += 1;
        }
        if idx.len() < 2 || votes[0] == 0 || votes[1] == 0 || self.max_depth.is_some_and(|d| depth >= d) {
            return TreeNode::Leaf { votes };
        }
        let d = self.rows[0].len();
        let mut candidates: Vec<usize> = (0..d).collect();
        if self.max_features < d {
            candidates.shuffle(rng);
        }
        // Try `max_features` candidates; keep drawing only if none of them
        // can split this node.
        let mut best: Option<SplitChoice> = None;
        for (tried, &f) in candidates.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            if let Some(s) = best_threshold(self.rows, self.labels, idx, f) {
                if best.as_ref().is_none_or(|b| s.purity.gt(&b.purity)) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return TreeNode::Leaf { votes };
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][split.feature] <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(&left, depth + 1, rng)),
            right: Box::new(self.build(&right, depth + 1, rng)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    fn predict(&self, row: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.root.predict(row) == 1).count();
        u8::from(2 * ones > self.trees.len())
    }
}

/// Random forest of Gini trees grown to purity on bootstrap samples.
pub fn rf_fit(train: &FeatureMatrix, cfg: &RfConfig, seed: u64) -> Result<TrainedModel> {
    check_training(train)?;
    if cfg.trees == 0 {
        return Err(Error::Config("rf.trees must be at least 1".into()));
    }
    let d = train.n_features();
    if d == 0 {
        return Err(Error::Config("random forest needs at least one feature".into()));
    }
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let base = cfg.seed.unwrap_or(seed);
    let builder = TreeBuilder {
        rows: &train.rows,
        labels: &train.labels,
        max_features,
        max_depth: cfg.max_depth,
    };
    let n = train.n_rows();
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(base, &[t as u64]));
            let idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree {
                root: builder.build(&idx, 0, &mut rng),
                n_features: d,
            }
        })
        .collect();
    Ok(TrainedModel {
        kind: ClassifierKind::Rf,
        feature_names: train.names.clone(),
        params: ModelParams::Rf(RandomForest { trees }),
    })
}

pub fn rf_predict(model: &TrainedModel, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    model.predict(rows)
}
