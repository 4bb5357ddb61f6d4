//! Per-stratum feature bank.
//!
//! Fifteen statistics are computed on every stratum of a (reduced) channel
//! and concatenated into one vector named `s{stratum}_{feature}`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Channel;
use crate::error::{Error, Result};
use crate::sampler::StratificationPlan;
use crate::stats;

/// Shortest stratum the Hurst estimator accepts.
pub const HURST_MIN_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Min,
    Max,
    Skewness,
    Mean,
    Std,
    Mode,
    Iqr,
    Q1,
    Q3,
    ShannonEntropy,
    Hurst,
    FluctuationIndex,
    SampleEntropy,
    Median,
    Kurtosis,
}

impl FeatureKind {
    /// Extraction order within a stratum.
    pub const ALL: [FeatureKind; 15] = [
        FeatureKind::Min,
        FeatureKind::Max,
        FeatureKind::Skewness,
        FeatureKind::Mean,
        FeatureKind::Std,
        FeatureKind::Mode,
        FeatureKind::Iqr,
        FeatureKind::Q1,
        FeatureKind::Q3,
        FeatureKind::ShannonEntropy,
        FeatureKind::Hurst,
        FeatureKind::FluctuationIndex,
        FeatureKind::SampleEntropy,
        FeatureKind::Median,
        FeatureKind::Kurtosis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Min => "min",
            FeatureKind::Max => "max",
            FeatureKind::Skewness => "skewness",
            FeatureKind::Mean => "mean",
            FeatureKind::Std => "std",
            FeatureKind::Mode => "mode",
            FeatureKind::Iqr => "iqr",
            FeatureKind::Q1 => "q1",
            FeatureKind::Q3 => "q3",
            FeatureKind::ShannonEntropy => "shannon_entropy",
            FeatureKind::Hurst => "hurst",
            FeatureKind::FluctuationIndex => "fluctuation_index",
            FeatureKind::SampleEntropy => "sample_entropy",
            FeatureKind::Median => "median",
            FeatureKind::Kurtosis => "kurtosis",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub enabled: Vec<FeatureKind>,
    pub shannon_bins: usize,
    pub sampen_m: usize,
    pub sampen_r: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            enabled: FeatureKind::ALL.to_vec(),
            shannon_bins: 64,
            sampen_m: 2,
            sampen_r: 0.2,
        }
    }
}

impl FeatureConfig {
    /// Enabled features in canonical extraction order, deduplicated.
    fn ordered(&self) -> Vec<FeatureKind> {
        FeatureKind::ALL
            .into_iter()
            .filter(|k| self.enabled.contains(k))
            .collect()
    }

    fn min_stratum_len(&self) -> usize {
        let kinds = self.ordered();
        let mut need = 2;
        if kinds.iter().any(|k| matches!(k, FeatureKind::Iqr | FeatureKind::Q1 | FeatureKind::Q3)) {
            need = need.max(4);
        }
        if kinds.contains(&FeatureKind::SampleEntropy) {
            need = need.max(self.sampen_m + 2);
        }
        if kinds.contains(&FeatureKind::Hurst) {
            need = need.max(HURST_MIN_LEN);
        }
        need
    }

    /// Rejects plans whose strata are too short for the enabled features.
    pub fn check_plan(&self, plan: &StratificationPlan) -> Result<()> {
        if self.enabled.is_empty() {
            return Err(Error::Config("no features enabled".into()));
        }
        if self.shannon_bins == 0 {
            return Err(Error::Config("shannon_bins must be at least 1".into()));
        }
        let need = self.min_stratum_len();
        if let Some(&got) = plan.sizes().iter().find(|&&s| s < need) {
            return Err(Error::Config(format!(
                "stratum of {got} samples is shorter than the {need} the enabled features require"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

fn require(what: &'static str, x: &[f64], need: usize) -> Result<()> {
    if x.len() < need {
        return Err(Error::TooShort {
            what,
            need,
            got: x.len(),
        });
    }
    Ok(())
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of sorted data at position (n - 1) * q.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = (v.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Most frequent value after rounding to six decimals; ties go to the
/// smallest value.
fn mode(x: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in x {
        *counts.entry((v * 1e6).round() as i64).or_default() += 1;
    }
    let mut best = (0, 0usize);
    for (&key, &count) in &counts {
        if count > best.1 {
            best = (key, count);
        }
    }
    best.0 as f64 / 1e6
}

/// Whether the central second moment is zero up to rounding noise.
fn is_flat(m2: f64, x: &[f64]) -> bool {
    let scale = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    m2 <= (4.0 * f64::EPSILON * scale).powi(2)
}

pub fn basic_stats(x: &[f64]) -> Result<BasicStats> {
    require("basic statistics", x, 2)?;
    let n = x.len() as f64;
    let v = sorted(x);
    let mean = stats::mean(x);
    let (m2, m3, m4) = x.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &xi| {
        let d = xi - mean;
        let d2 = d * d;
        (a + d2, b + d2 * d, c + d2 * d2)
    });
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skewness, kurtosis) = if is_flat(m2, x) {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    Ok(BasicStats {
        min: v[0],
        max: v[v.len() - 1],
        mean,
        median: quantile_sorted(&v, 0.5),
        mode: mode(x),
        std: stats::sample_variance(x).sqrt(),
        skewness,
        kurtosis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

pub fn quartiles(x: &[f64]) -> Result<Quartiles> {
    require("quartiles", x, 4)?;
    let v = sorted(x);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    Ok(Quartiles {
        q1,
        q3,
        iqr: (q3 - q1).max(0.0),
    })
}

/// Shannon entropy in bits of an equal-width histogram over `[min, max]`.
pub fn shannon_entropy(x: &[f64], bins: usize) -> Result<f64> {
    require("shannon entropy", x, 2)?;
    let bins = bins.max(1);
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    let width = hi - lo;
    for &v in x {
        let b = (((v - lo) / width) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = x.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// Sample entropy with tolerance `r_factor * std(x)` and Chebyshev distance.
///
/// Pairs of templates `i < j` are counted over the first `n - m` start
/// positions for both lengths. When no `(m + 1)`-match exists the value is
/// capped at `ln(B * (n - m - 1))`, with `B` taken as at least one.
pub fn sample_entropy(x: &[f64], m: usize, r_factor: f64) -> Result<f64> {
    require("sample entropy", x, m + 2)?;
    let n = x.len();
    let r = r_factor * stats::sample_variance(x).sqrt();
    let templates = n - m;
    let mut b: u64 = 0;
    let mut a: u64 = 0;
    for i in 0..templates {
        for j in i + 1..templates {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        return Ok(((b.max(1) * (n - m - 1) as u64) as f64).ln());
    }
    Ok(-(a as f64 / b as f64).ln())
}

/// Rescaled-range Hurst estimate over dyadic window sizes 8, 16, ... up to
/// `n / 2`, clamped to `[0, 1]`. Windows with zero spread are skipped; when
/// fewer than two sizes remain the series carries no scaling information
/// and 0.5 is returned.
pub fn hurst_exponent(x: &[f64]) -> Result<f64> {
    require("hurst exponent", x, HURST_MIN_LEN)?;
    let n = x.len();
    let mut log_size = Vec::new();
    let mut log_rs = Vec::new();
    let mut size = 8;
    while size <= n / 2 {
        let mut acc = 0.0;
        let mut used = 0usize;
        for w in x.chunks_exact(size) {
            let mean = stats::mean(w);
            let (mut cum, mut lo, mut hi) = (0.0_f64, 0.0_f64, 0.0_f64);
            for v in w {
                cum += v - mean;
                lo = lo.min(cum);
                hi = hi.max(cum);
            }
            let s = stats::population_variance(w).sqrt();
            if s > 0.0 && hi > lo {
                acc += (hi - lo) / s;
                used += 1;
            }
        }
        if used > 0 {
            log_size.push((size as f64).ln());
            log_rs.push((acc / used as f64).ln());
        }
        size *= 2;
    }
    if log_size.len() < 2 {
        return Ok(0.5);
    }
    Ok(stats::ols_slope(&log_size, &log_rs).clamp(0.0, 1.0))
}

/// Mean absolute first difference.
pub fn fluctuation_index(x: &[f64]) -> Result<f64> {
    require("fluctuation index", x, 2)?;
    let total: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (x.len() - 1) as f64)
}

/// All enabled features of one stratum, in canonical order.
fn stratum_features(x: &[f64], cfg: &FeatureConfig, kinds: &[FeatureKind]) -> Result<Vec<f64>> {
    let basic = basic_stats(x)?;
    let quart = if x.len() >= 4 { Some(quartiles(x)?) } else { None };
    let quart = || quart.ok_or(Error::TooShort { what: "quartiles", need: 4, got: x.len() });
    kinds
        .iter()
        .map(|k| {
            Ok(match k {
                FeatureKind::Min => basic.min,
                FeatureKind::Max => basic.max,
                FeatureKind::Skewness => basic.skewness,
                FeatureKind::Mean => basic.mean,
                FeatureKind::Std => basic.std,
                FeatureKind::Mode => basic.mode,
                FeatureKind::Iqr => quart()?.iqr,
                FeatureKind::Q1 => quart()?.q1,
                FeatureKind::Q3 => quart()?.q3,
                FeatureKind::ShannonEntropy => shannon_entropy(x, cfg.shannon_bins)?,
                FeatureKind::Hurst => hurst_exponent(x)?,
                FeatureKind::FluctuationIndex => fluctuation_index(x)?,
                FeatureKind::SampleEntropy => sample_entropy(x, cfg.sampen_m, cfg.sampen_r)?,
                FeatureKind::Median => basic.median,
                FeatureKind::Kurtosis => basic.kurtosis,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub label: u8,
}

/// Column names for a plan of `n_strata` strata.
pub fn feature_names(n_strata: usize, cfg: &FeatureConfig) -> Vec<String> {
    let kinds = cfg.ordered();
    (1..=n_strata)
        .flat_map(|s| kinds.iter().map(move |k| format!("s{s}_{}", k.name())))
        .collect()
}

/// Feature vector of a channel whose strata are laid out by `plan`.
pub fn extract_vector(ch: &Channel, plan: &StratificationPlan, cfg: &FeatureConfig) -> Result<FeatureVector> {
    cfg.check_plan(plan)?;
    let kinds = cfg.ordered();
    let mut values = Vec::with_capacity(plan.n_strata() * kinds.len());
    for seg in plan.segments(&ch.samples)? {
        values.extend(stratum_features(seg, cfg, &kinds)?);
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!(
            "channel {}: feature {} is not finite",
            ch.id,
            feature_names(plan.n_strata(), cfg)[pos]
        )));
    }
    Ok(FeatureVector {
        names: feature_names(plan.n_strata(), cfg),
        values,
        label: ch.set_label.class_label(),
    })
}

/// Instances x named features with binary class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: Vec<FeatureVector>) -> Result<Self> {
        let names = vectors
            .first()
            .map(|v| v.names.clone())
            .ok_or_else(|| Error::Format {
                format: "feature matrix",
                message: "no rows".into(),
            })?;
        let mut rows = Vec::with_capacity(vectors.len());
        let mut labels = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.names != names {
                return Err(Error::Format {
                    format: "feature matrix",
                    message: "rows disagree on feature names".into(),
                });
            }
            rows.push(v.values);
            labels.push(v.label);
        }
        Ok(FeatureMatrix { names, rows, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Number of distinct labels present.
    pub fn class_count(&self) -> usize {
        let mut seen = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Rows at `idx`, in that order.
    pub fn subset_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Columns named in `names`, in that order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.index_of(n.as_ref()))
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix {
            names: idx.iter().map(|&j| self.names[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }

    /// CSV with a header of feature names plus `label`; values carry twelve
    /// significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format {
            format: "csv",
            message: e.to_string(),
        };
        w.write_record(self.names.iter().map(String::as_str).chain(["label"]))
            .map_err(csv_err)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut fields: Vec<String> = row.iter().map(|v| format_sig12(*v)).collect();
            fields.push(label.to_string());
            w.write_record(&fields).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format {
            format: "csv",
            message: e.to_string(),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<FeatureMatrix> {
        let fmt_err = |message: String| Error::Format {
            format: "feature csv",
            message,
        };
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| fmt_err(e.to_string()))?.clone();
        let n_cols = header.len();
        if n_cols < 2 || &header[n_cols - 1] != "label" {
            return Err(fmt_err("last column must be `label`".into()));
        }
        let names: Vec<String> = header.iter().take(n_cols - 1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| fmt_err(e.to_string()))?;
            let row = rec
                .iter()
                .take(n_cols - 1)
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| fmt_err(format!("row {}: {e}", i + 1)))?;
            let label: u8 = rec[n_cols - 1]
                .trim()
                .parse()
                .map_err(|e| fmt_err(format!("row {} label: {e}", i + 1)))?;
            if label > 1 {
                return Err(fmt_err(format!("row {}: label {label} is not binary", i + 1)));
            }
            rows.push(row);
            labels.push(label);
        }
        Ok(FeatureMatrix { names, rows, labels })
    }

    pub fn from_csv_str(text: &str) -> Result<FeatureMatrix> {
        Self::read_csv(text.as_bytes())
    }
}

/// Scientific notation with twelve significant digits.
pub fn format_sig12(v: f64) -> String {
    format!("{v:.11e}")
}
