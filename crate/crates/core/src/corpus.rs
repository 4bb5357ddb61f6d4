//! Channel ingestion, classification cases and a synthetic stand-in corpus.
//!
//! A Bonn-style corpus is five sets (A..E) of single-channel recordings,
//! each stored as a plain-text file with one sample per line. Sets are
//! grouped into two-category classification cases; set E (ictal) is always
//! the positive class.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Sampling rate of the Bonn recordings.
pub const BONN_SAMPLING_RATE_HZ: f64 = 173.61;

/// Number of samples in every Bonn channel.
pub const BONN_CHANNEL_LENGTH: usize = 4097;

/// Shortest synthetic channel; anything shorter cannot carry four strata of
/// usable length.
pub const MIN_SYNTHETIC_LENGTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SetLabel {
    A,
    B,
    C,
    D,
    E,
}

impl SetLabel {
    pub const ALL: [SetLabel; 5] = [SetLabel::A, SetLabel::B, SetLabel::C, SetLabel::D, SetLabel::E];

    /// File-name prefix used by the public Bonn distribution
    /// (Z, O, N, F, S for sets A..E).
    pub fn bonn_prefix(self) -> char {
        match self {
            SetLabel::A => 'Z',
            SetLabel::B => 'O',
            SetLabel::C => 'N',
            SetLabel::D => 'F',
            SetLabel::E => 'S',
        }
    }

    /// Inverse of [`SetLabel::bonn_prefix`].
    pub fn from_bonn_prefix(c: char) -> Option<SetLabel> {
        SetLabel::ALL
            .into_iter()
            .find(|l| l.bonn_prefix() == c.to_ascii_uppercase())
    }

    /// Class label within any case: 1 for the seizure set, 0 otherwise.
    pub fn class_label(self) -> u8 {
        u8::from(self == SetLabel::E)
    }
}

impl fmt::Display for SetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SetLabel::A => "A",
            SetLabel::B => "B",
            SetLabel::C => "C",
            SetLabel::D => "D",
            SetLabel::E => "E",
        };
        f.write_str(s)
    }
}

impl FromStr for SetLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(SetLabel::A),
            "B" => Ok(SetLabel::B),
            "C" => Ok(SetLabel::C),
            "D" => Ok(SetLabel::D),
            "E" => Ok(SetLabel::E),
            other => Err(Error::Config(format!("unknown set label `{other}`"))),
        }
    }
}

/// One recorded signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: String,
    pub set_label: SetLabel,
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
}

impl Channel {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Case1, CaseId::Case2, CaseId::Case3];

    /// Non-seizure sets forming category 1.
    pub fn category1_sets(self) -> &'static [SetLabel] {
        match self {
            CaseId::Case1 => &[SetLabel::A, SetLabel::B],
            CaseId::Case2 => &[SetLabel::C, SetLabel::D],
            CaseId::Case3 => &[SetLabel::A, SetLabel::B, SetLabel::C, SetLabel::D],
        }
    }

    pub fn category2_sets(self) -> &'static [SetLabel] {
        &[SetLabel::E]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "case1" => Ok(CaseId::Case1),
            "2" | "case2" => Ok(CaseId::Case2),
            "3" | "case3" => Ok(CaseId::Case3),
            other => Err(Error::Config(format!("unknown case `{other}`"))),
        }
    }
}

/// A labeled two-category problem built from one or more sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationCase {
    pub case_id: CaseId,
    pub category1_sets: Vec<SetLabel>,
    pub category2_sets: Vec<SetLabel>,
    pub channels: Vec<LabeledChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledChannel {
    pub channel: Channel,
    pub label: u8,
}

impl ClassificationCase {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Channels carrying the given class label, in case order.
    pub fn class_channels(&self, label: u8) -> Vec<&Channel> {
        self.channels
            .iter()
            .filter(|c| c.label == label)
            .map(|c| &c.channel)
            .collect()
    }

    pub fn class_count(&self, label: u8) -> usize {
        self.channels.iter().filter(|c| c.label == label).count()
    }
}

/// Reads a plain-text channel file (one numeric value per line).
///
/// Blank lines are skipped. The channel id is the file stem and the set
/// label is inferred from the Bonn prefix when possible (defaulting to A);
/// [`build_case`] overrides it from configuration.
pub fn load_channel(path: &Path) -> Result<Channel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples = parse_samples(&text, path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let set_label = id
        .chars()
        .next()
        .and_then(SetLabel::from_bonn_prefix)
        .unwrap_or(SetLabel::A);
    Ok(Channel {
        id,
        set_label,
        samples,
        sampling_rate_hz: BONN_SAMPLING_RATE_HZ,
    })
}

fn parse_samples(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("not a number: `{line}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("non-finite value `{line}`"),
            });
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(samples)
}

/// Serializes samples in the channel file format. Values are written in
/// shortest round-trip form, so [`load_channel`] reproduces them exactly.
pub fn channel_to_text(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 8);
    for v in samples {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn write_channel(path: &Path, samples: &[f64]) -> Result<()> {
    fs::write(path, channel_to_text(samples)).map_err(|e| Error::io(path, e))
}

/// Lists `*.txt` / `*.TXT` files of a set directory in lexicographic order.
fn channel_files(label: SetLabel, dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingSetDirectory {
            label,
            path: dir.to_path_buf(),
        });
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|ext| ext == "txt" || ext == "TXT")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptySet {
            label,
            path: dir.to_path_buf(),
        });
    }
    Ok(files)
}

/// Loads every channel of one set directory.
pub fn load_set(label: SetLabel, dir: &Path) -> Result<Vec<Channel>> {
    channel_files(label, dir)?
        .iter()
        .map(|p| {
            load_channel(p).map(|mut ch| {
                ch.set_label = label;
                ch
            })
        })
        .collect()
}

/// Assembles a classification case from configured set directories.
pub fn build_case(case_id: CaseId, set_dirs: &BTreeMap<SetLabel, PathBuf>) -> Result<ClassificationCase> {
    let mut channels = Vec::new();
    for &label in case_id
        .category1_sets()
        .iter()
        .chain(case_id.category2_sets())
    {
        let dir = set_dirs.get(&label).ok_or(Error::UnconfiguredSet(label))?;
        for channel in load_set(label, dir)? {
            channels.push(LabeledChannel {
                label: label.class_label(),
                channel,
            });
        }
    }
    Ok(ClassificationCase {
        case_id,
        category1_sets: case_id.category1_sets().to_vec(),
        category2_sets: case_id.category2_sets().to_vec(),
        channels,
    })
}

/// Parses a set-directory mapping of `label = path` lines.
///
/// `#` starts a comment. Relative paths are resolved against `base`.
/// Labels may be given as A..E or as Bonn prefixes (Z, O, N, F, S).
pub fn parse_set_config(text: &str, base: &Path) -> Result<BTreeMap<SetLabel, PathBuf>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("set config line {}: expected `label = path`", i + 1)))?;
        let key = key.trim();
        let label = match key.parse::<SetLabel>() {
            Ok(l) => l,
            Err(_) => key
                .chars()
                .next()
                .filter(|_| key.len() == 1)
                .and_then(SetLabel::from_bonn_prefix)
                .ok_or_else(|| Error::Config(format!("set config line {}: unknown set `{key}`", i + 1)))?,
        };
        let value = value.trim().trim_matches('"');
        let path = Path::new(value);
        let path = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        };
        map.insert(label, path);
    }
    Ok(map)
}

/// Default layout of a Bonn corpus root: one sub-directory per set, named
/// either by set letter (`A`..`E`) or by Bonn prefix (`Z`, `O`, `N`, `F`, `S`).
pub fn discover_set_dirs(root: &Path) -> BTreeMap<SetLabel, PathBuf> {
    let mut map = BTreeMap::new();
    for label in SetLabel::ALL {
        let prefix = label.bonn_prefix();
        let candidates = [
            label.to_string(),
            label.to_string().to_ascii_lowercase(),
            prefix.to_string(),
            prefix.to_ascii_lowercase().to_string(),
        ];
        if let Some(dir) = candidates.iter().map(|c| root.join(c)).find(|d| d.is_dir()) {
            map.insert(label, dir);
        }
    }
    map
}

/// Parameters of the synthetic corpus.
///
/// Class 0 channels are i.i.d. standard Gaussian noise. Class 1 channels
/// add sinusoidal bursts of `burst_amplitude` on random windows; roughly one
/// burst per 256 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Channels generated per set.
    pub per_set: usize,
    pub length: usize,
    pub burst_amplitude: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            per_set: 50,
            length: BONN_CHANNEL_LENGTH,
            burst_amplitude: 5.0,
        }
    }
}

fn synthetic_channel(set: SetLabel, index: usize, length: usize, amplitude: f64, seed: u64) -> Channel {
    let channel_seed = seed::derive(seed, &[set as u64, index as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(channel_seed);
    let mut samples: Vec<f64> = (0..length).map(|_| StandardNormal.sample(&mut rng)).collect();
    if set.class_label() == 1 {
        let n_bursts = (length / 256).max(1);
        for _ in 0..n_bursts {
            let lo = 32.min(length / 2);
            let width = rng.random_range(lo..=(length / 8).max(lo));
            let start = rng.random_range(0..=length - width);
            let period = rng.random_range(8.0..32.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            for (k, s) in samples[start..start + width].iter_mut().enumerate() {
                *s += amplitude * (std::f64::consts::TAU * k as f64 / period + phase).sin();
            }
        }
    }
    Channel {
        id: format!("{}{:03}", set.bonn_prefix(), index + 1),
        set_label: set,
        samples,
        sampling_rate_hz: BONN_SAMPLING_RATE_HZ,
    }
}

/// Synthetic analogue of a Bonn case: `cfg.per_set` channels for each set the
/// case draws on, so Case 1 yields a 2:1 class ratio like the real data.
pub fn synthetic_case(case_id: CaseId, cfg: &SyntheticConfig, seed: u64) -> Result<ClassificationCase> {
    if cfg.per_set == 0 {
        return Err(Error::Config("synthetic per_set must be at least 1".into()));
    }
    if cfg.length < MIN_SYNTHETIC_LENGTH {
        return Err(Error::TooShort {
            what: "synthetic channel",
            need: MIN_SYNTHETIC_LENGTH,
            got: cfg.length,
        });
    }
    let channels = case_id
        .category1_sets()
        .iter()
        .chain(case_id.category2_sets())
        .flat_map(|&set| {
            (0..cfg.per_set).map(move |i| LabeledChannel {
                label: set.class_label(),
                channel: synthetic_channel(set, i, cfg.length, cfg.burst_amplitude, seed),
            })
        })
        .collect();
    Ok(ClassificationCase {
        case_id,
        category1_sets: case_id.category1_sets().to_vec(),
        category2_sets: case_id.category2_sets().to_vec(),
        channels,
    })
}

/// Balanced synthetic case: `n_per_class` channels of set A (class 0) and
/// of set E (class 1). A pure function of its arguments.
pub fn generate_synthetic_case(n_per_class: usize, length: usize, seed: u64) -> Result<ClassificationCase> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be at least 1".into()));
    }
    if length < MIN_SYNTHETIC_LENGTH {
        return Err(Error::TooShort {
            what: "synthetic channel",
            need: MIN_SYNTHETIC_LENGTH,
            got: length,
        });
    }
    let channels = [SetLabel::A, SetLabel::E]
        .into_iter()
        .flat_map(|set| {
            (0..n_per_class).map(move |i| LabeledChannel {
                label: set.class_label(),
                channel: synthetic_channel(set, i, length, 5.0, seed),
            })
        })
        .collect();
    Ok(ClassificationCase {
        case_id: CaseId::Case1,
        category1_sets: vec![SetLabel::A],
        category2_sets: vec![SetLabel::E],
        channels,
    })
}
