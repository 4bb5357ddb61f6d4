//! Sample-size estimation, stratification and optimum allocation.
//!
//! A channel of `N` points is the population. The total sample size comes
//! from the normal-approximation formula with finite-population correction;
//! it is then split across contiguous strata proportionally to
//! `N_i * sqrt(sum_j s_ij^2)`, where `s_ij^2` is the variance of stratum `i`
//! in channel `j`, pooled over every channel of a class.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Channel;
use crate::error::{Error, Result};
use crate::stats;

/// Standard normal variates for the supported confidence presets.
pub const CONFIDENCE_PRESETS: [(u32, f64); 4] = [(70, 1.04), (85, 1.44), (95, 1.96), (99, 2.58)];

/// z value for a confidence preset, in percent.
pub fn z_for_confidence(level: u32) -> Option<f64> {
    CONFIDENCE_PRESETS
        .iter()
        .find(|(l, _)| *l == level)
        .map(|&(_, z)| z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Standard normal variate.
    pub z: f64,
    /// Estimated proportion.
    pub p: f64,
    /// Margin of error.
    pub e: f64,
    pub population_size: usize,
    pub n_strata: usize,
}

impl SamplingConfig {
    pub fn new(z: f64, population_size: usize) -> Self {
        SamplingConfig {
            z,
            p: 0.5,
            e: 0.01,
            population_size,
            n_strata: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(Error::Config(format!("z must be positive, got {}", self.z)));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Config(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.e > 0.0 && self.e < 1.0) {
            return Err(Error::Config(format!("e must lie in (0, 1), got {}", self.e)));
        }
        if self.n_strata == 0 || self.population_size < self.n_strata {
            return Err(Error::Config(format!(
                "need population_size >= n_strata >= 1, got N={} strata={}",
                self.population_size, self.n_strata
            )));
        }
        Ok(())
    }
}

/// Corrected total sample size, truncated toward zero.
pub fn required_sample_size(cfg: &SamplingConfig) -> Result<usize> {
    cfg.validate()?;
    let n = cfg.z * cfg.z * cfg.p * (1.0 - cfg.p) / (cfg.e * cfg.e);
    let big_n = cfg.population_size as f64;
    let corrected = n / (1.0 + (n - 1.0) / big_n);
    Ok((corrected.floor() as usize).min(cfg.population_size))
}

/// Contiguous half-open strata covering `[0, len)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratificationPlan {
    pub boundaries: Vec<(usize, usize)>,
}

impl StratificationPlan {
    /// Plan with the given consecutive stratum sizes.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut start = 0;
        let boundaries = sizes
            .iter()
            .map(|&s| {
                let b = (start, start + s);
                start += s;
                b
            })
            .collect();
        StratificationPlan { boundaries }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.boundaries.iter().map(|(a, b)| b - a).collect()
    }

    pub fn n_strata(&self) -> usize {
        self.boundaries.len()
    }

    /// Total length covered.
    pub fn total_len(&self) -> usize {
        self.boundaries.last().map_or(0, |b| b.1)
    }

    /// Slices of `samples` for each stratum.
    pub fn segments<'a>(&self, samples: &'a [f64]) -> Result<Vec<&'a [f64]>> {
        if samples.len() != self.total_len() {
            return Err(Error::LengthMismatch {
                expected: self.total_len(),
                got: samples.len(),
            });
        }
        Ok(self.boundaries.iter().map(|&(a, b)| &samples[a..b]).collect())
    }
}

/// Splits `length` points into `n_strata` near-equal strata. Larger strata
/// (one extra point each) come last.
pub fn stratify(length: usize, n_strata: usize) -> Result<StratificationPlan> {
    if n_strata == 0 || length < n_strata {
        return Err(Error::Config(format!(
            "cannot split {length} points into {n_strata} strata"
        )));
    }
    let base = length / n_strata;
    let extra = length % n_strata;
    let sizes: Vec<usize> = (0..n_strata)
        .map(|i| if i >= n_strata - extra { base + 1 } else { base })
        .collect();
    Ok(StratificationPlan::from_sizes(&sizes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub n_bar: usize,
    pub per_stratum: Vec<usize>,
    /// `N_i * sqrt(sum_j s_ij^2)` for each stratum.
    pub per_stratum_weight: Vec<f64>,
}

/// Optimum allocation of `n_bar` samples across the strata of `plan`,
/// pooling stratum variances over `class_channels`.
///
/// Real-valued shares are floored and the shortfall handed out one point at
/// a time to the largest fractional parts (lower stratum first on ties), so
/// the counts always sum to `n_bar`. A stratum whose share would exceed its
/// size is capped and the excess re-shared among the rest.
pub fn allocate(class_channels: &[&Channel], plan: &StratificationPlan, n_bar: usize) -> Result<AllocationResult> {
    let total = plan.total_len();
    if class_channels.is_empty() {
        return Err(Error::Config("allocation needs at least one channel".into()));
    }
    if n_bar > total {
        return Err(Error::Config(format!("n_bar {n_bar} exceeds channel length {total}")));
    }
    let sizes = plan.sizes();
    let mut pooled_var = vec![0.0; plan.n_strata()];
    for ch in class_channels {
        for (acc, seg) in pooled_var.iter_mut().zip(plan.segments(&ch.samples)?) {
            if seg.len() >= 2 {
                *acc += stats::sample_variance(seg);
            }
        }
    }
    let weights: Vec<f64> = sizes
        .iter()
        .zip(&pooled_var)
        .map(|(&n, &v)| n as f64 * v.sqrt())
        .collect();
    let per_stratum = apportion(n_bar, &weights, &sizes)?;
    Ok(AllocationResult {
        n_bar,
        per_stratum,
        per_stratum_weight: weights,
    })
}

fn apportion(n_bar: usize, weights: &[f64], caps: &[usize]) -> Result<Vec<usize>> {
    let k = weights.len();
    if n_bar == 0 {
        return Ok(vec![0; k]);
    }
    let weight_sum: f64 = weights.iter().sum();
    if !(weight_sum > 0.0 && weight_sum.is_finite()) {
        return Err(Error::Degenerate(
            "every stratum is constant in every channel; allocation weights are zero".into(),
        ));
    }

    // Water-filling: strata whose proportional share exceeds their size are
    // saturated, the rest share what remains.
    let mut saturated = vec![false; k];
    let mut shares = vec![0.0; k];
    loop {
        let fixed: usize = (0..k).filter(|&i| saturated[i]).map(|i| caps[i]).sum();
        let remaining = n_bar.saturating_sub(fixed) as f64;
        let free_weight: f64 = (0..k).filter(|&i| !saturated[i]).map(|i| weights[i]).sum();
        let mut changed = false;
        for i in 0..k {
            if saturated[i] {
                shares[i] = caps[i] as f64;
                continue;
            }
            shares[i] = if free_weight > 0.0 {
                remaining * weights[i] / free_weight
            } else {
                0.0
            };
            if shares[i] > caps[i] as f64 {
                saturated[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut counts: Vec<usize> = shares
        .iter()
        .zip(caps)
        .map(|(&s, &c)| (s.floor() as usize).min(c))
        .collect();
    let mut leftover = n_bar - counts.iter().sum::<usize>().min(n_bar);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // Largest remainders first; repeat passes only matter when caps bind.
    while leftover > 0 {
        let mut progressed = false;
        for &i in &order {
            if leftover == 0 {
                break;
            }
            if counts[i] < caps[i] && (weights[i] > 0.0 || free_capacity_only_zero_weight(weights, &counts, caps)) {
                counts[i] += 1;
                leftover -= 1;
                progressed = true;
            }
        }
        if !progressed {
            return Err(Error::Degenerate(format!(
                "cannot place {leftover} remaining samples within stratum sizes"
            )));
        }
    }
    Ok(counts)
}

fn free_capacity_only_zero_weight(weights: &[f64], counts: &[usize], caps: &[usize]) -> bool {
    (0..weights.len()).all(|i| weights[i] == 0.0 || counts[i] >= caps[i])
}

/// How samples are picked inside a stratum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionPolicy {
    /// Simple random sampling without replacement.
    #[default]
    Random,
    /// Evenly spaced positions.
    Systematic,
}

/// Positions (into the full channel) retained by a reduction, strictly
/// increasing.
pub fn reduce_indices(
    plan: &StratificationPlan,
    alloc: &AllocationResult,
    policy: SelectionPolicy,
    seed: u64,
) -> Result<Vec<usize>> {
    if alloc.per_stratum.len() != plan.n_strata() {
        return Err(Error::LengthMismatch {
            expected: plan.n_strata(),
            got: alloc.per_stratum.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(alloc.per_stratum.iter().sum());
    for (&(start, end), &n_i) in plan.boundaries.iter().zip(&alloc.per_stratum) {
        let size = end - start;
        if n_i > size {
            return Err(Error::Config(format!(
                "allocation of {n_i} exceeds stratum size {size}"
            )));
        }
        let mut picked: Vec<usize> = match policy {
            SelectionPolicy::Random => index::sample(&mut rng, size, n_i).into_vec(),
            SelectionPolicy::Systematic => (0..n_i)
                .map(|j| ((j as f64 + 0.5) * size as f64 / n_i as f64) as usize)
                .collect(),
        };
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|p| start + p));
    }
    Ok(out)
}

/// Reduced channel: the allocated samples of each stratum, in temporal
/// order, strata concatenated.
pub fn reduce_channel(
    ch: &Channel,
    plan: &StratificationPlan,
    alloc: &AllocationResult,
    policy: SelectionPolicy,
    seed: u64,
) -> Result<Channel> {
    if ch.len() != plan.total_len() {
        return Err(Error::LengthMismatch {
            expected: plan.total_len(),
            got: ch.len(),
        });
    }
    let idx = reduce_indices(plan, alloc, policy, seed)?;
    Ok(Channel {
        id: ch.id.clone(),
        set_label: ch.set_label,
        samples: idx.iter().map(|&i| ch.samples[i]).collect(),
        sampling_rate_hz: ch.sampling_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SetLabel;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn channel(samples: Vec<f64>) -> Channel {
        Channel {
            id: "t".into(),
            set_label: SetLabel::A,
            samples,
            sampling_rate_hz: 1.0,
        }
    }

    #[test]
    fn table_sample_sizes() {
        for (z, want) in [(1.04, 1629), (1.44, 2288), (1.96, 2872), (2.58, 3287)] {
            assert_eq!(required_sample_size(&SamplingConfig::new(z, 4097)).unwrap(), want);
        }
    }

    #[test]
    fn invalid_sampling_configs_rejected() {
        let mut cfg = SamplingConfig::new(1.96, 4097);
        cfg.p = 1.0;
        assert!(required_sample_size(&cfg).is_err());
        let mut cfg = SamplingConfig::new(0.0, 4097);
        assert!(required_sample_size(&cfg).is_err());
        cfg.z = 1.0;
        cfg.population_size = 3;
        assert!(required_sample_size(&cfg).is_err());
    }

    #[test]
    fn stratify_sizes() {
        assert_eq!(stratify(4097, 4).unwrap().sizes(), vec![1024, 1024, 1024, 1025]);
        assert_eq!(stratify(10, 1).unwrap().boundaries, vec![(0, 10)]);
        assert_eq!(stratify(7, 3).unwrap().sizes(), vec![2, 2, 3]);
        assert!(stratify(3, 4).is_err());
    }

    #[test]
    fn single_stratum_gets_everything() {
        let ch = channel((0..50).map(|i| (i * i % 7) as f64).collect());
        let plan = stratify(50, 1).unwrap();
        let a = allocate(&[&ch], &plan, 37).unwrap();
        assert_eq!(a.per_stratum, vec![37]);
    }

    #[test]
    fn two_strata_variance_ratio() {
        // Stratum 1 variance 4, stratum 2 variance 1: alternating +-a with
        // mean zero over an even count gives s^2 = a^2 * n/(n-1), so scale a
        // to hit the targets exactly.
        let n = 100.0_f64;
        let a1 = (4.0 * (n - 1.0) / n).sqrt();
        let a2 = (1.0 * (n - 1.0) / n).sqrt();
        let mut samples: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { a1 } else { -a1 }).collect();
        samples.extend((0..100).map(|i| if i % 2 == 0 { a2 } else { -a2 }));
        let ch = channel(samples);
        let plan = stratify(200, 2).unwrap();
        let a = allocate(&[&ch], &plan, 90).unwrap();
        approx::assert_relative_eq!(a.per_stratum_weight[0], 200.0, epsilon = 1e-9);
        approx::assert_relative_eq!(a.per_stratum_weight[1], 100.0, epsilon = 1e-9);
        assert_eq!(a.per_stratum, vec![60, 30]);
    }

    #[test]
    fn equal_variances_give_proportional_allocation() {
        let pattern = [1.0, -1.0, 2.0, -2.0];
        let samples: Vec<f64> = (0..400).map(|i| pattern[i % 4]).collect();
        let ch = channel(samples);
        let plan = stratify(400, 4).unwrap();
        let a = allocate(&[&ch], &plan, 200).unwrap();
        assert_eq!(a.per_stratum, vec![50, 50, 50, 50]);
    }

    #[test]
    fn all_constant_is_degenerate() {
        let ch = channel(vec![3.0; 40]);
        let plan = stratify(40, 4).unwrap();
        assert!(matches!(allocate(&[&ch], &plan, 20), Err(Error::Degenerate(_))));
    }

    #[test]
    fn caps_redistribute_excess() {
        // Stratum 0 is huge-variance but tiny; its share is capped.
        let mut samples = vec![100.0, -100.0, 100.0, -100.0];
        samples.extend((0..96).map(|i| if i % 2 == 0 { 0.1 } else { -0.1 }));
        let ch = channel(samples);
        let plan = StratificationPlan::from_sizes(&[4, 96]);
        let a = allocate(&[&ch], &plan, 50).unwrap();
        assert_eq!(a.per_stratum, vec![4, 46]);
    }

    #[test]
    fn identity_reduction() {
        let ch = channel((0..40).map(f64::from).collect());
        let plan = stratify(40, 4).unwrap();
        let alloc = AllocationResult {
            n_bar: 40,
            per_stratum: plan.sizes(),
            per_stratum_weight: vec![1.0; 4],
        };
        for policy in [SelectionPolicy::Random, SelectionPolicy::Systematic] {
            assert_eq!(reduce_channel(&ch, &plan, &alloc, policy, 3).unwrap(), ch);
        }
    }

    #[test]
    fn reduction_is_seeded_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plan = stratify(1000, 4).unwrap();
        for trial in 0..50 {
            let per_stratum: Vec<usize> = plan.sizes().iter().map(|&s| rng.random_range(0..=s)).collect();
            let alloc = AllocationResult {
                n_bar: per_stratum.iter().sum(),
                per_stratum,
                per_stratum_weight: vec![1.0; 4],
            };
            for policy in [SelectionPolicy::Random, SelectionPolicy::Systematic] {
                let a = reduce_indices(&plan, &alloc, policy, trial).unwrap();
                let b = reduce_indices(&plan, &alloc, policy, trial).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.len(), alloc.n_bar);
                assert!(a.windows(2).all(|w| w[0] < w[1]));
                // each stratum contributes exactly n_i positions from its own range
                for (&(s, e), &n) in plan.boundaries.iter().zip(&alloc.per_stratum) {
                    assert_eq!(a.iter().filter(|&&i| i >= s && i < e).count(), n);
                }
            }
        }
    }

    #[test]
    fn over_allocation_rejected() {
        let ch = channel(vec![0.0; 10]);
        let plan = stratify(10, 2).unwrap();
        let alloc = AllocationResult {
            n_bar: 6,
            per_stratum: vec![6, 0],
            per_stratum_weight: vec![1.0, 1.0],
        };
        assert!(reduce_channel(&ch, &plan, &alloc, SelectionPolicy::Random, 0).is_err());
    }

    #[test]
    fn reduced_strata_keep_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 2.0).unwrap();
        let ch = channel((0..4000).map(|_| normal.sample(&mut rng)).collect());
        let plan = stratify(4000, 4).unwrap();
        let alloc = allocate(&[&ch], &plan, 1200).unwrap();
        let reduced = reduce_channel(&ch, &plan, &alloc, SelectionPolicy::Random, 1).unwrap();
        let rplan = StratificationPlan::from_sizes(&alloc.per_stratum);
        for (orig, red) in plan.segments(&ch.samples).unwrap().iter().zip(rplan.segments(&reduced.samples).unwrap()) {
            assert!(red.len() >= 100);
            let ratio = stats::sample_variance(red) / stats::sample_variance(orig);
            assert!((0.5..=1.5).contains(&ratio), "variance ratio {ratio}");
        }
    }

    proptest! {
        #[test]
        fn sample_size_monotone(z in 0.5f64..3.0, dz in 0.0f64..1.0, n in 10usize..10_000, dn in 0usize..1000, e in 0.005f64..0.2, de in 0.0f64..0.05) {
            let base = SamplingConfig { z, p: 0.5, e, population_size: n, n_strata: 1 };
            let s = required_sample_size(&base).unwrap();
            prop_assert!(s <= n);
            let more_z = SamplingConfig { z: z + dz, ..base.clone() };
            prop_assert!(required_sample_size(&more_z).unwrap() >= s);
            let more_n = SamplingConfig { population_size: n + dn, ..base.clone() };
            prop_assert!(required_sample_size(&more_n).unwrap() >= s);
            let more_e = SamplingConfig { e: (e + de).min(0.99), ..base.clone() };
            prop_assert!(required_sample_size(&more_e).unwrap() <= s);
        }

        #[test]
        fn allocation_conserves_and_is_duplication_invariant(
            seed in 0u64..10_000,
            len in 40usize..400,
            strata in 1usize..6,
            frac in 0.0f64..=1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chans: Vec<Channel> = (0..3)
                .map(|_| channel((0..len).map(|_| rng.random_range(-5.0..5.0) * rng.random_range(0.0..3.0)).collect()))
                .collect();
            let plan = stratify(len, strata).unwrap();
            let n_bar = (frac * len as f64) as usize;
            let refs: Vec<&Channel> = chans.iter().collect();
            let a = allocate(&refs, &plan, n_bar).unwrap();
            prop_assert_eq!(a.per_stratum.iter().sum::<usize>(), n_bar);
            for (n_i, cap) in a.per_stratum.iter().zip(plan.sizes()) {
                prop_assert!(*n_i <= cap);
            }
            let doubled: Vec<&Channel> = chans.iter().chain(chans.iter()).collect();
            let b = allocate(&doubled, &plan, n_bar).unwrap();
            prop_assert_eq!(a.per_stratum, b.per_stratum);
        }
    }
}
