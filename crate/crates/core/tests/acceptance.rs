//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL/SKIP line per criterion; exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stratasel::classifiers::ClassifierKind;
use stratasel::corpus::{self, CaseId, Channel, SetLabel};
use stratasel::evaluation::weighted_accuracy;
use stratasel::features::{basic_stats, hurst_exponent, quartiles, sample_entropy, FeatureMatrix};
use stratasel::pipeline::{run_pipeline, PipelineConfig, PipelineReport};
use stratasel::sampler::{allocate, required_sample_size, stratify, SamplingConfig, StratificationPlan};
use stratasel::selection::{best_first_search_indices, correlation_matrix, CorrelationMatrix};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed <= limit {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; took {elapsed:?}, limit {limit:?}"))
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_size_table() -> Outcome {
    let start = Instant::now();
    let got: Vec<usize> = [1.04, 1.44, 1.96, 2.58]
        .iter()
        .map(|&z| required_sample_size(&SamplingConfig::new(z, 4097)).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let expected = vec![1629, 2288, 2872, 3287];
    if got != expected {
        return Outcome::Fail(format!("got {got:?}, expected {expected:?}"));
    }
    within(elapsed, Duration::from_millis(1), format!("{got:?}"))
}

fn weighted_ac() -> Outcome {
    let w = [300.0, 300.0, 500.0];
    let ac99 = weighted_accuracy(&[98.73, 96.20, 97.40], &w).unwrap();
    let ac95 = weighted_accuracy(&[98.60, 96.20, 96.96], &w).unwrap();
    check(
        (ac99 - 97.44).abs() <= 0.005 && (ac95 - 97.20).abs() <= 0.005,
        format!("AC99 = {ac99:.6} (97.44), AC95 = {ac95:.6} (97.20)"),
    )
}

fn stratification() -> Outcome {
    let sizes = stratify(4097, 4).unwrap().sizes();
    check(sizes == [1024, 1024, 1024, 1025], format!("{sizes:?}"))
}

fn allocation_conservation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let n_strata = rng.random_range(1..=8);
        let length = rng.random_range(n_strata.max(16)..=2000);
        let plan = stratify(length, n_strata).unwrap();
        let scales: Vec<f64> = (0..n_strata).map(|_| rng.random_range(0.01..20.0)).collect();
        let n_channels = rng.random_range(1..=6);
        let channels: Vec<Channel> = (0..n_channels)
            .map(|c| {
                let mut samples = Vec::with_capacity(length);
                for (size, scale) in plan.sizes().iter().zip(&scales) {
                    samples.extend((0..*size).map(|_| scale * normal(&mut rng)));
                }
                Channel {
                    id: format!("c{c}"),
                    set_label: SetLabel::A,
                    samples,
                    sampling_rate_hz: 1.0,
                }
            })
            .collect();
        let refs: Vec<&Channel> = channels.iter().collect();
        let n_bar = rng.random_range(0..=length);
        let alloc = match allocate(&refs, &plan, n_bar) {
            Ok(a) => a,
            Err(e) => return Outcome::Fail(format!("trial {trial}: {e}")),
        };
        let sum: usize = alloc.per_stratum.iter().sum();
        let capped = alloc.per_stratum.iter().zip(plan.sizes()).all(|(&n, cap)| n <= cap);
        if sum != n_bar || !capped {
            return Outcome::Fail(format!(
                "trial {trial}: n_bar {n_bar}, sizes {:?}, allocation {:?}",
                plan.sizes(),
                alloc.per_stratum
            ));
        }
    }
    within(start.elapsed(), Duration::from_secs(10), "1000 random classes conserve n_bar within caps".into())
}

fn oracle_merit(cm: &CorrelationMatrix, subset: &[usize]) -> f64 {
    let k = subset.len() as f64;
    let rcf = subset.iter().map(|&i| cm.feature_class[i].abs()).sum::<f64>() / k;
    let mut pair_sum = 0.0;
    let mut pairs = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            pair_sum += cm.feature_feature[i][j].abs();
            pairs += 1.0;
        }
    }
    let rff = if pairs > 0.0 { pair_sum / pairs } else { 0.0 };
    k * rcf / (k + k * (k - 1.0) * rff).sqrt()
}

fn exhaustive_argmax(cm: &CorrelationMatrix) -> (f64, Vec<usize>) {
    let d = cm.feature_class.len();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for mask in 1u32..(1 << d) {
        let subset: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let m = oracle_merit(cm, &subset);
        if m > best.0 || (m == best.0 && subset < best.1) {
            best = (m, subset);
        }
    }
    best
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 1)).collect();
    let effects: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mix: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    let rows = labels
        .iter()
        .map(|&l| {
            let shared = normal(rng);
            (0..d)
                .map(|j| effects[j] * f64::from(l) + mix[j] * shared + normal(rng))
                .collect()
        })
        .collect();
    FeatureMatrix {
        names: (0..d).map(|j| format!("f{j}")).collect(),
        rows,
        labels,
    }
}

fn selection_oracle() -> Outcome {
    let start = Instant::now();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fm = random_matrix(&mut rng, 80, 8);
        let cm = correlation_matrix(&fm).unwrap();
        let found = best_first_search_indices(&cm, None);
        let (best_merit, best) = exhaustive_argmax(&cm);
        if found != best {
            return Outcome::Fail(format!(
                "seed {seed}: search {found:?} (merit {}), exhaustive {best:?} (merit {best_merit})",
                oracle_merit(&cm, &found)
            ));
        }
    }
    within(start.elapsed(), Duration::from_secs(30), "100 random 8-feature matrices".into())
}

fn type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn reference_sampen(x: &[f64], m: usize, r_factor: f64) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let r = r_factor * sd;
    let count = |len: usize| -> f64 {
        let templates: Vec<&[f64]> = (0..n - m).map(|i| &x[i..i + len]).collect();
        let mut c = 0.0;
        for i in 0..templates.len() {
            for j in i + 1..templates.len() {
                let d = templates[i]
                    .iter()
                    .zip(templates[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if d <= r {
                    c += 1.0;
                }
            }
        }
        c
    };
    -(count(m + 1) / count(m)).ln()
}

fn feature_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_moment: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(10..600);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..9.0) + normal(&mut rng).powi(3)).collect();
        let s = basic_stats(&x).unwrap();
        let q = quartiles(&x).unwrap();
        let nf = n as f64;
        let mean = x.iter().sum::<f64>() / nf;
        let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / nf;
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let expected = [
            (s.mean, mean),
            (s.std, (m(2) * nf / (nf - 1.0)).sqrt()),
            (s.skewness, m(3) / m(2).powf(1.5)),
            (s.kurtosis, m(4) / m(2).powi(2)),
            (s.min, sorted[0]),
            (s.max, sorted[n - 1]),
            (s.median, type7(&sorted, 0.5)),
            (q.q1, type7(&sorted, 0.25)),
            (q.q3, type7(&sorted, 0.75)),
        ];
        for (got, want) in expected {
            worst_moment = worst_moment.max((got - want).abs() / want.abs().max(1.0));
        }
    }

    let hurst: Vec<f64> = (0..20)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x: Vec<f64> = (0..4096).map(|_| normal(&mut rng)).collect();
            hurst_exponent(&x).unwrap()
        })
        .collect();
    let hurst_mean = hurst.iter().sum::<f64>() / hurst.len() as f64;

    let mut worst_sampen: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = sample_entropy(&x, 2, 0.2).unwrap();
        worst_sampen = worst_sampen.max((got - reference_sampen(&x, 2, 0.2)).abs());
    }

    check(
        worst_moment <= 1e-9 && (0.4..=0.6).contains(&hurst_mean) && worst_sampen <= 0.05,
        format!(
            "moment error {worst_moment:.2e} (<= 1e-9), mean Hurst {hurst_mean:.4} in [0.4, 0.6], \
             SampEn error {worst_sampen:.2e} (<= 0.05)"
        ),
    )
}

fn synthetic_config(amplitude: f64, levels: Vec<u32>) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        cases: vec![CaseId::Case1],
        confidence_levels: levels,
        classifiers: vec![ClassifierKind::Rf],
        ..PipelineConfig::default()
    };
    cfg.data.synthetic = true;
    cfg.data.per_set = 50;
    cfg.data.length = 4097;
    cfg.data.burst_amplitude = amplitude;
    cfg
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let report = match run_pipeline(&synthetic_config(5.0, vec![95])) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let case = &report.levels[0].evaluations[0].cases[0];
    let selected = case.selected_features.as_ref().map_or(60, |s| s.names.len());
    let ok = case.mean >= 99.0 && selected <= 10 && case.mean_features <= 10.0 && case.weight == 150;
    let detail = format!(
        "accuracy {:.2} ± {:.2} (>= 99), selected {selected} of 60 (<= 10), mean per-fold {:.1}",
        case.mean, case.std, case.mean_features
    );
    if !ok {
        return Outcome::Fail(detail);
    }
    within(start.elapsed(), Duration::from_secs(120), detail)
}

fn bonn_reproduction() -> Outcome {
    let Some(root) = std::env::var_os("BONN_DATA_DIR").map(PathBuf::from) else {
        return Outcome::Skip("BONN_DATA_DIR not set".into());
    };
    let mut cfg = PipelineConfig {
        confidence_levels: vec![95],
        classifiers: vec![ClassifierKind::Rf],
        ..PipelineConfig::default()
    };
    cfg.data.synthetic = false;
    cfg.data.root = Some(root.clone());
    let report: PipelineReport = match run_pipeline(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let cases = &report.levels[0].evaluations[0].cases;
    let bands = [("case1", 95.0), ("case2", 92.0), ("case3", 93.0)];
    let mut notes = Vec::new();
    let mut ok = true;
    for (id, floor) in bands {
        let Some(c) = cases.iter().find(|c| c.case_id == id) else {
            return Outcome::Fail(format!("{id} missing from report"));
        };
        ok &= c.mean >= floor;
        notes.push(format!("{id} {:.2} (>= {floor})", c.mean));
    }

    let dirs = corpus::discover_set_dirs(&root);
    let set_a = match dirs.get(&SetLabel::A).map(|d| corpus::load_set(SetLabel::A, d)) {
        Some(Ok(chans)) => chans,
        Some(Err(e)) => return Outcome::Fail(e.to_string()),
        None => return Outcome::Fail("set A directory not found".into()),
    };
    let refs: Vec<&Channel> = set_a.iter().collect();
    let plan: StratificationPlan = stratify(refs[0].len(), 4).unwrap();
    let n_bar = required_sample_size(&SamplingConfig::new(1.96, refs[0].len())).unwrap();
    let alloc = allocate(&refs, &plan, n_bar).unwrap().per_stratum;
    let table = [696usize, 718, 731, 727];
    let alloc_ok = alloc.iter().zip(table).all(|(&a, t)| a.abs_diff(t) <= 2);
    ok &= alloc_ok;
    notes.push(format!("set A allocation {alloc:?} (±2 of {table:?})"));

    let smaller = cases
        .iter()
        .filter(|c| match (&c.selected_features, c.cfs_only_size) {
            (Some(s), Some(cfs)) => s.names.len() < cfs,
            _ => false,
        })
        .count();
    ok &= smaller >= 2;
    notes.push(format!("range filter shrinks CFS subset in {smaller}/3 cases (>= 2)"));
    check(ok, notes.join("; "))
}

fn degradation_trend() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for amplitude in [0.2, 0.3, 0.45] {
        let report = match run_pipeline(&synthetic_config(amplitude, vec![70, 99])) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        let acc = |i: usize| report.levels[i].evaluations[0].cases[0].mean;
        let (a70, a99) = (acc(0), acc(1));
        ok &= a99 >= a70 - 2.0;
        notes.push(format!("amplitude {amplitude}: 99% {a99:.2} vs 70% {a70:.2}"));
    }
    check(ok, notes.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 sample-size table", sample_size_table),
        ("2 weighted accuracy", weighted_ac),
        ("3 stratification", stratification),
        ("4 allocation conservation", allocation_conservation),
        ("5 selection oracle equivalence", selection_oracle),
        ("6 feature oracles", feature_oracles),
        ("7 end-to-end synthetic", end_to_end),
        ("8 real-data reproduction", bonn_reproduction),
        ("9 degradation trend", degradation_trend),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS criterion {name}: {d} [{secs:.2}s]"),
            Outcome::Skip(d) => println!("SKIP criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
