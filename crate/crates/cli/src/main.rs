use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stratasel::classifiers::ClassifierKind;
use stratasel::corpus::CaseId;
use stratasel::evaluation::{EvaluationReport, SelectionMode};
use stratasel::features::FeatureMatrix;
use stratasel::pipeline::{self, to_json, LevelReport, PipelineConfig, PipelineReport, ReducedCase};
use stratasel::report::{self, ReportFormat};
use stratasel::selection;
use stratasel::{Error, Result};

#[derive(Parser)]
#[command(name = "stratasel", version, about = "Optimum-allocation sampling, feature selection and classification of EEG channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence preset(s) in percent: 70, 85, 95, 99.
    #[arg(long, value_delimiter = ',')]
    confidence: Vec<u32>,
    /// Explicit standard normal variate (overrides --confidence).
    #[arg(long)]
    z: Option<f64>,
    /// Case(s): case1, case2, case3.
    #[arg(long = "case", value_delimiter = ',')]
    cases: Vec<CaseId>,
    /// Classifier(s): rf, knn, nb.
    #[arg(long = "classifier", value_delimiter = ',')]
    classifiers: Vec<ClassifierKind>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the synthetic corpus.
    #[arg(long, conflicts_with = "data_root")]
    synthetic: bool,
    /// Bonn corpus root with one directory per set.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Feature selection placement: per-fold, global, none.
    #[arg(long)]
    selection: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if !self.confidence.is_empty() {
            cfg.confidence_levels = self.confidence.clone();
            cfg.z = None;
        }
        if self.z.is_some() {
            cfg.z = self.z;
        }
        if !self.cases.is_empty() {
            cfg.cases = self.cases.clone();
        }
        if !self.classifiers.is_empty() {
            cfg.classifiers = self.classifiers.clone();
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if self.synthetic {
            cfg.data.synthetic = true;
        }
        if let Some(root) = &self.data_root {
            cfg.data.synthetic = false;
            cfg.data.root = Some(root.clone());
        }
        if let Some(mode) = &self.selection {
            cfg.selection.mode = match mode.as_str() {
                "per-fold" => SelectionMode::PerFold,
                "global" => SelectionMode::Global,
                "none" => SelectionMode::None,
                other => return Err(Error::Config(format!("unknown selection mode `{other}`"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load (or synthesize) cases and write them as channel bundles.
    Ingest(Common),
    /// Reduce an ingested case by optimum allocation.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Case bundle written by `ingest`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Extract the feature matrix from a reduced case.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run feature selection on a feature matrix.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Cross-validate classifiers on a feature matrix.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run every stage for every requested case and level.
    Pipeline(Common),
    /// Render a saved JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn out_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format {
        format: "json",
        message: e.to_string(),
    }
}

/// Stem shared by stage outputs: `case1.reduced.json` → `case1`.
fn stem(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or("case").to_string()
}

fn print(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(common) => {
            let cfg = common.resolve()?;
            let dir = out_dir(&cfg);
            for &case_id in &cfg.cases {
                let case = pipeline::ingest(&cfg, case_id)?;
                let path = write_out(&dir, &format!("{case_id}.case.json"), &to_json(&case))?;
                eprintln!("{case_id}: {} channels -> {}", case.len(), path.display());
            }
        }
        Command::Sample { common, input } => {
            let cfg = common.resolve()?;
            let case: stratasel::corpus::ClassificationCase = serde_json::from_str(&read(&input)?).map_err(json_err)?;
            let level = cfg.levels()?.into_iter().next().expect("validated");
            let reduced = pipeline::sample_case(&case, &cfg.sampling_config(&level, 0), cfg.sampling.policy, cfg.seed)?;
            eprintln!(
                "{}: n_bar = {}, allocations = {:?}",
                case.case_id,
                reduced.n_bar,
                reduced.allocations.iter().map(|(k, a)| (k.clone(), a.per_stratum.clone())).collect::<Vec<_>>()
            );
            write_out(&out_dir(&cfg), &format!("{}.reduced.json", case.case_id), &to_json(&reduced))?;
        }
        Command::Extract { common, input } => {
            let cfg = common.resolve()?;
            let reduced: ReducedCase = serde_json::from_str(&read(&input)?).map_err(json_err)?;
            let fm = pipeline::extract_case(&reduced, &cfg.features)?;
            write_out(&out_dir(&cfg), &format!("{}.features.csv", reduced.case_id), &fm.to_csv_string())?;
        }
        Command::Select { common, input } => {
            let cfg = common.resolve()?;
            let fm = FeatureMatrix::from_csv_str(&read(&input)?)?;
            let subset = selection::select_features(&fm, &cfg.selection.selection_config())?;
            let json = to_json(&subset);
            write_out(&out_dir(&cfg), &format!("{}.selection.json", stem(&input)), &json)?;
            print(&json)?;
        }
        Command::Classify { common, input } => {
            let cfg = common.resolve()?;
            let fm = FeatureMatrix::from_csv_str(&read(&input)?)?;
            let case_id = stem(&input);
            let level = cfg.levels()?.into_iter().next().expect("validated");
            let evaluations = cfg
                .classifiers
                .iter()
                .map(|&k| {
                    let result = pipeline::classify(&fm, &case_id, &cfg.classifier_config(k), &cfg)?;
                    EvaluationReport::new(k.as_str(), vec![result])
                })
                .collect::<Result<Vec<_>>>()?;
            let report = PipelineReport {
                seed: cfg.seed,
                levels: vec![LevelReport {
                    level: level.label(),
                    confidence: level.confidence,
                    z: level.z,
                    n_bar: Default::default(),
                    allocations: Default::default(),
                    evaluations,
                }],
            };
            let json = to_json(&report);
            write_out(&out_dir(&cfg), &format!("{case_id}.classify.json"), &json)?;
            print(&report::render_table(&report))?;
        }
        Command::Pipeline(common) => {
            let mut cfg = common.resolve()?;
            if cfg.out_dir.is_none() {
                cfg.out_dir = Some(PathBuf::from("out"));
            }
            let report = pipeline::run_pipeline(&cfg)?;
            print(&report::render_table(&report))?;
        }
        Command::Report { input, format } => {
            let report = report::parse_json_report(&read(&input)?)?;
            let bytes = report::emit_report(&report, format);
            print(&String::from_utf8_lossy(&bytes))?;
        }
        Command::DefaultConfig => {
            print(&to_json(&PipelineConfig::default()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
