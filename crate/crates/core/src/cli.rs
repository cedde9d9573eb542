//! Command-line front end. `run` does everything; `boruta`, `rank` and
//! `sweep` run one stage each and hand over through files in the output
//! directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::boruta::{BorutaResult, ShadowPool};
use crate::data::{load_csv, write_csv, Dataset};
use crate::error::{Error, Result};
use crate::learners::{CandidateFeatures, ForestParams, GbtParams, TreeParams};
use crate::lime::Aggregation;
use crate::pipeline::{
    partition, prepare, rank_features, run_bolimes, select_relevant, select_top_k, EvalClassifier, PipelineConfig,
    Protocol,
};
use crate::report::{
    emit_report, read_boruta, read_boruta_summary, read_ranking, write_boruta, write_boruta_summary, write_ranking,
    BorutaSummaryRow, BORUTA_FILE, BORUTA_SUMMARY_FILE, RANKING_FILE,
};
use crate::synth::{synthesize, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(
    name = "bolimes",
    version,
    about = "Boruta + LIME feature selection with a top-k classifier sweep"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "BOLIMES_THREADS")]
    pub threads: Option<usize>,

    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: Boruta, LIME ranking, top-k sweep and report.
    Run {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Boruta stage only; writes boruta.csv and boruta_summary.csv.
    Boruta {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// LIME ranking of the confirmed features; writes ranking.csv.
    Rank {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Boruta output (default: boruta.csv in the output directory).
        #[arg(long)]
        boruta: Option<PathBuf>,
    },
    /// Top-k sweep over an existing ranking; writes the report files.
    Sweep {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        boruta: Option<PathBuf>,
        /// Ranking from `rank` (default: ranking.csv in the output directory).
        #[arg(long)]
        ranking: Option<PathBuf>,
    },
    /// Write a planted synthetic dataset and its ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the label column.
    #[arg(long, default_value = "class")]
    pub label: String,
    /// Output directory, created if missing.
    #[arg(long, default_value = "bolimes-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierKind {
    Rf,
    Gb,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Trees per Boruta forest (also the LIME black box).
    #[arg(long, default_value_t = 300)]
    pub boruta_trees: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.01, value_parser = open_unit)]
    pub alpha: f64,
    /// Shadow importance percentile used as the hit threshold.
    #[arg(long, default_value_t = 100.0)]
    pub percentile: f64,
    /// Bonferroni only, without the FDR step.
    #[arg(long)]
    pub no_two_step: bool,
    /// Shadow every feature (all) or only non-rejected ones (active).
    #[arg(long, default_value = "active")]
    pub shadow_pool: ShadowPool,
    /// Depth limit for every tree.
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    /// Features tried per split in forests: sqrt, all or a count.
    #[arg(long, default_value = "sqrt")]
    pub max_features: CandidateFeatures,

    #[arg(long, default_value_t = 5000)]
    pub perturbations: usize,
    /// Default 0.75 * sqrt(number of ranked features).
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long, default_value = "mean")]
    pub aggregation: Aggregation,

    /// Classifier used in the sweep.
    #[arg(long, value_enum, default_value_t = ClassifierKind::Rf)]
    pub classifier: ClassifierKind,
    #[arg(long, default_value_t = 200)]
    pub rf_trees: usize,
    #[arg(long, default_value_t = 50)]
    pub gb_stages: usize,
    #[arg(long, default_value_t = 0.01)]
    pub gb_learning_rate: f64,

    #[arg(long, default_value_t = 10)]
    pub k_min: usize,
    #[arg(long, default_value_t = 1)]
    pub k_step: usize,
    #[arg(long, default_value_t = 0.2, conflicts_with = "cv_folds")]
    pub test_fraction: f64,
    /// Stratified k-fold instead of a holdout split.
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Run Boruta on training rows only.
    #[arg(long)]
    pub selection_on_train_only: bool,
    /// Z-score features with training statistics first.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub informative: usize,
    #[arg(long)]
    pub noise: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Class separation of the informative features.
    #[arg(long, default_value_t = 2.0)]
    pub sep: f64,
    /// Dataset CSV; the ground truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "class")]
    pub label: String,
}

fn open_unit(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

impl PipelineArgs {
    pub fn config(&self, seed: u64) -> PipelineConfig {
        let tree = TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            n_candidate_features: self.max_features,
        };
        let mut c = PipelineConfig::new(seed);
        c.boruta.n_estimators = self.boruta_trees;
        c.boruta.max_iter = self.max_iter;
        c.boruta.alpha = self.alpha;
        c.boruta.percentile = self.percentile;
        c.boruta.two_step = !self.no_two_step;
        c.boruta.shadow_pool = self.shadow_pool;
        c.boruta.tree = tree;
        c.lime.n_perturbations = self.perturbations;
        c.lime.kernel_width = self.kernel_width;
        c.lime.ridge_penalty = self.ridge;
        c.lime.aggregation = self.aggregation;
        c.eval_classifier = match self.classifier {
            ClassifierKind::Rf => EvalClassifier::Forest(ForestParams {
                n_estimators: self.rf_trees,
                tree,
                bootstrap: true,
                seed,
            }),
            ClassifierKind::Gb => EvalClassifier::Gbt(GbtParams {
                n_estimators: self.gb_stages,
                max_depth: self.max_depth,
                learning_rate: self.gb_learning_rate,
            }),
        };
        c.k_min = self.k_min;
        c.k_step = self.k_step;
        c.protocol = match self.cv_folds {
            Some(folds) => Protocol::KFold { folds },
            None => Protocol::Holdout {
                test_fraction: self.test_fraction,
            },
        };
        c.selection_on_train_only = self.selection_on_train_only;
        c.standardize = self.standardize;
        c
    }
}

/// Parsed and validated invocation.
#[derive(Debug)]
pub struct CliConfig {
    pub cli: Cli,
    /// Present for every subcommand except `synth`.
    pub pipeline: Option<PipelineConfig>,
}

/// Parses `argv` (program name first) and validates the resulting pipeline
/// configuration. Failures carry clap's usage exit code.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<CliConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let pipeline = match &cli.command {
        Command::Run { pipeline, .. }
        | Command::Boruta { pipeline, .. }
        | Command::Rank { pipeline, .. }
        | Command::Sweep { pipeline, .. } => {
            let config = pipeline.config(cli.seed);
            config
                .validate()
                .map_err(|e| clap::Error::raw(clap::error::ErrorKind::ValueValidation, format!("{e}\n")))?;
            Some(config)
        }
        Command::Synth(_) => None,
    };
    if cli.threads == Some(0) {
        return Err(clap::Error::raw(
            clap::error::ErrorKind::ValueValidation,
            "--threads must be >= 1\n",
        ));
    }
    Ok(CliConfig { cli, pipeline })
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    error: &'a str,
    message: String,
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let config = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match config.cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = Diagnostic {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&diag).expect("plain strings serialize"));
            ExitCode::from(1)
        }
    }
}

/// Runs a parsed invocation inside a thread pool of the requested size.
pub fn execute(config: &CliConfig) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start thread pool: {e}")))?;
    pool.install(|| dispatch(config))
}

fn out_dir(io: &InputArgs) -> Result<&Path> {
    std::fs::create_dir_all(&io.out).map_err(|e| Error::io(&io.out, e))?;
    Ok(&io.out)
}

fn save_boruta(ds: &Dataset, result: &BorutaResult, dir: &Path) -> Result<()> {
    write_boruta(ds, result, dir.join(BORUTA_FILE))?;
    write_boruta_summary(&BorutaSummaryRow::new(ds, result), dir.join(BORUTA_SUMMARY_FILE))
}

fn dispatch(config: &CliConfig) -> Result<()> {
    let pipeline = config.pipeline.as_ref();
    match &config.cli.command {
        Command::Run { io, .. } => {
            let pc = pipeline.expect("validated");
            let ds = load_csv(&io.input, &io.label)?;
            let dir = out_dir(io)?;
            let run = match run_bolimes(&ds, pc) {
                Ok(run) => run,
                Err(Error::NoRelevantFeatures(b)) => {
                    save_boruta(&ds, &b, dir)?;
                    return Err(Error::NoRelevantFeatures(b));
                }
                Err(e) => return Err(e),
            };
            save_boruta(&ds, &run.boruta, dir)?;
            write_ranking(&ds, &run.selection.ranking, dir.join(RANKING_FILE))?;
            emit_report(&ds, pc, &run.boruta, &run.selection, dir)?;
            Ok(())
        }
        Command::Boruta { io, .. } => {
            let pc = pipeline.expect("validated");
            let ds = load_csv(&io.input, &io.label)?;
            let dir = out_dir(io)?;
            let parts = partition(&ds, pc)?;
            let work = prepare(&ds, pc, &parts)?;
            let result = select_relevant(&work, pc, &parts)?;
            save_boruta(&ds, &result, dir)
        }
        Command::Rank { io, boruta, .. } => {
            let pc = pipeline.expect("validated");
            let ds = load_csv(&io.input, &io.label)?;
            let dir = out_dir(io)?;
            let b = read_boruta(&ds, boruta.clone().unwrap_or_else(|| dir.join(BORUTA_FILE)))?;
            let relevant = b.confirmed();
            if relevant.is_empty() {
                return Err(Error::NoRelevantFeatures(Box::new(b)));
            }
            let parts = partition(&ds, pc)?;
            let work = prepare(&ds, pc, &parts)?;
            let ranking = rank_features(&work, pc, &parts, &relevant)?;
            write_ranking(&ds, &ranking, dir.join(RANKING_FILE))
        }
        Command::Sweep {
            io, boruta, ranking, ..
        } => {
            let pc = pipeline.expect("validated");
            let ds = load_csv(&io.input, &io.label)?;
            let dir = out_dir(io)?;
            let boruta_path = boruta.clone().unwrap_or_else(|| dir.join(BORUTA_FILE));
            let b = read_boruta(&ds, &boruta_path)?;
            let ranking = read_ranking(&ds, ranking.clone().unwrap_or_else(|| dir.join(RANKING_FILE)))?;
            let relevant = b.confirmed();
            let mut sorted = ranking.features.clone();
            sorted.sort_unstable();
            if sorted != relevant {
                return Err(Error::Artifact {
                    what: "ranking",
                    path: dir.join(RANKING_FILE),
                    message: "ranked features differ from the confirmed set".into(),
                });
            }
            let parts = partition(&ds, pc)?;
            let work = prepare(&ds, pc, &parts)?;
            let mut sel = select_top_k(&work, pc, &parts, relevant, ranking)?;
            let summary = boruta_path.with_file_name(BORUTA_SUMMARY_FILE);
            if summary.exists() {
                sel.timing.boruta_s = read_boruta_summary(&summary)?.time_s;
            }
            emit_report(&ds, pc, &b, &sel, dir)?;
            Ok(())
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                n_samples: args.n,
                n_informative: args.informative,
                n_noise: args.noise,
                n_classes: args.classes,
                class_separation: args.sep,
                seed: config.cli.seed,
            };
            let data = synthesize(&spec)?;
            if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_csv(&data.dataset, &args.out, &args.label)?;
            let truth = GroundTruth {
                spec,
                informative: data.informative,
            };
            let path = truth_path(&args.out);
            let text = serde_json::to_string_pretty(&truth)?;
            std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
        }
    }
}

/// Sidecar written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    /// Column indices of the informative features.
    pub informative: Vec<usize>,
}

pub fn truth_path(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().unwrap_or_default().to_string_lossy();
    dataset.with_file_name(format!("{stem}.truth.json"))
}
