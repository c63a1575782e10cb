//! Command-line interface. The `survmoe` binary is a thin wrapper over
//! [`run`], which tests can also call in-process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::container::write_atomic;
use crate::data::{load_csv, BinningScheme, DatasetSource, PrepSettings, PreparedSplits, Schema};
use crate::error::{Error, Result};
use crate::model::DualMoeConfig;
use crate::report::{aligned_table, csv_bytes, fmt_f64, fmt_opt, svg, RoutingExport};
use crate::trainer::{self, Checkpoint, GridKind, TrainConfig, Variant};

const SOURCE_FILE: &str = "source.bin";

#[derive(Parser, Debug)]
#[command(name = "survmoe", version, about = "Dual mixture-of-experts survival models")]
pub struct Cli {
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ingest a CSV and write the processed dataset cache.
    Prepare(PrepareArgs),
    /// Train a model over one or more seeds.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Run a predefined comparison grid.
    Ablate(AblateArgs),
    /// Export routing probabilities and charts from a checkpoint.
    ExportRouting(ExportArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Source CSV, one row per patient.
    #[arg(long)]
    pub input: PathBuf,
    /// Schema TOML naming the duration, event, id and subgroup columns.
    #[arg(long)]
    pub schema: PathBuf,
    /// Number of cut points; bins are `0..=bins`.
    #[arg(long, default_value_t = 19)]
    pub bins: usize,
    /// Cut placement: quantile or uniform.
    #[arg(long, default_value = "quantile")]
    pub scheme: BinningScheme,
    /// Seeds whose splits are cached.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    pub seeds: Vec<u64>,
    /// Dataset directory to create or overwrite.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model config TOML.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub model_config: Option<PathBuf>,
    /// Built-in model config (metabric, gbsg).
    #[arg(long)]
    pub preset: Option<String>,
    /// Train config TOML; built-in defaults otherwise.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Overrides the seeds of the train config.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Name of the run directory under `runs/`.
    #[arg(long, default_value = "model")]
    pub name: String,
    /// Output directory for runs and summaries.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoint written by `train` or `ablate`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Metrics CSV path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GridName {
    MoeComponents,
    RouterInput,
    Headline,
}

impl From<GridName> for GridKind {
    fn from(g: GridName) -> Self {
        match g {
            GridName::MoeComponents => GridKind::MoeComponents,
            GridName::RouterInput => GridKind::RouterInput,
            GridName::Headline => GridKind::Headline,
        }
    }
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Dataset directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub grid: GridName,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for runs and summaries.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Checkpoint written by `train` or `ablate`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Subgroup columns to average over; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub subgroups: Option<Vec<String>>,
    /// Patients whose hazard routing is charted; the first four when absent.
    #[arg(long, value_delimiter = ',')]
    pub patients: Option<Vec<String>>,
    /// Directory for the CSV and SVG files.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn execute(cli: Cli) -> Result<String> {
    if cli.jobs == 0 {
        return Err(Error::usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::ExportRouting(a) => cmd_export_routing(&a),
    })
}

fn splits_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join("splits").join(format!("seed_{seed}.bin"))
}

fn read_source(dir: &Path) -> Result<DatasetSource> {
    DatasetSource::read(&dir.join(SOURCE_FILE))
}

/// Cached splits when present, otherwise prepared from the source table.
pub fn load_splits(dir: &Path, seed: u64) -> Result<PreparedSplits> {
    let cached = splits_path(dir, seed);
    if cached.exists() {
        PreparedSplits::read(&cached)
    } else {
        read_source(dir)?.prepare(seed)
    }
}

fn cmd_prepare(a: &PrepareArgs) -> Result<String> {
    let schema = Schema::load(&a.schema)?;
    let raw = load_csv(&a.input, &schema)?;
    let source = DatasetSource {
        settings: PrepSettings {
            t_max: a.bins,
            scheme: a.scheme,
            ..PrepSettings::default()
        },
        raw,
    };
    source.write(&a.out.join(SOURCE_FILE))?;
    let mut first = None;
    for &seed in &a.seeds {
        let s = source.prepare(seed)?;
        s.write(&splits_path(&a.out, seed))?;
        first.get_or_insert(s);
    }
    let raw = &source.raw;
    let events = raw.events.iter().filter(|&&e| e).count();
    let mut text = String::new();
    let _ = writeln!(text, "rows: {}", raw.len());
    let _ = writeln!(text, "events: {events}");
    let _ = writeln!(text, "censored: {:.1}%", 100.0 * raw.censoring_rate());
    let _ = writeln!(
        text,
        "features: {} ({})",
        raw.num_features(),
        raw.feature_names.join(", ")
    );
    let _ = writeln!(text, "subgroups: {}", raw.subgroup_names.join(", "));
    let _ = writeln!(text, "time bins: {} ({} scheme)", a.bins + 1, a.scheme);
    if let Some(s) = first {
        let cuts: Vec<String> = s.preprocessor.grid.cuts().iter().map(|c| format!("{c:.3}")).collect();
        let _ = writeln!(
            text,
            "seed {} split: train {}, val {}, test {}",
            s.seed,
            s.train.len(),
            s.val.len(),
            s.test.len()
        );
        let _ = writeln!(text, "seed {} bin edges: {}", s.seed, cuts.join(", "));
    }
    write_atomic(&a.out.join("summary.txt"), text.as_bytes())?;
    Ok(text)
}

fn model_and_train(m: &ModelArgs) -> Result<(DualMoeConfig, TrainConfig)> {
    let model = match (&m.model_config, &m.preset) {
        (Some(p), _) => DualMoeConfig::load(p)?,
        (None, Some(name)) => DualMoeConfig::preset(name, 0)?,
        (None, None) => return Err(Error::usage("either --model-config or --preset is required")),
    };
    let mut train = match &m.train_config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seeds) = &m.seeds {
        train.seeds = seeds.clone();
    }
    train.validate()?;
    Ok((model, train))
}

fn run_variants(data: &Path, variants: &[Variant], train: &TrainConfig, out: &Path) -> Result<String> {
    let source = read_source(data)?;
    let grid = trainer::run_grid(&source.raw, &source.settings, variants, train, Some(out))?;
    Ok(grid.summary_table())
}

fn cmd_train(a: &TrainArgs) -> Result<String> {
    let (model, train) = model_and_train(&a.model)?;
    run_variants(&a.data, &[Variant::moe(&a.name, model)], &train, &a.out)
}

fn cmd_ablate(a: &AblateArgs) -> Result<String> {
    let (model, train) = model_and_train(&a.model)?;
    run_variants(&a.data, &GridKind::from(a.grid).variants(&model), &train, &a.out)
}

fn checkpoint_and_split(checkpoint: &Path, data: &Path) -> Result<(Checkpoint, PreparedSplits)> {
    let ck = Checkpoint::read(checkpoint)?;
    let splits = load_splits(data, ck.seed)?;
    if splits.preprocessor != ck.preprocessor {
        return Err(Error::config(format!(
            "{} was trained on different data or preprocessing than {}",
            checkpoint.display(),
            data.display()
        )));
    }
    Ok((ck, splits))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<String> {
    let (ck, splits) = checkpoint_and_split(&a.checkpoint, &a.data)?;
    let records = splits.split_named(a.split.as_str()).expect("known split");
    let (report, _) = trainer::evaluate_model(&ck.model, records)?;
    let mut rows = vec![vec!["overall".to_string(), String::new(), fmt_f64(report.cindex.value)]];
    for ((p, bin), td) in report
        .horizons
        .percentiles
        .iter()
        .zip(&report.horizons.bins)
        .zip(&report.td)
    {
        rows.push(vec![
            format!("{:.0}%", p * 100.0),
            bin.to_string(),
            fmt_opt(td.as_ref().map(|c| c.value)),
        ]);
    }
    let header = ["horizon", "bin", "cindex"];
    let bytes = csv_bytes(&header, &rows);
    match &a.out {
        Some(p) => {
            write_atomic(p, &bytes)?;
            Ok(aligned_table(&header, &rows))
        }
        None => Ok(String::from_utf8(bytes).expect("csv is utf-8")),
    }
}

fn cmd_export_routing(a: &ExportArgs) -> Result<String> {
    let (ck, splits) = checkpoint_and_split(&a.checkpoint, &a.data)?;
    let records = splits.split_named(a.split.as_str()).expect("known split");
    let (_, traces) = ck.model.batch_forward(records)?;
    let export = RoutingExport::new(splits.preprocessor.subgroup_names.clone(), records, &traces)?;

    let columns: Vec<usize> = match &a.subgroups {
        Some(keys) => keys.iter().map(|k| export.subgroup_column(k)).collect::<Result<_>>()?,
        None => (0..export.subgroup_names.len()).collect(),
    };
    let patients: Vec<_> = match &a.patients {
        Some(ids) => ids.iter().map(|id| export.patient(id)).collect::<Result<_>>()?,
        None => export.patients.iter().take(4).collect(),
    };

    let means: Vec<_> = columns.iter().flat_map(|&c| export.subgroup_means(c)).collect();
    let experts_k: Vec<String> = (0..export.num_feature_experts())
        .map(|k| format!("expert {}", k + 1))
        .collect();
    let experts_l: Vec<String> = (0..export.num_hazard_experts())
        .map(|l| format!("expert {}", l + 1))
        .collect();
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("routing_feat.csv".into(), export.feature_csv()),
        ("subgroup_means.csv".into(), RoutingExport::subgroup_csv(&means)),
        ("routing_haz.csv".into(), export.hazard_csv(&patients)),
    ];
    if !means.is_empty() {
        let labels: Vec<String> = means.iter().map(|m| format!("{}={}", m.column, m.value)).collect();
        let values: Vec<Vec<f64>> = means.iter().map(|m| m.mean.clone()).collect();
        let chart = svg::grouped_bar_chart("Feature routing by subgroup", &labels, &experts_k, &values);
        files.push(("subgroup_routing.svg".into(), chart.into_bytes()));
    }
    for p in &patients {
        let rows: Vec<Vec<f64>> = (0..p.pi_haz.rows()).map(|t| p.pi_haz.row(t).to_vec()).collect();
        let chart = svg::stacked_area_chart(&format!("Hazard routing, patient {}", p.id), &experts_l, &rows);
        let safe: String =
            p.id.chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
        files.push((format!("hazard_routing_{safe}.svg"), chart.into_bytes()));
    }
    let mut text = String::new();
    for (name, bytes) in &files {
        write_atomic(&a.out.join(name), bytes)?;
        let _ = writeln!(text, "wrote {}", a.out.join(name).display());
    }
    Ok(text)
}
