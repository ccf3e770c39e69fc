//! `fairtree`: train, verify and compare individually fair tree models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fairtree::data::{self, LabeledDataset, LoadOptions, SchemaSpec};
use fairtree::domain::{ColumnMap, SimilaritySpec};
use fairtree::fatt::{GaConfig, MutationMode};
use fairtree::metrics::{self, EvaluationReport};
use fairtree::train::{
    train_cart, train_hinted_cart, train_rf, tune_cart, tune_rf, CartParams, RfParams,
    SplitCriterion, TuneGrid,
};
use fairtree::tree::{Model, ModelFile};
use fairtree::verifier::{per_sample_verdicts, summarize, AnalysisConfig};

#[derive(Parser)]
#[command(name = "fairtree", version, about = "Fairness verification and training for tree models")]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores). Output is
    /// identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it in the interchange format
    Train(TrainArgs),
    /// Verify per-sample fairness of a model over a dataset
    Verify(VerifyArgs),
    /// Compute accuracy, balanced accuracy and fairness of trained models
    Evaluate(EvaluateArgs),
    /// Train and compare cart, rf, fatt and hinted-cart on one dataset
    Benchmark(BenchmarkArgs),
    /// Grid-search hyper-parameters for cart or rf
    Tune(TuneArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Cart,
    Rf,
    Fatt,
    HintedCart,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    Gini,
    Entropy,
}

impl From<CriterionArg> for SplitCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Gini => SplitCriterion::Gini,
            CriterionArg::Entropy => SplitCriterion::Entropy,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MutationArg {
    Grow,
    GrowPrune,
}

#[derive(Args)]
struct DataArgs {
    /// Training data CSV with a header row
    #[arg(long)]
    dataset: PathBuf,
    /// Column schema JSON
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    #[command(flatten)]
    data: DataArgs,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Similarity spec JSON (required by fatt)
    #[arg(long)]
    similarity: Option<PathBuf>,
    /// Pick cart/rf hyper-parameters on a validation split first
    #[arg(long, default_value_t = false)]
    tune: bool,
    #[arg(long, value_enum, default_value_t = CriterionArg::Gini)]
    criterion: CriterionArg,
    #[arg(long, default_value_t = 25)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Forest size (rf only)
    #[arg(long, default_value_t = 25)]
    trees: usize,
    /// Accuracy weight (fatt)
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Fairness weight (fatt)
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 32)]
    population: usize,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long, value_enum, default_value_t = MutationArg::GrowPrune)]
    mutation: MutationArg,
    /// Evaluate fitness fairness on a fixed subsample of this size (fatt)
    #[arg(long)]
    fairness_sample: Option<usize>,
    /// Trained fatt tree whose shape hints the cart (hinted-cart only)
    #[arg(long)]
    hint_model: Option<PathBuf>,
    /// Per-generation training log CSV (fatt)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    similarity: PathBuf,
    /// Per-sample verdict CSV
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Aggregate summary JSON
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Verification budget per sample in milliseconds (must be > 0)
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model files; one report row per model
    #[arg(long, required = true, num_args = 1..)]
    models: Vec<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Similarity spec JSONs; one fairness column per spec
    #[arg(long, num_args = 1..)]
    similarity: Vec<PathBuf>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Report JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    similarity: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Held-out fraction used for the comparison metrics
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Comma-separated subset of cart,rf,fatt,hinted-cart
    #[arg(long, value_delimiter = ',', value_enum)]
    models: Option<Vec<Algo>>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 16)]
    population: usize,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long)]
    fairness_sample: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Directory for the trained model files
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<fairtree::Error> for CliError {
    fn from(e: fairtree::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version exits are successes
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if cli.jobs > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Tune(args) => cmd_tune(args),
    }
}

fn load_dataset(data: &DataArgs) -> CliResult<LabeledDataset> {
    let spec = SchemaSpec::load(&data.schema)?;
    Ok(data::load_csv(&data.dataset, &spec, LoadOptions::default())?)
}

fn analysis_config(timeout_ms: Option<u64>) -> CliResult<AnalysisConfig> {
    match timeout_ms {
        Some(0) => Err(CliError::Usage("--timeout-ms must be > 0".into())),
        Some(ms) => Ok(AnalysisConfig::with_timeout(std::time::Duration::from_millis(ms))),
        None => Ok(AnalysisConfig::default()),
    }
}

fn load_similarity(path: &Path, ds: &LabeledDataset) -> CliResult<SimilaritySpec> {
    let spec = SimilaritySpec::load(path)?;
    spec.validate(&ds.schema)?;
    Ok(spec)
}

fn save_model(model: Model, ds: &LabeledDataset, out: &Path) -> CliResult<()> {
    ModelFile::new(model, &ds.schema).save(out)?;
    Ok(())
}

fn load_model(path: &Path, ds: &LabeledDataset) -> CliResult<Model> {
    let file = ModelFile::load(path)?;
    file.check_schema(&ds.schema)?;
    Ok(file.model)
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let train = load_dataset(&args.data)?;
    let model = match args.algo {
        Algo::Cart => {
            let params = if args.tune {
                tune_cart(&train, &TuneGrid::standard(), args.seed)?
            } else {
                CartParams {
                    criterion: args.criterion.into(),
                    max_depth: args.max_depth,
                    min_samples_leaf: args.min_leaf,
                }
            };
            Model::Tree(train_cart(&train, &params)?)
        }
        Algo::Rf => {
            let params = if args.tune {
                tune_rf(&train, &TuneGrid::standard(), args.seed)?
            } else {
                RfParams {
                    n_trees: args.trees,
                    cart: CartParams {
                        criterion: args.criterion.into(),
                        max_depth: args.max_depth,
                        min_samples_leaf: args.min_leaf,
                    },
                    seed: args.seed,
                    ..RfParams::default()
                }
            };
            Model::Forest(train_rf(&train, &params)?)
        }
        Algo::Fatt => {
            let Some(similarity) = &args.similarity else {
                return Err(CliError::Usage("--algo fatt requires --similarity".into()));
            };
            let spec = load_similarity(similarity, &train)?;
            let cfg = GaConfig {
                population_size: args.population,
                iterations: args.iterations,
                accuracy_weight: args.alpha,
                fairness_weight: args.beta,
                mutation_mode: match args.mutation {
                    MutationArg::Grow => MutationMode::GrowOnly,
                    MutationArg::GrowPrune => MutationMode::GrowAndPrune,
                },
                fairness_sample_size: args.fairness_sample,
                seed: args.seed,
                ..GaConfig::default()
            };
            let (best, log) = fairtree::fatt::train_fatt(&train, &spec, &cfg)?;
            if let Some(path) = &args.log {
                std::fs::write(path, log.to_csv())?;
            }
            Model::Tree(best.tree)
        }
        Algo::HintedCart => {
            let Some(hint_path) = &args.hint_model else {
                return Err(CliError::Usage("--algo hinted-cart requires --hint-model".into()));
            };
            let hint = match load_model(hint_path, &train)? {
                Model::Tree(t) => t,
                Model::Forest(_) => {
                    return Err(CliError::Data("--hint-model must hold a single tree".into()))
                }
            };
            Model::Tree(train_hinted_cart(&train, &hint, args.criterion.into())?)
        }
    };
    let accuracy = metrics::accuracy(&model, &train)?;
    save_model(model.clone(), &train, &args.out)?;
    println!(
        "trained {} model: {} leaves, train accuracy {:.4}",
        match args.algo {
            Algo::Cart => "cart",
            Algo::Rf => "rf",
            Algo::Fatt => "fatt",
            Algo::HintedCart => "hinted-cart",
        },
        model.leaf_count(),
        accuracy
    );
    Ok(())
}

/// Aggregate verification summary, free of wall-clock noise so reruns are
/// byte-identical.
#[derive(Serialize)]
struct VerifySummary {
    similarity: String,
    fairness: f64,
    stable: usize,
    unstable: usize,
    unknown: usize,
    samples: usize,
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let ds = load_dataset(&args.data)?;
    let model = load_model(&args.model, &ds)?;
    let spec = load_similarity(&args.similarity, &ds)?;
    let cfg = analysis_config(args.timeout_ms)?;
    let map = ColumnMap::new(&ds.schema);
    let verdicts = per_sample_verdicts(&model, &ds, &spec, &cfg, &map)?;

    let mut csv = String::from("sample,status,labels\n");
    for (i, v) in verdicts.iter().enumerate() {
        let labels: Vec<String> =
            v.labels.labels().iter().map(|&l| ds.schema.label_values[l].clone()).collect();
        csv.push_str(&format!("{},{},{}\n", i, v.status, labels.join(";")));
    }
    if let Some(path) = &args.out_csv {
        std::fs::write(path, &csv)?;
    }

    let s = summarize(&verdicts);
    let summary = VerifySummary {
        similarity: spec_kind(&spec).to_string(),
        fairness: s.fairness,
        stable: s.stable,
        unstable: s.unstable,
        unknown: s.unknown,
        samples: verdicts.len(),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    if let Some(path) = &args.out_json {
        std::fs::write(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn spec_kind(spec: &SimilaritySpec) -> &'static str {
    match spec {
        SimilaritySpec::Noise { .. } => "noise",
        SimilaritySpec::Cat { .. } => "cat",
        SimilaritySpec::NoiseCat { .. } => "noise-cat",
        SimilaritySpec::ConditionalAttribute { .. } => "conditional-attribute",
    }
}

/// Zeroes the wall-clock fields so written reports are reproducible.
fn scrub_timing(report: &mut EvaluationReport) {
    for nf in &mut report.fairness {
        nf.summary.mean_time_ms = 0.0;
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let ds = load_dataset(&args.data)?;
    let cfg = analysis_config(args.timeout_ms)?;
    let specs: Vec<SimilaritySpec> = args
        .similarity
        .iter()
        .map(|p| load_similarity(p, &ds))
        .collect::<CliResult<_>>()?;
    let mut reports = Vec::new();
    for path in &args.models {
        let model = load_model(path, &ds)?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        let mut report = metrics::evaluate(&id, &model, &ds, &specs, &cfg)?;
        scrub_timing(&mut report);
        reports.push(report);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&reports)?)?;
    }
    print!("{}", metrics::render_table(&reports));
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let ds = load_dataset(&args.data)?;
    let (train, test) = data::split(&ds, args.test_fraction, args.seed)?;
    let spec = load_similarity(&args.similarity, &ds)?;
    let cfg = analysis_config(args.timeout_ms)?;
    let selected = args
        .models
        .unwrap_or_else(|| vec![Algo::Cart, Algo::Rf, Algo::Fatt, Algo::HintedCart]);
    if selected.contains(&Algo::HintedCart) && !selected.contains(&Algo::Fatt) {
        return Err(CliError::Usage("hinted-cart requires fatt in --models".into()));
    }

    let grid = TuneGrid::standard();
    let mut reports = Vec::new();
    let mut fatt_tree = None;
    let save = |name: &str, model: &Model| -> CliResult<()> {
        if let Some(dir) = &args.out_dir {
            std::fs::create_dir_all(dir)?;
            save_model(model.clone(), &train, &dir.join(format!("{name}.json")))?;
        }
        Ok(())
    };
    for algo in &selected {
        let (id, model) = match algo {
            Algo::Cart => {
                let params = tune_cart(&train, &grid, args.seed)?;
                ("cart", Model::Tree(train_cart(&train, &params)?))
            }
            Algo::Rf => {
                let params = tune_rf(&train, &grid, args.seed)?;
                ("rf", Model::Forest(train_rf(&train, &params)?))
            }
            Algo::Fatt => {
                let ga = GaConfig {
                    population_size: args.population,
                    iterations: args.iterations,
                    accuracy_weight: args.alpha,
                    fairness_weight: args.beta,
                    fairness_sample_size: args.fairness_sample,
                    seed: args.seed,
                    ..GaConfig::default()
                };
                let (best, _) = fairtree::fatt::train_fatt(&train, &spec, &ga)?;
                fatt_tree = Some(best.tree.clone());
                ("fatt", Model::Tree(best.tree))
            }
            Algo::HintedCart => {
                let hint = fatt_tree.as_ref().expect("fatt runs before hinted-cart");
                ("hinted-cart", Model::Tree(train_hinted_cart(&train, hint, SplitCriterion::Gini)?))
            }
        };
        save(id, &model)?;
        let mut report =
            metrics::evaluate(id, &model, &test, std::slice::from_ref(&spec), &cfg)?;
        scrub_timing(&mut report);
        reports.push(report);
    }
    print!("{}", metrics::render_table(&reports));
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> CliResult<()> {
    let train = load_dataset(&args.data)?;
    let grid = TuneGrid::standard();
    let json = match args.algo {
        Algo::Cart => serde_json::to_string_pretty(&tune_cart(&train, &grid, args.seed)?)?,
        Algo::Rf => serde_json::to_string_pretty(&tune_rf(&train, &grid, args.seed)?)?,
        _ => return Err(CliError::Usage("--algo must be cart or rf for tune".into())),
    };
    println!("{json}");
    Ok(())
}
