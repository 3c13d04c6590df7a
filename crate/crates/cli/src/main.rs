mod config;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corpus_eta::clustering::{cluster_clips, ClusterAssignment, DEFAULT_K, DEFAULT_MAX_ITERS};
use corpus_eta::complexity::{analyze_yuv, ClipMetadata};
use corpus_eta::corpus::{
    load_corpus, load_corpus_with_tasks, read_features, write_features, Corpus, Framerate, TaskGrid,
};
use corpus_eta::harness::{
    default_test_groups, read_report_csv, render_summary, synth_corpus, uniform_grid, Evaluator, SweepConfig,
    SynthSpec,
};
use corpus_eta::predictors::{parse_systems, PredictionContext, System};
use corpus_eta::runner::{batch_encode, BatchOptions, CommandTemplate};
use corpus_eta::{Complexity, Model};

use config::{Config, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "corpus-eta", version, about = "Predict the remaining encode time of a video corpus")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML config file.
    #[arg(long, global = true, env = "CORPUS_ETA_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate features/tasks/times CSVs and write them back in normal form.
    Ingest(IngestArgs),
    /// Compute E, h and luma for a raw YUV420p clip.
    Analyze(AnalyzeArgs),
    /// Cluster clips with k-means and write `clip_id,cluster`.
    Cluster(ClusterArgs),
    /// Run encode commands for every task and record wall-clock seconds.
    Encode(EncodeArgs),
    /// Monte-Carlo evaluation of predictors over random processing orders.
    Simulate(SimulateArgs),
    /// Predict the remaining time of a partially processed corpus.
    Predict(PredictArgs),
    /// Render a sweep report CSV as summary tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Features CSV (`clip_id,width,height,framerate_num,framerate_den,num_frames,E,h,luma,source_group`).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Tasks CSV; when absent, tasks are expanded from the configured grid.
    #[arg(long)]
    tasks: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterOpts {
    /// Number of clusters [default: 10].
    #[arg(long)]
    k: Option<usize>,
    /// K-means seed [default: 0].
    #[arg(long)]
    cluster_seed: Option<u64>,
    /// K-means iteration cap [default: 300].
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Times CSV (`task_id,seconds`), complete or partial.
    #[arg(long)]
    times: Option<PathBuf>,
    /// Directory for normalised `features.csv`, `tasks.csv` and `times.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Raw planar YUV420p 8-bit file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    frames: usize,
    /// Clip id for the features row [default: input file stem].
    #[arg(long)]
    clip_id: Option<String>,
    /// Frame rate as `num/den` or an integer.
    #[arg(long, default_value = "30/1")]
    framerate: Framerate,
    /// Source group label for the features row.
    #[arg(long, default_value = "default")]
    source_group: String,
    /// Per-frame CSV `frame_index,E,h,luma`.
    #[arg(long)]
    frames_out: Option<PathBuf>,
    /// Features CSV to add the clip row to (created when missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Features CSV.
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    opts: ClusterOpts,
    /// Cluster CSV `clip_id,cluster`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Centroid CSV in standardised feature space.
    #[arg(long)]
    centroids_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Command template with `{input}`, `{output}`, `{preset}`, `{cqp}` and
    /// optionally `{encoder}`, `{threads}`, `{task_id}`, `{clip_id}`,
    /// `{width}`, `{height}`, `{fps}`, `{frames}`.
    #[arg(long)]
    template: String,
    /// Directory holding `<clip_id>.<input-ext>` sources.
    #[arg(long)]
    input_dir: PathBuf,
    /// Source file extension.
    #[arg(long, default_value = "yuv")]
    input_ext: String,
    /// Extension of the encoded output file.
    #[arg(long, default_value = "mkv")]
    output_ext: String,
    /// Scratch directory for outputs and per-task logs.
    #[arg(long, default_value = "scratch")]
    scratch_dir: PathBuf,
    /// Times CSV to append to.
    #[arg(long, default_value = "times.csv")]
    out: PathBuf,
    /// Simultaneous encodes. Values above 1 distort timings through contention.
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Stop at the first failed task.
    #[arg(long)]
    fail_fast: bool,
    /// Skip tasks already present in the output CSV.
    #[arg(long)]
    resume: bool,
    /// Keep encoded outputs instead of deleting them.
    #[arg(long)]
    keep_output: bool,
    /// Resolve `{threads}` to 0 (encoder default) instead of 1.
    #[arg(long)]
    multi_thread: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Use a generated corpus instead of `--features`/`--times`.
    #[arg(long)]
    synthetic: bool,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Ground-truth times CSV for a real corpus.
    #[arg(long)]
    times: Option<PathBuf>,
    /// Comma-separated systems [default: BP,CP,XP,CXP].
    #[arg(long)]
    systems: Option<String>,
    /// Realisations per system [default: 100].
    #[arg(long)]
    realisations: Option<usize>,
    /// Base seed for processing orders [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Completion-ratio grid step [default: 0.02].
    #[arg(long)]
    c_step: Option<f64>,
    /// Explicit comma-separated completion ratios (overrides `--c-step`).
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    /// Averaged report `system,c,mape,r2,sape`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-realisation long-form CSV.
    #[arg(long)]
    long_out: Option<PathBuf>,
    /// Format of `--out`.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Clips in the generated corpus [default: 600].
    #[arg(long)]
    synthetic_clips: Option<usize>,
    /// Log-normal noise of generated times [default: 0.3].
    #[arg(long)]
    sigma: Option<f64>,
    /// Seed of the generated corpus [default: 0].
    #[arg(long)]
    synthetic_seed: Option<u64>,
    /// Comma-separated source groups held out for GXP [default: g3,g5].
    #[arg(long, value_delimiter = ',')]
    test_groups: Option<Vec<String>>,
    #[command(flatten)]
    opts: ClusterOpts,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Times of the tasks completed so far.
    #[arg(long)]
    times: Option<PathBuf>,
    /// Predictor to use.
    #[arg(long, conflicts_with = "cascade", required_unless_present = "cascade")]
    system: Option<System>,
    /// Choose the predictor from the completion ratio (configurable policy).
    #[arg(long)]
    cascade: bool,
    /// Pre-trained model JSON, required by GXP.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write the model used (trained or loaded) as JSON.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Per-task predictions `task_id,predicted_seconds`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: ClusterOpts,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Averaged report CSV written by `simulate --out`.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated completion ratios to show [default: all].
    #[arg(long, value_delimiter = ',')]
    at: Option<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] corpus_eta::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

macro_rules! core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

core_error!(
    corpus_eta::corpus::CorpusError,
    corpus_eta::complexity::ComplexityError,
    corpus_eta::clustering::ClusterError,
    corpus_eta::gbrt::GbrtError,
    corpus_eta::predictors::PredictError,
    corpus_eta::harness::HarnessError,
    corpus_eta::runner::RunError
);

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Config(ConfigError::Read { .. }) => 2,
            CliError::Config(_) | CliError::Invalid(_) => 1,
            _ => 2,
        }
    }

    fn io(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Invalid("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&config, a),
        Command::Analyze(a) => analyze(a),
        Command::Cluster(a) => cluster(&config, a),
        Command::Encode(a) => encode(&config, a),
        Command::Simulate(a) => simulate(&config, a),
        Command::Predict(a) => predict(&config, a),
        Command::Report(a) => report(a),
    }
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Invalid(format!("missing --{what} (or paths.{what} in the config)")))
}

fn load(config: &Config, args: CorpusArgs, times: Option<PathBuf>) -> CliResult<Corpus> {
    let features = pick(args.features, &config.paths.features, "features")?;
    let tasks = args.tasks.or_else(|| config.paths.tasks.clone());
    let times = times.or_else(|| config.paths.times.clone());
    Ok(match tasks {
        Some(t) => load_corpus_with_tasks(&features, &t, times.as_deref())?,
        None => load_corpus(&features, times.as_deref(), &config.grid())?,
    })
}

fn clustering(config: &Config, opts: &ClusterOpts, corpus: &Corpus) -> CliResult<ClusterAssignment> {
    let k = opts.k.or(config.clustering.k).unwrap_or(DEFAULT_K);
    let seed = opts.cluster_seed.or(config.clustering.seed).unwrap_or(0);
    let max_iters = opts
        .max_iters
        .or(config.clustering.max_iters)
        .unwrap_or(DEFAULT_MAX_ITERS);
    Ok(cluster_clips(corpus.clips(), k, seed, max_iters)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult {
    w.flush().map_err(CliError::io(path))
}

fn csv_out(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> CliResult {
    let mut w = create(path)?;
    write(&mut w).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    finish(w, path)
}

fn ingest(config: &Config, args: IngestArgs) -> CliResult {
    let corpus = load(config, args.corpus, args.times)?;
    let timed = corpus.times().map_or(0, |t| t.len());
    println!(
        "clips: {}\ntasks: {}\ntimed tasks: {timed}",
        corpus.clips().len(),
        corpus.len()
    );
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        corpus.save_features(&dir.join("features.csv"))?;
        corpus.save_tasks(&dir.join("tasks.csv"))?;
        if corpus.times().is_some() {
            corpus.save_times(&dir.join("times.csv"))?;
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> CliResult {
    let summary: Complexity = analyze_yuv(&args.input, args.width, args.height, args.frames)?;
    let clip_id = match args.clip_id {
        Some(id) => id,
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::Invalid("cannot derive a clip id; pass --clip-id".into()))?,
    };
    let dim = |v: usize, what: &str| u32::try_from(v).map_err(|_| CliError::Invalid(format!("{what} {v} is too large")));
    let meta = ClipMetadata {
        clip_id,
        width: dim(args.width, "width")?,
        height: dim(args.height, "height")?,
        framerate: args.framerate,
        source_group: args.source_group,
    };
    let clip = summary.to_clip(&meta);
    println!(
        "{}: E={} h={} luma={} frames={}",
        clip.clip_id, clip.spatial_energy, clip.temporal_energy, clip.luma, clip.num_frames
    );
    if let Some(path) = &args.frames_out {
        csv_out(path, |w| summary.write_frames_csv(w))?;
    }
    if let Some(path) = &args.out {
        let mut clips = if path.exists() { read_features(path)? } else { Vec::new() };
        if clips.iter().any(|c| c.clip_id == clip.clip_id) {
            return Err(CliError::Invalid(format!(
                "clip `{}` already present in {}",
                clip.clip_id,
                path.display()
            )));
        }
        clips.push(clip);
        let mut w = create(path)?;
        write_features(&mut w, &clips)?;
        finish(w, path)?;
    }
    Ok(())
}

fn cluster(config: &Config, args: ClusterArgs) -> CliResult {
    let features = pick(args.features, &config.paths.features, "features")?;
    let clips = read_features(&features)?;
    let corpus = Corpus::from_grid(clips, &TaskGrid::default(), None)?;
    let assignment = clustering(config, &args.opts, &corpus)?;
    println!("clusters: {}", assignment.k);
    for (j, size) in assignment.sizes.iter().enumerate() {
        println!("  {j:>3}: {size} clips");
    }
    if let Some(path) = &args.out {
        csv_out(path, |w| assignment.write_csv(w))?;
    }
    if let Some(path) = &args.centroids_out {
        csv_out(path, |w| assignment.write_centroids_csv(w))?;
    }
    Ok(())
}

fn encode(config: &Config, args: EncodeArgs) -> CliResult {
    let corpus = load(config, args.corpus, None)?;
    let encoder = corpus
        .tasks()
        .first()
        .map(|t| t.encoder.clone())
        .unwrap_or_default();
    let template = CommandTemplate {
        template: args.template,
        encoder,
        single_thread: !args.multi_thread,
        output_extension: args.output_ext,
    };
    if args.concurrency == 0 {
        return Err(CliError::Invalid("--concurrency must be at least 1".into()));
    }
    let opts = BatchOptions {
        input_dir: args.input_dir,
        input_extension: args.input_ext,
        scratch_dir: args.scratch_dir,
        out: args.out,
        concurrency: args.concurrency,
        fail_fast: args.fail_fast,
        resume: args.resume,
        keep_output: args.keep_output,
    };
    let summary = batch_encode(&corpus, &template, &opts)?;
    println!(
        "recorded: {}\nskipped: {}\nfailed: {}",
        summary.recorded,
        summary.skipped,
        summary.failures.len()
    );
    if summary.failures.is_empty() {
        return Ok(());
    }
    for f in &summary.failures {
        eprintln!("  {}: {}", f.task_id, f.message);
    }
    Err(CliError::Runtime(format!(
        "{} task(s) failed; see {}",
        summary.failures.len(),
        opts.failure_manifest().display()
    )))
}

fn simulate(config: &Config, args: SimulateArgs) -> CliResult {
    let corpus = if args.synthetic {
        let mut spec = SynthSpec {
            grid: config.grid(),
            ..SynthSpec::default()
        };
        if let Some(n) = args.synthetic_clips.or(config.synthetic.clips) {
            spec.num_clips = n;
        }
        if let Some(s) = args.sigma.or(config.synthetic.sigma) {
            spec.sigma = s;
        }
        let seed = args.synthetic_seed.or(config.synthetic.seed).unwrap_or(0);
        synth_corpus(&spec, seed)?
    } else {
        let times = args.times.or_else(|| config.paths.times.clone());
        if times.is_none() {
            return Err(CliError::Invalid("a real corpus needs --times (or use --synthetic)".into()));
        }
        load(config, args.corpus, times)?
    };
    let systems = match (args.systems, &config.sweep.systems) {
        (Some(s), _) => parse_systems(&s)?,
        (None, Some(s)) => s.clone(),
        (None, None) => SweepConfig::default().systems,
    };
    let c_grid = match args.c_grid {
        Some(g) => g,
        None => uniform_grid(args.c_step.or(config.sweep.c_step).unwrap_or(0.02)),
    };
    let test_groups = args
        .test_groups
        .or_else(|| config.gxp.test_groups.clone())
        .unwrap_or_else(default_test_groups);
    let sweep = SweepConfig {
        num_realisations: args.realisations.or(config.sweep.realisations).unwrap_or(100),
        c_grid,
        systems,
        base_seed: args.seed.or(config.sweep.seed).unwrap_or(0),
        gxp_test_groups: test_groups.into_iter().collect::<BTreeSet<_>>(),
    };
    sweep.validate()?;
    let assignment = clustering(config, &args.opts, &corpus)?;
    let evaluator = Evaluator::new(&corpus, &assignment, config.hyperparams(), sweep.gxp_test_groups.clone())?;
    let report = evaluator.monte_carlo(&sweep)?;

    let at: Vec<f64> = [0.02, 0.06, 0.10, 0.20, 0.40]
        .into_iter()
        .filter(|c| sweep.c_grid.iter().any(|g| (g - c).abs() < 1e-9))
        .collect();
    print!("{}", render_summary(&report.rows, &at));
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        match args.format {
            Format::Csv => report.write_csv(&mut w)?,
            Format::Json => {
                let doc = report.to_json(false)?;
                writeln!(w, "{doc}").map_err(CliError::io(path))?;
            }
        }
        finish(w, path)?;
    }
    if let Some(path) = &args.long_out {
        let mut w = create(path)?;
        report.write_long_csv(&mut w)?;
        finish(w, path)?;
    }
    Ok(())
}

fn predict(config: &Config, args: PredictArgs) -> CliResult {
    let corpus = load(config, args.corpus, args.times)?;
    let n = corpus.len();
    let (completed, remaining): (Vec<usize>, Vec<usize>) = (0..n).partition(|&p| corpus.seconds_at(p).is_some());
    let seconds: Vec<f64> = completed
        .iter()
        .map(|&p| corpus.seconds_at(p).expect("partitioned on presence"))
        .collect();
    let c = completed.len() as f64 / n as f64;
    let system = match args.system {
        Some(s) => s,
        None => config.cascade()?.select(c)?,
    };
    let assignment = if system == System::Cp {
        clustering(config, &args.opts, &corpus)?
    } else {
        ClusterAssignment::single(corpus.clips())
    };
    let ctx = PredictionContext::new(&corpus, &assignment, config.hyperparams())?;

    let loaded = match &args.model {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            Some(Model::from_json(&text)?)
        }
        None => None,
    };
    let prediction = ctx.predict(system, &completed, &seconds, &remaining, loaded.as_ref())?;

    println!("system: {system}");
    println!("completed: {} of {n} (c = {c:.4})", completed.len());
    println!("remaining tasks: {}", remaining.len());
    println!("predicted remaining seconds: {:.3}", prediction.total);

    if let Some(path) = &args.save_model {
        let model = match (system, loaded) {
            (System::Xp | System::Cxp, _) => ctx.train_online(&completed, &seconds)?,
            (System::Gxp, Some(m)) => m,
            _ => return Err(CliError::Invalid(format!("{system} does not use a model; nothing to save"))),
        };
        let mut w = create(path)?;
        writeln!(w, "{}", model.to_json()?).map_err(CliError::io(path))?;
        finish(w, path)?;
    }
    if let Some(path) = &args.out {
        csv_out(path, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["task_id", "predicted_seconds"])?;
            for (id, t) in prediction.per_task(&corpus) {
                wtr.write_record([id, &t.to_string()])?;
            }
            wtr.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn report(args: ReportArgs) -> CliResult {
    let file = File::open(&args.input).map_err(CliError::io(&args.input))?;
    let rows = read_report_csv(file)?;
    print!("{}", render_summary(&rows, args.at.as_deref().unwrap_or(&[])));
    Ok(())
}
