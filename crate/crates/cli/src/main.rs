//! `emubench`: data generation, experiments, scoring and format checks.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use emubench_core::biasvar::{self, BvConfig};
use emubench_core::dataset::{load_ged, payload_checksums, read_manifest, Collection, COLLECTION_FILE};
use emubench_core::emulators::Technique;
use emubench_core::experiments::{self, ExperimentTable, IvDataset, IvSweepConfig, Metric, Profile};
use emubench_core::metrics::{LatWeights, Scoreboard, Scores};
use emubench_core::seed::DEFAULT_BASE_SEED;
use emubench_core::synthgrid::{self, SynthGridConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "emubench", version, about = "Benchmark climate emulators under internal variability")]
struct Cli {
    /// Size of the worker pool; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Base seed for every random stream.
    #[arg(long, global = true, env = "EMUBENCH_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic gridded ensemble as a GED collection.
    GenData(GenDataArgs),
    /// Internal-variability sweep of one technique over training-ensemble sizes.
    RunIv(RunIvArgs),
    /// Bias-variance and Fourier diagnostics on the stochastic box model.
    RunBiasvar(RunBiasvarArgs),
    /// Score a predicted dataset against a target dataset.
    Score(ScoreArgs),
    /// Check a GED dataset or collection and print its manifest and checksums.
    Validate(ValidateArgs),
    /// Compare two sweep tables and fit the trend of their difference.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON generator config; defaults to the built-in configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    n_lat: Option<usize>,
    #[arg(long)]
    n_lon: Option<usize>,
}

#[derive(Debug, Args)]
struct RunIvArgs {
    /// Collection root written by `gen-data` or an importer.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    technique: Technique,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "pr")]
    variable: String,
    /// JSON sweep config; replaces the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated subset sizes, overriding the profile grid.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Subset draws per size (K).
    #[arg(long)]
    draws: Option<usize>,
    /// Initialization seeds per draw (L).
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Debug, Args)]
struct RunBiasvarArgs {
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Output directory for biasvar.csv, spectra.csv and bands.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Subset draws per size (K).
    #[arg(long)]
    draws: Option<usize>,
    /// Taper the residuals with a Hann window before the transform.
    #[arg(long)]
    hann: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// GED dataset holding the prediction; members are averaged.
    #[arg(long)]
    pred: PathBuf,
    /// GED dataset holding the target; members are averaged.
    #[arg(long)]
    target: PathBuf,
    /// Inclusive year range `FIRST:LAST`; defaults to all shared years.
    #[arg(long)]
    years: Option<String>,
    #[arg(long, default_value = "prediction")]
    technique: String,
    /// CSV destination; prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    path: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Sweep table of the first technique.
    #[arg(long)]
    a: PathBuf,
    /// Sweep table of the second technique.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value = "cnnlstm")]
    technique_a: Technique,
    #[arg(long, default_value = "lps")]
    technique_b: Technique,
    #[arg(long, default_value = "rmse_spatial")]
    metric: Metric,
    /// Range of `n` for the trend fit, `LO:HI`.
    #[arg(long, default_value = "0:20")]
    range: String,
    #[arg(long)]
    out: PathBuf,
}

/// Manifest written next to every output file.
#[derive(Debug, Serialize)]
struct OutputManifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    base_seed: u64,
    config_file: String,
    config_sha256: String,
    output_sha256: String,
}

/// Writes the resolved config and per-output manifests for one run.
struct Artifacts {
    subcommand: &'static str,
    base_seed: u64,
    config_path: PathBuf,
    config_hash: String,
}

impl Artifacts {
    fn new(subcommand: &'static str, dir: &Path, base_seed: u64, config: &impl Serialize) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = serde_json::to_string_pretty(config)?;
        let config_path = dir.join(format!("{subcommand}.config.json"));
        fs::write(&config_path, &text).with_context(|| format!("writing {}", config_path.display()))?;
        Ok(Self { subcommand, base_seed, config_path, config_hash: sha256_hex(text.as_bytes()) })
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let m = OutputManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            base_seed: self.base_seed,
            config_file: file_name(&self.config_path),
            config_sha256: self.config_hash.clone(),
            output_sha256: sha256_hex(bytes),
        };
        let mpath = PathBuf::from(format!("{}.manifest.json", path.display()));
        fs::write(&mpath, serde_json::to_string_pretty(&m)?).with_context(|| format!("writing {}", mpath.display()))?;
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(emubench_core::Error::from)?)
}

fn parse_pair<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<(T, T)> {
    let (a, b) = s.split_once(':').ok_or_else(|| usage(format!("{what} must look like A:B, got `{s}`")))?;
    let parse = |x: &str| x.trim().parse::<T>().map_err(|_| usage(format!("bad {what} bound `{x}`")));
    Ok((parse(a)?, parse(b)?))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(emubench_core::Error::Config(msg.into()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> emubench_core::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn gen_data(args: GenDataArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<SynthGridConfig>(p)?,
        None => SynthGridConfig::default(),
    };
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(m) = args.members {
        cfg.n_members = m;
    }
    if let Some(n) = args.n_lat {
        cfg.n_lat = n;
    }
    if let Some(n) = args.n_lon {
        cfg.n_lon = n;
    }
    cfg.validate()?;
    let grid = synthgrid::generate(&cfg)?;
    let col = grid.write(&args.out)?;
    let art = Artifacts::new("gen-data", &args.out, cfg.base_seed, &cfg)?;
    let index = fs::read(args.out.join(COLLECTION_FILE))?;
    art.write(&args.out.join(COLLECTION_FILE), &index)?;
    eprintln!("wrote {} datasets to {}", col.entries.len(), args.out.display());
    Ok(())
}

fn run_iv(args: RunIvArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<IvSweepConfig>(p)?,
        None => IvSweepConfig::profile(args.profile, args.variable.clone()),
    };
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(g) = args.n_grid {
        cfg.lps_n_grid = g.clone();
        cfg.nn_n_grid = g;
    }
    if let Some(k) = args.draws {
        cfg.k_draws = k;
    }
    if let Some(l) = args.seeds {
        cfg.l_seeds = l;
    }
    if !matches!(args.technique, Technique::Lps | Technique::CnnLstm) {
        bail!(usage(format!("run-iv supports lps and cnnlstm, not {}", args.technique)));
    }
    let col =
        Collection::open(&args.dataset).with_context(|| format!("opening collection {}", args.dataset.display()))?;
    let data = IvDataset::from_collection(&col, &cfg.variable)?;
    cfg.validate(args.technique, data.n_members())?;

    let art = Artifacts::new("run-iv", &parent_dir(&args.out), cfg.base_seed, &cfg)?;
    let table = experiments::run_iv_sweep(&cfg, &data, args.technique)?;
    art.write(&args.out, &csv_bytes(|b| table.write_csv(b))?)?;
    for m in &cfg.metrics {
        for (n, mean, std) in table.summary(args.technique, *m) {
            eprintln!("{} {m} n={n}: {mean:.5} ± {std:.5}", args.technique);
        }
    }
    Ok(())
}

fn run_biasvar(args: RunBiasvarArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg: BvConfig<f64> = match &args.config {
        Some(p) => read_json(p)?,
        None => match args.profile {
            Profile::Desk => BvConfig::desk(),
            Profile::Paper => BvConfig::paper(),
        },
    };
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(g) = args.n_grid {
        cfg.n_grid = g;
    }
    if let Some(k) = args.draws {
        cfg.k_draws = k;
    }
    if args.hann {
        cfg.hann = true;
    }
    cfg.validate()?;

    let art = Artifacts::new("run-biasvar", &args.out, cfg.base_seed, &cfg)?;
    let res = biasvar::run_biasvar(&cfg)?;
    art.write(&args.out.join("biasvar.csv"), &csv_bytes(|b| res.write_biasvar_csv(b))?)?;
    art.write(&args.out.join("spectra.csv"), &csv_bytes(|b| res.write_spectra_csv(b))?)?;
    let years = cfg.ebm.times();
    art.write(&args.out.join("bands.csv"), &csv_bytes(|b| res.write_bands_csv(&years, b))?)?;
    for e in &res.entries {
        let d = &e.decomposition;
        eprintln!("{} n={}: bias2 {:.4e} var {:.4e} mse {:.4e}", e.technique, e.n, d.bias2, d.var, d.mse);
    }
    Ok(())
}

fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let (pred, _) = load_ged(&args.pred).with_context(|| format!("loading {}", args.pred.display()))?;
    let (target, _) = load_ged(&args.target).with_context(|| format!("loading {}", args.target.display()))?;
    if pred.lats != target.lats || pred.lons != target.lons {
        return Err(emubench_core::Error::Shape("prediction and target grids differ".into()).into());
    }
    let (first, last) = match &args.years {
        Some(s) => parse_pair::<i32>(s, "year range")?,
        None => {
            let first = pred.years[0].max(target.years[0]);
            let last = pred.years[pred.years.len() - 1].min(target.years[target.years.len() - 1]);
            (first, last)
        }
    };
    let window = |ens: &emubench_core::dataset::GriddedEnsemble| -> anyhow::Result<ndarray::Array3<f64>> {
        let (a, b) = (ens.year_index(first), ens.year_index(last));
        match (a, b) {
            (Some(a), Some(b)) if a <= b => Ok(ens.full_mean().slice(ndarray::s![a..=b, .., ..]).to_owned()),
            _ => Err(emubench_core::Error::Index(format!("{} does not cover {first}..={last}", ens.scenario)).into()),
        }
    };
    let (p, t) = (window(&pred)?, window(&target)?);
    let scores = Scores::compute(p.view(), t.view(), &LatWeights::from_degrees(&target.lats))?;
    let mut board = Scoreboard::default();
    board.push_scores(&args.technique, &target.variable, &scores);
    let bytes = csv_bytes(|b| board.write_csv(b))?;
    match &args.out {
        Some(out) => {
            #[derive(Serialize)]
            struct ScoreConfig<'a> {
                pred: &'a Path,
                target: &'a Path,
                first_year: i32,
                last_year: i32,
                technique: &'a str,
            }
            let cfg = ScoreConfig {
                pred: &args.pred,
                target: &args.target,
                first_year: first,
                last_year: last,
                technique: &args.technique,
            };
            let art = Artifacts::new("score", &parent_dir(out), DEFAULT_BASE_SEED, &cfg)?;
            art.write(out, &bytes)?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn validate_ged(dir: &Path) -> anyhow::Result<bool> {
    let m = read_manifest(dir).with_context(|| format!("reading manifest in {}", dir.display()))?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    let mut ok = true;
    for (file, sum, matches) in payload_checksums(dir)? {
        println!("{sum}  {file}  {}", if matches { "ok" } else { "MISMATCH" });
        ok &= matches;
    }
    load_ged(dir).with_context(|| format!("loading {}", dir.display()))?;
    Ok(ok)
}

fn validate(args: ValidateArgs) -> anyhow::Result<()> {
    let ok = if args.path.join(COLLECTION_FILE).is_file() {
        let col = Collection::open(&args.path)?;
        let mut ok = true;
        for p in col.paths() {
            println!("# {}", p.display());
            ok &= validate_ged(&p)?;
        }
        ok
    } else {
        validate_ged(&args.path)?
    };
    if !ok {
        return Err(emubench_core::Error::Format("payload checksum mismatch".into()).into());
    }
    Ok(())
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    let read = |p: &Path| -> anyhow::Result<ExperimentTable> {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        Ok(ExperimentTable::read_csv(f)?)
    };
    let (a, b) = (read(&args.a)?, read(&args.b)?);
    let range = parse_pair::<f64>(&args.range, "range")?;
    let cmp = experiments::compare_techniques(&a, &b, args.technique_a, args.technique_b, args.metric, range)?;

    #[derive(Serialize)]
    struct ReportConfig<'a> {
        a: &'a Path,
        b: &'a Path,
        technique_a: Technique,
        technique_b: Technique,
        metric: Metric,
        range: (f64, f64),
    }
    let cfg = ReportConfig {
        a: &args.a,
        b: &args.b,
        technique_a: args.technique_a,
        technique_b: args.technique_b,
        metric: args.metric,
        range,
    };
    let art = Artifacts::new("report", &parent_dir(&args.out), DEFAULT_BASE_SEED, &cfg)?;
    art.write(&args.out, &csv_bytes(|b| cmp.write_csv(b))?)?;
    println!(
        "{} - {} on {}: slope {:.4e} per member, intercept {:.4e} over n in [{}, {}]",
        cmp.technique_a, cmp.technique_b, cmp.metric, cmp.trend.slope, cmp.trend.intercept, range.0, range.1
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use emubench_core::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::Config(_)) => EXIT_USAGE,
        Some(E::Diverged { .. } | E::SingularFit(_)) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| anyhow!("building worker pool: {e}"))?;
    }
    match cli.command {
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::RunIv(a) => run_iv(a, cli.seed),
        Command::RunBiasvar(a) => run_biasvar(a, cli.seed),
        Command::Score(a) => score(a),
        Command::Validate(a) => validate(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
