use std::collections::HashMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gdspin::baselines::{basin_hopping, mc_multistart, BasinHoppingParams, LbfgsParams};
use gdspin::bench::{
    self, Algorithm, ExperimentSpec, NamedInstance, ReferencePolicy, DEFAULT_FEEDBACK_LATENCY,
};
use gdspin::gd::{run_gd, CouplingMode, GdParams, RunRecord};
use gdspin::instances::{
    gen_dense, gen_sparse3, load_metadata, parse_gset, parse_gset_file, parse_metadata,
    read_matrix_json, write_gset, write_matrix_json, EnsembleSpec,
};
use gdspin::model::{
    ising_from_maxcut, maxcut_value, CouplingMatrix, FieldSpec, SpinConfiguration, WeightedGraph,
    TAU,
};
use gdspin::GdError;

const TOY6_GSET: &str = include_str!("../data/toy6.gset");
const BUNDLED_METADATA: &str = include_str!("../data/bestknown.txt");

const EXIT_INPUT: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gdspin",
    version,
    about = "Gain-dissipative solvers and benchmarks for XY/Ising/Potts spin Hamiltonians"
)]
struct Cli {
    /// Cap the worker pool used for concurrent runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize one instance with a chosen solver.
    Solve(SolveArgs),
    /// Generate a random instance file.
    Gen(GenArgs),
    /// Run a benchmark experiment and write CSV/NDJSON artifacts.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Instance: a .json matrix file, a G-Set file, or gen:dense:N / gen:sparse3:N.
    #[arg(long)]
    input: String,
    /// Spin model: xy, ising, or potts:<q>.
    #[arg(long)]
    model: Option<String>,
    /// Solver: gd, gd-mod, mc, or bh.
    #[arg(long)]
    algo: Option<String>,
    /// Seed for the solver's random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent runs (seeds, starts, or restarts depending on the solver).
    #[arg(long)]
    runs: Option<usize>,
    /// Wall-clock budget per run, seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Internal basin-hopping iterations per restart.
    #[arg(long)]
    hops: Option<usize>,
    /// Write the best RunRecord as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value overlay applied where flags were not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Dense,
    Sparse3,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenFormat {
    Json,
    Gset,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dense entries are uniform in [-bound, bound].
    #[arg(long, default_value_t = 10.0)]
    bound: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GenFormat::Json)]
    format: GenFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Success,
    Maxcut,
    Scaling,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    /// Directory holding G-Set instance files (or set GDSPIN_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated instance names for the maxcut experiment.
    #[arg(long, default_value = "toy6")]
    files: String,
    /// Comma-separated algorithms for the success experiment.
    #[arg(long, default_value = "gd,mc,bh")]
    algos: String,
    /// Ensemble kind for the success experiment.
    #[arg(long, value_enum, default_value_t = GenKind::Dense)]
    kind: GenKind,
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Runs per instance (success/maxcut).
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long)]
    time_budget: Option<f64>,
    /// Comma-separated problem sizes for the scaling experiment.
    #[arg(long, default_value = "100,200,400,800")]
    sizes: String,
    /// Timing repeats per size.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Single algorithm for maxcut/scaling.
    #[arg(long, default_value = "gd")]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV/NDJSON artifacts.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Best-known-values metadata file (defaults to the bundled table).
    #[arg(long)]
    metadata: Option<PathBuf>,
}

struct CliFailure {
    code: u8,
    msg: String,
}

impl CliFailure {
    fn input(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            msg: msg.into(),
        }
    }
}

impl From<GdError> for CliFailure {
    fn from(e: GdError) -> Self {
        let code = match e {
            GdError::NonFinite { .. } => EXIT_ABORT,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

enum Instance {
    Matrix(CouplingMatrix),
    Graph(WeightedGraph),
}

fn load_instance(input: &str, seed: u64) -> Result<Instance, CliFailure> {
    if let Some(spec) = input.strip_prefix("gen:") {
        let mut parts = spec.split(':');
        let kind = parts.next().unwrap_or_default();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliFailure::input(format!("bad gen spec '{input}'")))?;
        let j = match kind {
            "dense" => gen_dense(&EnsembleSpec::dense(n, 10.0, seed))?,
            "sparse3" => gen_sparse3(&EnsembleSpec::sparse3(n, seed))?,
            other => return Err(CliFailure::input(format!("unknown gen kind '{other}'"))),
        };
        return Ok(Instance::Matrix(j));
    }
    let path = Path::new(input);
    if !path.exists() {
        return Err(CliFailure::input(format!("no such file: {input}")));
    }
    if path.extension().is_some_and(|e| e == "json") {
        let file = std::fs::File::open(path).map_err(GdError::Io)?;
        Ok(Instance::Matrix(read_matrix_json(BufReader::new(file))?))
    } else {
        Ok(Instance::Graph(parse_gset_file(path)?))
    }
}

fn validate_model(s: &str) -> Result<(), CliFailure> {
    match s {
        "xy" | "ising" => Ok(()),
        other => {
            if let Some(q) = other.strip_prefix("potts:") {
                let q: u32 = q
                    .parse()
                    .map_err(|_| CliFailure::input(format!("bad potts order '{q}'")))?;
                if q < 2 {
                    return Err(CliFailure::input("potts order must be >= 2"));
                }
                Ok(())
            } else {
                Err(CliFailure::input(format!(
                    "unknown model '{other}' (expected xy, ising, or potts:<q>)"
                )))
            }
        }
    }
}

fn overlay_config(args: &mut SolveArgs) -> Result<(), CliFailure> {
    let Some(path) = &args.config else {
        return Ok(());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFailure::input(format!("config {}: {e}", path.display())))?;
    for (idx, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            CliFailure::input(format!(
                "config line {}: expected key=value, got '{content}'",
                idx + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| CliFailure::input(format!("config line {}: bad {what}", idx + 1));
        match key {
            "model" => {
                if args.model.is_none() {
                    args.model = Some(value.to_string());
                }
            }
            "algo" => {
                if args.algo.is_none() {
                    args.algo = Some(value.to_string());
                }
            }
            "seed" => {
                if args.seed.is_none() {
                    args.seed = Some(value.parse().map_err(|_| bad("seed"))?);
                }
            }
            "runs" => {
                if args.runs.is_none() {
                    args.runs = Some(value.parse().map_err(|_| bad("runs"))?);
                }
            }
            "time_budget" => {
                if args.time_budget.is_none() {
                    args.time_budget = Some(value.parse().map_err(|_| bad("time_budget"))?);
                }
            }
            "hops" => {
                if args.hops.is_none() {
                    args.hops = Some(value.parse().map_err(|_| bad("hops"))?);
                }
            }
            other => {
                return Err(CliFailure::input(format!(
                    "config line {}: unknown key '{other}'",
                    idx + 1
                )))
            }
        }
    }
    Ok(())
}

fn mix(seed: u64, idx: u64) -> u64 {
    let mut z = seed.wrapping_add(idx.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

fn cmd_solve(mut args: SolveArgs) -> Result<(), CliFailure> {
    overlay_config(&mut args)?;
    let seed = args.seed.unwrap_or(0);
    let runs = args.runs.unwrap_or(1).max(1);
    let algo: Algorithm = args
        .algo
        .as_deref()
        .ok_or_else(|| CliFailure::input("--algo is required"))?
        .parse()?;

    let instance = load_instance(&args.input, seed)?;
    let (j, graph, default_model) = match instance {
        Instance::Matrix(j) => (j, None, "xy"),
        Instance::Graph(g) => {
            let (j, _) = ising_from_maxcut(&g);
            (j, Some(g), "ising")
        }
    };
    let model = args.model.clone().unwrap_or_else(|| default_model.into());
    validate_model(&model)?;
    let fields = match model.as_str() {
        "xy" => FieldSpec::empty(),
        "ising" => FieldSpec::ising(j.n(), 1.5 * j.max_abs_row_sum()),
        other => {
            let q: u32 = other.trim_start_matches("potts:").parse().unwrap();
            FieldSpec::potts(j.n(), q, 1.5 * j.max_abs_row_sum())
        }
    };
    if !fields.is_empty() && matches!(algo, Algorithm::Mc | Algorithm::Bh) {
        return Err(CliFailure::input(
            "mc and bh minimize the continuous XY energy; use --model xy or --algo gd/gd-mod",
        ));
    }

    let best: RunRecord = match algo {
        Algorithm::Gd | Algorithm::GdMod => {
            let mode = if algo == Algorithm::Gd {
                CouplingMode::Dissipative
            } else {
                CouplingMode::Gain
            };
            let base = GdParams {
                time_budget: args.time_budget,
                ..GdParams::default()
            };
            let warnings = base.validate(&j, &fields)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            let mut best: Option<RunRecord> = None;
            for r in 0..runs {
                let params = GdParams {
                    seed: mix(seed, r as u64),
                    ..base.clone()
                };
                let rec = run_gd(&j, &fields, mode, &params)?;
                if best.as_ref().is_none_or(|b| rec.best_energy < b.best_energy) {
                    best = Some(rec);
                }
            }
            best.unwrap()
        }
        Algorithm::Mc => mc_multistart(&j, None, runs, &LbfgsParams::default(), seed)?,
        Algorithm::Bh => {
            use rand::{Rng, SeedableRng};
            let mut best: Option<RunRecord> = None;
            for r in 0..runs {
                let run_seed = mix(seed, r as u64);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run_seed);
                let theta0 = SpinConfiguration::xy(
                    (0..j.n()).map(|_| rng.gen::<f64>() * TAU).collect(),
                );
                let bh = BasinHoppingParams {
                    n_hops: args.hops.unwrap_or(10),
                    seed: run_seed,
                    ..BasinHoppingParams::default()
                };
                let rec = basin_hopping(&j, None, &theta0, &bh, &LbfgsParams::default())?.record;
                if best.as_ref().is_none_or(|b| rec.best_energy < b.best_energy) {
                    best = Some(rec);
                }
            }
            best.unwrap()
        }
    };

    println!("n: {}", j.n());
    println!("algorithm: {}", algo.label());
    println!("best energy: {:.12}", best.best_energy);
    println!("converged: {}", best.converged);
    println!("iterations: {}", best.iterations);
    if best.feedback_updates > 0 {
        println!(
            "projected hardware time: {:.4} s ({} feedback updates x {} s)",
            bench::project_hw_time(&best, DEFAULT_FEEDBACK_LATENCY),
            best.feedback_updates,
            DEFAULT_FEEDBACK_LATENCY
        );
    }
    if let Some(g) = &graph {
        // a cut needs a two-valued assignment, which only the ising
        // readout guarantees
        if model == "ising" {
            let cut = maxcut_value(g, &best.best_conf)?;
            println!("cut value: {cut}");
        }
    }
    if let Some(out) = &args.out {
        let file = std::fs::File::create(out).map_err(GdError::Io)?;
        serde_json::to_writer_pretty(file, &best).map_err(GdError::Json)?;
        println!("record written to {}", out.display());
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), CliFailure> {
    let j = match args.kind {
        GenKind::Dense => gen_dense(&EnsembleSpec::dense(args.n, args.bound, args.seed))?,
        GenKind::Sparse3 => gen_sparse3(&EnsembleSpec::sparse3(args.n, args.seed))?,
    };
    let file = std::fs::File::create(&args.out).map_err(GdError::Io)?;
    match args.format {
        GenFormat::Json => write_matrix_json(&j, file)?,
        GenFormat::Gset => {
            let edges = j
                .triplets()
                .into_iter()
                .map(|(i, jj, v)| (i, jj, v))
                .collect();
            let graph = WeightedGraph::new(j.n(), edges)?;
            write_gset(&graph, file)?;
        }
    }
    println!("wrote {} (n={})", args.out.display(), args.n);
    Ok(())
}

fn bundled_metadata() -> HashMap<String, f64> {
    parse_metadata(BufReader::new(BUNDLED_METADATA.as_bytes())).expect("bundled table is valid")
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliFailure> {
    std::fs::create_dir_all(&args.out).map_err(GdError::Io)?;
    match args.experiment {
        Experiment::Success => bench_success(&args),
        Experiment::Maxcut => bench_maxcut(&args),
        Experiment::Scaling => bench_scaling(&args),
    }
}

fn bench_success(args: &BenchArgs) -> Result<(), CliFailure> {
    let algorithms: Vec<Algorithm> = args
        .algos
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<gdspin::Result<_>>()?;
    let mut instances = Vec::new();
    for i in 0..args.instances {
        let spec = match args.kind {
            GenKind::Dense => EnsembleSpec::dense(args.n, 10.0, mix(args.seed, i as u64)),
            GenKind::Sparse3 => EnsembleSpec::sparse3(args.n, mix(args.seed, i as u64)),
        };
        instances.push(NamedInstance {
            name: format!("inst{i:03}"),
            coupling: spec.generate()?,
        });
    }
    let spec = ExperimentSpec {
        runs_per_instance: args.runs,
        reference_policy: ReferencePolicy::Consensus,
        time_budget: args.time_budget,
        seed: args.seed,
        ..ExperimentSpec::new(algorithms, instances)
    };
    let outcome = bench::run_experiment(&spec)?;
    let csv_path = args.out.join("success.csv");
    bench::write_success_csv(
        &outcome.stats,
        std::fs::File::create(&csv_path).map_err(GdError::Io)?,
    )?;
    bench::write_archive(
        &outcome.records,
        std::fs::File::create(args.out.join("runs.ndjson")).map_err(GdError::Io)?,
    )?;
    println!("method  mean_success");
    for s in &outcome.stats {
        println!("{:<7} {:.4}", s.method, s.mean());
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn resolve_graph(name: &str, data: Option<&Path>) -> Result<WeightedGraph, CliFailure> {
    if name == "toy6" {
        return Ok(parse_gset(BufReader::new(TOY6_GSET.as_bytes()))?);
    }
    let dir = data
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("GDSPIN_DATA").map(PathBuf::from))
        .ok_or_else(|| {
            CliFailure::input(format!(
                "instance '{name}' needs a data directory; pass --data or set GDSPIN_DATA"
            ))
        })?;
    let path = dir.join(name);
    if !path.exists() {
        return Err(CliFailure::input(format!(
            "{} not found; download G-Set files into {}",
            path.display(),
            dir.display()
        )));
    }
    Ok(parse_gset_file(&path)?)
}

fn bench_maxcut(args: &BenchArgs) -> Result<(), CliFailure> {
    let algorithm: Algorithm = args.algo.parse()?;
    let mut metadata = bundled_metadata();
    if let Some(path) = &args.metadata {
        metadata.extend(load_metadata(path)?);
    }
    let mut graphs = Vec::new();
    for name in args.files.split(',').map(str::trim) {
        graphs.push((name.to_string(), resolve_graph(name, args.data.as_deref())?));
    }
    let stats = bench::run_maxcut_suite(
        &graphs,
        algorithm,
        args.runs,
        args.time_budget,
        &metadata,
        &GdParams::default(),
        args.seed,
    )?;
    bench::write_maxcut_csv(
        &stats,
        std::fs::File::create(args.out.join("maxcut.csv")).map_err(GdError::Io)?,
    )?;
    println!("instance  best_cut  mean_cut  deviation%");
    for s in &stats {
        println!(
            "{:<9} {:<9} {:<9.2} {}",
            s.instance,
            s.best_cut,
            s.mean_cut,
            s.deviation_pct
                .map_or("n/a".to_string(), |d| format!("{d:.3}"))
        );
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn bench_scaling(args: &BenchArgs) -> Result<(), CliFailure> {
    let algorithm: Algorithm = args.algo.parse()?;
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliFailure::input(format!("bad --sizes '{}'", args.sizes)))?;
    let gd = GdParams {
        t_max: 500.0,
        ..GdParams::default()
    };
    let fit = bench::scaling_study(
        &sizes,
        algorithm,
        args.repeats,
        args.seed,
        &gd,
        &BasinHoppingParams::default(),
        &LbfgsParams::default(),
    )?;
    bench::write_scaling_csv(
        &fit,
        std::fs::File::create(args.out.join("scaling.csv")).map_err(GdError::Io)?,
    )?;
    println!("n,seconds");
    for (n, t) in fit.sizes.iter().zip(&fit.times) {
        println!("{n},{t:.4}");
    }
    println!("log-log slope: {:.3} (intercept {:.3})", fit.slope, fit.intercept);
    println!("artifacts in {}", args.out.display());
    Ok(())
}
