use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use pcgraph::baselines::{diffusion_graph, geodesic_graph, ls_learn_graph};
use pcgraph::eval::{predict_batch, run_experiment, CenterMode, ExperimentConfig};
use pcgraph::io;
use pcgraph::solver::{spice_learn_graph_with_diagnostics, NodeDiagnostics, OnlineSpice, SolverConfig};
use pcgraph::truth::{generate_synthetic, make_community_graph, partial_correlation_graph, CommunitySpec, NoiseSpec};
use pcgraph::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Learn sparse partial-correlation graphs and predict signals at
/// unobserved nodes.
#[derive(Debug, Parser)]
#[command(name = "pcgraph", version)]
struct Cli {
    /// Worker threads for parallel solves (default: available parallelism).
    #[arg(long, global = true, env = "PCGRAPH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a community graph and a synthetic dataset from it.
    Synth(SynthArgs),
    /// Learn a graph from a dataset.
    Learn(LearnArgs),
    /// Predict target nodes from observed nodes with a learned graph.
    Predict(PredictArgs),
    /// Build a kernel graph from node coordinates or feature vectors.
    Refgraph(RefgraphArgs),
    /// Run a Monte Carlo experiment described by a JSON config.
    Eval(EvalArgs),
    /// Replay a dataset row by row through the online solver.
    Stream(StreamArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Relative objective decrease that ends coordinate descent.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
}

impl SolverArgs {
    fn config(&self, base: SolverConfig) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            tol: self.tol.unwrap_or(base.tol),
            max_sweeps: self.max_sweeps.unwrap_or(base.max_sweeps),
            ..base
        };
        cfg.validate().map_err(|e| CliError::usage(format!("--tol/--max-sweeps: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Community graph spec (JSON); defaults to two communities of five.
    #[arg(long)]
    graph_spec: Option<PathBuf>,
    /// Seed for the samples; the default graph also uses it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where to write the generating graph W.
    #[arg(long)]
    graph_out: Option<PathBuf>,
    /// Where to write the implied partial-correlation graph.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Spice,
    Ls,
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[arg(long, value_enum, default_value_t = Method::Spice)]
    method: Method,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write per-node solver diagnostics as JSON lines to this file.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Graph file (dense CSV or edge list).
    #[arg(long)]
    graph: PathBuf,
    /// Observed values, one column per observed node in split order.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RefSource {
    /// CSV of `name,lat,lon` in degrees.
    Coords,
    /// CSV with one feature vector per node.
    Features,
}

#[derive(Debug, Args)]
struct RefgraphArgs {
    #[arg(value_enum)]
    source: RefSource,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full report with per-repetition records as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    center_mode: Option<CenterMode>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    data: PathBuf,
    /// Final graph; checkpoints go next to it as `<stem>.n<N>.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Sample counts at which to write the current graph.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<usize>,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

/// Attaches the flag and file that an error came from.
fn ctx(flag: &'static str, path: &Path) -> impl FnOnce(Error) -> CliError {
    let prefix = format!("{flag} {}", path.display());
    move |e| match e {
        // these already carry the path
        Error::Parse { .. } | Error::Io { .. } => CliError::Data(format!("{flag}: {e}")),
        other => CliError::Data(format!("{prefix}: {other}")),
    }
}

fn require(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{flag} {}: file not found", path.display())))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcgraph: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Learn(a) => learn(a),
        Command::Predict(a) => predict(a),
        Command::Refgraph(a) => refgraph(a),
        Command::Eval(a) => eval(a),
        Command::Stream(a) => stream(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    if let Some(p) = &a.graph_spec {
        require("--graph-spec", p)?;
    }
    if a.samples == 0 {
        return Err(CliError::usage("--samples must be at least 1"));
    }
    let spec = match &a.graph_spec {
        Some(p) => io::read_json::<CommunitySpec>(p).map_err(ctx("--graph-spec", p))?,
        None => CommunitySpec::two_communities(a.seed),
    };
    let spec_ctx = |e: Error| CliError::Data(format!("graph spec: {e}"));
    let w = make_community_graph(&spec).map_err(spec_ctx)?;
    let noise = NoiseSpec::random_variances(w.num_nodes(), &mut ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1)));
    let data = generate_synthetic(&w, &noise, a.samples, a.seed).map_err(spec_ctx)?;
    io::write_dataset(&a.out, &data).map_err(ctx("--out", &a.out))?;
    if let Some(p) = &a.graph_out {
        io::write_graph(p, &w).map_err(ctx("--graph-out", p))?;
    }
    if let Some(p) = &a.truth_out {
        let t = partial_correlation_graph(&w, &noise).map_err(spec_ctx)?;
        io::write_graph(p, &t).map_err(ctx("--truth-out", p))?;
    }
    Ok(())
}

fn write_diagnostics(path: &Path, diags: &[NodeDiagnostics]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Data(format!("--diagnostics {}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(fail)?);
    for d in diags {
        let line = serde_json::to_string(d).expect("diagnostics serialize");
        writeln!(out, "{line}").map_err(fail)?;
    }
    out.flush().map_err(fail)
}

fn learn(a: LearnArgs) -> Result<(), CliError> {
    require("--data", &a.data)?;
    let cfg = a.solver.config(SolverConfig::default())?;
    if a.diagnostics.is_some() && a.method != Method::Spice {
        return Err(CliError::usage("--diagnostics is only available with --method spice"));
    }
    let data = io::read_dataset(&a.data).map_err(ctx("--data", &a.data))?;
    let graph = match a.method {
        Method::Spice => {
            let (g, diags) = spice_learn_graph_with_diagnostics(&data, &cfg).map_err(ctx("--data", &a.data))?;
            if let Some(p) = &a.diagnostics {
                write_diagnostics(p, &diags)?;
            }
            g
        }
        Method::Ls => ls_learn_graph(&data).map_err(ctx("--data", &a.data))?,
    };
    io::write_graph(&a.out, &graph).map_err(ctx("--out", &a.out))
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    require("--graph", &a.graph)?;
    require("--data", &a.data)?;
    require("--split", &a.split)?;
    let graph = io::read_graph(&a.graph).map_err(ctx("--graph", &a.graph))?;
    let split = io::read_split(&a.split, graph.num_nodes()).map_err(ctx("--split", &a.split))?;
    let table = io::read_table(&a.data).map_err(ctx("--data", &a.data))?;
    let x0 = table.values;
    if x0.ncols() != split.observed().len() {
        return Err(CliError::Data(format!(
            "--data {}: has {} columns but --split {} lists {} observed nodes",
            a.data.display(),
            x0.ncols(),
            a.split.display(),
            split.observed().len()
        )));
    }
    let pred = predict_batch(&graph, &x0, &split).map_err(ctx("--data", &a.data))?;
    let header: Vec<String> = split.targets().iter().map(|t| format!("x{}", t + 1)).collect();
    match &a.out {
        Some(p) => io::write_table(p, Some(&header), &pred).map_err(ctx("--out", p)),
        None => {
            print_table(&header, &pred);
            Ok(())
        }
    }
}

fn print_table(header: &[String], values: &DMatrix<f64>) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "{}", header.join(","));
    for row in values.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
}

fn refgraph(a: RefgraphArgs) -> Result<(), CliError> {
    require("--data", &a.data)?;
    let graph = match a.source {
        RefSource::Coords => {
            let c = io::read_coordinates(&a.data).map_err(ctx("--data", &a.data))?;
            geodesic_graph(&c).map_err(ctx("--data", &a.data))?
        }
        RefSource::Features => {
            let f = io::read_features(&a.data).map_err(ctx("--data", &a.data))?;
            diffusion_graph(&f).map_err(ctx("--data", &a.data))?
        }
    };
    io::write_graph(&a.out, &graph).map_err(ctx("--out", &a.out))
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    require("--config", &a.config)?;
    let mut config: ExperimentConfig = io::read_json(&a.config).map_err(ctx("--config", &a.config))?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(m) = a.center_mode {
        config.center_mode = m;
    }
    if a.solver.tol.is_some() || a.solver.max_sweeps.is_some() {
        config.solver = Some(a.solver.config(config.solver.unwrap_or_default())?);
    }
    let base = a.config.parent().unwrap_or(Path::new("."));
    let exp = config.resolve(base).map_err(ctx("--config", &a.config))?;
    let echo = serde_json::to_value(&config).expect("config serializes");
    let report = run_experiment(&exp, echo).map_err(ctx("--config", &a.config))?;
    if let Some(p) = &a.json {
        io::write_json(p, &report).map_err(ctx("--json", p))?;
    }
    let csv = report.to_csv();
    match &a.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| CliError::Data(format!("--out {}: {e}", p.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn checkpoint_path(out: &Path, n: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}.n{n}.{ext}"))
}

fn stream(a: StreamArgs) -> Result<(), CliError> {
    require("--data", &a.data)?;
    let cfg = a.solver.config(SolverConfig::default())?;
    let data = io::read_dataset(&a.data).map_err(ctx("--data", &a.data))?;
    let n = data.num_samples();
    if let Some(&c) = a.checkpoints.iter().find(|&&c| c == 0 || c > n) {
        return Err(CliError::Data(format!(
            "--checkpoints: {c} is outside 1..={n}, the rows in --data {}",
            a.data.display()
        )));
    }
    let mut online = OnlineSpice::new(data.num_nodes(), cfg).map_err(ctx("--data", &a.data))?;
    for (k, row) in data.samples().row_iter().enumerate() {
        let x: DVector<f64> = row.transpose();
        online.update(&x).map_err(ctx("--data", &a.data))?;
        if a.checkpoints.contains(&(k + 1)) {
            let g = online.graph().map_err(ctx("--data", &a.data))?;
            let p = checkpoint_path(&a.out, k + 1);
            io::write_graph(&p, &g).map_err(ctx("--out", &p))?;
        }
    }
    let g = online.graph().map_err(ctx("--data", &a.data))?;
    if let Some(p) = &a.diagnostics {
        let diags: Vec<NodeDiagnostics> = online.states().iter().map(|s| s.diagnostics().clone()).collect();
        write_diagnostics(p, &diags)?;
    }
    io::write_graph(&a.out, &g).map_err(ctx("--out", &a.out))
}
