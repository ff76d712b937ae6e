use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tazcar::centrality::{analyze, CentralizationVariant, Metric, NetworkPattern, RoadGraph};
use tazcar::data::{build_design, load_dataset, save_dataset};
use tazcar::eval::comparison_report;
use tazcar::mcmc::{fit, McmcConfig, PosteriorReport};
use tazcar::model::ModelSpec;
use tazcar::recovery::{run_recovery, RecoveryOptions};
use tazcar::synth::{generate_lattice, simulate_dataset, CovariateDistributions, Truth};
use tazcar::weights::{build_weights, ProximityMatrix, WeightMode, ZoneTopology};
use tazcar::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

/// Spatial crash-frequency modelling for traffic analysis zones.
#[derive(Debug, Parser)]
#[command(name = "tazcar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Node betweenness, graph centralization and pattern class of a road network.
    Centrality(CentralityArgs),
    /// Proximity matrix from a zone topology file.
    Weights(WeightsArgs),
    /// Fit the Poisson-lognormal CAR model by MCMC.
    Fit(FitArgs),
    /// Simulate a zone dataset from known parameters.
    Simulate(SimulateArgs),
    /// Repeatedly simulate and refit to check interval coverage.
    Recover(RecoverArgs),
    /// Rank fitted models by DIC.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct CentralityArgs {
    /// Edge list: optional `nodes N` header, then `u v [length_km]` per line.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "hop_count")]
    metric: Metric,
    /// `unnormalized` makes a star score exactly 1.
    #[arg(long = "eq2-variant", default_value = "unnormalized")]
    variant: CentralizationVariant,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    /// Zone topology: `zones N`, then `i j boundary_km lanes` per line.
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, default_value = "adjacency")]
    mode: WeightMode,
    /// Write the matrix here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McmcArgs {
    #[arg(long, default_value_t = 2)]
    chains: usize,
    #[arg(long, default_value_t = 20_000)]
    burnin: usize,
    #[arg(long, default_value_t = 50_000)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Chain worker threads; never changes the results.
    #[arg(long, env = "TAZCAR_THREADS")]
    threads: Option<usize>,
}

impl McmcArgs {
    fn config(&self) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            burn_in: self.burnin,
            iterations: self.iters,
            thin: self.thin,
            seed: self.seed,
            threads: self.threads,
            ..McmcConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Zone dataset (tab or comma separated, with header).
    #[arg(long)]
    data: PathBuf,
    /// Proximity matrix as written by `tazcar weights`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Model specification (JSON); defaults to the full CAR model.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    mcmc: McmcArgs,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Side of the square zone lattice.
    #[arg(long, default_value_t = 13)]
    lattice: usize,
    #[arg(long, default_value_t = 4)]
    lanes: u32,
    /// Generating parameters (JSON); defaults to the built-in truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Covariate distributions (JSON).
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    /// Sidecar with the realized latent effects; defaults to `<out>.truth.json`.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long)]
    topology_out: Option<PathBuf>,
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 13)]
    lattice: usize,
    #[arg(long, default_value_t = 4)]
    lanes: u32,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Fit reports, each as `PATH` or `NAME=PATH`.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct CentralityOutput {
    nodes: usize,
    metric: Metric,
    variant: CentralizationVariant,
    node_scores: Vec<f64>,
    centralization: Option<f64>,
    pattern: NetworkPattern,
    connected: bool,
}

fn cmd_centrality(args: &CentralityArgs) -> Result<u8, Error> {
    let graph = RoadGraph::parse_edge_list(&read(&args.graph)?)?;
    let result = analyze::<f64>(&graph, args.metric, args.variant)?;
    if !result.connected {
        eprintln!("warning: graph is disconnected; unreachable pairs contribute nothing");
    }
    let out = CentralityOutput {
        nodes: graph.node_count(),
        metric: args.metric,
        variant: args.variant,
        node_scores: result.node_scores,
        centralization: result.graph_centralization,
        pattern: result.pattern,
        connected: result.connected,
    };
    match args.format {
        Format::Json => print!("{}", json(&out)),
        Format::Table => {
            println!("{:<8} {:>12}", "node", "betweenness");
            for (i, s) in out.node_scores.iter().enumerate() {
                println!("{i:<8} {s:>12.6}");
            }
            match out.centralization {
                Some(c) => println!("centralization: {c:.6}"),
                None => println!("centralization: undefined"),
            }
            println!("pattern: {}", out.pattern);
        }
    }
    Ok(0)
}

fn cmd_weights(args: &WeightsArgs) -> Result<u8, Error> {
    let topology = ZoneTopology::parse(&read(&args.topology)?)?;
    let w = build_weights::<f64>(&topology, args.mode);
    let islands = w.islands();
    if !islands.is_empty() {
        eprintln!("warning: {} island zone(s): {islands:?}", islands.len());
    }
    match &args.out {
        Some(path) => write(path, &w.to_text())?,
        None => print!("{}", w.to_text()),
    }
    Ok(0)
}

fn load_spec(path: Option<&PathBuf>) -> Result<ModelSpec, Error> {
    match path {
        Some(p) => ModelSpec::from_json(&read(p)?),
        None => Ok(ModelSpec::default()),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<u8, Error> {
    let config = args.mcmc.config();
    eprintln!(
        "fit: chains={} burnin={} iters={} thin={} seed={}",
        config.chains, config.burn_in, config.iterations, config.thin, config.seed
    );
    let spec = load_spec(args.spec.as_ref())?;
    let records = load_dataset(&args.data)?;
    let design = build_design::<f64>(&records, &spec.design)?;
    let weights = match (&args.weights, spec.spatial) {
        (Some(p), true) => Some(ProximityMatrix::<f64>::parse(&read(p)?)?),
        (None, true) => return Err(Error::Validation("the spatial model needs --weights".into())),
        (_, false) => None,
    };
    let report = fit(&records, &design, weights.as_ref(), &spec, &config)?;
    if let Some(path) = &args.out {
        write(path, &(report.to_json() + "\n"))?;
    }
    match args.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Table => print!("{}", report.render_table()),
    }
    if report.converged {
        Ok(0)
    } else {
        eprintln!("warning: chains did not converge (max R-hat {:.3})", report.max_rhat);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, Error> {
    let truth = match &args.truth {
        Some(p) => Truth::from_json(&read(p)?)?,
        None => Truth::default(),
    };
    let covariates: CovariateDistributions = match &args.covariates {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => CovariateDistributions::default(),
    };
    let topology = generate_lattice(args.lattice, args.lanes)?;
    let (records, hidden) = simulate_dataset(&topology, &truth, &covariates, args.seed)?;
    save_dataset(&args.out, &records)?;
    let sidecar = args.truth_out.clone().unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".truth.json");
        PathBuf::from(name)
    });
    write(&sidecar, &(hidden.to_json() + "\n"))?;
    if let Some(p) = &args.topology_out {
        write(p, &topology.to_text())?;
    }
    if let Some(p) = &args.weights_out {
        write(p, &build_weights::<f64>(&topology, truth.proximity).to_text())?;
    }
    eprintln!("simulate: {} zones written to {}", records.len(), args.out.display());
    Ok(0)
}

fn cmd_recover(args: &RecoverArgs) -> Result<u8, Error> {
    let truth = match &args.truth {
        Some(p) => Truth::from_json(&read(p)?)?,
        None => Truth::default(),
    };
    let spec = load_spec(args.spec.as_ref())?;
    let options = RecoveryOptions {
        replicates: args.reps,
        lattice: args.lattice,
        lanes: args.lanes,
        seed: args.mcmc.seed,
        config: args.mcmc.config(),
        ..RecoveryOptions::default()
    };
    let summary = run_recovery(&truth, &spec, &options)?;
    match args.format {
        Format::Json => print!("{}", json(&summary)),
        Format::Table => print!("{}", summary.render_table()),
    }
    Ok(if summary.replicates.iter().all(|r| r.converged) { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, Error> {
    let mut runs = Vec::with_capacity(args.reports.len());
    for entry in &args.reports {
        let (name, path) = match entry.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(entry);
                let stem = p.file_stem().map_or_else(|| entry.clone(), |s| s.to_string_lossy().into_owned());
                (stem, p)
            }
        };
        let report = PosteriorReport::from_json(&read(&path)?)?;
        runs.push(report.run_summary(&name));
    }
    let comparison = comparison_report(runs)?;
    match args.format {
        Format::Json => print!("{}", json(&comparison)),
        Format::Table => print!("{}", comparison.render_table()),
    }
    Ok(0)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Domain(_) => EXIT_DOMAIN,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Centrality(a) => cmd_centrality(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
