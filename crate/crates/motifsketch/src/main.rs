//! Command-line frontend: estimate subgraph counts from an edge stream,
//! compute exact counts on small graphs, plan sketch parameters, and
//! generate synthetic streams.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use motifsketch::algebra::GroupSpec;
use motifsketch::estimator::{plan_parameters, run_ensemble, EnsembleConfig, PlanInput};
use motifsketch::oracle::MaterializedGraph;
use motifsketch::pattern::Pattern;
use motifsketch::sketch::Algorithm;
use motifsketch::streamio::{generate, write_events, GenParams, StreamReader};

#[derive(Parser)]
#[command(
    name = "motifsketch",
    version,
    about = "Estimate small-subgraph counts over edge streams with linear sketches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sketch ensemble over an edge stream and report the estimate.
    Estimate(EstimateArgs),
    /// Count the pattern exactly by replaying the stream into memory.
    Exact(ExactArgs),
    /// Pick colors, group, and instance count from stream statistics.
    Plan(PlanArgs),
    /// Generate a synthetic edge stream on stdout.
    Gen(GenArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Built-in pattern name (triangle, cycle4, cycle5, k4) or a pattern file.
    #[arg(long)]
    pattern: String,
    /// Edge stream file, or `-` for stdin.
    #[arg(long)]
    input: String,
    /// Color budget C (at least the pattern's vertex count).
    #[arg(long)]
    colors: u32,
    /// Group: `roots:<r>` (scalar) or `matrix:<d>` (signed powers).
    #[arg(long, value_parser = parse_group)]
    group: GroupSpec,
    /// Independent sketch instances to average.
    #[arg(long)]
    instances: u64,
    /// 1 = direct complex accumulation, 2 = integer counters (matrix groups
    /// only). Defaults to 2 on matrix groups, 1 on scalar groups.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    algorithm: Option<u8>,
    /// Master seed; instance i hashes with a value derived from (seed, i).
    #[arg(long)]
    seed: u64,
    /// Emit the full report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExactArgs {
    /// Built-in pattern name or a pattern file.
    #[arg(long)]
    pattern: String,
    /// Edge stream file, or `-` for stdin.
    #[arg(long)]
    input: String,
}

#[derive(Args)]
struct PlanArgs {
    /// Directed edge count of the stream (twice the undirected count).
    #[arg(long)]
    edges: u64,
    /// Degree exponent: the analysis assumes max degree <= m^(1/2 - alpha).
    #[arg(long)]
    alpha: f64,
    /// Built-in pattern name or a pattern file.
    #[arg(long)]
    pattern: String,
    /// Rough lower bound for the true count, calibrating the error.
    #[arg(long)]
    target_count: f64,
    /// Maximum vertex degree, if known; triggers a warning when too large.
    #[arg(long)]
    max_degree: Option<u64>,
    /// Emit the plan as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Vertices available for random edges (ids 0..nodes).
    #[arg(long)]
    nodes: u64,
    /// Random undirected edges to insert.
    #[arg(long)]
    edges: u64,
    /// Degree cap enforced on every prefix of the stream.
    #[arg(long)]
    max_degree: u32,
    /// Plant disjoint pattern copies on fresh vertices: `<pattern>=<count>`.
    #[arg(long)]
    plant: Option<String>,
    /// Append this many insert+delete pairs that cancel exactly.
    #[arg(long, default_value_t = 0)]
    churn: u64,
    /// Generator seed.
    #[arg(long)]
    seed: u64,
}

/// Errors that reflect malformed input data rather than bad flags.
#[derive(Debug)]
struct InputError(anyhow::Error);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for InputError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        self.0.source()
    }
}

fn input_error(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(InputError(e.into()))
}

fn parse_group(raw: &str) -> Result<GroupSpec, String> {
    raw.parse::<GroupSpec>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|cause| cause.is::<InputError>()) {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Exact(args) => exact(args),
        Command::Plan(args) => plan(args),
        Command::Gen(args) => gen(args),
    }
}

/// Resolves a built-in name or loads and parses a pattern file.
fn load_pattern(spec: &str) -> Result<Arc<Pattern>> {
    if let Some(p) = Pattern::builtin(spec) {
        return Ok(p);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| {
        input_error(anyhow!(
            "pattern '{spec}' is not a built-in ({}) and reading it as a file \
             failed: {e}",
            Pattern::builtin_names().join(", ")
        ))
    })?;
    let pattern = Pattern::parse(&text, true)
        .map_err(|e| input_error(e).context(format!("pattern file '{spec}'")))?;
    Ok(Arc::new(pattern))
}

fn open_stream(path: &str) -> Result<Box<dyn BufRead>> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let file =
            File::open(path).map_err(|e| input_error(anyhow!("cannot open '{path}': {e}")))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let pattern = load_pattern(&args.pattern)?;
    let algorithm = match (args.algorithm, args.group) {
        (Some(1), _) => Algorithm::Direct,
        (Some(2), GroupSpec::SignedPowers { .. }) => Algorithm::Counting,
        (Some(2), other) => bail!("algorithm 2 needs a matrix group, got {other}"),
        (None, GroupSpec::SignedPowers { .. }) => Algorithm::Counting,
        (None, GroupSpec::RootsOfUnity { .. }) => Algorithm::Direct,
        (Some(_), _) => unreachable!("clap bounds the algorithm flag"),
    };
    let cfg = EnsembleConfig {
        pattern,
        pattern_label: args.pattern.clone(),
        group: args.group,
        colors: args.colors,
        algorithm,
        instances: args.instances,
        master_seed: args.seed,
    };
    let reader = StreamReader::new(open_stream(&args.input)?);
    let report = run_ensemble(reader, &cfg).map_err(|e| match e {
        motifsketch::estimator::EstimatorError::Stream(err) => input_error(err),
        other => anyhow::Error::new(other),
    })?;

    let mut out = io::stdout().lock();
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        writeln!(
            out,
            "estimate: {} (standard error {})",
            report.mean_estimate, report.standard_error
        )?;
        writeln!(
            out,
            "instances: {}, colors: {}, group: {}, algorithm: {}, seed: {}",
            report.config.instances,
            report.config.colors,
            report.config.group,
            report.config.algorithm,
            report.config.master_seed
        )?;
        writeln!(
            out,
            "stream: {} events ({} insertions, {} deletions)",
            report.config.stream.events,
            report.config.stream.insertions,
            report.config.stream.deletions
        )?;
        writeln!(out, "imaginary diagnostic: {}", report.imaginary_diagnostic)?;
    }
    Ok(())
}

fn exact(args: ExactArgs) -> Result<()> {
    let pattern = load_pattern(&args.pattern)?;
    let reader = StreamReader::new(open_stream(&args.input)?);
    let events: Vec<_> = reader
        .collect::<Result<_, _>>()
        .map_err(input_error)
        .with_context(|| format!("stream '{}'", args.input))?;
    let graph = MaterializedGraph::replay(events)
        .map_err(input_error)
        .with_context(|| format!("stream '{}'", args.input))?;
    let count = graph.count_pattern(&pattern).map_err(input_error)?;
    println!("{count}");
    Ok(())
}

fn plan(args: PlanArgs) -> Result<()> {
    let pattern = load_pattern(&args.pattern)?;
    let mut input = PlanInput::new(pattern, args.edges, args.alpha, args.target_count);
    input.max_degree = args.max_degree;
    let plan = plan_parameters(&input)?;

    let mut out = io::stdout().lock();
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&plan)?)?;
    } else {
        writeln!(out, "colors: {}", plan.colors)?;
        writeln!(out, "group: {}", plan.group)?;
        writeln!(out, "instances: {}", plan.instances)?;
        for w in &plan.warnings {
            writeln!(out, "warning: {w}")?;
        }
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let plant = match &args.plant {
        None => None,
        Some(raw) => {
            let (name, count) = raw.split_once('=').ok_or_else(|| {
                anyhow!("--plant expects <pattern>=<count>, got '{raw}'")
            })?;
            let copies: u64 = count
                .parse()
                .with_context(|| format!("--plant count '{count}'"))?;
            Some((load_pattern(name)?, copies))
        }
    };
    let events = generate(&GenParams {
        nodes: args.nodes,
        edges: args.edges,
        max_degree: args.max_degree,
        plant,
        churn_pairs: args.churn,
        seed: args.seed,
    })?;
    let mut out = io::stdout().lock();
    write_events(&mut out, &events)?;
    Ok(())
}
