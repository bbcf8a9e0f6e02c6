use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use intrinsic_frequency::model::Domain;
use intrinsic_frequency::pipeline::batch::{run_batch, write_jsonl, BatchConfig, Mode, DEFAULT_THRESHOLD};
use intrinsic_frequency::pipeline::generate::generate_to_file;
use intrinsic_frequency::pipeline::grid_io::export_grid;
use intrinsic_frequency::pipeline::ingest::{ingest, InputFormat, IngestReport};
use intrinsic_frequency::pipeline::PipelineError;
use intrinsic_frequency::search::{GridConfig, GridDomain, Mesh, SearchConfig, DEFAULT_MESH};

#[derive(Parser)]
#[command(name = "ifreq", version, about = "Intrinsic Frequency extraction from cardiac-cycle pressure waveforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract intrinsic frequencies for every cycle of the input.
    Extract {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Fast)]
        mode: ModeArg,
        #[command(flatten)]
        search: SearchArgs,
        /// Brute-force mesh in rad/s.
        #[arg(long, default_value_t = DEFAULT_MESH)]
        mesh: f64,
        /// Output file for result lines (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the objective landscape of one cycle as a text matrix.
    Grid {
        #[command(flatten)]
        input: InputArgs,
        /// Record to export (first accepted record if omitted).
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MESH)]
        mesh: f64,
        #[arg(long, value_parser = parse_domain)]
        domain: Option<Domain>,
        /// Let cells next to lattice nodes win the minimum.
        #[arg(long)]
        include_nodes: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both algorithms on every cycle and report their agreement.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = DEFAULT_MESH)]
        mesh: f64,
        /// Pass threshold on the larger mean |w_fast - w_brute|, rad/s.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic batch and its ground-truth sidecar.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    /// CSV cycle, JSON batch, or a directory of either.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct SearchArgs {
    /// Final step of the compass search (dimensionless).
    #[arg(long, default_value_t = 0.001)]
    tol: f64,
    /// Initial step of the compass search (dimensionless).
    #[arg(long, default_value_t = 0.1)]
    step0: f64,
    /// Start point `u1,u2`; repeat for several. Replaces the default pair.
    #[arg(long = "guess", value_parser = parse_pair)]
    guesses: Vec<(f64, f64)>,
    /// Extra uniformly random starts away from the nodes.
    #[arg(long, default_value_t = 0)]
    random_guesses: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Search rectangle `u1min,u1max,u2min,u2max`.
    #[arg(long, value_parser = parse_domain)]
    domain: Option<Domain>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fast,
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn numbers(s: &str, count: usize) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != count {
        return Err(format!("expected {count} comma-separated numbers"));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = numbers(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    let v = numbers(s, 4)?;
    Domain::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        let mut c = SearchConfig {
            delta0: self.step0,
            delta_tol: self.tol,
            random_guesses: self.random_guesses,
            seed: self.seed,
            ..SearchConfig::default()
        };
        if let Some(d) = self.domain {
            c.domain = d;
        }
        if !self.guesses.is_empty() {
            c.guesses = self.guesses.clone();
        }
        c
    }
}

fn grid_config(mesh: f64, domain: Option<Domain>) -> GridConfig {
    GridConfig {
        domain: GridDomain::Dimensionless(domain.unwrap_or_default()),
        mesh: Mesh::RadPerSec(mesh),
        ..GridConfig::default()
    }
}

enum Failure {
    Fatal(String),
    NoRecords,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Fatal(e.to_string())
    }
}

fn load(input: &InputArgs) -> Result<IngestReport, Failure> {
    let format = input.format.map(|f| match f {
        FormatArg::Csv => InputFormat::Csv,
        FormatArg::Json => InputFormat::Json,
    });
    let report = ingest(&input.input, format)?;
    for r in &report.rejected {
        eprintln!("rejected {}: {}", r.id, r.reason);
    }
    Ok(report)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Fatal(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn batch(input: &InputArgs, mode: Mode, config: BatchConfig, out: Option<&Path>) -> Result<(), Failure> {
    let report = load(input)?;
    let output = run_batch(&report, mode, &config)?;
    write_jsonl(open_out(out)?, &output.lines).map_err(|e| Failure::Fatal(e.to_string()))?;
    let s = output.summary();
    eprintln!(
        "{} accepted, {} succeeded, {} failed, {} rejected",
        s.accepted,
        s.succeeded,
        s.failed,
        s.rejected.len()
    );
    if let Some(c) = &s.comparison {
        eprintln!(
            "mean |dw1| = {:.4} rad/s, mean |dw2| = {:.4} rad/s, median speed-up {:.1}x: {}",
            c.mean_abs_diff_omega1,
            c.mean_abs_diff_omega2,
            c.median_time_ratio,
            if c.pass { "pass" } else { "fail" }
        );
    }
    if s.accepted == 0 {
        return Err(Failure::NoRecords);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Extract {
            input,
            mode,
            search,
            mesh,
            out,
        } => {
            let config = BatchConfig {
                grid: grid_config(mesh, search.domain),
                search: search.config(),
                ..BatchConfig::default()
            };
            let mode = match mode {
                ModeArg::Fast => Mode::Fast,
                ModeArg::Brute => Mode::Brute,
            };
            batch(&input, mode, config, out.as_deref())
        }
        Command::Compare {
            input,
            search,
            mesh,
            threshold,
            out,
        } => {
            let config = BatchConfig {
                grid: grid_config(mesh, search.domain),
                search: search.config(),
                threshold,
            };
            batch(&input, Mode::Compare, config, out.as_deref())
        }
        Command::Grid {
            input,
            id,
            mesh,
            domain,
            include_nodes,
            out,
        } => {
            let report = load(&input)?;
            let record = match &id {
                Some(id) => report.records.iter().find(|r| &r.id == id).ok_or_else(|| {
                    Failure::Fatal(format!("no accepted record with id '{id}'"))
                })?,
                None => report.records.first().ok_or(Failure::NoRecords)?,
            };
            let config = GridConfig {
                include_nodes,
                ..grid_config(mesh, domain)
            };
            let (outcome, _) = export_grid(record, &config, &out)?;
            eprintln!(
                "{}: minimum P = {:e} at u = ({}, {})",
                record.id, outcome.objective, outcome.u1, outcome.u2
            );
            Ok(())
        }
        Command::Generate { spec, count, seed, out } => {
            let truth = generate_to_file(&spec, count, seed, &out)?;
            eprintln!("wrote {} and {}", out.display(), truth.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which is reserved here for
    // "no valid records".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Fatal(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::NoRecords) => {
            eprintln!("error: no valid records");
            ExitCode::from(2)
        }
    }
}
