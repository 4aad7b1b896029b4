//! `assort-dp`: exact and private assortativity from the command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use assort_dp::estimators::Bound;
use assort_dp::graph::{generate_ba, load_edge_list_file, IdMapping};
use assort_dp::harness::{
    relative_error_with, run_experiment_with_progress, run_protocol, write_outputs, ExperimentSpec,
    Progress, ReMode,
};
use assort_dp::shuffle::{AmplificationBound, ClosedFormBound, TabulatedBound};
use assort_dp::{exact_stats, Algorithm, BudgetSpec, Error, Graph, LoadOptions, RunOptions, TrialRng};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "assort-dp", version, about = "Exact and differentially private assortativity estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print exact graph statistics.
    Exact {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run one or more private estimations.
    Estimate(EstimateArgs),
    /// Run an experiment grid described by a JSON file.
    Experiment(ExperimentArgs),
    /// Generate a Barabási–Albert graph.
    GenBa {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge-list destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shuffle amplification accounting.
    Amplify(AmplifyArgs),
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Edge-list file (whitespace or comma separated, `#` comments).
    #[arg(long, conflicts_with = "ba_n", required_unless_present = "ba_n")]
    graph: Option<PathBuf>,
    /// Generate BA(n, m) instead of reading a file.
    #[arg(long, requires = "ba_m")]
    ba_n: Option<usize>,
    #[arg(long, requires = "ba_n")]
    ba_m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    ba_seed: u64,
    /// Node ids in the file start at 1.
    #[arg(long)]
    one_indexed: bool,
    /// Skip the first line of the file.
    #[arg(long)]
    skip_header: bool,
    /// Keep node ids as given instead of renumbering by first appearance.
    #[arg(long)]
    keep_ids: bool,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph, Error> {
        match (&self.graph, self.ba_n, self.ba_m) {
            (Some(path), _, _) => {
                let options = LoadOptions {
                    one_indexed: self.one_indexed,
                    skip_header: self.skip_header,
                    ids: if self.keep_ids { IdMapping::Identity } else { IdMapping::FirstAppearance },
                    ..Default::default()
                };
                let loaded = load_edge_list_file(path, &options)?;
                if loaded.duplicate_edges > 0 {
                    log::warn!("ignored {} duplicate edges", loaded.duplicate_edges);
                }
                Ok(loaded.graph)
            }
            (None, Some(n), Some(m)) => generate_ba(n, m, self.ba_seed),
            _ => Err(Error::InvalidParameter("give --graph or --ba-n with --ba-m".into())),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Algorithm,
    /// Total budget; split by the defaults unless --eps1/--eps2 are given.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, requires = "eps2")]
    eps1: Option<f64>,
    #[arg(long, requires = "eps1")]
    eps2: Option<f64>,
    /// Degree share of the shuffle local budget.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Also write the estimates as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    re_paper_literal: bool,
    /// Divide by this edge count instead of the true one.
    #[arg(long)]
    m_override: Option<u64>,
    /// `epsilon0,epsilon` table replacing the closed-form shuffle bound.
    #[arg(long)]
    bound_table: Option<PathBuf>,
    /// Disable all noise. Test builds only.
    #[cfg(debug_assertions)]
    #[arg(long)]
    noiseless: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Output directory.
    #[arg(long, env = "ASSORT_DP_OUT_DIR", default_value = "results")]
    out: PathBuf,
    /// Overrides the spec's thread count.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    re_paper_literal: bool,
    #[arg(long)]
    m_override: Option<u64>,
}

#[derive(Args, Debug)]
struct AmplifyArgs {
    #[arg(long)]
    n: u64,
    /// Forward: amplified epsilon for this local budget.
    #[arg(long, conflicts_with = "eps", required_unless_present = "eps")]
    eps0: Option<f64>,
    /// Inverse: local budget achieving this central epsilon.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    /// Use an `epsilon0,epsilon` lookup table instead of the closed form.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Write the closed-form bound at this many points to a table file.
    #[arg(long, value_name = "PATH")]
    write_table: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    points: usize,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_infeasible_budget() { EXIT_INFEASIBLE } else { EXIT_USAGE };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Exact { graph, format } => cmd_exact(&graph, format),
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::GenBa { n, m, seed, out } => cmd_gen_ba(n, m, seed, out.as_deref()),
        Command::Amplify(args) => cmd_amplify(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

fn cmd_exact(args: &GraphArgs, format: Option<Format>) -> Result<(), Failure> {
    let g = args.load()?;
    let s = exact_stats(&g)?;
    let mut out = io::stdout().lock();
    match format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut out, &s).map_err(Error::from)?;
            writeln!(out)?;
        }
        Some(Format::Csv) => {
            writeln!(out, "n,m,d_max,d_avg,r_u,r_d,r")?;
            writeln!(out, "{},{},{},{},{},{},{}", s.n, s.m, s.d_max, s.d_avg, s.r_u, s.r_d, fmt_opt(s.r))?;
        }
        None => {
            writeln!(
                out,
                "n={} M={} d_max={} d_avg={} r_u={} r_d={} r={}",
                s.n, s.m, s.d_max, s.d_avg, s.r_u, s.r_d, fmt_opt(s.r)
            )?;
        }
    }
    Ok(())
}

fn estimate_budget(args: &EstimateArgs) -> Result<BudgetSpec, Failure> {
    let pair = args.eps1.zip(args.eps2);
    match args.algo {
        Algorithm::Local | Algorithm::Decentral => {
            if args.alpha.is_some() {
                return Err(usage(format!("--alpha does not apply to {}", args.algo)));
            }
            let (eps1, eps2) = match (pair, args.eps) {
                (Some(_), Some(_)) => return Err(usage("give either --eps or --eps1/--eps2")),
                (Some(p), None) => p,
                (None, Some(eps)) => match BudgetSpec::default_for(args.algo, eps, args.delta)?.split {
                    assort_dp::Split::Pair { eps1, eps2 } => (eps1, eps2),
                    assort_dp::Split::Shuffle { .. } => unreachable!("pair algorithms split in pairs"),
                },
                (None, None) => return Err(usage("missing --eps (or --eps1/--eps2)")),
            };
            Ok(if args.algo == Algorithm::Local {
                BudgetSpec::local(eps1, eps2)?
            } else {
                BudgetSpec::decentral(eps1, eps2, args.delta)?
            })
        }
        Algorithm::Shuffle => {
            if pair.is_some() {
                return Err(usage("--eps1/--eps2 do not apply to shuffle; use --alpha"));
            }
            let eps = args.eps.ok_or_else(|| usage("missing --eps"))?;
            Ok(BudgetSpec::shuffle(eps, args.alpha.unwrap_or(0.4), args.delta)?)
        }
    }
}

#[cfg(debug_assertions)]
fn noise_mode(args: &EstimateArgs) -> assort_dp::NoiseMode {
    if args.noiseless {
        log::warn!("noiseless mode: the output is NOT private");
        assort_dp::NoiseMode::Noiseless
    } else {
        assort_dp::NoiseMode::Private
    }
}

#[cfg(not(debug_assertions))]
fn noise_mode(_: &EstimateArgs) -> assort_dp::NoiseMode {
    assort_dp::NoiseMode::Private
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), Failure> {
    if args.trials == 0 {
        return Err(usage("--trials must be >= 1"));
    }
    let budget = estimate_budget(args)?;
    let g = args.graph.load()?;
    let truth = exact_stats(&g).ok().map(|s| s.r_u);
    let bound = match &args.bound_table {
        Some(path) => Bound::Tabulated(Arc::new(TabulatedBound::from_file(path)?)),
        None => Bound::ClosedForm,
    };
    let options = RunOptions {
        noise: noise_mode(args),
        m_override: args.m_override,
        bound,
        ..Default::default()
    };
    let re_mode = if args.re_paper_literal { ReMode::PaperLiteral } else { ReMode::Guarded };

    let mut estimates = Vec::new();
    for trial in 0..args.trials {
        estimates.push(run_protocol(args.algo, &g, &budget, TrialRng::new(args.seed, 0, trial), &options)?);
    }
    let re = |q: f64| truth.map(|t| relative_error_with(q, t, g.num_nodes(), re_mode));

    let mut out = io::stdout().lock();
    match args.format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut out, &estimates).map_err(Error::from)?;
            writeln!(out)?;
        }
        Some(Format::Csv) => {
            writeln!(out, "algorithm,trial,q_hat,x,y,re,epsilon0,sensitivity")?;
            for e in &estimates {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    e.algorithm,
                    e.rng.trial,
                    e.q_hat,
                    e.x,
                    e.y,
                    re(e.q_hat).map_or(String::new(), |v| v.to_string()),
                    e.epsilon0.map_or(String::new(), |v| v.to_string()),
                    e.decentral.as_ref().map_or(String::new(), |d| d.sensitivity.to_string()),
                )?;
            }
        }
        None => {
            for e in &estimates {
                write!(out, "algorithm={} trial={} q_hat={} X={} Y={} M={}", e.algorithm, e.rng.trial, e.q_hat, e.x, e.y, e.m_used)?;
                match e.budget.split {
                    assort_dp::Split::Pair { eps1, eps2 } => write!(out, " eps1={eps1} eps2={eps2}")?,
                    assort_dp::Split::Shuffle { alpha } => write!(out, " eps={} alpha={alpha}", e.budget.epsilon)?,
                }
                if let Some(e0) = e.epsilon0 {
                    write!(out, " epsilon0={e0}")?;
                }
                if let Some(d) = &e.decentral {
                    write!(out, " delta_sensitivity={}", d.sensitivity)?;
                    if d.sensitivity_clamped {
                        write!(out, " (clamped)")?;
                    }
                }
                if let Some(r) = re(e.q_hat) {
                    write!(out, " re={r}")?;
                }
                writeln!(out)?;
            }
            if let Some(t) = truth {
                writeln!(out, "r_u={t}")?;
            }
        }
    }
    if let Some(path) = &args.out {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &estimates).map_err(Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.spec)?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if args.threads.is_some() {
        spec.threads = args.threads;
    }
    if args.re_paper_literal {
        spec.re_mode = ReMode::PaperLiteral;
    }
    if args.m_override.is_some() {
        spec.m_override = args.m_override;
    }
    spec.validate()?;

    let report = |p: Progress| {
        if p.completed == p.total || p.completed.is_multiple_of((p.total / 20).max(1)) {
            log::info!("{}/{} trials", p.completed, p.total);
        }
    };
    let result = run_experiment_with_progress(&spec, &report)?;
    let files = write_outputs(&result, &args.out)?;
    println!("trials:  {}", files.trials_csv.display());
    println!("summary: {}", files.summary_csv.display());
    println!("json:    {}", files.json.display());

    let partial: Vec<_> = result.cells.iter().filter(|c| c.partial).collect();
    if partial.is_empty() {
        return Ok(());
    }
    let mut message = format!("{} of {} cells are partial:", partial.len(), result.cells.len());
    for c in partial {
        let first = c.trials.iter().find_map(|t| t.error.as_deref()).unwrap_or("");
        message.push_str(&format!(
            "\n  {} eps={}: {}/{} trials failed ({first})",
            c.algorithm,
            c.epsilon,
            c.failures,
            c.trials.len()
        ));
    }
    Err(Failure { code: EXIT_PARTIAL, message })
}

fn cmd_gen_ba(n: usize, m: usize, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let g = generate_ba(n, m, seed)?;
    match out {
        Some(path) => {
            g.save_edge_list(path)?;
            println!("n={} M={}", g.num_nodes(), g.num_edges());
        }
        None => {
            g.write_edge_list(io::stdout().lock())?;
            eprintln!("n={} M={}", g.num_nodes(), g.num_edges());
        }
    }
    Ok(())
}

fn cmd_amplify(args: &AmplifyArgs) -> Result<(), Failure> {
    let bound: Box<dyn AmplificationBound> = match &args.table {
        Some(path) => Box::new(TabulatedBound::from_file(path)?),
        None => Box::new(ClosedFormBound),
    };
    let cap = bound.max_epsilon0(args.n, args.delta)?;
    println!("cap={cap}");
    if let Some(eps0) = args.eps0 {
        println!("epsilon0={eps0} epsilon={}", bound.amplified_epsilon(args.n, eps0, args.delta)?);
    }
    if let Some(eps) = args.eps {
        let eps0 = bound.local_budget(args.n, eps, args.delta)?;
        println!("epsilon={eps} epsilon0={eps0}");
    }
    if let Some(path) = &args.write_table {
        let table = TabulatedBound::tabulate(&ClosedFormBound, args.n, args.delta, args.points)?;
        table.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}
