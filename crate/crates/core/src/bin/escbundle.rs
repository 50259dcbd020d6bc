use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use escbundle::bundle::BundleSettings;
use escbundle::driver::verify::verify_small;
use escbundle::driver::{
    emit_report, load_instance, run_cycles, write_report, InstanceFormat, ReportFormat, RunConfig,
};
use escbundle::sdp::{self, CERTIFY_TOL};
use escbundle::{Error, Problem};

#[derive(Parser)]
#[command(name = "escbundle", version, about = "Exact subgraph bounds via a bundle method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the cutting-plane loop on an instance.
    Solve(SolveArgs),
    /// Compare full-level bounds with enumeration on random small graphs.
    VerifySmall {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated problems to check.
        #[arg(long, value_delimiter = ',', default_value = "maxcut,stableset,coloring")]
        problems: Vec<Problem>,
    },
    /// Solve the basic relaxation only.
    Theta {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "dimacs")]
        format: InstanceFormat,
        #[arg(long, default_value = "stableset")]
        problem: Problem,
        /// Also write the relaxation in SDPA sparse format.
        #[arg(long)]
        sdpa: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: Problem,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "dimacs")]
    format: InstanceFormat,
    /// Ascending subgraph orders; defaults depend on the problem.
    #[arg(long, value_delimiter = ',')]
    k_schedule: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    cycles: usize,
    #[arg(long, default_value_t = 200)]
    escs_per_cycle: usize,
    #[arg(long, default_value_t = 30)]
    bundle_iters: usize,
    /// Relative stopping tolerance of each bundle run.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Add the block on all vertices (small graphs only).
    #[arg(long)]
    full_block: bool,
    #[arg(long)]
    known_optimum: Option<f64>,
    /// Report destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; inferred from the `--out` extension when absent.
    #[arg(long)]
    report_format: Option<ReportFormat>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::InvalidGraph(_) | Error::Config(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn solve(args: SolveArgs) -> Result<u8, Error> {
    let mut config = RunConfig::new(args.problem);
    config.instance = Some(args.instance);
    config.format = args.format;
    if let Some(k) = args.k_schedule {
        config.k_schedule = k;
    }
    config.cycles = args.cycles;
    config.escs_per_cycle = args.escs_per_cycle;
    config.bundle = BundleSettings {
        max_iters: args.bundle_iters,
        tol: args.tol,
        ..BundleSettings::default()
    };
    config.seed = args.seed;
    config.include_full_block = args.full_block;
    config.known_optimum = args.known_optimum;

    let report = run_cycles(&config)?;
    match &args.out {
        Some(path) => {
            let format = args.report_format.unwrap_or_else(|| ReportFormat::from_path(path));
            write_report(&report, format, path)?;
        }
        None => emit_report(
            &report,
            args.report_format.unwrap_or(ReportFormat::Table),
            std::io::stdout().lock(),
        )?,
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e} (partial report written)");
        return Ok(3);
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve(args) => solve(args),
        Command::VerifySmall {
            n,
            trials,
            seed,
            problems,
        } => {
            let report = verify_small(n, trials, seed, &problems)?;
            for c in &report.cases {
                println!(
                    "seed={} n={} m={} {:<9} exact={} bound={:.6} {}",
                    c.seed,
                    c.n,
                    c.m,
                    c.problem.to_string(),
                    c.exact,
                    c.bound,
                    if c.passed { "ok".to_string() } else { format!("FAIL: {}", c.message) }
                );
            }
            Ok(if report.passed { 0 } else { 3 })
        }
        Command::Theta {
            instance,
            format,
            problem,
            sdpa,
        } => {
            let g = load_instance(&instance, format)?;
            let relaxation = sdp::build_basic(problem, &g);
            if let Some(path) = sdpa {
                std::fs::write(path, relaxation.to_sdpa())?;
            }
            let r = sdp::solve(&relaxation, CERTIFY_TOL);
            println!("{:.8}", problem.user_bound(r.value));
            if !r.within(1e-5) {
                eprintln!("error: relaxation did not converge (gap {:e})", r.relative_gap);
                return Ok(3);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
