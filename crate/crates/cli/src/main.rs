//! `qbc-lab`: runs commitment experiments, prints bounds tables and the
//! steering demonstration.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 `--assert`
//! check failed, 3 I/O error.

use clap::{Args, Parser, Subcommand};
use qbc_core::harness::{
    bound_reports, reference_rate, replay_transcripts, run_experiment, stats_json, steering_demo, write_bounds_csv,
    AttackKind, ExperimentConfig, Protocol,
};
use qbc_core::steering::SteeringPreset;
use qbc_core::Error;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "qbc-lab", version, about = "Quantum bit-commitment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run Monte Carlo trials of a protocol, optionally under an attack.
    Run(RunArgs),
    /// Emit the fidelity bound table as CSV.
    Bounds(BoundsArgs),
    /// Run the steering attack against the toy concealing receiver.
    Steer(SteerArgs),
    /// Re-check a transcript file written by `run --transcripts`.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    protocol: Protocol,
    #[arg(long)]
    attack: Option<AttackKind>,
    #[arg(long)]
    n: usize,
    /// Number of decoys (P1); defaults to n.
    #[arg(long = "Q")]
    q: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Committed bit or unveil target; random per trial when omitted.
    #[arg(long)]
    bit: Option<u8>,
    #[arg(long = "gamma0-sq")]
    gamma0_sq: Option<f64>,
    #[arg(long)]
    memoryless: bool,
    /// Write the stats record here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-trial transcripts (NDJSON) here.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Fail with exit code 2 unless the rate is within 3 standard errors of
    /// the closed-form reference.
    #[arg(long = "assert")]
    check: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long = "n-min", default_value_t = 1)]
    n_min: usize,
    #[arg(long = "n-max", default_value_t = 4)]
    n_max: usize,
    #[arg(long = "q-min", default_value_t = 1)]
    q_min: usize,
    #[arg(long = "q-max", default_value_t = 24)]
    q_max: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SteerArgs {
    #[arg(long, default_value = "zx")]
    preset: SteeringPreset,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail with exit code 2 unless both bits are accepted at least 99.9% of
    /// the time.
    #[arg(long = "assert")]
    check: bool,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    transcripts: PathBuf,
}

enum Failure {
    Usage(String),
    Assert(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn emit(line: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    println!("{line}");
    if let Some(path) = out {
        std::fs::write(path, format!("{line}\n"))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let config = ExperimentConfig {
        protocol: args.protocol,
        attack: args.attack,
        n: args.n,
        q: args.q.unwrap_or(args.n),
        trials: args.trials,
        seed: args.seed,
        bit: args.bit,
        gamma0_sq: args.gamma0_sq,
        memoryless: args.memoryless,
        output_path: args.out.clone(),
        transcript_path: args.transcripts.clone(),
    };
    config.validate()?;
    let reference = if args.check {
        Some(reference_rate(&config).ok_or_else(|| Failure::Usage("no reference rate for this configuration".into()))?)
    } else {
        None
    };
    let stats = run_experiment(&config)?;
    println!("{}", stats_json(&config, &stats)?);
    if let Some(p) = reference {
        if !stats.consistent_with(p, 3.0) {
            return Err(Failure::Assert(format!("rate {} is not within 3 sigma of {p}", stats.rate)));
        }
    }
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<(), Failure> {
    if args.n_min > args.n_max || args.q_min > args.q_max {
        return Err(Failure::Usage("empty range".into()));
    }
    let rows = bound_reports(args.n_min..=args.n_max, args.q_min..=args.q_max)?;
    match &args.out {
        Some(path) => write_bounds_csv(&rows, std::fs::File::create(path)?)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_bounds_csv(&rows, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn steer(args: SteerArgs) -> Result<(), Failure> {
    if args.trials == 0 {
        return Err(Failure::Usage("trials must be positive".into()));
    }
    let report = steering_demo(args.preset, args.trials, args.seed)?;
    let line = serde_json::to_string(&report).map_err(|e| Failure::Io(e.to_string()))?;
    emit(&line, args.out.as_ref())?;
    if args.check && report.per_bit.iter().any(|s| s.rate < 0.999) {
        return Err(Failure::Assert("steering acceptance below 0.999".into()));
    }
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let report = replay_transcripts(&args.transcripts)?;
    let line = serde_json::to_string(&report).map_err(|e| Failure::Io(e.to_string()))?;
    println!("{line}");
    if !report.all_match() {
        return Err(Failure::Assert(format!("{} trials did not replay", report.mismatched.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bounds(a) => bounds(a),
        Command::Steer(a) => steer(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Assert(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(3)
        }
    }
}
