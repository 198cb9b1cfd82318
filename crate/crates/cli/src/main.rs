use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rdde::experiment::{run_config, run_example1, run_example2, Artifacts, Experiment, Overrides, RunOutcome};
use rdde::Error;

#[derive(Parser)]
#[command(
    name = "rdde",
    version,
    about = "Simulate and regulate random delay differential equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[command(subcommand)]
        target: Target,
    },
}

#[derive(Subcommand)]
enum Target {
    /// State-feedback regulation of the two-stage reactor.
    Example1(Flags),
    /// Adaptive output-feedback regulation of the second benchmark.
    Example2(Flags),
    /// A TOML experiment file.
    Config {
        path: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// Master seed for the noise phases.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// End time.
    #[arg(long)]
    horizon: Option<f64>,
    /// Recording step.
    #[arg(long)]
    step: Option<f64>,
    /// RK4 steps per recording step.
    #[arg(long)]
    substeps: Option<usize>,
    /// Multiplies every noise amplitude.
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides {
            seed: f.seed,
            paths: f.paths,
            horizon: f.horizon,
            step: f.step,
            substeps: f.substeps,
            noise_scale: f.noise_scale,
            output: f.out,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter { .. } | Error::Expr(_) | Error::InvalidDelay(_) | Error::Design(_) => 2,
        Error::UnstableEnsemble { .. } => 3,
        Error::Io { .. } => 4,
        _ => 1,
    }
}

fn summary(exp: &Experiment, out: &RunOutcome, art: &Artifacts) {
    if let Some(g) = exp.gains() {
        print!("{}", g.table());
    }
    if let Some(o) = exp.observer() {
        println!(
            "observer: kappa = {:?}, b = {}, sigma_max(P) = {}, ||P||_F = {}",
            o.kappa, o.b, o.sigma_max, o.p_frobenius
        );
    }
    let r = &out.report;
    println!("paths = {}, m = {}, K = {:.6}", r.n, r.m, r.noise_moment_k);
    println!("tail mean E|y|^m = {:.6e}", r.tail_bound);
    match r.theoretical_bound {
        Some(b) => println!("theoretical bound = {b:.6e}"),
        None => println!("theoretical bound: n/a"),
    }
    if let Some(note) = &r.theoretical_bound_note {
        println!("  {note}");
    }
    println!(
        "envelope: A = {:.4e}, c = {:.4}, B = {:.4e}; NSS-P fraction = {:.3}",
        r.envelope.a, r.envelope.c, r.envelope.b, r.nss_p.fraction
    );
    if let Some(d) = &r.dissipation {
        println!("dissipation: fraction = {:.4}, worst = {:.4e}", d.fraction, d.worst);
    }
    println!("wrote {} files to {}", art.files.len(), art.dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { target } = cli.command;
    let result = match target {
        Target::Example1(f) => run_example1(&f.into()),
        Target::Example2(f) => run_example2(&f.into()),
        Target::Config { path, flags } => run_config(&path, &flags.into()),
    };
    match result {
        Ok((exp, out, art)) => {
            summary(&exp, &out, &art);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
