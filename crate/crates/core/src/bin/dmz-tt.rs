use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmz_tt::harness::{emit_plot_data, run_experiment, ExperimentKind, ExperimentSpec, ResultRecord};
use dmz_tt::{Error, Result};

/// Tensor-train Zakai filter experiments.
#[derive(Parser)]
#[command(name = "dmz-tt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Newton-Schulz inverse ranks of the implicit operator.
    Table1(RunArgs),
    /// Cubic-sensor tracking: TT vs particle filters vs EKF.
    Cubic(RunArgs),
    /// Four-dimensional bimodal model with marginal snapshots.
    Multimode(RunArgs),
    /// Spatial, temporal or TT-tolerance convergence sweep.
    Converge(RunArgs),
    /// Regenerate plot tables from a saved result directory.
    Plot {
        /// Directory holding results.csv and aggregate.json.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow paper-sized runs (100 trials, dimensions above 7).
    #[arg(long)]
    paper_scale: bool,
}

fn accepts(cmd: &Command, kind: ExperimentKind) -> bool {
    match cmd {
        Command::Table1(_) => kind == ExperimentKind::Table1,
        Command::Cubic(_) => kind == ExperimentKind::Cubic,
        Command::Multimode(_) => kind == ExperimentKind::Multimode,
        Command::Converge(_) => kind.is_convergence(),
        Command::Plot { .. } => false,
    }
}

fn print_summary(record: &ResultRecord) {
    for m in &record.aggregate.methods {
        let show = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        println!(
            "{:<10} ok {:>3}  failed {:>3}  diverged {:>3}  mean rmse {}  mean time {}s",
            m.method,
            m.ok,
            m.failed,
            m.diverged,
            show(m.mean_rmse, 4),
            show(m.mean_wall_s, 3)
        );
    }
    for f in &record.aggregate.fits {
        println!("{:<10} slope {:.3} over {} levels", f.method, f.slope, f.points.len());
    }
}

fn run(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Plot { out } => {
            let record = ResultRecord::load(out)?;
            for p in emit_plot_data(&record, out)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        Command::Table1(a) | Command::Cubic(a) | Command::Multimode(a) | Command::Converge(a) => a,
    };
    let mut spec = ExperimentSpec::load(&args.config)?;
    if !accepts(&cli.command, spec.kind) {
        return Err(Error::Config(format!(
            "{} holds a {} experiment",
            args.config.display(),
            spec.kind.name()
        )));
    }
    spec.apply_overrides(args.seed, args.trials, args.out.clone(), args.paper_scale);
    spec.validate()?;
    let record = run_experiment(&spec)?;
    record.write(&spec.output_dir)?;
    print_summary(&record);
    if !record.rows.is_empty() {
        emit_plot_data(&record, &spec.output_dir)?;
    }
    println!("results in {}", spec.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else if matches!(e, Error::Io { .. }) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
