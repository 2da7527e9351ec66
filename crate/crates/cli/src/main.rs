use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fwlab_cli::output::write_outputs;
use fwlab_cli::sweep::{parse_values, run_sweep, summary_csv};
use fwlab_cli::{commands, parse_config, CliError, Command, Scenario};

#[derive(Parser)]
#[command(name = "fwlab", version, about = "Burgers equation with a Bessel-potential dispersive term")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Concurrent sweep children.
    #[arg(long, global = true, env = "FWLAB_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Default)]
struct ConfigArg {
    /// Scenario file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Tabulate G_s, G_s' and their envelopes; write kernel.csv and bounds.csv.
    Tabulate {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        xmin: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        xmax: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Subcommand)]
enum Cmd {
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Pseudospectral run; writes diagnostics.csv.
    Simulate(ConfigArg),
    /// Breaking run with characteristic tracking; writes breaking.csv and check.csv.
    Break {
        #[arg(long)]
        theorem: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate a theorem's hypotheses; writes check.csv.
    Check {
        #[arg(long)]
        theorem: String,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Linear dispersive decay; writes decay.csv.
    Decay {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Solitary waves; writes profile.csv and, with --sweep, sweep.csv.
    Soliton {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        p: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        nu: Option<f64>,
        /// `nu1:nu2:steps`.
        #[arg(long, allow_hyphen_values = true)]
        sweep: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Finite-volume entropy solution; writes fv.csv.
    Entropy(ConfigArg),
    /// Run a scenario once per value of one numeric key; writes summary.csv.
    Sweep {
        /// Command of the base scenario.
        #[arg(long = "command")]
        base: String,
        /// Key to vary.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true, default_value = "")]
        values: String,
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn load(command: Command, config: &ConfigArg) -> Result<Scenario, CliError> {
    let text = match &config.config {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    parse_config(&text, command).map_err(|e| match &config.config {
        Some(path) => CliError::Config(format!("{}: {e}", path.display())),
        None => e.into(),
    })
}

fn set<T: ToString>(sc: &mut Scenario, key: &str, value: Option<T>) -> Result<(), CliError> {
    if let Some(v) = value {
        sc.set(key, &v.to_string())?;
    }
    Ok(())
}

fn execute(sc: Scenario, out: &Path) -> Result<(), CliError> {
    let result = commands::run(&sc)?;
    write_outputs(out, &sc, &result)?;
    print!("{}", result.report);
    match result.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let out = cli.out;
    match cli.command {
        Cmd::Kernel(KernelCmd::Tabulate { s, xmin, xmax, n, config }) => {
            let mut sc = load(Command::Kernel, &config)?;
            set(&mut sc, "s", s)?;
            set(&mut sc, "xmin", xmin)?;
            set(&mut sc, "xmax", xmax)?;
            set(&mut sc, "n", n)?;
            execute(sc, &out)
        }
        Cmd::Simulate(config) => execute(load(Command::Simulate, &config)?, &out),
        Cmd::Break { theorem, config } => {
            let mut sc = load(Command::Break, &config)?;
            set(&mut sc, "theorem", theorem)?;
            execute(sc, &out)
        }
        Cmd::Check { theorem, config } => {
            let mut sc = load(Command::Check, &config)?;
            sc.set("theorem", &theorem)?;
            execute(sc, &out)
        }
        Cmd::Decay { s, tmax, config } => {
            let mut sc = load(Command::Decay, &config)?;
            set(&mut sc, "s", s)?;
            set(&mut sc, "tmax", tmax)?;
            execute(sc, &out)
        }
        Cmd::Soliton { s, p, nu, sweep, config } => {
            let mut sc = load(Command::Soliton, &config)?;
            set(&mut sc, "s", s)?;
            set(&mut sc, "p", p)?;
            set(&mut sc, "nu", nu.map(|v| format!("{v:?}")))?;
            set(&mut sc, "sweep", sweep)?;
            execute(sc, &out)
        }
        Cmd::Entropy(config) => execute(load(Command::Entropy, &config)?, &out),
        Cmd::Sweep { base, axis, values, config } => {
            let command: Command = base.parse().map_err(CliError::Config)?;
            if command == Command::Sweep {
                return Err(CliError::Config("a sweep cannot be nested".into()));
            }
            let sc = load(command, &config)?;
            let values = parse_values(&values)?;
            let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = run_sweep(&sc, &axis, &values, jobs, &out)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("summary.csv"), summary_csv(&sc, &rows))?;
            for r in &rows {
                match &r.error {
                    Some(e) => println!("{axis} = {}: exit {} ({e})", r.value, r.exit_code),
                    None => println!("{axis} = {}: ok", r.value),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fwlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
