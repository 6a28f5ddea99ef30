use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

mod commands;
mod config;
mod output;
mod verify;

use config::RunConfig;

/// Bad invocation or configuration; exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

/// A computation that ran but did not deliver; exit code 3.
#[derive(Debug)]
pub struct Numerical(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Numerical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}
impl std::error::Error for Numerical {}

#[derive(Parser, Debug)]
#[command(name = "screwbif", version, about = "Screw motions of a vortex filament near a circle")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Configuration layers shared by every subcommand.
#[derive(Args, Debug)]
struct Overrides {
    /// Flat TOML file with run parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set tol_outer=1e-11`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(short, long, global = true)]
    k: Option<usize>,
    #[arg(short = 'R', long, global = true)]
    radius: Option<f64>,
    /// Grid size.
    #[arg(short, long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    lambda_max: Option<f64>,
    #[arg(long, global = true)]
    n_points: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl Overrides {
    fn table(&self) -> Table {
        let mut t = Table::new();
        let mut int = |key: &str, x: Option<u64>| {
            if let Some(x) = x {
                t.insert(key.into(), Value::Integer(x as i64));
            }
        };
        int("k", self.k.map(|x| x as u64));
        int("n", self.n.map(|x| x as u64));
        int("n_points", self.n_points.map(|x| x as u64));
        int("seed", self.seed);
        for (key, x) in [
            ("radius", self.radius),
            ("lambda_max", self.lambda_max),
            ("lambda", self.lambda),
            ("t_end", self.t_end),
            ("dt", self.dt),
        ] {
            if let Some(x) = x {
                t.insert(key.into(), Value::Float(x));
            }
        }
        if let Some(dir) = &self.output_dir {
            t.insert("output_dir".into(), Value::String(dir.display().to_string()));
        }
        t
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical frequencies and the mode determinants at each of them.
    Critical {
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
    },
    /// Determinant and eigenvalues of every mode block at a given frequency.
    Spectrum {
        /// Defaults to the critical frequency of `k`.
        #[arg(long, allow_negative_numbers = true)]
        omega: Option<f64>,
    },
    /// Continue the branch from the circle and estimate the axial speed deficit.
    Branch,
    /// Evolve one branch profile and report distance and axial drift.
    Evolve,
    /// Run the invariant suite.
    Verify,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use screwbif::Error as E;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if cause.is::<Numerical>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidInput(_) | E::InvalidGrid(_) | E::Mode { .. } | E::DerivativeOrder { .. } => 2,
                E::Io(_) => 1,
                _ => 3,
            };
        }
    }
    1
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    use std::io::ErrorKind::BrokenPipe;
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == BrokenPipe)
            || c.downcast_ref::<csv::Error>()
                .is_some_and(|e| matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == BrokenPipe))
    })
}

fn configure_threads() {
    let Ok(raw) = std::env::var("SCREWBIF_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("cannot size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring SCREWBIF_THREADS = {raw:?}: expected a positive integer"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let o = &cli.overrides;
    let cfg = RunConfig::load(o.config.as_deref(), &o.set, o.table())
        .map_err(|e| Usage(format!("{e:#}")))?;
    log::debug!("configuration: {cfg:?}");
    match cli.command {
        Command::Critical { k_min, k_max } => commands::critical(&cfg, k_min, k_max),
        Command::Spectrum { omega } => commands::spectrum(&cfg, omega),
        Command::Branch => commands::branch(&cfg),
        Command::Evolve => commands::evolve(&cfg),
        Command::Verify => verify::run(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // output closed early by the reader, e.g. `| head`
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(screwbif::Error::Resolution { suggested_n, .. }) =
                err.chain().find_map(|c| c.downcast_ref::<screwbif::Error>())
            {
                eprintln!("hint: rerun with --n {suggested_n} or larger");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
