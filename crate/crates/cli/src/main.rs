use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lienard_cli::commands;
use lienard_cli::{write_outputs, CliError, CommandOutput, RunConfig};

/// Stability checks, simulations and periodic orbits for coupled vector
/// Liénard systems.
///
/// Exit codes: 0 success (check: PASS), 1 check FAIL, 2 check inconclusive,
/// 3 integration failure, 4 roa, 5 eigen, 6 probe/attract, 7 periodic,
/// 64 configuration error, 74 output error.
#[derive(Parser)]
#[command(name = "lienard", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Builtin system (intro, squares, ellipses, cubic, oscillator); replaces the configured system.
    #[arg(long, global = true)]
    system: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every sampling step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the four stability hypotheses (exit 0 PASS, 1 FAIL, 2 inconclusive).
    Check {
        #[arg(long)]
        grid_density: Option<usize>,
    },
    /// Integrate one trajectory; writes CSV and an SVG phase portrait.
    Simulate(SimulateArgs),
    /// Certify a Lyapunov sublevel set as a region-of-attraction estimate.
    Roa {
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Eigenvalues of the linearization at the origin.
    Eigen,
    /// Seed points on the vanishing set of V' and verify that orbits leave it.
    Probe(ProbeArgs),
    /// Sample a sublevel set of V and verify convergence to the origin.
    Attract(AttractArgs),
    /// Periodic orbits of the forced system by shooting with continuation in eps.
    Periodic(PeriodicArgs),
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Args)]
struct SimulateArgs {
    /// Initial state x1..xn,y1..yn.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z0: Option<Vec<f64>>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Coordinate pair for the portrait, e.g. x1,y1.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    plot: Option<Vec<String>>,
}

#[derive(Args)]
struct ProbeArgs {
    /// case_a, case_b, case_c or all.
    #[arg(long)]
    stratum: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct AttractArgs {
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    allow_failed_check: bool,
}

#[derive(Args)]
struct PeriodicArgs {
    /// Strictly decreasing eps values.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    period: Option<f64>,
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &cli.system {
        cfg.system = Default::default();
        cfg.system.builtin = Some(name.clone());
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Check { grid_density } => {
            if let Some(d) = grid_density {
                cfg.check.grid_density = *d;
            }
        }
        Command::Simulate(a) => {
            if let Some(z) = &a.z0 {
                cfg.simulate.z0 = z.clone();
            }
            if let Some(t) = a.t_max {
                cfg.simulate.t_max = t;
            }
            if let Some(p) = &a.plot {
                let [x, y]: [String; 2] = p
                    .clone()
                    .try_into()
                    .map_err(|_| CliError::Config("--plot takes exactly two coordinates".into()))?;
                cfg.simulate.plot = [x, y];
            }
        }
        Command::Roa { resolution } => {
            if let Some(r) = resolution {
                cfg.roa.resolution = *r;
            }
        }
        Command::Probe(a) => {
            if let Some(s) = &a.stratum {
                cfg.probe.stratum = s.clone();
            }
            if let Some(c) = a.count {
                cfg.probe.count = c;
            }
            if let Some(h) = a.horizon {
                cfg.probe.horizon = h;
            }
        }
        Command::Attract(a) => {
            if let Some(l) = a.level {
                cfg.attract.level = l;
            }
            if let Some(s) = a.samples {
                cfg.attract.samples = s;
            }
            if let Some(t) = a.t_max {
                cfg.attract.t_max = t;
            }
            cfg.attract.allow_failed_check |= a.allow_failed_check;
        }
        Command::Periodic(a) => {
            if let Some(e) = &a.eps {
                cfg.periodic.eps = e.clone();
            }
            if let Some(p) = a.period {
                cfg.periodic.period = p;
            }
        }
        Command::Eigen | Command::ShowConfig => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let cfg = configure(cli)?;
    let out: CommandOutput = match cli.command {
        Command::Check { .. } => commands::cmd_check(&cfg)?,
        Command::Simulate(_) => commands::cmd_simulate(&cfg)?,
        Command::Roa { .. } => commands::cmd_roa(&cfg)?,
        Command::Eigen => commands::cmd_eigen(&cfg)?,
        Command::Probe(_) => commands::cmd_probe(&cfg)?,
        Command::Attract(_) => commands::cmd_attract(&cfg)?,
        Command::Periodic(_) => commands::cmd_periodic(&cfg)?,
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(0);
        }
    };
    write_outputs(&cfg.output_dir, &out)?;
    println!("{}", out.summary);
    println!("[{}] outputs written to {}", out.command, cfg.output_dir.display());
    Ok(out.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
