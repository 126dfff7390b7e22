use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plaplace_core::{solve, sweep, Error, ParticleSpec, Relation, RunConfig, RunDir, SweepAxis};

/// Parabolic p-Laplace gradient flow with a particle representation.
#[derive(Parser)]
#[command(name = "plaplace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the flow described by a config file into a new run directory.
    Solve {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Push a particle ensemble through a solved run.
    Simulate {
        #[arg(short, long)]
        run: PathBuf,
        /// Particle count (defaults to the config value).
        #[arg(short = 'N', long = "particles")]
        particles: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        substeps: Option<usize>,
    },
    /// Check the estimates on a run and write report.json.
    Verify {
        #[arg(short, long)]
        run: PathBuf,
    },
    /// Compare particle snapshots with the solved fields.
    Compare {
        #[arg(short, long)]
        run: PathBuf,
    },
    /// Refine one parameter and tabulate a convergence metric.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// One of n, dt, N, delta, epsilon.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Seeds per level for the N axis.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Output CSV (stdout when absent).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// 1 for bad input, 2 for numerical failure.
fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::NonConvergence { .. } | Error::EscapedDomain { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let run = solve(&cfg, &out)?;
            println!("{} steps written to {}", run.manifest().steps, out.display());
        }
        Command::Simulate {
            run,
            particles,
            seed,
            substeps,
        } => {
            let dir = RunDir::open(&run)?;
            let base = dir.manifest().config.particles;
            let spec = ParticleSpec {
                n: particles.unwrap_or(base.n),
                seed: seed.unwrap_or(base.seed),
                substeps: substeps.unwrap_or(base.substeps),
            };
            if spec.substeps == 0 {
                return Err(Error::Invalid {
                    field: "substeps".into(),
                    reason: "must be at least 1".into(),
                });
            }
            let path = dir.simulate(&spec)?;
            println!("snapshots in {}", path.display());
        }
        Command::Verify { run } => {
            let report = RunDir::open(&run)?.verify()?;
            if report.out_of_theory {
                println!("note: p = {} < 4 is outside the theory; bounds are exploratory", report.p);
            }
            for c in &report.checks {
                let rel = match c.relation {
                    Relation::AtMost => "<=",
                    Relation::Approx => "~=",
                };
                println!(
                    "{} {:<40} {:>12.5e} {rel} {:>12.5e}  (tol {:.2e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.lhs,
                    c.rhs,
                    c.tolerance
                );
            }
            let failed = report.failures();
            if failed > 0 {
                println!("{failed} check(s) failed");
                return Ok((2 + failed).min(255) as u8);
            }
        }
        Command::Compare { run } => {
            for sim in RunDir::open(&run)?.compare()? {
                println!("{}", sim.simulation);
                for s in &sim.snapshots {
                    match s.w1 {
                        Some(w) => println!("  t = {:<10.4} W1 = {w:.4e}  L1 = {:.4e}  N_eff = {}", s.t, s.l1, s.n_effective),
                        None => println!("  t = {:<10.4} L1 = {:.4e}  N_eff = {}", s.t, s.l1, s.n_effective),
                    }
                }
            }
        }
        Command::Sweep {
            config,
            axis,
            levels,
            seeds,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let table = sweep(&cfg, axis, levels, seeds)?;
            let csv = table.to_csv()?;
            match out {
                Some(path) => plaplace_core::run::write_new(&path, &csv)?,
                None => print!("{}", String::from_utf8_lossy(&csv)),
            }
            if let Some(k) = table.slope {
                eprintln!("log-log slope {k:.4}");
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
