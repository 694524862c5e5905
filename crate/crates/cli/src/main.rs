use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use stokes_ocp::benchmarks::Example;
use stokes_ocp::driver::{adapt_loop, delta_study, stokes_study, Marking, RunConfig};

#[derive(Parser)]
#[command(
    name = "stokes-ocp",
    version,
    about = "Adaptive finite elements for pointwise tracking optimal control of Stokes flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adaptive loop on one of the benchmark problems.
    Run {
        #[arg(long)]
        example: Example,
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
        #[arg(long, default_value = "max")]
        marking: Marking,
        /// Marking fraction; 0 refines uniformly.
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 20)]
        max_iter: usize,
        #[arg(long)]
        max_dof: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        dump_meshes: bool,
        /// Grading depth of the composite quadrature near observation points.
        #[arg(long)]
        depth: Option<usize>,
        /// Lattice order for the maximum-norm error.
        #[arg(long)]
        lattice_order: Option<usize>,
        /// Fill the wall_s column (makes the record machine dependent).
        #[arg(long)]
        wall_time: bool,
        /// Start the active set iteration from the previous mesh's adjoint.
        #[arg(long)]
        warm_start: bool,
    },
    /// Adaptive Stokes solve for a manufactured solution.
    Stokes {
        #[arg(long, default_value = "manufactured")]
        case: String,
        #[arg(long, default_value_t = 10)]
        max_iter: usize,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Stokes problem with a point force, driven by the weighted estimator.
    Delta {
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
        #[arg(long, default_value = "0.5,0.5")]
        point: String,
        #[arg(long, default_value = "1,1")]
        force: String,
        #[arg(long, default_value_t = 10)]
        max_iter: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn pair(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("expected two comma separated numbers, got '{s}'");
    }
    let x = parts[0].parse().with_context(|| format!("bad number '{}'", parts[0]))?;
    let y = parts[1].parse().with_context(|| format!("bad number '{}'", parts[1]))?;
    Ok([x, y])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            example,
            alpha,
            marking,
            theta,
            max_iter,
            max_dof,
            out,
            lambda,
            dump_meshes,
            depth,
            lattice_order,
            wall_time,
            warm_start,
        } => {
            let mut c = RunConfig::new(example, alpha);
            c.marking = marking;
            c.theta = theta;
            c.max_iter = max_iter;
            c.max_dof = max_dof.unwrap_or(usize::MAX);
            c.out = Some(out);
            c.lambda = lambda;
            c.dump_meshes = dump_meshes;
            c.depth = depth.unwrap_or(c.depth);
            c.lattice_order = lattice_order.unwrap_or(c.lattice_order);
            c.record_wall_time = wall_time;
            c.warm_start = warm_start;
            adapt_loop(&c)?;
        }
        Command::Stokes { case, max_iter, theta, out } => {
            if case != "manufactured" {
                bail!("unknown stokes case '{case}'");
            }
            stokes_study(max_iter, theta, Some(&out))?;
        }
        Command::Delta { alpha, point, force, max_iter, out } => {
            delta_study(alpha, pair(&point)?, pair(&force)?, max_iter, Some(&out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: bad arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
