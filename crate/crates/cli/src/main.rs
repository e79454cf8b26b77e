//! `nlshape`: run the shape optimization loop, the verification suites, or
//! generate tracking data, all driven by one TOML config.

mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlshape::config::ConfigFile;
use nlshape::error::Error;
use nlshape::mesh::write_native;
use nlshape::optimizer::{generate_data, run_with, DataSource, RunConfig};
use nlshape::output::{read_data_file, write_data_file};

#[derive(Parser)]
#[command(name = "nlshape", version, about = "Interface identification for nonlocal Dirichlet problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads for assembly (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the second-order optimization loop; writes history.csv,
    /// diagnostics.csv, VTK snapshots and final_mesh.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Iteration limit; overrides `[optimizer] maxiter`.
        #[arg(long)]
        maxiter: Option<usize>,
    },
    /// Run a verification suite on the initial mesh; writes CSV reports.
    Verify {
        #[command(flatten)]
        common: Common,
        suite: Suite,
    },
    /// Solve the state on the target mesh and write it as tracking data.
    Gendata {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Suite {
    /// Finite differences of the gradient.
    Fd1,
    /// Finite differences of the Hessian and the structure identity.
    Fd2,
    /// Assembled forms against the dense oracle.
    Assembly,
    /// Coercivity and norm-equivalence constants.
    Norms,
}

/// Why a command failed; each maps to an exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Tolerance(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Tolerance(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Tolerance(m) => m,
        }
    }

    /// Config and kernel errors are configuration failures, anything else is a runtime failure.
    pub fn from_run(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Kernel(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

/// Load the config, apply flag overrides and check every referenced file.
fn prepare(common: &Common, maxiter: Option<usize>) -> Result<(ConfigFile, RunConfig), Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let mut cfg = ConfigFile::load(&common.config).map_err(config_failure)?;
    if let Some(dir) = &common.output {
        cfg.output.dir = dir.clone();
    }
    if let Some(n) = maxiter {
        cfg.optimizer.maxiter = n;
    }
    let run = cfg.run_config().map_err(config_failure)?;
    run.initial_mesh.load().map_err(config_failure)?;
    match &run.data {
        DataSource::Target(source) => {
            source.load().map_err(config_failure)?;
        }
        DataSource::File { path, tags } => {
            read_data_file(path, tags).map_err(config_failure)?;
        }
        DataSource::Quadratic(_) => {}
    }
    Ok((cfg, run))
}

fn cmd_run(common: &Common, maxiter: Option<usize>) -> Result<(), Failure> {
    let (_, run) = prepare(common, maxiter)?;
    let history = run_with(&run, |r| {
        eprintln!(
            "iter {:3}  J {:.6e}  |W| {:.3e}  halvings {}  min angle {:.1}  {:.1}s",
            r.iter, r.objective, r.defnorm, r.halvings, r.min_angle, r.walltime
        );
    })
    .map_err(Failure::from_run)?;
    let dir = run.output_dir.as_deref().unwrap_or(Path::new("."));
    let status = if history.converged { "converged" } else { "stopped at maxiter" };
    println!("{status} after {} iterations; results in {}", history.records.len(), dir.display());
    Ok(())
}

fn cmd_gendata(common: &Common) -> Result<(), Failure> {
    let (cfg, run) = prepare(common, None)?;
    let DataSource::Target(source) = &run.data else {
        return Err(Failure::Config("gendata needs [problem] target_mesh".into()));
    };
    let target = source.load().map_err(config_failure)?;
    let data = generate_data(&target, &run.kernel, &run.forcing(), run.solver).map_err(Failure::from_run)?;
    let nlshape::fe::DataField::Discrete(discrete) = data else { unreachable!("generated data is discrete") };
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mesh_name = Path::new("target_mesh.json");
    write_native(&target, &dir.join(mesh_name)).map_err(Failure::from_run)?;
    let data_path = dir.join("data.json");
    write_data_file(&data_path, mesh_name, &discrete.values).map_err(Failure::from_run)?;
    println!("wrote {}", data_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, maxiter } => cmd_run(common, *maxiter),
        Command::Verify { common, suite } => {
            prepare(common, None).and_then(|(cfg, run)| verify::run_suite(&cfg, &run, *suite))
        }
        Command::Gendata { common } => cmd_gendata(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
