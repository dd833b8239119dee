use clap::{Args, Parser, Subcommand};
use hjbv_cli::scenario::*;
use hjbv_cli::{emit_plot_tables, execute, run, CliError, Scenario, EXIT_FAIL, EXIT_PASS};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hjbv",
    version,
    about = "Run value-function, viability and conjugation experiments"
)]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print witnesses and output paths.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Validate a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write plot tables for a report JSON or a gridfn field.
    Tables {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Check the velocity/cost representation of a model.
    Represent {
        #[arg(long)]
        model: String,
        /// Run the identity, cover and Lipschitz checks.
        #[arg(long)]
        check: bool,
        /// Report path; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute a value field by backward dynamic programming.
    Value {
        #[arg(long)]
        model: String,
        /// `lo:hi[,lo:hi]` box or a vertex CSV file.
        #[arg(long, allow_hyphen_values = true)]
        omega: String,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 0.01)]
        dx: f64,
    },
    /// Residual check of a field against a model.
    CheckHjb {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, allow_hyphen_values = true)]
        omega: Option<String>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Comparison experiment between a lower and an upper field.
    Compare {
        #[arg(long)]
        low: PathBuf,
        #[arg(long)]
        high: PathBuf,
        #[arg(long, default_value = "eikonal-decay")]
        model: String,
        #[arg(long, allow_hyphen_values = true)]
        omega: Option<String>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Neighboring feasible trajectory of a CSV trajectory.
    Nft(NftArgs),
}

#[derive(Args)]
struct NftArgs {
    /// Constraint JSON file.
    #[arg(long)]
    constraint: PathBuf,
    /// Trajectory CSV with header `t,x1,...`.
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    report: PathBuf,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HJBV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Validation(format!("HJBV_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}

/// Directory and file name of an output path.
fn split(path: &Path) -> (PathBuf, String) {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    (
        dir.to_path_buf(),
        path.file_name()
            .map_or("report.json".into(), |n| n.to_string_lossy().into_owned()),
    )
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or("run".into(), |s| s.to_string_lossy().into_owned())
}

/// Scenario for a direct subcommand writing its report to `report`.
fn direct(name: &str, seed: u64, job: Job, report: &Path) -> Result<(Scenario, PathBuf), CliError> {
    let (dir, file) = split(report);
    let outputs = Outputs {
        report: Some(file),
        ..Outputs::default()
    };
    Ok((Scenario::new(name, seed, job, outputs)?, dir))
}

fn main_inner(cli: Cli) -> Result<u8, CliError> {
    init_threads()?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let (scenario, out_dir) = match cli.command {
        Command::Run { scenario, out_dir } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            (s, out_dir)
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("ok: {} ({})", s.name, s.pipeline());
            return Ok(EXIT_PASS);
        }
        Command::Tables { input, out_dir } => {
            for p in emit_plot_tables(&input, &out_dir)? {
                println!("{}", p.display());
            }
            return Ok(EXIT_PASS);
        }
        Command::Represent { model, check, report } => {
            let params = RepresentParams {
                model: ModelRef::Name(model.clone()),
                theta_count: None,
                rep_tol: 1e-6,
                lipschitz_pairs: if check { 100 } else { 0 },
            };
            let job = Job::Represent(params);
            match report {
                Some(path) => direct(&model, seed, job, &path)?,
                None => {
                    let s = Scenario::new(&model, seed, job, Outputs::default())?;
                    let exec = execute(&s, Path::new("."))?;
                    print!("{}", exec.report.to_json()?);
                    return Ok(if exec.report.pass || !check {
                        EXIT_PASS
                    } else {
                        EXIT_FAIL
                    });
                }
            }
        }
        Command::Value {
            model,
            omega,
            tmax,
            out,
            dt,
            dx,
        } => {
            let params = ValueParams {
                model: ModelRef::Name(model),
                omega: omega.parse()?,
                dt,
                dx,
                t_max: tmax,
                vanish_tol: hjbv_core::hjb::DEFAULT_VANISH_TOL,
                dp_tol: 1e-9,
                probes: Vec::new(),
                closed_form_tol: None,
                check_vanishing: tmax.is_none(),
            };
            let (dir, file) = split(&out);
            let name = stem(&out);
            let outputs = Outputs {
                report: Some(format!("{name}.report.json")),
                field: Some(file),
                ..Outputs::default()
            };
            (Scenario::new(&name, seed, Job::Value(params), outputs)?, dir)
        }
        Command::CheckHjb {
            u,
            model,
            omega,
            report,
        } => {
            let params = CheckHjbParams {
                field: u.clone(),
                model: ModelRef::Name(model),
                omega: omega.map(|o| o.parse()).transpose()?,
                per_axis: None,
                directions: None,
                constant: None,
            };
            direct(&stem(&u), seed, Job::CheckHjb(params), &report)?
        }
        Command::Compare {
            low,
            high,
            model,
            omega,
            report,
        } => {
            let params = CompareParams {
                low,
                high,
                model: ModelRef::Name(model),
                omega: omega.map(|o| o.parse()).transpose()?,
                vanish_tol: hjbv_core::hjb::DEFAULT_VANISH_TOL,
                comparison_tol: None,
            };
            direct(&stem(&report), seed, Job::Compare(params), &report)?
        }
        Command::Nft(a) => {
            let params = NftParams {
                constraint: ConstraintRef::File(a.constraint),
                trajectory: a.traj.clone(),
                rho: a.rho,
                delta: a.delta,
                k: None,
            };
            direct(&stem(&a.traj), seed, Job::Nft(params), &a.report)?
        }
    };
    let outcome = run(&scenario, &out_dir)?;
    let r = &outcome.report;
    println!("{} {} {}", if r.pass { "PASS" } else { "FAIL" }, r.pipeline, r.scenario);
    if cli.verbose {
        for w in &r.witnesses {
            eprintln!("  {}: {}", w.invariant, w.message);
        }
        eprintln!("  report: {}", outcome.report_path.display());
        for p in outcome.tables.iter().chain(&outcome.artifacts) {
            eprintln!("  wrote: {}", p.display());
        }
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
