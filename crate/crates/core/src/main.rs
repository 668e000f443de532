use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use anisoadapt::driver::{self, RunConfig};
use anisoadapt::functional::problem_by_name;
use anisoadapt::metric::MetricVariant;

#[derive(Parser)]
#[command(
    name = "anisoadapt",
    about = "Anisotropic adaptive finite elements for variational problems on the unit square",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop and export the report and final mesh.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory for report.csv, mesh_final.vtk/svg, metric_final.vtk
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Error against element count over a list of targets (exact solution required).
    Study {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated element targets, e.g. 400,800,1600,3200
        #[arg(long, value_delimiter = ',', default_value = "400,800,1600,3200")]
        n: Vec<usize>,
        /// Optional CSV output path (rows are also printed to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Problem name: tanh, aniso or image
    #[arg(long)]
    problem: Option<String>,
    /// Metric variant: hbee-aniso, hessian-aniso, isotropic or hbee-only
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    target_elements: Option<usize>,
    #[arg(long)]
    max_adapt_iters: Option<usize>,
    /// Relative update tolerance of the Gauss-Seidel sweeps
    #[arg(long)]
    gs_rtol: Option<f64>,
    #[arg(long)]
    gs_max_sweeps: Option<usize>,
    /// Remeshing passes per adaptation step
    #[arg(long)]
    max_passes: Option<usize>,
    /// Metric-weighted smoothing of interior vertices
    #[arg(long)]
    smoothing: Option<bool>,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

/// JSON mirror of the command-line options.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    problem: Option<String>,
    metric: Option<String>,
    target_elements: Option<usize>,
    max_adapt_iters: Option<usize>,
    gs_rtol: Option<f64>,
    gs_max_sweeps: Option<usize>,
    max_passes: Option<usize>,
    smoothing: Option<bool>,
}

struct Resolved {
    problem: String,
    variant: MetricVariant,
    run: RunConfig,
}

fn resolve(common: &CommonArgs) -> Result<Resolved, String> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("cannot parse config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let problem = common
        .problem
        .clone()
        .or(file.problem)
        .unwrap_or_else(|| "tanh".to_string());
    let metric_name = common
        .metric
        .clone()
        .or(file.metric)
        .unwrap_or_else(|| "hbee-aniso".to_string());
    let variant = MetricVariant::from_str(&metric_name).map_err(|e| e.to_string())?;
    let defaults = RunConfig::default();
    let run = RunConfig {
        target_elements: common
            .target_elements
            .or(file.target_elements)
            .unwrap_or(defaults.target_elements),
        max_adapt_iters: common
            .max_adapt_iters
            .or(file.max_adapt_iters)
            .unwrap_or(defaults.max_adapt_iters),
        gs_rtol: common.gs_rtol.or(file.gs_rtol).unwrap_or(defaults.gs_rtol),
        gs_max_sweeps: common
            .gs_max_sweeps
            .or(file.gs_max_sweeps)
            .unwrap_or(defaults.gs_max_sweeps),
        max_passes: common
            .max_passes
            .or(file.max_passes)
            .unwrap_or(defaults.max_passes),
        smoothing: common
            .smoothing
            .or(file.smoothing)
            .unwrap_or(defaults.smoothing),
        ..defaults
    };
    Ok(Resolved {
        problem,
        variant,
        run,
    })
}

fn run_command(command: &Command) -> Result<i32, String> {
    match command {
        Command::Run { common, out } => {
            let resolved = resolve(common)?;
            let problem = problem_by_name(&resolved.problem)
                .ok_or_else(|| format!("unknown problem '{}'", resolved.problem))?;
            let result = driver::adaptive_loop(&problem, resolved.variant, &resolved.run)
                .map_err(|e| e.to_string())?;
            driver::export_report(&result, out).map_err(|e| e.to_string())?;
            for r in &result.report.records {
                let err = r.h1_error.map_or("-".to_string(), |e| format!("{e:.4e}"));
                println!(
                    "iter {:2}: {:5} elements, h1 error {}, max aspect ratio {:.1}",
                    r.iteration, r.elements, err, r.aspect_max
                );
            }
            for w in &result.report.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote report and meshes to {}", out.display());
            Ok(if result.report.warnings.is_empty() {
                0
            } else {
                2
            })
        }
        Command::Study { common, n, out } => {
            let resolved = resolve(common)?;
            let problem = problem_by_name(&resolved.problem)
                .ok_or_else(|| format!("unknown problem '{}'", resolved.problem))?;
            let rows = driver::convergence_study(&problem, resolved.variant, n, &resolved.run)
                .map_err(|e| e.to_string())?;
            let mut csv = String::from("elements,h1err\n");
            println!("elements,h1err");
            for (count, err) in &rows {
                println!("{count},{err}");
                csv.push_str(&format!("{count},{err}\n"));
            }
            if let Some(path) = out {
                std::fs::write(path, csv).map_err(|e| e.to_string())?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(&cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
