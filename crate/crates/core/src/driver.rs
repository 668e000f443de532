//! The adaptive loop: solve, estimate, build the metric, remesh, repeat,
//! with per-iteration records and file export.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::adapt::{self, AdaptConfig};
use crate::estimator;
use crate::fem::{self, NewtonConfig, NodalField};
use crate::functional::ProblemInstance;
use crate::io;
use crate::mesh::TriMesh;
use crate::metric::{self, MetricField, MetricVariant};
use crate::Result;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub target_elements: usize,
    pub max_adapt_iters: usize,
    /// Relative change of element count (and error, when available) below
    /// which the loop stops.
    pub stop_rel_change: f64,
    pub gs_rtol: f64,
    pub gs_max_sweeps: usize,
    pub newton: NewtonConfig,
    pub max_passes: usize,
    pub smoothing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target_elements: 1000,
            max_adapt_iters: 10,
            stop_rel_change: 0.05,
            gs_rtol: 0.01,
            gs_max_sweeps: 20,
            newton: NewtonConfig::default(),
            max_passes: 12,
            smoothing: true,
        }
    }
}

/// One row of the adaptation history.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub vertices: usize,
    pub elements: usize,
    pub alpha: f64,
    pub sigma: f64,
    /// H¹ seminorm error; only when the problem has an exact solution.
    pub h1_error: Option<f64>,
    pub aspect_max: f64,
    pub aspect_median: f64,
    pub gs_sweeps: usize,
    pub seconds: f64,
    pub degenerate_metric: bool,
}

#[derive(Clone, Debug)]
pub struct AdaptReport {
    pub problem: String,
    pub variant: MetricVariant,
    pub records: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

/// Output of one adaptive run: the history plus the last solved mesh,
/// solution and metric.
pub struct RunResult {
    pub report: AdaptReport,
    pub mesh: TriMesh,
    pub solution: NodalField,
    pub metric: MetricField,
}

/// Runs the adaptive loop: starting from a uniform criss-cross mesh near
/// the target size, each iteration solves the problem, builds the metric
/// for the chosen variant and remeshes. The loop stops when the metric is
/// degenerate (nothing to adapt), when element count and error change less
/// than `stop_rel_change` between iterations, or after `max_adapt_iters`.
/// The returned mesh always carries a freshly solved solution.
pub fn adaptive_loop(
    problem: &ProblemInstance,
    variant: MetricVariant,
    config: &RunConfig,
) -> Result<RunResult> {
    let f = problem.functional.as_ref();
    let mut mesh = TriMesh::criss_cross_for_target(config.target_elements);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    loop {
        let iteration = records.len();
        let started = Instant::now();
        let (solution, _newton) = fem::newton_solve(&mesh, f, &config.newton)?;
        let h1_error = if problem.has_exact {
            Some(fem::h1_seminorm_error(&mesh, &solution, &|x| {
                f.exact_gradient(x).expect("exact gradient available")
            }))
        } else {
            None
        };
        let (estimate, gs_sweeps) = if variant.needs_estimate() {
            let (z, sweeps) =
                estimator::hbee(&mesh, f, &solution, config.gs_rtol, config.gs_max_sweeps)?;
            (Some(z), sweeps)
        } else {
            (None, 0)
        };
        let field = metric::metric_tensor(&mesh, f, &solution, estimate.as_ref(), variant)?;
        let record = IterationRecord {
            iteration,
            vertices: mesh.n_vertices(),
            elements: mesh.n_triangles(),
            alpha: field.alpha,
            sigma: field.sigma,
            h1_error,
            aspect_max: mesh.max_aspect_ratio()?,
            aspect_median: mesh.median_aspect_ratio()?,
            gs_sweeps,
            seconds: started.elapsed().as_secs_f64(),
            degenerate_metric: field.degenerate,
        };
        records.push(record);

        let stop = {
            let n = records.len();
            if field.degenerate {
                warnings.push(format!(
                    "iteration {iteration}: error data at the degenerate floor, uniform metric fallback"
                ));
                true
            } else if n >= config.max_adapt_iters {
                true
            } else if n >= 2 {
                let prev = &records[n - 2];
                let cur = &records[n - 1];
                let count_change =
                    (cur.elements as f64 - prev.elements as f64).abs() / prev.elements as f64;
                // without an exact solution the shape statistic stands in
                // for the error as the convergence signal
                let quality_change = match (cur.h1_error, prev.h1_error) {
                    (Some(a), Some(b)) if b > 0.0 => (a - b).abs() / b,
                    _ => (cur.aspect_median - prev.aspect_median).abs() / prev.aspect_median,
                };
                count_change < config.stop_rel_change && quality_change < config.stop_rel_change
            } else {
                false
            }
        };
        if stop {
            return Ok(RunResult {
                report: AdaptReport {
                    problem: problem.name.to_string(),
                    variant,
                    records,
                    warnings,
                },
                mesh,
                solution,
                metric: field,
            });
        }

        let adapt_config = AdaptConfig {
            target_elements: config.target_elements,
            max_passes: config.max_passes,
            smoothing: config.smoothing,
            ..AdaptConfig::default()
        };
        let outcome = adapt::adapt_mesh(&mesh, &field, &adapt_config)?;
        if !outcome.reached_target {
            warnings.push(format!(
                "iteration {iteration}: remeshing reached {} elements for target {}",
                outcome.mesh.n_triangles(),
                config.target_elements
            ));
        }
        mesh = outcome.mesh;
    }
}

/// One adaptive run per target size; rows (N, error) sorted by N.
pub fn convergence_study(
    problem: &ProblemInstance,
    variant: MetricVariant,
    targets: &[usize],
    config: &RunConfig,
) -> Result<Vec<(usize, f64)>> {
    let mut sizes: Vec<usize> = targets.to_vec();
    sizes.sort_unstable();
    let mut rows = Vec::with_capacity(sizes.len());
    for n in sizes {
        let run_config = RunConfig {
            target_elements: n,
            ..config.clone()
        };
        let result = adaptive_loop(problem, variant, &run_config)?;
        let last = result.report.records.last().expect("at least one record");
        let error = last.h1_error.ok_or_else(|| {
            crate::Error::Invalid("convergence study needs an exact solution".into())
        })?;
        rows.push((n, error));
    }
    Ok(rows)
}

pub fn report_csv(report: &AdaptReport) -> String {
    let mut out =
        String::from("iter,vertices,elements,alpha,sigma,h1err,ar_max,ar_med,gs_sweeps,seconds\n");
    for r in &report.records {
        let h1 = r.h1_error.map_or("nan".to_string(), |e| format!("{e}"));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.vertices,
            r.elements,
            r.alpha,
            r.sigma,
            h1,
            r.aspect_max,
            r.aspect_median,
            r.gs_sweeps,
            r.seconds
        )
        .unwrap();
    }
    out
}

/// Writes `report.csv`, `mesh_final.vtk` (with the solution as point
/// data), `mesh_final.svg` and `metric_final.vtk` (cell tensors and
/// density) into `outdir`.
pub fn export_report(result: &RunResult, outdir: &Path) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    std::fs::write(outdir.join("report.csv"), report_csv(&result.report))?;
    io::write_vtk(
        &outdir.join("mesh_final.vtk"),
        &result.mesh,
        &[("u", &result.solution.values)],
        &[],
        &[],
    )?;
    io::write_svg(&outdir.join("mesh_final.svg"), &result.mesh, None)?;
    io::write_vtk(
        &outdir.join("metric_final.vtk"),
        &result.mesh,
        &[],
        &[("rho", &result.metric.rho)],
        &[("metric", &result.metric.tensors)],
    )?;
    Ok(())
}
