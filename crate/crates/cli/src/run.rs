use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dante_core::gaps::BoundConstants;
use dante_core::inner_loop::{cap_constant, combined_complexity_bound, q_rate};
use dante_core::io::{format_float, save_matrix_csv, save_pgm, save_trace_csv, trace_rows};
use dante_core::outer_loop::{dante_run_with, Trace};
use dante_core::verify;
use rayon::prelude::*;

use crate::settings::{build, Experiment, Settings};
use crate::CliError;

/// Headline numbers of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub total_inner: usize,
    pub gap_opt: Option<f64>,
    pub gap_feas: Option<f64>,
    pub err_to_ref: Option<f64>,
    pub lower_obj: Option<f64>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn complexity_bound(trace: &Trace, diameter: f64) -> Option<f64> {
    trace.errors()?;
    let big_q = q_rate(trace.theta, trace.q_bar());
    let c = cap_constant(trace.tau_bar(), trace.theta, big_q, diameter);
    let eps: Vec<f64> = trace.records.iter().map(|r| r.epsilon).collect();
    let bound = combined_complexity_bound(c, big_q, &eps);
    bound.is_finite().then_some(bound)
}

pub fn cmd_run(experiment: Experiment, s: &Settings) -> Result<RunSummary, CliError> {
    let (inst, cfg) = build(experiment, s)?;
    let dir = s.output_dir(experiment);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;

    let log_every = s.log_every.unwrap_or(0);
    let start = Instant::now();
    let (wbar, trace) = dante_run_with(&inst.bundle, &cfg, |view| {
        let diag = inst.observe(view);
        if log_every > 0 && (view.n + 1) % log_every == 0 {
            let fields: Vec<String> = diag.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
            eprintln!("[{}] n={} {}", experiment.as_str(), view.n + 1, fields.join(" "));
        }
        diag
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let elapsed = start.elapsed();

    let constants = if trace.errors().is_some() && inst.bundle.constants.c_m.is_finite() {
        BoundConstants::from_trace(&trace, &inst.bundle, cfg.alpha, cfg.mu).ok()
    } else {
        None
    };
    let rows = trace_rows(&trace, constants.as_ref());
    let trace_path = dir.join("trace.csv");
    save_trace_csv(&trace_path, &rows).map_err(|e| io_err(&trace_path, e))?;

    let last = rows.last().expect("n_outer is at least 1");
    let summary = RunSummary {
        total_inner: trace.total_inner_iterations(),
        gap_opt: last.gap_opt,
        gap_feas: last.gap_feas,
        err_to_ref: last.err_to_ref,
        lower_obj: last.lower_obj,
    };
    let opt = |x: Option<f64>| x.map(format_float).unwrap_or_else(|| "n/a".into());
    let mut text = String::new();
    let _ = writeln!(text, "experiment = {}", experiment.as_str());
    let _ = writeln!(text, "seed = {}", s.seed());
    let _ = writeln!(text, "n_outer = {}", cfg.n_outer);
    let _ = writeln!(text, "encoding = {}", cfg.encoding);
    let _ = writeln!(text, "alpha = {}", format_float(cfg.alpha));
    let _ = writeln!(text, "theta = {}", format_float(cfg.theta));
    let mode = if trace.errors().is_some() { "contraction" } else { "nonexpansive" };
    let _ = writeln!(text, "mode = {mode}");
    let _ = writeln!(text, "final_gap_opt = {}", opt(summary.gap_opt));
    let _ = writeln!(text, "final_gap_feas = {}", opt(summary.gap_feas));
    let _ = writeln!(text, "final_err_to_ref = {}", opt(summary.err_to_ref));
    let _ = writeln!(text, "final_lower_obj = {}", opt(summary.lower_obj));
    let _ = writeln!(text, "total_inner_iterations = {}", summary.total_inner);
    let _ = writeln!(
        text,
        "combined_complexity_bound = {}",
        opt(complexity_bound(&trace, inst.bundle.constants.d_m))
    );
    let _ = writeln!(text, "wall_time_s = {:.6}", elapsed.as_secs_f64());
    let summary_path = dir.join("summary.txt");
    std::fs::write(&summary_path, text).map_err(|e| io_err(&summary_path, e))?;

    if let Some(data) = &inst.inpainting {
        for (name, img) in [
            ("original.pgm", &data.original),
            ("corrupt.pgm", &data.corrupt),
            ("restored.pgm", &wbar),
        ] {
            let p = dir.join(name);
            save_pgm(&p, img).map_err(|e| io_err(&p, e))?;
        }
        let p = dir.join("restored.csv");
        save_matrix_csv(&p, &wbar).map_err(|e| io_err(&p, e))?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub encoding: Vec<String>,
    pub b: Vec<f64>,
    pub seed: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
struct Cell {
    alpha: Option<f64>,
    encoding: Option<String>,
    b: Option<f64>,
    seed: Option<u64>,
}

impl Cell {
    fn name(&self) -> String {
        let mut parts = Vec::new();
        if let Some(a) = self.alpha {
            parts.push(format!("alpha-{a}"));
        }
        if let Some(e) = &self.encoding {
            parts.push(format!("encoding-{}", e.to_lowercase()));
        }
        if let Some(b) = self.b {
            parts.push(format!("b-{b}"));
        }
        if let Some(s) = self.seed {
            parts.push(format!("seed-{s}"));
        }
        parts.join("_")
    }
}

fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().cloned().map(Some).collect()
    }
}

impl Grid {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.encoding.is_empty() && self.b.is_empty() && self.seed.is_empty()
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for alpha in axis(&self.alpha) {
            for encoding in axis(&self.encoding) {
                for b in axis(&self.b) {
                    for seed in axis(&self.seed) {
                        out.push(Cell {
                            alpha,
                            encoding: encoding.clone(),
                            b,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn cmd_sweep(experiment: Experiment, s: &Settings, grid: &Grid, jobs: usize) -> Result<(), CliError> {
    if grid.is_empty() {
        println!("empty grid, nothing to run");
        return Ok(());
    }
    let base_dir = s.output_dir(experiment);
    std::fs::create_dir_all(&base_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", base_dir.display())))?;
    let cells = grid.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<(Cell, Result<RunSummary, CliError>)> = pool.install(|| {
        cells
            .into_par_iter()
            .map(|cell| {
                let mut cs = s.clone();
                cs.alpha = cell.alpha.or(cs.alpha);
                cs.encoding = cell.encoding.clone().or(cs.encoding);
                cs.b = cell.b.or(cs.b);
                cs.seed = cell.seed.or(cs.seed);
                cs.output_dir = Some(base_dir.join(cell.name()));
                let r = cmd_run(experiment, &cs);
                (cell, r)
            })
            .collect()
    });

    let mut index = String::from(
        "cell,alpha,encoding,b,seed,status,total_inner,gap_opt,gap_feas,err_to_ref,lower_obj,message\n",
    );
    let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
    let mut worst = 0u8;
    for (cell, r) in &results {
        let head = format!(
            "{},{},{},{},{}",
            cell.name(),
            cell.alpha.map(|a| a.to_string()).unwrap_or_default(),
            cell.encoding.clone().unwrap_or_default(),
            cell.b.map(|b| b.to_string()).unwrap_or_default(),
            cell.seed.map(|v| v.to_string()).unwrap_or_default(),
        );
        match r {
            Ok(sum) => {
                let _ = writeln!(
                    index,
                    "{head},ok,{},{},{},{},{},",
                    sum.total_inner,
                    opt(sum.gap_opt),
                    opt(sum.gap_feas),
                    opt(sum.err_to_ref),
                    opt(sum.lower_obj)
                );
            }
            Err(e) => {
                worst = worst.max(e.exit_code());
                eprintln!("cell {} failed: {e}", cell.name());
                let msg = e.to_string().replace(['"', ','], " ");
                let _ = writeln!(index, "{head},failed,,,,,,{msg}");
            }
        }
    }
    let index_path = base_dir.join("index.csv");
    std::fs::write(&index_path, index).map_err(|e| io_err(&index_path, e))?;
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("{} cells, {failed} failed, index at {}", results.len(), index_path.display());
    match worst {
        0 => Ok(()),
        1 => Err(CliError::Config(format!("{failed} cells failed"))),
        _ => Err(CliError::Runtime(format!("{failed} cells failed"))),
    }
}

pub fn cmd_verify() -> ExitCode {
    let checks = verify::run_all();
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {:<width$}  {}", c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
