use std::io::Write;

use lpgrad::bench::{
    moments_check, mse_sweep, run_experiment, table_preset, MseSweep, PresetCell, ResultRow,
    RunSummary,
};
use serde::Serialize;

use crate::cli::{Cli, Command, MomentsArgs, SweepArgs, TableArgs};
use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::output::{sink, write_csv, write_json};

/// Moment checks fail above this many standard errors.
pub const MOMENT_Z_LIMIT: f64 = 5.0;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(args) => {
            let dump = args.dump_config;
            let cfg = args.into_config();
            if dump {
                cfg.validate()?;
                println!("{}", cfg.to_json());
                return Ok(());
            }
            run_config(&cfg)
        }
        Command::Run(args) => {
            let text = std::fs::read_to_string(&args.config).map_err(|e| {
                CliError::Usage(format!("cannot read {}: {e}", args.config.display()))
            })?;
            run_config(&RunConfig::from_json(&text)?)
        }
        Command::Table(args) => table(&args),
        Command::Moments(args) => moments(&args),
        Command::MseSweep(args) => sweep(args),
    }
}

fn strip_timing(rows: &mut [ResultRow], no_timing: bool) {
    if no_timing {
        rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }
}

fn report_failures(rows: &[ResultRow]) -> Result<(), CliError> {
    let failed: Vec<&ResultRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!("rep {} ({}): {}", r.rep, r.law, r.error.as_deref().unwrap_or_default());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} of {} trials failed", failed.len(), rows.len())))
    }
}

pub fn run_config(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.experiment()?;
    let (mut rows, summary) = run_experiment(&spec)?;
    strip_timing(&mut rows, cfg.no_timing);
    let out = sink(cfg.out.as_deref())?;
    match cfg.format {
        Format::Csv => write_csv(out, &rows)?,
        Format::Json => write_json(out, &rows, &summary)?,
    }
    eprintln!(
        "mean err {:.6e} (sd {:.3e}) over {} trials, {:.1} evals each",
        summary.mean_err, summary.sd_err, summary.ok, summary.mean_n_evals
    );
    report_failures(&rows)
}

#[derive(Serialize)]
struct CellReport {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "N")]
    n: usize,
    total_evals: usize,
    reported_err: f64,
    summary: RunSummary,
}

#[derive(Serialize)]
struct TableReport<'a> {
    name: &'a str,
    cells: Vec<CellReport>,
    rows: Vec<ResultRow>,
}

fn table(args: &TableArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::Usage("reps must be at least 1".into()));
    }
    let preset = table_preset(&args.name)?;
    let mut report = TableReport { name: preset.name, cells: Vec::new(), rows: Vec::new() };
    for (cell, spec) in preset.cells.iter().zip(preset.experiments(args.reps, args.seed)) {
        let (mut rows, summary) = run_experiment(&spec)?;
        strip_timing(&mut rows, args.no_timing);
        let PresetCell { l, total_evals, reported_err } = *cell;
        eprintln!(
            "{} L={l} LN={total_evals}: mean err {:.4e} (reported {reported_err:.4e})",
            preset.name, summary.mean_err
        );
        report.cells.push(CellReport { l, n: cell.n(), total_evals, reported_err, summary });
        report.rows.extend(rows);
    }
    let mut out = sink(args.out.as_deref())?;
    match args.format {
        Format::Csv => write_csv(out, &report.rows)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    report_failures(&report.rows)
}

fn moments(args: &MomentsArgs) -> Result<(), CliError> {
    let report = moments_check(args.d, args.p, args.draws, args.seed)?;
    let mut out = sink(None)?;
    if args.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{:<14} {:>14} {:>14} {:>11} {:>7}", "moment", "analytic", "empirical", "se", "z")?;
        for e in &report.entries {
            writeln!(
                out,
                "{:<14} {:>14.6e} {:>14.6e} {:>11.3e} {:>7.2}",
                e.name, e.analytic, e.empirical, e.se, e.z
            )?;
        }
    }
    out.flush()?;
    let worst = report.max_abs_z();
    if worst > MOMENT_Z_LIMIT {
        return Err(CliError::Failed(format!("max |z| = {worst:.2} exceeds {MOMENT_Z_LIMIT}")));
    }
    Ok(())
}

fn write_sweep(out: &mut dyn Write, sweep: &MseSweep, json: bool) -> Result<(), CliError> {
    if json {
        serde_json::to_writer_pretty(&mut *out, sweep)?;
        writeln!(out)?;
    } else {
        let mut w = csv::Writer::from_writer(&mut *out);
        w.write_record(["N", "mse", "se", "reps"])?;
        for p in &sweep.points {
            w.write_record([p.n.to_string(), format!("{:e}", p.mse), format!("{:e}", p.se), p.reps.to_string()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let SweepArgs { problem, n_values, reps, out, json } = args;
    if reps < 2 {
        return Err(CliError::Usage("mse-sweep needs at least 2 reps".into()));
    }
    let smallest = n_values.iter().copied().min().unwrap_or(0);
    let cfg = problem.into_config(smallest, 1);
    let spec = cfg.experiment()?;
    let result = mse_sweep(&spec, &n_values, reps)?;
    write_sweep(&mut sink(out.as_deref())?, &result, json)?;
    match result.fit {
        Some(fit) => eprintln!("log-log slope {:.4} (intercept {:.4})", fit.slope, fit.intercept),
        None => eprintln!("no slope: MSE is zero at some N"),
    }
    Ok(())
}

/// Entry point shared by the binary; returns the process exit status.
pub fn main_with(cli: Cli) -> i32 {
    if let Err(e) = crate::cli::init_threads(cli.threads) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
