//! The three subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use log::info;
use slablu::driver::{benchmark, solve_problem, CsvSink};
use slablu::verify::{run_verify, CheckOutcome, VerifyLevel, VerifyOptions};

use crate::config::{Format, RunConfig};
use crate::{CliError, RunArgs, VerifyArgs};

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Loads, resolves and checks a config; nothing has been written when this
/// fails. With `per_grid` the slab width is checked against every grid;
/// sweeps leave that to the individual rows.
fn prepare(args: &RunArgs, per_grid: bool) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::load(&args.config)?.resolve(&args.overrides())?;
    let setups = cfg.setups()?;
    if per_grid {
        cfg.validate_solver(&setups)?;
    } else {
        cfg.solver().validate(usize::MAX).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(path) = &args.save_config {
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
    }
    Ok(cfg)
}

pub fn solve(args: &RunArgs) -> Result<(), CliError> {
    let cfg = prepare(args, true)?;
    let setups = cfg.setups()?;
    let [setup] = setups.as_slice() else {
        return Err(CliError::Config("`solve` takes a single grid; use `bench` for `sizes`".into()));
    };
    let out = solve_problem(setup, &cfg.solver())?;
    info!("relerr_res = {:.3e}", out.report.relerr_res);

    let mut w = open_output(cfg.output.as_deref())?;
    match cfg.format.unwrap_or_default() {
        Format::Csv => CsvSink::new(&mut w, false)?.write(&out.report.csv_record())?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &out.report).map_err(slablu::SlabError::from)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows are appended and flushed as each run completes, so an interrupted
/// CSV sweep leaves every finished row on disk. JSON output is written once
/// at the end.
pub fn bench(args: &RunArgs) -> Result<(), CliError> {
    let cfg = prepare(args, false)?;
    let setups = cfg.setups()?;
    let solver = cfg.solver();
    let mut w = open_output(cfg.output.as_deref())?;
    match cfg.format.unwrap_or_default() {
        Format::Csv => {
            let mut sink = CsvSink::new(&mut w, true)?;
            benchmark(&setups, &solver, |row| {
                info!("{}×{}: {}", row.setup.n1, row.setup.n2, row.status);
                sink.write(&row.csv_record(&solver))
            })?;
        }
        Format::Json => {
            let rows = benchmark(&setups, &solver, |_| Ok(()))?;
            serde_json::to_writer_pretty(&mut w, &rows).map_err(slablu::SlabError::from)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_outcomes(w: &mut dyn Write, outcomes: &[CheckOutcome], format: Format) -> Result<(), CliError> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, outcomes).map_err(slablu::SlabError::from)?;
            writeln!(w)?;
        }
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut *w);
            for o in outcomes {
                csv.serialize(o).map_err(io::Error::other)?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let level = if args.full { VerifyLevel::Full } else { VerifyLevel::Quick };
    let opts = VerifyOptions {
        seed: args.seed,
        sign_fault: args.inject_sign_fault,
    };
    let outcomes = run_verify(level, opts);
    for o in &outcomes {
        eprintln!(
            "{} {:<24} {:>7.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
    }
    if let Some(path) = &args.output {
        let mut w = open_output(Some(path))?;
        write_outcomes(&mut w, &outcomes, args.format.unwrap_or_default())?;
        w.flush()?;
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed))
    }
}
