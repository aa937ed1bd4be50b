use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use lpgrad::bench::{ResultRow, RunSummary};
use serde::Serialize;

use crate::error::CliError;

pub const CSV_HEADER: [&str; 16] = [
    "function", "d", "p", "L", "N", "h", "sigma", "law", "radial", "decorrelated", "metric", "rep",
    "seed", "err", "n_evals", "wall_ms",
];

/// Opens `path` for writing, or stdout when absent.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn real(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.function.clone(),
            r.d.to_string(),
            real(r.p),
            r.l.to_string(),
            r.n.to_string(),
            real(r.h),
            real(r.sigma),
            r.law.clone(),
            r.radial.clone(),
            r.decorrelated.to_string(),
            r.metric.clone(),
            r.rep.to_string(),
            r.seed.to_string(),
            real(r.err),
            r.n_evals.to_string(),
            real(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonReport<'a> {
    rows: &'a [ResultRow],
    summary: &'a RunSummary,
}

pub fn write_json<W: Write>(mut out: W, rows: &[ResultRow], summary: &RunSummary) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, &JsonReport { rows, summary })?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ResultRow {
        ResultRow {
            function: "rosenbrock".into(),
            d: 10,
            p: 3.0,
            l: 1,
            n: 11,
            h: 1e-4,
            sigma: 0.01,
            law: "sphere".into(),
            radial: "uniform".into(),
            decorrelated: true,
            metric: "identity".into(),
            rep: 0,
            seed: 7,
            err: 0.0912,
            n_evals: 12,
            wall_ms: 0.0,
            error: None,
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "rosenbrock,10,3e0,1,11,1e-4,1e-2,sphere,uniform,true,identity,0,7,9.12e-2,12,0e0"
        );
    }

    #[test]
    fn json_has_rows_and_summary() {
        let rows = [row()];
        let mut buf = Vec::new();
        write_json(&mut buf, &rows, &RunSummary::from_rows(&rows)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["rows"][0]["L"], 1);
        assert_eq!(v["summary"]["ok"], 1);
    }
}
