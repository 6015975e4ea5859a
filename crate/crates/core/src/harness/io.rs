//! CSV persistence of traces and sweep tables.
//!
//! Floats are written with 17 significant digits so that a re-read value is
//! bit-identical to the one written. Missing optional values are empty cells.

use std::path::Path;

use super::run::{Trace, TraceRecord};
use super::sweep::{SweepRow, SweepTable};
use crate::error::{Error, Result};

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, what: &str) -> Error {
    Error::Config(format!("{}: malformed {what}", path.display()))
}

/// Column names of a trace with `blocks` blocks and `units` masking units.
pub fn trace_header(blocks: usize, units: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "loss".into(), "batch_loss".into()];
    h.extend((0..blocks).map(|b| format!("grad_norm_b{b}")));
    h.extend((0..units).map(|u| format!("alignment_u{u}")));
    h.extend((0..units).map(|u| format!("scale_u{u}")));
    h.extend((0..units).map(|u| format!("mask_u{u}")));
    h.extend((0..blocks).map(|b| format!("rho_b{b}")));
    h.extend(["condition_number", "descent_slack", "prop1_residual"].map(String::from));
    h
}

pub fn write_trace_csv(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(trace_header(trace.num_blocks, trace.num_units))
        .map_err(csv_err(path))?;
    for r in &trace.records {
        let mut row = vec![r.step.to_string(), fmt_f64(r.loss), fmt_f64(r.batch_loss)];
        row.extend(r.grad_norm.iter().copied().map(fmt_f64));
        row.extend(r.alignment.iter().copied().map(fmt_f64));
        row.extend(r.scale.iter().copied().map(fmt_f64));
        row.extend(r.mask.iter().map(|&m| u8::from(m).to_string()));
        row.extend(r.rho.iter().copied().map(fmt_f64));
        row.push(fmt_opt(r.condition_number));
        row.push(fmt_opt(r.descent_slack));
        row.push(fmt_opt(r.prop1_residual));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let blocks = count("grad_norm_b");
    let units = count("scale_u");
    if header.iter().collect::<Vec<_>>() != trace_header(blocks, units) {
        return Err(parse_err(path, "trace header"));
    }
    let mut trace = Trace::new(blocks, units);
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let mut it = rec.iter();
        let mut next = || it.next().ok_or_else(|| parse_err(path, "trace row"));
        let f = |s: &str| s.parse::<f64>().map_err(|_| parse_err(path, "float"));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { f(s).map(Some) };
        let step = next()?.parse().map_err(|_| parse_err(path, "step"))?;
        let loss = f(next()?)?;
        let batch_loss = f(next()?)?;
        let mut take = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| f(next()?)).collect() };
        let grad_norm = take(blocks)?;
        let alignment = take(units)?;
        let scale = take(units)?;
        let mask = take(units)?.into_iter().map(|m| m != 0.0).collect();
        let rho = take(blocks)?;
        let condition_number = opt(next()?)?;
        let descent_slack = opt(next()?)?;
        let prop1_residual = opt(next()?)?;
        trace.records.push(TraceRecord {
            step,
            loss,
            batch_loss,
            grad_norm,
            alignment,
            scale,
            mask,
            rho,
            condition_number,
            descent_slack,
            prop1_residual,
        });
    }
    Ok(trace)
}

pub const SWEEP_HEADER: [&str; 16] = [
    "cell",
    "learning_rate",
    "survival_p",
    "temperature",
    "mode",
    "tail",
    "arrangement",
    "dense_moments",
    "seeds",
    "mean_final_loss",
    "std_final_loss",
    "mean_best_loss",
    "diverged_runs",
    "largest_stable",
    "status",
    "message",
];

fn enum_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn write_sweep_csv(table: &SweepTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SWEEP_HEADER).map_err(csv_err(path))?;
    for row in &table.rows {
        let SweepRow {
            cell,
            learning_rate,
            survival_p,
            temperature,
            mode,
            tail,
            arrangement,
            dense_moments,
            seeds,
            mean_final_loss,
            std_final_loss,
            mean_best_loss,
            diverged_runs,
            status,
            message,
            ..
        } = row;
        w.write_record([
            cell.to_string(),
            fmt_f64(*learning_rate),
            fmt_f64(*survival_p),
            fmt_f64(*temperature),
            enum_name(mode),
            tail.as_ref().map(enum_name).unwrap_or_default(),
            arrangement.as_ref().map(enum_name).unwrap_or_default(),
            dense_moments.to_string(),
            seeds.to_string(),
            fmt_opt(*mean_final_loss),
            fmt_opt(*std_final_loss),
            fmt_opt(*mean_best_loss),
            diverged_runs.to_string(),
            u8::from(*diverged_runs == 0 && status.as_str() == "ok").to_string(),
            status.clone(),
            message.clone(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
