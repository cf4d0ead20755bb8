//! CSV and JSON artifacts, and readers for the CSV tables.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use riskdp_core::{InclusionReport, IntervalSet, SimReport, SolveResult};

use crate::CliError;

pub const INF: &str = "INF";
pub const EMPTY: &str = "EMPTY";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(x: f64) -> String {
    if x == f64::INFINITY {
        INF.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_real(s: &str) -> Result<f64, CliError> {
    if s == INF {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::Parse(format!("not a finite number or {INF}: {s:?}"))),
    }
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_real(s).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRow {
    pub x: f64,
    pub value: f64,
    pub u_star: Option<f64>,
    pub z_star: Option<f64>,
}

/// Rows of `value_t{t}.csv` as held in memory. The terminal stage has no
/// policy columns.
pub fn value_rows(result: &SolveResult, t: usize) -> Vec<ValueRow> {
    let table = &result.values[t];
    table
        .grid()
        .points()
        .iter()
        .zip(table.values())
        .enumerate()
        .map(|(i, (&x, &value))| {
            let entry = (t < result.horizon()).then(|| result.policy.stage(t)[i]);
            ValueRow {
                x,
                value,
                u_star: entry.and_then(|e| e.u_star),
                z_star: entry.and_then(|e| e.z_star),
            }
        })
        .collect()
}

pub fn write_value_table(path: &Path, rows: &[ValueRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "value", "u_star", "z_star"])?;
    for r in rows {
        w.write_record([format_real(r.x), format_real(r.value), format_opt(r.u_star), format_opt(r.z_star)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_value_table(path: &Path) -> Result<Vec<ValueRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ValueRow {
                x: parse_real(&rec[0])?,
                value: parse_real(&rec[1])?,
                u_star: parse_opt(&rec[2])?,
                z_star: parse_opt(&rec[3])?,
            })
        })
        .collect()
}

pub fn write_safe_sets(path: &Path, sets: &[Option<IntervalSet>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stage", "lo", "hi"])?;
    for (t, s) in sets.iter().enumerate() {
        match s {
            Some(s) => w.write_record([t.to_string(), format_real(s.lo()), format_real(s.hi())])?,
            None => w.write_record([t.to_string(), EMPTY.into(), EMPTY.into()])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_safe_sets(path: &Path) -> Result<Vec<Option<IntervalSet>>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            if &rec[1] == EMPTY {
                return Ok(None);
            }
            let set = IntervalSet::new(parse_real(&rec[1])?, parse_real(&rec[2])?)
                .map_err(|e| CliError::Parse(e.to_string()))?;
            Ok(Some(set))
        })
        .collect()
}

pub fn write_inclusions(path: &Path, report: &InclusionReport) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, report).map_err(|e| CliError::Io(e.into()))?;
    writeln!(f)?;
    Ok(())
}

/// One `sim.csv` row per swept tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub delta: f64,
    pub mean_cost: f64,
    pub std_error: f64,
    pub stage_cvar: Vec<f64>,
}

impl SimRow {
    pub fn new(delta: f64, report: &SimReport) -> Self {
        SimRow {
            delta,
            mean_cost: report.mean_total_cost,
            std_error: report.std_error,
            stage_cvar: report.per_stage_cvar_estimates.clone(),
        }
    }
}

pub fn write_sim(path: &Path, horizon: usize, rows: &[SimRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["delta".to_string(), "mean_cost".into(), "std_error".into()];
    header.extend((0..horizon).map(|t| format!("cvar_t{t}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![format_real(r.delta), format_real(r.mean_cost), format_real(r.std_error)];
        rec.extend(r.stage_cvar.iter().map(|&c| format_real(c)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sim(path: &Path) -> Result<Vec<SimRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let reals = rec.iter().map(parse_real).collect::<Result<Vec<f64>, _>>()?;
            if reals.len() < 3 {
                return Err(CliError::Parse("short sim.csv row".into()));
            }
            Ok(SimRow { delta: reals[0], mean_cost: reals[1], std_error: reals[2], stage_cvar: reals[3..].to_vec() })
        })
        .collect()
}
