//! Result files: the per-grid-point CSV table and the JSON summary.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SolveOptions, SolveResult, ValueFunction, YGrid};
use crate::error::{Error, Result};
use crate::json::fmt_f64;
use crate::mdp::Mdp;

pub const CSV_HEADER: [&str; 6] = ["state", "row", "col", "y", "value", "action"];

/// Deterministic description of a solve; wall-clock time is kept elsewhere so
/// that repeated runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub concavity_violations: usize,
    pub n_states: usize,
    pub options: SolveOptions,
    pub ygrid: YGrid,
    /// Free-form echo of the configuration that produced the result.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl SolveSummary {
    pub fn new(result: &SolveResult, options: &SolveOptions, config: serde_json::Value) -> Self {
        SolveSummary {
            iterations: result.iterations,
            final_residual: result.final_residual,
            converged: result.converged,
            concavity_violations: result.concavity_violations,
            n_states: result.v_star.n_states(),
            options: SolveOptions { threads: None, ..options.clone() },
            ygrid: result.ygrid.clone(),
            config,
        }
    }
}

/// Value and greedy action at every grid point, as read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: ValueFunction,
    pub actions: Vec<usize>,
}

/// One line per `(state, node)`: `state,row,col,y,value,action`. Grid
/// coordinates are left empty for states without a cell.
pub fn write_result_csv<W: Write>(writer: W, result: &SolveResult, mdp: &Mdp) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER).map_err(csv_error)?;
    let nodes = result.ygrid.nodes();
    for x in 0..result.v_star.n_states() {
        let cell = mdp.layout.as_ref().and_then(|l| l.cell_of(x));
        let (r, c) = match cell {
            Some([r, c]) => (r.to_string(), c.to_string()),
            None => (String::new(), String::new()),
        };
        for (i, &y) in nodes.iter().enumerate() {
            out.write_record([
                x.to_string(),
                r.clone(),
                c.clone(),
                fmt_f64(y),
                fmt_f64(result.value(x, i)),
                result.action(x, i).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_result_csv(path: impl AsRef<Path>, result: &SolveResult, mdp: &Mdp) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_result_csv(std::io::BufWriter::new(file), result, mdp)
}

/// Parse a table written by [`write_result_csv`] against the grid it was solved on.
pub fn read_result_csv<R: Read>(reader: R, ygrid: &YGrid) -> Result<ValueTable> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers().map_err(csv_error)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::validation(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let n = ygrid.len();
    let mut values = Vec::new();
    let mut actions = Vec::new();
    for (k, record) in input.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = k + 2;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                column: idx + 1,
                message: "missing field".into(),
            })
        };
        let parse_err = |idx: usize, what: &str| Error::Parse { line, column: idx + 1, message: format!("bad {what}") };
        let state: usize = field(0)?.parse().map_err(|_| parse_err(0, "state"))?;
        let y: f64 = field(3)?.parse().map_err(|_| parse_err(3, "level"))?;
        let value: f64 = field(4)?.parse().map_err(|_| parse_err(4, "value"))?;
        let action: usize = field(5)?.parse().map_err(|_| parse_err(5, "action"))?;
        if state != k / n || y != ygrid.nodes()[k % n] {
            return Err(Error::Parse {
                line,
                column: 1,
                message: format!("expected state {} at level {}", k / n, ygrid.nodes()[k % n]),
            });
        }
        values.push(value);
        actions.push(action);
    }
    if values.is_empty() || values.len() % n != 0 {
        return Err(Error::validation(format!("{} rows do not fill a table of {n} levels", values.len())));
    }
    Ok(ValueTable { values: ValueFunction::from_flat(n, values), actions })
}

pub fn load_result_csv(path: impl AsRef<Path>, ygrid: &YGrid) -> Result<ValueTable> {
    read_result_csv(std::fs::File::open(path)?, ygrid)
}

fn csv_error(err: csv::Error) -> Error {
    let position = err.position().map(|p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line: position.unwrap_or(0), column: 0, message: format!("{kind:?}") },
    }
}
