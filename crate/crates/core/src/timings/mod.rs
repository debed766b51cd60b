//! Per-invocation reference timings, in cycles.
//!
//! A table row carries the in-cache time `t_ic`, the out-of-cache time
//! `t_ooc` and, optionally, the time measured inside the running algorithm
//! `t_alg`. Timings are medians the measurer already aggregated; fractional
//! cycle counts are accepted.

mod evaluate;
mod synth;

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::trace::KernelKind;

pub use evaluate::{evaluate, ErrorReport, DEFAULT_EXCLUDED};
pub use synth::{kernel_cost, oracle_reference, synth_timings, KernelCost, MachineModel};

/// Column names of the timing CSV, in order. `t_alg` may be omitted.
pub const TIMING_HEADER: [&str; 6] = [
    "invocation_index",
    "kernel",
    "variant",
    "t_ic",
    "t_ooc",
    "t_alg",
];

#[derive(Debug, Error)]
pub enum TimingError {
    #[error(
        "unexpected header '{0}', expected invocation_index,kernel,variant,t_ic,t_ooc[,t_alg]"
    )]
    Header(String),
    #[error("duplicate invocation_index {0}")]
    Duplicate(usize),
    #[error("invocation_index gap: expected {expected}, found {found} (row {row})")]
    Gap {
        expected: usize,
        found: usize,
        row: usize,
    },
    #[error("row {row}: non-numeric {column} '{value}'")]
    NonNumeric {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: unknown kernel '{value}'")]
    UnknownKernel { row: usize, value: String },
    #[error("row {row}: {column} must be a positive number of cycles, got {value}")]
    NonPositive {
        row: usize,
        column: &'static str,
        value: f64,
    },
    #[error("row {row}: wrong number of fields ({found})")]
    FieldCount { row: usize, found: usize },
    #[error("timing table has {found} rows but the trace has {expected} invocations")]
    LengthMismatch { expected: usize, found: usize },
    #[error("reference timings have no t_alg column")]
    NoReference,
    #[error("no in-algorithm timing for invocation {0}")]
    MissingReference(usize),
    #[error("no invocations left to evaluate after exclusion")]
    EmptyEvaluation,
    #[error("invalid machine model: {0}")]
    Machine(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub invocation_index: usize,
    pub kernel: KernelKind,
    pub variant: String,
    pub t_ic: f64,
    pub t_ooc: f64,
    pub t_alg: Option<f64>,
}

/// Rows indexed by invocation, gap-free from 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingTable {
    rows: Vec<TimingRow>,
}

impl TimingTable {
    /// Validates and sorts `rows`. Rows with `t_ic > t_ooc` are accepted
    /// with a warning; measurement noise produces them.
    pub fn new(mut rows: Vec<TimingRow>) -> Result<Self, TimingError> {
        for (pos, r) in rows.iter().enumerate() {
            check_positive(pos + 1, "t_ic", r.t_ic)?;
            check_positive(pos + 1, "t_ooc", r.t_ooc)?;
            if let Some(t) = r.t_alg {
                check_positive(pos + 1, "t_alg", t)?;
            }
        }
        // stable sort keeps file order among duplicates so errors name the second one
        rows.sort_by_key(|r| r.invocation_index);
        for (expected, r) in rows.iter().enumerate() {
            if r.invocation_index != expected {
                if expected > 0 && r.invocation_index == expected - 1 {
                    return Err(TimingError::Duplicate(r.invocation_index));
                }
                return Err(TimingError::Gap {
                    expected,
                    found: r.invocation_index,
                    row: expected + 1,
                });
            }
        }
        let inverted = rows.iter().filter(|r| r.t_ic > r.t_ooc).count();
        if inverted > 0 {
            log::warn!("{inverted} timing rows have t_ic > t_ooc");
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[TimingRow] {
        &self.rows
    }

    pub fn get(&self, index: usize) -> Option<&TimingRow> {
        self.rows.get(index)
    }

    pub fn has_reference(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.t_alg.is_some())
    }

    pub fn expect_len(&self, expected: usize) -> Result<(), TimingError> {
        if self.rows.len() != expected {
            return Err(TimingError::LengthMismatch {
                expected,
                found: self.rows.len(),
            });
        }
        Ok(())
    }

    /// Multiplies every cycle count by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| TimingRow {
                t_ic: r.t_ic * factor,
                t_ooc: r.t_ooc * factor,
                t_alg: r.t_alg.map(|t| t * factor),
                ..r.clone()
            })
            .collect();
        Self { rows }
    }

    /// Writes the table; the `t_alg` column is present iff any row has one.
    /// Numbers use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TimingError> {
        let with_alg = self.rows.iter().any(|r| r.t_alg.is_some());
        let mut w = csv::Writer::from_writer(out);
        let cols = if with_alg { 6 } else { 5 };
        w.write_record(&TIMING_HEADER[..cols])?;
        for r in &self.rows {
            let mut rec = vec![
                r.invocation_index.to_string(),
                r.kernel.to_string(),
                r.variant.clone(),
                r.t_ic.to_string(),
                r.t_ooc.to_string(),
            ];
            if with_alg {
                rec.push(r.t_alg.map(|t| t.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TimingError> {
        load_timings(input)
    }
}

fn check_positive(row: usize, column: &'static str, value: f64) -> Result<(), TimingError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(TimingError::NonPositive { row, column, value })
    }
}

fn parse_num(row: usize, column: &'static str, value: &str) -> Result<f64, TimingError> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| TimingError::NonNumeric {
            row,
            column,
            value: value.to_string(),
        })
}

/// Parses a timing CSV. Rows are numbered from 1 (the first data row) in
/// error messages.
pub fn load_timings<R: Read>(input: R) -> Result<TimingTable, TimingError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let with_alg = match names.len() {
        5 if names[..] == TIMING_HEADER[..5] => false,
        6 if names[..] == TIMING_HEADER[..] => true,
        _ => return Err(TimingError::Header(names.join(","))),
    };
    let expected_fields = if with_alg { 6 } else { 5 };

    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != expected_fields {
            return Err(TimingError::FieldCount {
                row,
                found: record.len(),
            });
        }
        let index_text = record[0].trim();
        let index: usize = index_text.parse().map_err(|_| TimingError::NonNumeric {
            row,
            column: "invocation_index",
            value: index_text.to_string(),
        })?;
        if !seen.insert(index) {
            return Err(TimingError::Duplicate(index));
        }
        let kernel = record[1].parse().map_err(|_| TimingError::UnknownKernel {
            row,
            value: record[1].to_string(),
        })?;
        let t_alg = if with_alg && !record[5].trim().is_empty() {
            Some(parse_num(row, "t_alg", &record[5])?)
        } else {
            None
        };
        rows.push(TimingRow {
            invocation_index: index,
            kernel,
            variant: record[2].to_string(),
            t_ic: parse_num(row, "t_ic", &record[3])?,
            t_ooc: parse_num(row, "t_ooc", &record[4])?,
            t_alg,
        });
    }
    // report the first gap in file order rather than sorted order
    let mut sorted: Vec<usize> = rows.iter().map(|r| r.invocation_index).collect();
    sorted.sort_unstable();
    if let Some(expected) = sorted
        .iter()
        .enumerate()
        .find(|(e, &i)| *e != i)
        .map(|(e, _)| e)
    {
        let found = sorted[expected];
        let row = rows
            .iter()
            .position(|r| r.invocation_index == found)
            .unwrap()
            + 1;
        return Err(TimingError::Gap {
            expected,
            found,
            row,
        });
    }
    TimingTable::new(rows)
}

/// Loads a timing file and checks it has `expected_len` rows when given.
pub fn load_timings_file(
    path: &Path,
    expected_len: Option<usize>,
) -> Result<TimingTable, TimingError> {
    let table = load_timings(BufReader::new(File::open(path)?))?;
    if let Some(n) = expected_len {
        table.expect_len(n)?;
    }
    Ok(table)
}
