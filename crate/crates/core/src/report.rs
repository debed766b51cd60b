//! Plot-ready series regrouped from a predictions CSV.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

use crate::fmt::sig6;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no predictions")]
    NoPredictions,
    #[error("predictions file lacks column '{0}'")]
    MissingColumn(&'static str),
    #[error("row {row}: invalid {column} '{value}'")]
    Invalid {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub invocation_index: usize,
    pub t_pred: f64,
    /// Signed `(t_pred − t_ref) / t_ref`.
    pub rel_err: Option<f64>,
}

/// Series keyed by kernel label, each ordered by invocation index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub series: BTreeMap<String, Vec<SeriesPoint>>,
    pub has_errors: bool,
}

impl Report {
    pub fn write_series<W: Write>(&self, label: &str, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        if self.has_errors {
            w.write_record(["invocation_index", "t_pred", "rel_err"])?;
        } else {
            w.write_record(["invocation_index", "t_pred"])?;
        }
        for p in self.series.get(label).map(Vec::as_slice).unwrap_or(&[]) {
            let mut rec = vec![p.invocation_index.to_string(), sig6(p.t_pred)];
            if self.has_errors {
                rec.push(p.rel_err.map(sig6).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the output of [`crate::predictor::write_predictions_csv`].
pub fn read_predictions_report<R: Read>(input: R) -> Result<Report, ReportError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.is_empty() {
        return Err(ReportError::NoPredictions);
    }
    let col = |name: &'static str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or(ReportError::MissingColumn(name))
    };
    let (i_idx, i_kernel, i_variant, i_pred) = (
        col("invocation_index")?,
        col("kernel")?,
        col("variant")?,
        col("t_pred")?,
    );
    let i_err = header.iter().position(|h| h == "rel_err");

    let mut report = Report {
        series: BTreeMap::new(),
        has_errors: i_err.is_some(),
    };
    let mut rows = 0usize;
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = n + 1;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let invalid = |column: &'static str, value: &str| ReportError::Invalid {
            row,
            column,
            value: value.to_string(),
        };
        let invocation_index = field(i_idx)
            .parse()
            .map_err(|_| invalid("invocation_index", field(i_idx)))?;
        let t_pred = field(i_pred)
            .parse()
            .map_err(|_| invalid("t_pred", field(i_pred)))?;
        let rel_err = match i_err.map(field) {
            None | Some("") => None,
            Some(v) => Some(v.parse().map_err(|_| invalid("rel_err", v))?),
        };
        let label = match field(i_variant) {
            "" => field(i_kernel).to_string(),
            v => format!("{}_{v}", field(i_kernel)),
        };
        report.series.entry(label).or_default().push(SeriesPoint {
            invocation_index,
            t_pred,
            rel_err,
        });
        rows += 1;
    }
    if rows == 0 {
        return Err(ReportError::NoPredictions);
    }
    for points in report.series.values_mut() {
        points.sort_by_key(|p| p.invocation_index);
    }
    Ok(report)
}
