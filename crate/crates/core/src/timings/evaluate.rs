use serde::Serialize;
use std::collections::BTreeMap;

use super::{TimingError, TimingTable};
use crate::fmt::round6;
use crate::predictor::Prediction;
use crate::trace::KernelKind;

/// Kinds left out of the error by default: the copies contribute almost
/// nothing to total runtime but have large relative errors.
pub const DEFAULT_EXCLUDED: [KernelKind; 1] = [KernelKind::Copy];

/// Mean absolute relative error of predictions against in-algorithm timings,
/// every included invocation weighted equally.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub mean_abs_rel_error: f64,
    pub n_used: usize,
    pub excluded: Vec<String>,
    /// Keyed by kernel label (`kind` or `kind_VARIANT`).
    pub per_kernel: BTreeMap<String, f64>,
}

impl ErrorReport {
    /// JSON with numbers rounded to six significant digits.
    pub fn to_json(&self) -> String {
        let rounded = ErrorReport {
            mean_abs_rel_error: round6(self.mean_abs_rel_error),
            per_kernel: self
                .per_kernel
                .iter()
                .map(|(k, v)| (k.clone(), round6(*v)))
                .collect(),
            ..self.clone()
        };
        serde_json::to_string_pretty(&rounded).expect("report serializes")
    }
}

pub fn evaluate(
    predictions: &[Prediction],
    reference: &TimingTable,
    exclude_kinds: &[KernelKind],
) -> Result<ErrorReport, TimingError> {
    if reference.rows().iter().all(|r| r.t_alg.is_none()) {
        return Err(TimingError::NoReference);
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut per: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for p in predictions {
        if exclude_kinds.contains(&p.kind) {
            continue;
        }
        let t_alg = reference
            .get(p.invocation_index)
            .and_then(|r| r.t_alg)
            .ok_or(TimingError::MissingReference(p.invocation_index))?;
        let err = (p.t_pred - t_alg).abs() / t_alg;
        sum += err;
        used += 1;
        let slot = per.entry(p.label()).or_insert((0.0, 0));
        slot.0 += err;
        slot.1 += 1;
    }
    if used == 0 {
        return Err(TimingError::EmptyEvaluation);
    }
    let mut excluded: Vec<String> = exclude_kinds.iter().map(|k| k.to_string()).collect();
    excluded.sort();
    excluded.dedup();
    Ok(ErrorReport {
        mean_abs_rel_error: sum / used as f64,
        n_used: used,
        excluded,
        per_kernel: per
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
    })
}
