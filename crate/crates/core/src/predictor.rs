//! Blending in-cache and out-of-cache timings into per-invocation predictions.
//!
//! Each operand's relative access distance `r` is mapped through a smoothing
//! function `f` to an in-cache fraction `φ = (1 + f(r)) / 2`. The invocation's
//! in-cache weight is the line-count weighted mean of its operands' `φ`, and
//! the prediction is `w·t_ic + (1 − w)·t_ooc`.

use std::io::Write;
use thiserror::Error;

use crate::cachemodel::{classify, CacheConfig, Classification, SplitPolicy};
use crate::fmt::sig6;
use crate::timings::TimingTable;
use crate::trace::{KernelKind, Trace};

pub const DEFAULT_ALPHA: f64 = 4.0;
pub const DEFAULT_BETA: f64 = 2.0;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no timing row for invocation {0}")]
    MissingTiming(usize),
    #[error("classification covers {classified} invocations but the trace has {expected}")]
    ClassificationMismatch { classified: usize, expected: usize },
    #[error("smoothing coefficients must be positive (alpha={alpha}, beta={beta})")]
    InvalidSmoothing { alpha: f64, beta: f64 },
    #[error(transparent)]
    Config(#[from] crate::cachemodel::ConfigError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SmoothingMode {
    /// Step function: +1 for `r >= 0`, −1 otherwise.
    Sign,
    /// `tanh(α r)` for `r >= 0`, `tanh(β r)` below.
    #[default]
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingParams {
    pub alpha: f64,
    pub beta: f64,
    pub mode: SmoothingMode,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            mode: SmoothingMode::Tanh,
        }
    }
}

impl SmoothingParams {
    pub fn sign() -> Self {
        Self {
            mode: SmoothingMode::Sign,
            ..Self::default()
        }
    }

    pub fn tanh(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            mode: SmoothingMode::Tanh,
        }
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(PredictError::InvalidSmoothing {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

pub fn smooth(r: f64, params: &SmoothingParams) -> f64 {
    match params.mode {
        SmoothingMode::Sign => {
            if r >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        SmoothingMode::Tanh => {
            if r >= 0.0 {
                (params.alpha * r).tanh()
            } else {
                (params.beta * r).tanh()
            }
        }
    }
}

/// In-cache fraction of an operand.
pub fn in_cache_fraction(r: f64, params: &SmoothingParams) -> f64 {
    (1.0 + smooth(r, params)) / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperandPrediction {
    pub r: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub invocation_index: usize,
    pub kind: KernelKind,
    pub variant: String,
    /// In-cache weight.
    pub w: f64,
    pub t_ic: f64,
    pub t_ooc: f64,
    pub t_pred: f64,
    pub operands: Vec<OperandPrediction>,
    /// Set when no operand had a nonzero size and `w` fell back to 1.
    pub degenerate: bool,
}

impl Prediction {
    pub fn label(&self) -> String {
        crate::trace::kernel_label(self.kind, &self.variant)
    }
}

pub fn predict(
    trace: &Trace,
    classification: &Classification,
    timings: &TimingTable,
    params: &SmoothingParams,
) -> Result<Vec<Prediction>, PredictError> {
    params.validate()?;
    if classification.len() != trace.len() {
        return Err(PredictError::ClassificationMismatch {
            classified: classification.len(),
            expected: trace.len(),
        });
    }
    trace
        .invocations
        .iter()
        .zip(&classification.invocations)
        .map(|(inv, class)| {
            let row = timings
                .get(inv.index)
                .ok_or(PredictError::MissingTiming(inv.index))?;
            let operands: Vec<OperandPrediction> = class
                .operands
                .iter()
                .map(|o| OperandPrediction {
                    r: o.r,
                    phi: in_cache_fraction(o.r, params),
                })
                .collect();
            let total: f64 = class.operands.iter().map(|o| o.lines as f64).sum();
            let (w, degenerate) = if total > 0.0 {
                let weighted: f64 = class
                    .operands
                    .iter()
                    .zip(&operands)
                    .map(|(o, p)| o.lines as f64 * p.phi)
                    .sum();
                ((weighted / total).clamp(0.0, 1.0), false)
            } else {
                (1.0, true)
            };
            let t_pred = blend(w, row.t_ic, row.t_ooc);
            Ok(Prediction {
                invocation_index: inv.index,
                kind: inv.kind,
                variant: inv.variant.clone(),
                w,
                t_ic: row.t_ic,
                t_ooc: row.t_ooc,
                t_pred,
                operands,
                degenerate,
            })
        })
        .collect()
}

/// `w·t_ic + (1 − w)·t_ooc`, clamped to the interval spanned by the two.
pub fn blend(w: f64, t_ic: f64, t_ooc: f64) -> f64 {
    let t = w * t_ic + (1.0 - w) * t_ooc;
    t.clamp(t_ic.min(t_ooc), t_ic.max(t_ooc))
}

/// Classification followed by prediction over the whole trace.
pub fn pipeline(
    trace: &Trace,
    timings: &TimingTable,
    config: &CacheConfig,
    policy: &SplitPolicy,
    params: &SmoothingParams,
) -> Result<Vec<Prediction>, PredictError> {
    config.validate()?;
    policy.validate()?;
    let classification = classify(trace, config, policy);
    predict(trace, &classification, timings, params)
}

/// `invocation_index,kernel,variant,w,t_ic,t_ooc,t_pred`, plus `t_ref,rel_err`
/// when a reference table with in-algorithm timings is given.
pub fn write_predictions_csv<W: Write>(
    predictions: &[Prediction],
    reference: Option<&TimingTable>,
    out: W,
) -> Result<(), PredictError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "invocation_index",
        "kernel",
        "variant",
        "w",
        "t_ic",
        "t_ooc",
        "t_pred",
    ];
    if reference.is_some() {
        header.extend(["t_ref", "rel_err"]);
    }
    w.write_record(&header)?;
    for p in predictions {
        let mut rec = vec![
            p.invocation_index.to_string(),
            p.kind.to_string(),
            p.variant.clone(),
            sig6(p.w),
            sig6(p.t_ic),
            sig6(p.t_ooc),
            sig6(p.t_pred),
        ];
        if let Some(table) = reference {
            match table.get(p.invocation_index).and_then(|r| r.t_alg) {
                Some(t_ref) => {
                    rec.push(sig6(t_ref));
                    rec.push(sig6((p.t_pred - t_ref) / t_ref));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cachemodel::{AccessDistance, InvocationClass, OperandClass};
    use crate::timings::TimingRow;
    use crate::trace::{Buffer, Dims, KernelInvocation, MatrixLayout, Operand, Role};
    use proptest::prelude::*;

    #[test]
    fn smoothing_reference_values() {
        let p = SmoothingParams::default();
        assert_eq!(smooth(0.0, &p), 0.0);
        assert!((smooth(1.0, &p) - 0.999_329).abs() < 1e-6);
        assert!((smooth(-0.5, &p) - -0.761_594).abs() < 1e-6);
        let s = SmoothingParams::sign();
        assert_eq!(smooth(0.0, &s), 1.0);
        assert_eq!(smooth(-1e-12, &s), -1.0);
        assert_eq!(smooth(-10.0, &p), (-20.0f64).tanh());
    }

    /// One-invocation fixture whose operands have the given (lines, r).
    fn fixture(ops: &[(u64, f64)], t_ic: f64, t_ooc: f64) -> (Trace, Classification, TimingTable) {
        let layout = MatrixLayout::dense(Buffer::A, 0, 8, 8);
        let inv = KernelInvocation {
            index: 0,
            step: 0,
            kind: KernelKind::Gemm,
            variant: "NN".into(),
            dims: Dims::mnk(8, 8, 8),
            operands: ops.iter().map(|_| Operand::input(layout.full())).collect(),
        };
        let trace = Trace {
            algorithm: crate::trace::Algorithm::Geqrf,
            n: 8,
            b: 8,
            layouts: vec![layout],
            invocations: vec![inv],
        };
        let class = Classification {
            invocations: vec![InvocationClass {
                index: 0,
                operands: ops
                    .iter()
                    .enumerate()
                    .map(|(ordinal, &(lines, r))| OperandClass {
                        ordinal,
                        role: Role::Input,
                        lines,
                        distance: AccessDistance::Finite(0),
                        r,
                    })
                    .collect(),
            }],
            history_limit: None,
        };
        let table = TimingTable::new(vec![TimingRow {
            invocation_index: 0,
            kernel: KernelKind::Gemm,
            variant: "NN".into(),
            t_ic,
            t_ooc,
            t_alg: None,
        }])
        .unwrap();
        (trace, class, table)
    }

    #[test]
    fn sign_mode_pure_cases() {
        let (t, c, tt) = fixture(&[(10, 1.0), (5, 0.3)], 100.0, 200.0);
        assert_eq!(
            predict(&t, &c, &tt, &SmoothingParams::sign()).unwrap()[0].t_pred,
            100.0
        );
        let (t, c, tt) = fixture(&[(10, -0.2), (5, -10.0)], 100.0, 200.0);
        assert_eq!(
            predict(&t, &c, &tt, &SmoothingParams::sign()).unwrap()[0].t_pred,
            200.0
        );
        let (t, c, tt) = fixture(&[(7, 1.0), (7, -1.0)], 100.0, 200.0);
        let p = &predict(&t, &c, &tt, &SmoothingParams::sign()).unwrap()[0];
        assert_eq!(p.t_pred, 150.0);
        assert_eq!(p.w, 0.5);
        assert!(!p.degenerate);
    }

    #[test]
    fn zero_sized_operands_fall_back_to_in_cache() {
        let (t, c, tt) = fixture(&[(0, -1.0)], 100.0, 200.0);
        let p = &predict(&t, &c, &tt, &SmoothingParams::sign()).unwrap()[0];
        assert!(p.degenerate);
        assert_eq!(p.w, 1.0);
        assert_eq!(p.t_pred, 100.0);
    }

    #[test]
    fn missing_timing_row_names_the_index() {
        let (t, c, _) = fixture(&[(1, 1.0)], 1.0, 2.0);
        let empty = TimingTable::new(vec![]).unwrap();
        let err = predict(&t, &c, &empty, &SmoothingParams::sign()).unwrap_err();
        assert_eq!(err.to_string(), "no timing row for invocation 0");
    }

    #[test]
    fn equal_timings_ignore_classification() {
        for r in [-10.0, -0.3, 0.0, 0.4, 1.0] {
            let (t, c, tt) = fixture(&[(3, r), (9, -r)], 123.0, 123.0);
            for params in [SmoothingParams::sign(), SmoothingParams::default()] {
                assert_eq!(predict(&t, &c, &tt, &params).unwrap()[0].t_pred, 123.0);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_coefficients() {
        let (t, c, tt) = fixture(&[(1, 1.0)], 1.0, 2.0);
        assert!(predict(&t, &c, &tt, &SmoothingParams::tanh(0.0, 2.0)).is_err());
        assert!(predict(&t, &c, &tt, &SmoothingParams::tanh(4.0, -1.0)).is_err());
    }

    proptest! {
        #[test]
        fn smooth_is_monotone_and_bounded(a in -20.0f64..5.0, b in -20.0f64..5.0, alpha in 0.1f64..50.0, beta in 0.1f64..50.0) {
            let p = SmoothingParams::tanh(alpha, beta);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(smooth(lo, &p) <= smooth(hi, &p));
            prop_assert!(smooth(a, &p) > -1.0 || a * beta < -18.0);
            prop_assert!(smooth(a, &p) <= 1.0);
        }

        #[test]
        fn prediction_bounded_and_monotone_in_r(
            ops in prop::collection::vec((1u64..1000, -10.0f64..1.0), 1..5),
            t_ic in 1.0f64..1e6,
            t_ooc in 1.0f64..1e6,
            bump in 0.0f64..2.0,
            which in 0usize..5,
        ) {
            let params = SmoothingParams::default();
            let (t, c, tt) = fixture(&ops, t_ic, t_ooc);
            let p = predict(&t, &c, &tt, &params).unwrap()[0].clone();
            prop_assert!(p.t_pred >= t_ic.min(t_ooc) && p.t_pred <= t_ic.max(t_ooc));
            let mut raised = ops.clone();
            let i = which % raised.len();
            raised[i].1 += bump;
            let (t2, c2, tt2) = fixture(&raised, t_ic, t_ooc);
            let q = predict(&t2, &c2, &tt2, &params).unwrap()[0].clone();
            prop_assert!(q.w >= p.w - 1e-15);
        }
    }
}
