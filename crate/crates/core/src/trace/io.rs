//! JSON and CSV serialization of traces.

use serde::{Deserialize, Serialize};
use std::io::Write;

use super::{
    Algorithm, Buffer, Dims, KernelInvocation, KernelKind, MatrixLayout, Operand, Region, Role,
    Shape, Trace, TraceError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub name: Buffer,
    pub base: u64,
    pub rows: u64,
    pub cols: u64,
    pub ld: u64,
    pub elem: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperandDoc {
    pub layout: Buffer,
    pub row_off: u64,
    pub col_off: u64,
    pub rows: u64,
    pub cols: u64,
    pub shape: Shape,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvocationDoc {
    pub index: usize,
    pub step: usize,
    pub kind: KernelKind,
    pub variant: String,
    pub m: u64,
    pub n: u64,
    pub k: Option<u64>,
    pub operands: Vec<OperandDoc>,
}

/// On-disk form of a [`Trace`]; operands reference layouts by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub algorithm: Algorithm,
    pub n: u64,
    pub b: u64,
    pub layouts: Vec<LayoutDoc>,
    pub invocations: Vec<InvocationDoc>,
}

impl From<&Trace> for TraceDocument {
    fn from(t: &Trace) -> Self {
        TraceDocument {
            algorithm: t.algorithm,
            n: t.n,
            b: t.b,
            layouts: t
                .layouts
                .iter()
                .map(|l| LayoutDoc {
                    name: l.buffer,
                    base: l.base,
                    rows: l.rows,
                    cols: l.cols,
                    ld: l.ld,
                    elem: l.elem,
                })
                .collect(),
            invocations: t
                .invocations
                .iter()
                .map(|inv| InvocationDoc {
                    index: inv.index,
                    step: inv.step,
                    kind: inv.kind,
                    variant: inv.variant.clone(),
                    m: inv.dims.m,
                    n: inv.dims.n,
                    k: inv.dims.k,
                    operands: inv
                        .operands
                        .iter()
                        .map(|o| OperandDoc {
                            layout: o.region.buffer(),
                            row_off: o.region.row_off,
                            col_off: o.region.col_off,
                            rows: o.region.rows,
                            cols: o.region.cols,
                            shape: o.region.shape,
                            role: o.role,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<TraceDocument> for Trace {
    type Error = TraceError;

    fn try_from(doc: TraceDocument) -> Result<Self, Self::Error> {
        let layouts: Vec<MatrixLayout> = doc
            .layouts
            .iter()
            .map(|l| MatrixLayout {
                buffer: l.name,
                base: l.base,
                rows: l.rows,
                cols: l.cols,
                ld: l.ld,
                elem: l.elem,
            })
            .collect();
        let find = |b: Buffer| {
            layouts
                .iter()
                .find(|l| l.buffer == b)
                .copied()
                .ok_or_else(|| {
                    TraceError::Malformed(format!("operand references undeclared layout {b}"))
                })
        };
        let mut invocations = Vec::with_capacity(doc.invocations.len());
        for inv in doc.invocations {
            let mut operands = Vec::with_capacity(inv.operands.len());
            for o in inv.operands {
                operands.push(Operand {
                    region: Region::new(
                        find(o.layout)?,
                        o.row_off,
                        o.col_off,
                        o.rows,
                        o.cols,
                        o.shape,
                    ),
                    role: o.role,
                });
            }
            invocations.push(KernelInvocation {
                index: inv.index,
                step: inv.step,
                kind: inv.kind,
                variant: inv.variant,
                dims: Dims {
                    m: inv.m,
                    n: inv.n,
                    k: inv.k,
                },
                operands,
            });
        }
        let trace = Trace {
            algorithm: doc.algorithm,
            n: doc.n,
            b: doc.b,
            layouts,
            invocations,
        };
        trace.validate()?;
        Ok(trace)
    }
}

impl Trace {
    pub fn to_json(&self) -> Result<String, TraceError> {
        Ok(serde_json::to_string_pretty(&TraceDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self, TraceError> {
        let doc: TraceDocument = serde_json::from_str(s)?;
        Trace::try_from(doc)
    }
}

/// One row per invocation: `index,step,kind,variant,m,n,k` (`k` empty when absent).
pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "step", "kind", "variant", "m", "n", "k"])?;
    for inv in &trace.invocations {
        w.write_record([
            inv.index.to_string(),
            inv.step.to_string(),
            inv.kind.to_string(),
            inv.variant.clone(),
            inv.dims.m.to_string(),
            inv.dims.n.to_string(),
            inv.dims.k.map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
