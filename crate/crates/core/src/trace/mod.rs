//! Kernel-invocation traces of blocked dense factorizations.
//!
//! A [`Trace`] lists every BLAS/LAPACK kernel call a blocked algorithm makes,
//! in order, together with the exact memory regions each call reads and
//! writes. Nothing is computed on matrix contents.

mod generate;
mod io;
mod layout;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use generate::{
    generate_geqrf_trace, generate_geqrf_trace_with, generate_potrf_trace, generate_trace,
    generate_trtri_trace, AddressMap, GemmNtInput, TraceOptions,
};
pub use io::{write_trace_csv, TraceDocument};
pub use layout::{region_to_cache_lines, Buffer, MatrixLayout, Region, Shape};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("block size must satisfy 0 < b <= n (got n={n}, b={b})")]
    InvalidBlocking { n: u64, b: u64 },
    #[error("layouts {0} and {1} overlap in the address map")]
    OverlappingLayouts(Buffer, Buffer),
    #[error("invalid layout for {0}")]
    InvalidLayout(Buffer),
    #[error("malformed trace document: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Geqrf,
    Potrf,
    Trtri,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Geqrf => "geqrf",
            Algorithm::Potrf => "potrf",
            Algorithm::Trtri => "trtri",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geqrf" => Ok(Algorithm::Geqrf),
            "potrf" => Ok(Algorithm::Potrf),
            "trtri" => Ok(Algorithm::Trtri),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Geqr2,
    Larft,
    Copy,
    Trmm,
    Gemm,
    Potf2,
    Trsm,
    Syrk,
    Trti2,
}

impl KernelKind {
    pub const ALL: [KernelKind; 9] = [
        KernelKind::Geqr2,
        KernelKind::Larft,
        KernelKind::Copy,
        KernelKind::Trmm,
        KernelKind::Gemm,
        KernelKind::Potf2,
        KernelKind::Trsm,
        KernelKind::Syrk,
        KernelKind::Trti2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Geqr2 => "geqr2",
            KernelKind::Larft => "larft",
            KernelKind::Copy => "copy",
            KernelKind::Trmm => "trmm",
            KernelKind::Gemm => "gemm",
            KernelKind::Potf2 => "potf2",
            KernelKind::Trsm => "trsm",
            KernelKind::Syrk => "syrk",
            KernelKind::Trti2 => "trti2",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown kernel kind '{s}'"))
    }
}

/// `kind` alone, or `kind_VARIANT` when the call carries flag arguments.
pub fn kernel_label(kind: KernelKind, variant: &str) -> String {
    if variant.is_empty() {
        kind.as_str().to_string()
    } else {
        format!("{}_{}", kind.as_str(), variant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Output,
    Inout,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Output => "output",
            Role::Inout => "inout",
        }
    }

    /// Output or input-output.
    pub fn writes(self) -> bool {
        !matches!(self, Role::Input)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Operand {
    pub region: Region,
    pub role: Role,
}

impl Operand {
    pub fn input(region: Region) -> Self {
        Self {
            region,
            role: Role::Input,
        }
    }

    pub fn output(region: Region) -> Self {
        Self {
            region,
            role: Role::Output,
        }
    }

    pub fn inout(region: Region) -> Self {
        Self {
            region,
            role: Role::Inout,
        }
    }
}

/// Problem dimensions of one kernel call, in elements.
///
/// gemm: `C(m×n) op= A·B` with inner dimension `k`. trmm/trsm: `B` is `m×n`
/// and the triangle's order follows the side flag. geqr2/larft: panel `m×n`.
/// copy: vector length `m`, `n = 1`. potf2/trti2: order `n` (`m = n`).
/// syrk: `C` is `n×n`, inner dimension `k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Dims {
    pub m: u64,
    pub n: u64,
    pub k: Option<u64>,
}

impl Dims {
    pub fn mn(m: u64, n: u64) -> Self {
        Self { m, n, k: None }
    }

    pub fn mnk(m: u64, n: u64, k: u64) -> Self {
        Self { m, n, k: Some(k) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelInvocation {
    pub index: usize,
    pub step: usize,
    pub kind: KernelKind,
    pub variant: String,
    pub dims: Dims,
    pub operands: Vec<Operand>,
}

impl KernelInvocation {
    pub fn label(&self) -> String {
        kernel_label(self.kind, &self.variant)
    }

    /// Operands in the order a kernel is assumed to touch them: input-only
    /// operands first (listed order), then the written ones.
    pub fn access_order(&self) -> impl Iterator<Item = (usize, &Operand)> {
        let inputs = self
            .operands
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.role.writes());
        let written = self
            .operands
            .iter()
            .enumerate()
            .filter(|(_, o)| o.role.writes());
        inputs.chain(written)
    }

    /// Element size of the operands (8 when there are none).
    pub fn elem_size(&self) -> u64 {
        self.operands
            .first()
            .map(|o| o.region.parent.elem)
            .unwrap_or(8)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub n: u64,
    pub b: u64,
    pub layouts: Vec<MatrixLayout>,
    pub invocations: Vec<KernelInvocation>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.invocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invocations.is_empty()
    }

    pub fn layout(&self, buffer: Buffer) -> Option<&MatrixLayout> {
        self.layouts.iter().find(|l| l.buffer == buffer)
    }

    pub fn count_kind(&self, kind: KernelKind) -> usize {
        self.invocations.iter().filter(|i| i.kind == kind).count()
    }

    pub fn kind_counts(&self) -> BTreeMap<KernelKind, usize> {
        let mut counts = BTreeMap::new();
        for inv in &self.invocations {
            *counts.entry(inv.kind).or_insert(0) += 1;
        }
        counts
    }

    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for inv in &self.invocations {
            *counts.entry(inv.label()).or_insert(0) += 1;
        }
        counts
    }

    pub fn num_steps(&self) -> usize {
        self.invocations.last().map_or(0, |i| i.step + 1)
    }

    /// Invocations belonging to blocked step `step`.
    pub fn step_invocations(&self, step: usize) -> impl Iterator<Item = &KernelInvocation> {
        self.invocations.iter().filter(move |i| i.step == step)
    }

    /// Largest number of invocations in any single step.
    pub fn max_invocations_per_step(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        let mut current = None;
        for inv in &self.invocations {
            if current == Some(inv.step) {
                run += 1;
            } else {
                current = Some(inv.step);
                run = 1;
            }
            best = best.max(run);
        }
        best
    }

    /// Structural checks: consecutive indices, operand regions inside their
    /// parents, parents matching the declared layouts, layouts disjoint.
    pub fn validate(&self) -> Result<(), TraceError> {
        for l in &self.layouts {
            if !l.is_valid() {
                return Err(TraceError::InvalidLayout(l.buffer));
            }
        }
        check_disjoint(&self.layouts)?;
        for (pos, inv) in self.invocations.iter().enumerate() {
            if inv.index != pos {
                return Err(TraceError::Malformed(format!(
                    "invocation at position {pos} has index {}",
                    inv.index
                )));
            }
            if inv.operands.is_empty() {
                return Err(TraceError::Malformed(format!(
                    "invocation {pos} has no operands"
                )));
            }
            for op in &inv.operands {
                let declared = self.layout(op.region.buffer()).ok_or_else(|| {
                    TraceError::Malformed(format!(
                        "invocation {pos} references undeclared layout {}",
                        op.region.buffer()
                    ))
                })?;
                if *declared != op.region.parent || !op.region.is_within_parent() {
                    return Err(TraceError::Malformed(format!(
                        "invocation {pos} has an operand outside layout {}",
                        op.region.buffer()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_disjoint(layouts: &[MatrixLayout]) -> Result<(), TraceError> {
    for (i, a) in layouts.iter().enumerate() {
        for b in &layouts[i + 1..] {
            let (sa, ea) = a.byte_span();
            let (sb, eb) = b.byte_span();
            if sa < eb && sb < ea {
                return Err(TraceError::OverlappingLayouts(a.buffer, b.buffer));
            }
        }
    }
    Ok(())
}
