//! Synthetic timing tables from a roofline-style machine model.
//!
//! These stand in for measurements when no hardware is at hand: a kernel
//! takes `overhead + max(flops / peak, bytes / bandwidth)` cycles, with the
//! cache bandwidth for the in-cache time and the memory bandwidth for the
//! out-of-cache time.

use super::{TimingError, TimingRow, TimingTable};
use crate::cachemodel::OracleResult;
use crate::predictor::blend;
use crate::trace::{KernelInvocation, KernelKind, Trace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MachineModel {
    pub peak_flops_per_cycle: f64,
    pub cache_bw_bytes_per_cycle: f64,
    pub mem_bw_bytes_per_cycle: f64,
    pub kernel_overhead_cycles: f64,
}

impl Default for MachineModel {
    /// A wide core behind a narrow memory path, so that level-3 kernels
    /// with panel width 32 are bandwidth bound once their data leaves the
    /// cache and compute bound while it stays.
    fn default() -> Self {
        Self {
            peak_flops_per_cycle: 16.0,
            cache_bw_bytes_per_cycle: 32.0,
            mem_bw_bytes_per_cycle: 1.0,
            kernel_overhead_cycles: 200.0,
        }
    }
}

impl MachineModel {
    pub fn validate(&self) -> Result<(), TimingError> {
        let positive = [
            self.peak_flops_per_cycle,
            self.cache_bw_bytes_per_cycle,
            self.mem_bw_bytes_per_cycle,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TimingError::Machine(
                "peak and bandwidths must be positive".into(),
            ));
        }
        if !(self.kernel_overhead_cycles.is_finite() && self.kernel_overhead_cycles >= 0.0) {
            return Err(TimingError::Machine("overhead must be non-negative".into()));
        }
        if self.mem_bw_bytes_per_cycle >= self.cache_bw_bytes_per_cycle {
            return Err(TimingError::Machine(
                "memory bandwidth must be below cache bandwidth".into(),
            ));
        }
        Ok(())
    }

    fn time(&self, cost: KernelCost, bandwidth: f64) -> f64 {
        let compute = cost.flops / self.peak_flops_per_cycle;
        let transfer = cost.bytes / bandwidth;
        self.kernel_overhead_cycles + compute.max(transfer)
    }

    pub fn t_in_cache(&self, cost: KernelCost) -> f64 {
        self.time(cost, self.cache_bw_bytes_per_cycle)
    }

    pub fn t_out_of_cache(&self, cost: KernelCost) -> f64 {
        self.time(cost, self.mem_bw_bytes_per_cycle)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelCost {
    pub flops: f64,
    pub bytes: f64,
}

/// Flop count and operand bytes of one invocation from its dimensions.
///
/// | kind  | flops              | elements moved             |
/// |-------|--------------------|----------------------------|
/// | gemm  | 2mnk               | mk + kn + mn               |
/// | trmm, trsm | m·n·t (t = m for side L, n for side R) | t(t+1)/2 + mn |
/// | syrk  | n(n+1)k            | nk + n(n+1)/2              |
/// | geqr2 | 2mn² − 2n³/3       | mn + n                     |
/// | larft | n²(m − n/3)        | mn + n + n(n+1)/2          |
/// | copy  | 0                  | 2m                         |
/// | potf2, trti2 | n³/3        | n(n+1)/2                   |
pub fn kernel_cost(inv: &KernelInvocation) -> KernelCost {
    let m = inv.dims.m as f64;
    let n = inv.dims.n as f64;
    let k = inv.dims.k.unwrap_or(0) as f64;
    let tri = |t: f64| t * (t + 1.0) / 2.0;
    let (flops, elems) = match inv.kind {
        KernelKind::Gemm => (2.0 * m * n * k, m * k + k * n + m * n),
        KernelKind::Trmm | KernelKind::Trsm => {
            let t = if inv.variant.starts_with('L') { m } else { n };
            (m * n * t, tri(t) + m * n)
        }
        KernelKind::Syrk => (n * (n + 1.0) * k, n * k + tri(n)),
        KernelKind::Geqr2 => (2.0 * m * n * n - 2.0 * n * n * n / 3.0, m * n + n),
        KernelKind::Larft => (n * n * (m - n / 3.0), m * n + n + tri(n)),
        KernelKind::Copy => (0.0, 2.0 * m),
        KernelKind::Potf2 | KernelKind::Trti2 => (n * n * n / 3.0, tri(n)),
    };
    KernelCost {
        flops: flops.max(0.0),
        bytes: elems * inv.elem_size() as f64,
    }
}

/// In-cache and out-of-cache times for every invocation; no `t_alg`.
pub fn synth_timings(trace: &Trace, machine: &MachineModel) -> Result<TimingTable, TimingError> {
    machine.validate()?;
    let rows = trace
        .invocations
        .iter()
        .map(|inv| {
            let cost = kernel_cost(inv);
            TimingRow {
                invocation_index: inv.index,
                kernel: inv.kind,
                variant: inv.variant.clone(),
                t_ic: machine.t_in_cache(cost),
                t_ooc: machine.t_out_of_cache(cost),
                t_alg: None,
            }
        })
        .collect();
    TimingTable::new(rows)
}

/// Fills `t_alg` by blending each row's bounds with the exact LRU hit
/// fractions, weighted by operand line counts.
pub fn oracle_reference(
    table: &TimingTable,
    trace: &Trace,
    oracle: &OracleResult,
    line_size: u64,
) -> Result<TimingTable, TimingError> {
    table.expect_len(trace.len())?;
    let rows = trace
        .invocations
        .iter()
        .zip(table.rows())
        .map(|(inv, row)| {
            let (mut hit, mut total) = (0.0, 0.0);
            for (ordinal, op) in inv.operands.iter().enumerate() {
                let lines = op.region.lines(line_size).len() as f64;
                hit += lines * oracle.hit(inv.index, ordinal);
                total += lines;
            }
            let h = if total > 0.0 { hit / total } else { 1.0 };
            TimingRow {
                t_alg: Some(blend(h, row.t_ic, row.t_ooc)),
                ..row.clone()
            }
        })
        .collect();
    TimingTable::new(rows)
}
