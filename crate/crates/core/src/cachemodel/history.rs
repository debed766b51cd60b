use std::collections::VecDeque;

use super::{AccessDistance, CacheConfig, DistanceMode, SplitPolicy};
use crate::lines::LineSet;
use crate::trace::{KernelInvocation, Operand, Region};

/// The memory touched by one kernel call (or one half of a split call).
#[derive(Clone, Debug, PartialEq)]
pub struct AccessRecord {
    pub source_invocation: usize,
    pub regions: Vec<Region>,
    pub lines: LineSet,
}

impl AccessRecord {
    pub fn size_lines(&self) -> u64 {
        self.lines.len()
    }
}

/// Access records, most recent first.
#[derive(Clone, Debug, Default)]
pub struct AccessHistory {
    records: VecDeque<AccessRecord>,
    limit: Option<usize>,
}

impl AccessHistory {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn with_limit(limit: usize) -> Self {
        Self {
            records: VecDeque::new(),
            limit: Some(limit),
        }
    }

    pub fn limit(&self) -> Option<usize> {
        self.limit
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records from most to least recent.
    pub fn records(&self) -> impl Iterator<Item = &AccessRecord> {
        self.records.iter()
    }

    /// Appends one record for `invocation`, or two when the split policy
    /// applies: input-only operands first, then the written operand(s) as the
    /// more recent record.
    pub fn push_invocation(
        &mut self,
        invocation: &KernelInvocation,
        policy: &SplitPolicy,
        line_size: u64,
    ) {
        let lines: Vec<LineSet> = invocation
            .operands
            .iter()
            .map(|o| o.region.lines(line_size))
            .collect();
        self.push_with_lines(invocation, &lines, policy);
    }

    /// As [`push_invocation`](Self::push_invocation) with the operands' line
    /// sets precomputed (same order as `invocation.operands`).
    pub fn push_with_lines(
        &mut self,
        invocation: &KernelInvocation,
        lines: &[LineSet],
        policy: &SplitPolicy,
    ) {
        debug_assert_eq!(lines.len(), invocation.operands.len());
        let (inputs, written): (Vec<_>, Vec<_>) = invocation
            .operands
            .iter()
            .zip(lines)
            .partition(|(o, _)| !o.role.writes());
        let input_lines: u64 = inputs.iter().map(|(_, l)| l.len()).sum();
        let written_lines = union_of(&written).len();

        if !written.is_empty() && policy.should_split(written_lines, input_lines) {
            self.push_record(invocation.index, &inputs);
            self.push_record(invocation.index, &written);
        } else {
            let all: Vec<(&Operand, &LineSet)> = invocation.operands.iter().zip(lines).collect();
            self.push_record(invocation.index, &all);
        }
    }

    fn push_record(&mut self, source: usize, parts: &[(&Operand, &LineSet)]) {
        self.records.push_front(AccessRecord {
            source_invocation: source,
            regions: parts.iter().map(|(o, _)| o.region).collect(),
            lines: union_of(parts),
        });
        if let Some(limit) = self.limit {
            self.records.truncate(limit);
        }
    }

    /// Access distance of `operand` against the current history.
    pub fn access_distance(&self, operand: &Operand, config: &CacheConfig) -> AccessDistance {
        self.distance_of_lines(
            &operand.region.lines(config.line_size),
            config.distance_mode,
        )
    }

    /// Walks back until a record covering all of `target` is found,
    /// accumulating the lines of every visited record including that one.
    /// The target's own lines are not counted.
    pub fn distance_of_lines(&self, target: &LineSet, mode: DistanceMode) -> AccessDistance {
        if target.is_empty() {
            return AccessDistance::Finite(0);
        }
        let mut seen = LineSet::new();
        let mut raw = 0u64;
        for rec in &self.records {
            match mode {
                DistanceMode::Dedup => seen.union_with(&rec.lines),
                DistanceMode::RawSum => raw += rec.size_lines(),
            }
            if rec.lines.is_superset(target) {
                let d = match mode {
                    DistanceMode::Dedup => seen.len() - seen.intersection_len(target),
                    DistanceMode::RawSum => raw.saturating_sub(target.len()),
                };
                return AccessDistance::Finite(d);
            }
        }
        AccessDistance::Infinite
    }
}

fn union_of(parts: &[(&Operand, &LineSet)]) -> LineSet {
    match parts {
        [] => LineSet::new(),
        [(_, only)] => (*only).clone(),
        _ => {
            let runs = parts
                .iter()
                .flat_map(|(_, l)| l.runs().iter().copied())
                .collect();
            LineSet::from_runs(runs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Buffer, Dims, KernelKind, MatrixLayout, Shape};

    const LINE: u64 = 64;

    /// A dense vector occupying exactly `lines` cache lines starting at line `first`.
    fn vec_region(first: u64, lines: u64) -> Region {
        MatrixLayout::dense(Buffer::A, first * LINE, lines * 8, 1).full()
    }

    fn inv(index: usize, kind: KernelKind, operands: Vec<Operand>) -> KernelInvocation {
        KernelInvocation {
            index,
            step: 0,
            kind,
            variant: String::new(),
            dims: Dims::default(),
            operands,
        }
    }

    fn cfg() -> CacheConfig {
        CacheConfig::new(1 << 20, LINE).unwrap()
    }

    #[test]
    fn split_puts_small_output_last() {
        let a22 = vec_region(0, 90_000);
        let a21 = vec_region(100_000, 200);
        let w2 = vec_region(200_000, 200);
        let gemm = inv(
            0,
            KernelKind::Gemm,
            vec![Operand::input(a22), Operand::input(a21), Operand::inout(w2)],
        );
        let mut h = AccessHistory::unlimited();
        h.push_invocation(&gemm, &SplitPolicy::default(), LINE);
        assert_eq!(h.len(), 2);
        let recs: Vec<_> = h.records().collect();
        assert_eq!(recs[0].regions, vec![w2]);
        assert_eq!(recs[0].size_lines(), 200);
        assert_eq!(recs[1].regions, vec![a22, a21]);
        assert_eq!(recs[1].size_lines(), 90_200);
        assert_eq!(
            h.access_distance(&Operand::inout(w2), &cfg()),
            AccessDistance::Finite(0)
        );

        let mut off = AccessHistory::unlimited();
        off.push_invocation(&gemm, &SplitPolicy::disabled(), LINE);
        assert_eq!(off.len(), 1);
        assert_eq!(
            off.access_distance(&Operand::inout(w2), &cfg()),
            AccessDistance::Finite(90_200)
        );
    }

    #[test]
    fn large_output_is_never_split() {
        let panel = vec_region(0, 5000);
        let tau = vec_region(6000, 1);
        let geqr2 = inv(
            0,
            KernelKind::Geqr2,
            vec![Operand::inout(panel), Operand::output(tau)],
        );
        let mut h = AccessHistory::unlimited();
        h.push_invocation(&geqr2, &SplitPolicy::default(), LINE);
        assert_eq!(h.len(), 1);
        assert_eq!(h.records().next().unwrap().size_lines(), 5001);
    }

    #[test]
    fn distance_counts_intervening_lines() {
        let x = vec_region(0, 10);
        let y = vec_region(100, 1000);
        let mut h = AccessHistory::unlimited();
        h.push_invocation(
            &inv(0, KernelKind::Copy, vec![Operand::output(x)]),
            &SplitPolicy::default(),
            LINE,
        );
        assert_eq!(
            h.access_distance(&Operand::input(x), &cfg()),
            AccessDistance::Finite(0)
        );
        h.push_invocation(
            &inv(1, KernelKind::Copy, vec![Operand::output(y)]),
            &SplitPolicy::default(),
            LINE,
        );
        assert_eq!(
            h.access_distance(&Operand::input(x), &cfg()),
            AccessDistance::Finite(1000)
        );
        let z = vec_region(5000, 3);
        assert_eq!(
            h.access_distance(&Operand::input(z), &cfg()),
            AccessDistance::Infinite
        );
    }

    #[test]
    fn partial_overlap_does_not_stop_the_walk() {
        let whole = vec_region(0, 100);
        let half = vec_region(50, 100);
        let other = vec_region(1000, 7);
        let mut h = AccessHistory::unlimited();
        let p = SplitPolicy::disabled();
        h.push_invocation(
            &inv(0, KernelKind::Copy, vec![Operand::output(whole)]),
            &p,
            LINE,
        );
        h.push_invocation(
            &inv(1, KernelKind::Copy, vec![Operand::output(other)]),
            &p,
            LINE,
        );
        h.push_invocation(
            &inv(2, KernelKind::Copy, vec![Operand::output(half)]),
            &p,
            LINE,
        );
        // walk: half (partial) -> other -> whole (covers); union minus target = 50 + 7
        assert_eq!(
            h.access_distance(&Operand::input(whole), &cfg()),
            AccessDistance::Finite(57)
        );
        let mut raw = cfg();
        raw.distance_mode = DistanceMode::RawSum;
        // 100 + 7 + 100 - 100
        assert_eq!(
            h.access_distance(&Operand::input(whole), &raw),
            AccessDistance::Finite(107)
        );
    }

    #[test]
    fn limit_truncates_oldest() {
        let mut h = AccessHistory::with_limit(2);
        let p = SplitPolicy::disabled();
        for i in 0..5 {
            h.push_invocation(
                &inv(
                    i,
                    KernelKind::Copy,
                    vec![Operand::output(vec_region(i as u64 * 10, 1))],
                ),
                &p,
                LINE,
            );
        }
        assert_eq!(h.len(), 2);
        let src: Vec<_> = h.records().map(|r| r.source_invocation).collect();
        assert_eq!(src, vec![4, 3]);
        assert_eq!(
            h.access_distance(&Operand::input(vec_region(0, 1)), &cfg()),
            AccessDistance::Infinite
        );
    }

    #[test]
    fn triangle_record_does_not_cover_full_block() {
        let m = MatrixLayout::dense(Buffer::A, 0, 64, 64);
        let lower = Region::new(m, 0, 0, 64, 64, Shape::LowerTriangular);
        let mut h = AccessHistory::unlimited();
        h.push_invocation(
            &inv(0, KernelKind::Trti2, vec![Operand::inout(lower)]),
            &SplitPolicy::default(),
            LINE,
        );
        assert_eq!(
            h.access_distance(&Operand::input(m.full()), &cfg()),
            AccessDistance::Infinite
        );
        assert_eq!(
            h.access_distance(&Operand::input(lower), &cfg()),
            AccessDistance::Finite(0)
        );
    }
}
