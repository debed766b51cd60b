//! Sets of cache-line indices stored as sorted, disjoint, non-adjacent
//! half-open intervals.
//!
//! Matrix footprints are long runs of consecutive lines (one run per column,
//! or one run for a whole contiguous matrix), so interval form keeps every
//! set operation linear in the number of runs rather than the number of lines.

use std::cmp::{max, min};

/// Half-open run of line indices `[start, end)`.
pub type LineRun = (u64, u64);

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LineSet {
    runs: Vec<LineRun>,
}

impl LineSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from arbitrary (possibly overlapping, unsorted, empty) runs.
    pub fn from_runs(mut runs: Vec<LineRun>) -> Self {
        runs.retain(|&(s, e)| s < e);
        runs.sort_unstable();
        let mut out: Vec<LineRun> = Vec::with_capacity(runs.len());
        for (s, e) in runs {
            match out.last_mut() {
                Some(last) if s <= last.1 => last.1 = max(last.1, e),
                _ => out.push((s, e)),
            }
        }
        Self { runs: out }
    }

    /// Lines touched by the byte intervals `[start, end)`.
    pub fn from_byte_intervals<I>(intervals: I, line_size: u64) -> Self
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        assert!(
            line_size.is_power_of_two(),
            "line size {line_size} is not a power of two"
        );
        let shift = line_size.trailing_zeros();
        let runs = intervals
            .into_iter()
            .filter(|&(s, e)| s < e)
            .map(|(s, e)| (s >> shift, ((e - 1) >> shift) + 1))
            .collect();
        Self::from_runs(runs)
    }

    pub fn runs(&self) -> &[LineRun] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Number of distinct lines.
    pub fn len(&self) -> u64 {
        self.runs.iter().map(|&(s, e)| e - s).sum()
    }

    pub fn contains(&self, line: u64) -> bool {
        let idx = self.runs.partition_point(|&(_, e)| e <= line);
        self.runs.get(idx).is_some_and(|&(s, _)| s <= line)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().flat_map(|&(s, e)| s..e)
    }

    pub fn union(&self, other: &LineSet) -> LineSet {
        let mut runs: Vec<LineRun> = Vec::with_capacity(self.runs.len() + other.runs.len());
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() || j < other.runs.len() {
            let next = if j >= other.runs.len()
                || (i < self.runs.len() && self.runs[i].0 <= other.runs[j].0)
            {
                i += 1;
                self.runs[i - 1]
            } else {
                j += 1;
                other.runs[j - 1]
            };
            match runs.last_mut() {
                Some(last) if next.0 <= last.1 => last.1 = max(last.1, next.1),
                _ => runs.push(next),
            }
        }
        LineSet { runs }
    }

    pub fn union_with(&mut self, other: &LineSet) {
        if other.is_empty() {
            return;
        }
        *self = self.union(other);
    }

    /// Cardinality of the intersection.
    pub fn intersection_len(&self, other: &LineSet) -> u64 {
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a, b) = (self.runs[i], other.runs[j]);
            let lo = max(a.0, b.0);
            let hi = min(a.1, b.1);
            if lo < hi {
                total += hi - lo;
            }
            if a.1 <= b.1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn intersects(&self, other: &LineSet) -> bool {
        self.intersection_len(other) > 0
    }

    /// True when every line of `other` is in `self`.
    pub fn is_superset(&self, other: &LineSet) -> bool {
        let mut i = 0;
        for &(s, e) in &other.runs {
            while i < self.runs.len() && self.runs[i].1 <= s {
                i += 1;
            }
            // runs are maximal, so a covered run lies inside a single run of self
            match self.runs.get(i) {
                Some(&(ss, se)) if ss <= s && e <= se => {}
                _ => return false,
            }
        }
        true
    }

    pub fn is_subset(&self, other: &LineSet) -> bool {
        other.is_superset(self)
    }
}

impl FromIterator<u64> for LineSet {
    fn from_iter<T: IntoIterator<Item = u64>>(iter: T) -> Self {
        Self::from_runs(iter.into_iter().map(|l| (l, l + 1)).collect())
    }
}
