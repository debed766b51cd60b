//! Exact fully associative LRU simulation at cache-line granularity.

use super::CacheConfig;
use crate::lines::LineSet;
use crate::trace::Trace;

const WORDS_PER_BLOCK: usize = 64;
const TIMES_PER_BLOCK: u64 = (WORDS_PER_BLOCK * 64) as u64;

/// LRU recency stack over a dense range of line indices.
///
/// Every access gets a fresh timestamp; a line's stack depth is the number
/// of distinct lines whose latest timestamp is newer than its own. Latest
/// timestamps are kept in a bitset with per-block population counts, so an
/// access is O(1) and finding the residency cut-off is linear in the number
/// of blocks.
#[derive(Clone, Debug)]
pub struct LruStack {
    capacity_lines: u64,
    first_line: u64,
    /// 0 = never accessed
    stamps: Vec<u64>,
    live: Vec<u64>,
    block_counts: Vec<u32>,
    now: u64,
    distinct: u64,
}

impl LruStack {
    /// A stack for lines `first_line .. first_line + line_count` in a cache
    /// holding `capacity_lines` lines.
    pub fn new(capacity_lines: u64, first_line: u64, line_count: u64) -> Self {
        Self {
            capacity_lines,
            first_line,
            stamps: vec![0; line_count as usize],
            live: Vec::new(),
            block_counts: Vec::new(),
            now: 0,
            distinct: 0,
        }
    }

    pub fn distinct_lines(&self) -> u64 {
        self.distinct
    }

    fn slot(&self, line: u64) -> usize {
        let idx = line
            .checked_sub(self.first_line)
            .filter(|&i| i < self.stamps.len() as u64)
            .unwrap_or_else(|| panic!("line {line} outside the simulated range"));
        idx as usize
    }

    fn set_live(&mut self, t: u64, on: bool) {
        let word = (t / 64) as usize;
        let block = (t / TIMES_PER_BLOCK) as usize;
        if word >= self.live.len() {
            self.live.resize(word + 1, 0);
        }
        if block >= self.block_counts.len() {
            self.block_counts.resize(block + 1, 0);
        }
        let bit = 1u64 << (t % 64);
        if on {
            self.live[word] |= bit;
            self.block_counts[block] += 1;
        } else {
            self.live[word] &= !bit;
            self.block_counts[block] -= 1;
        }
    }

    /// Moves `line` to the top of the stack.
    pub fn touch(&mut self, line: u64) {
        let slot = self.slot(line);
        let old = self.stamps[slot];
        if old == 0 {
            self.distinct += 1;
        } else {
            self.set_live(old, false);
        }
        self.now += 1;
        self.stamps[slot] = self.now;
        self.set_live(self.now, true);
    }

    pub fn touch_all(&mut self, lines: &LineSet) {
        for l in lines.iter() {
            self.touch(l);
        }
    }

    /// Smallest timestamp that is still resident; lines last touched at or
    /// after it are in the cache.
    pub fn resident_threshold(&self) -> u64 {
        if self.distinct <= self.capacity_lines {
            return 1;
        }
        let mut need = self.capacity_lines;
        for block in (0..self.block_counts.len()).rev() {
            let count = self.block_counts[block] as u64;
            if count < need {
                need -= count;
                continue;
            }
            let lo = block * WORDS_PER_BLOCK;
            let hi = (lo + WORDS_PER_BLOCK).min(self.live.len());
            for word in (lo..hi).rev() {
                let mut bits = self.live[word];
                let c = bits.count_ones() as u64;
                if c < need {
                    need -= c;
                    continue;
                }
                loop {
                    let top = 63 - bits.leading_zeros() as u64;
                    need -= 1;
                    if need == 0 {
                        return word as u64 * 64 + top;
                    }
                    bits &= !(1u64 << top);
                }
            }
        }
        // capacity_lines == 0: nothing is resident
        u64::MAX
    }

    pub fn is_resident(&self, line: u64, threshold: u64) -> bool {
        let s = self.stamps[self.slot(line)];
        s != 0 && s >= threshold
    }

    /// Fraction of `lines` resident right now (1 for an empty set).
    pub fn hit_fraction(&self, lines: &LineSet, threshold: u64) -> f64 {
        let total = lines.len();
        if total == 0 {
            return 1.0;
        }
        let hits = lines
            .iter()
            .filter(|&l| self.is_resident(l, threshold))
            .count() as u64;
        hits as f64 / total as f64
    }

    /// Number of distinct lines touched since `line`'s last access, or
    /// `None` if it was never touched.
    pub fn stack_depth(&self, line: u64) -> Option<u64> {
        let s = self.stamps[self.slot(line)];
        if s == 0 {
            return None;
        }
        let mut newer = 0u64;
        let first_block = (s / TIMES_PER_BLOCK) as usize;
        for block in first_block + 1..self.block_counts.len() {
            newer += self.block_counts[block] as u64;
        }
        let first_word = (s / 64) as usize;
        let block_end = ((first_block + 1) * WORDS_PER_BLOCK).min(self.live.len());
        for word in first_word + 1..block_end {
            newer += self.live[word].count_ones() as u64;
        }
        let above = if s % 64 == 63 {
            0
        } else {
            self.live[first_word] >> (s % 64 + 1)
        };
        newer += above.count_ones() as u64;
        Some(newer)
    }
}

/// Per-invocation, per-operand resident fractions from an exact LRU run.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// `hit_fractions[i][o]`: operand `o` (listed order) of invocation `i`.
    pub hit_fractions: Vec<Vec<f64>>,
}

impl OracleResult {
    pub fn hit(&self, invocation: usize, operand: usize) -> f64 {
        self.hit_fractions[invocation][operand]
    }
}

/// Replays `trace` through an LRU cache of `config.capacity` bytes.
///
/// Residency of every operand is sampled when its invocation begins. The
/// invocation then touches input-only operands first, then written ones, each
/// in ascending address order.
pub fn lru_oracle(trace: &Trace, config: &CacheConfig) -> OracleResult {
    let line_size = config.line_size;
    let (mut lo, mut hi) = (u64::MAX, 0u64);
    for l in &trace.layouts {
        let lines = l.lines(line_size);
        if let (Some(&(s, _)), Some(&(_, e))) = (lines.runs().first(), lines.runs().last()) {
            lo = lo.min(s);
            hi = hi.max(e);
        }
    }
    if lo > hi {
        lo = 0;
        hi = 0;
    }
    let mut stack = LruStack::new(config.capacity_lines(), lo, hi - lo);

    let mut hit_fractions = Vec::with_capacity(trace.len());
    for inv in &trace.invocations {
        let lines: Vec<LineSet> = inv
            .operands
            .iter()
            .map(|o| o.region.lines(line_size))
            .collect();
        let threshold = stack.resident_threshold();
        hit_fractions.push(
            lines
                .iter()
                .map(|l| stack.hit_fraction(l, threshold))
                .collect(),
        );
        for (ordinal, _) in inv.access_order() {
            stack.touch_all(&lines[ordinal]);
        }
    }
    OracleResult { hit_fractions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook LRU list: most recent at the front.
    struct NaiveLru {
        order: Vec<u64>,
    }

    impl NaiveLru {
        fn touch(&mut self, line: u64) {
            self.order.retain(|&l| l != line);
            self.order.insert(0, line);
        }

        fn depth(&self, line: u64) -> Option<u64> {
            self.order.iter().position(|&l| l == line).map(|p| p as u64)
        }
    }

    proptest! {
        #[test]
        fn matches_naive_lru(
            accesses in prop::collection::vec(0u64..300, 0..3000),
            cap in 1u64..200,
        ) {
            let mut fast = LruStack::new(cap, 0, 300);
            let mut naive = NaiveLru { order: Vec::new() };
            for &a in &accesses {
                fast.touch(a);
                naive.touch(a);
            }
            let th = fast.resident_threshold();
            for line in 0..300 {
                let d = naive.depth(line);
                prop_assert_eq!(fast.stack_depth(line), d);
                prop_assert_eq!(fast.is_resident(line, th), d.is_some_and(|d| d < cap));
            }
        }
    }

    #[test]
    fn alternating_regions_thrash() {
        // each region alone fills the cache, so the other is fully evicted
        let mut s = LruStack::new(100, 0, 1000);
        let a = LineSet::from_runs(vec![(0, 100)]);
        let b = LineSet::from_runs(vec![(500, 620)]);
        for _ in 0..4 {
            let th = s.resident_threshold();
            assert_eq!(s.hit_fraction(&a, th), 0.0);
            s.touch_all(&a);
            let th = s.resident_threshold();
            assert_eq!(s.hit_fraction(&b, th), 0.0);
            s.touch_all(&b);
        }
    }

    #[test]
    fn partially_evicted_region_reports_resident_share() {
        // 60 + 60 lines through a 100-line cache: at the start of each reuse
        // the 40 most recent lines of the region are still resident
        let mut s = LruStack::new(100, 0, 1000);
        let a = LineSet::from_runs(vec![(0, 60)]);
        let b = LineSet::from_runs(vec![(500, 560)]);
        s.touch_all(&a);
        s.touch_all(&b);
        let th = s.resident_threshold();
        assert_eq!(s.hit_fraction(&a, th), 40.0 / 60.0);
        assert_eq!(s.hit_fraction(&b, th), 1.0);
    }

    #[test]
    fn stack_crossing_many_blocks() {
        let n = 3 * TIMES_PER_BLOCK + 17;
        let mut s = LruStack::new(10_000, 0, n);
        for l in 0..n {
            s.touch(l);
        }
        assert_eq!(s.stack_depth(0), Some(n - 1));
        assert_eq!(s.stack_depth(n - 1), Some(0));
        let th = s.resident_threshold();
        assert!(!s.is_resident(n - 10_001, th));
        assert!(s.is_resident(n - 10_000, th));
    }
}
