//! Access-history cache model and an exact LRU reference simulator.
//!
//! The model treats the last-level cache as a single fully associative LRU
//! cache. An operand is expected to be resident when fewer than `capacity`
//! bytes of other cache lines were touched since it was last accessed.

mod classify;
mod history;
mod oracle;

use thiserror::Error;

pub use classify::{
    classify, write_classification_csv, Classification, InvocationClass, OperandClass,
};
pub use history::{AccessHistory, AccessRecord};
pub use oracle::{lru_oracle, LruStack, OracleResult};

/// 6 MiB, the shared L2 of the reference machine.
pub const DEFAULT_CAPACITY: u64 = 6 << 20;
pub const DEFAULT_LINE_SIZE: u64 = 64;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.1;
/// Relative distance assigned to never-seen operands.
pub const DEFAULT_R_FLOOR: f64 = -10.0;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line size {0} is not a power of two")]
    LineSize(u64),
    #[error("capacity {capacity} is not a positive multiple of the line size {line_size}")]
    Capacity { capacity: u64, line_size: u64 },
    #[error("split ratio threshold {0} is outside (0, 1]")]
    SplitRatio(f64),
    #[error("history limit must be positive")]
    HistoryLimit,
}

/// How distances accumulate over the visited history records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceMode {
    /// Size of the union of visited lines (true LRU stack distance).
    #[default]
    Dedup,
    /// Plain sum of record sizes; overlapping records are counted repeatedly.
    RawSum,
}

/// How many access records the history retains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HistoryLimit {
    Unlimited,
    /// Enough records for one blocked iteration of the trace being analysed.
    #[default]
    PerIteration,
    Records(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheConfig {
    pub capacity: u64,
    pub line_size: u64,
    pub history_limit: HistoryLimit,
    pub distance_mode: DistanceMode,
    pub r_floor: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            line_size: DEFAULT_LINE_SIZE,
            history_limit: HistoryLimit::default(),
            distance_mode: DistanceMode::default(),
            r_floor: DEFAULT_R_FLOOR,
        }
    }
}

impl CacheConfig {
    pub fn new(capacity: u64, line_size: u64) -> Result<Self, ConfigError> {
        let cfg = Self {
            capacity,
            line_size,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.line_size.is_power_of_two() {
            return Err(ConfigError::LineSize(self.line_size));
        }
        if self.capacity == 0 || !self.capacity.is_multiple_of(self.line_size) {
            return Err(ConfigError::Capacity {
                capacity: self.capacity,
                line_size: self.line_size,
            });
        }
        if self.history_limit == HistoryLimit::Records(0) {
            return Err(ConfigError::HistoryLimit);
        }
        Ok(())
    }

    pub fn capacity_lines(&self) -> u64 {
        self.capacity / self.line_size
    }
}

/// Splitting of a kernel's accesses into an input-only record followed by
/// a record holding only the written operand(s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPolicy {
    pub enabled: bool,
    /// Split when `written_lines <= ratio_threshold * input_only_lines`.
    pub ratio_threshold: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            ratio_threshold: DEFAULT_SPLIT_RATIO,
        }
    }
}

impl SplitPolicy {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(ConfigError::SplitRatio(self.ratio_threshold));
        }
        Ok(())
    }

    pub(crate) fn should_split(&self, written_lines: u64, input_lines: u64) -> bool {
        self.enabled
            && input_lines > 0
            && written_lines as f64 <= self.ratio_threshold * input_lines as f64
    }
}

/// Distinct other cache lines touched since an operand's last access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AccessDistance {
    Finite(u64),
    Infinite,
}

impl AccessDistance {
    pub fn is_finite(self) -> bool {
        matches!(self, AccessDistance::Finite(_))
    }

    pub fn lines(self) -> Option<u64> {
        match self {
            AccessDistance::Finite(d) => Some(d),
            AccessDistance::Infinite => None,
        }
    }
}

/// `(C - d·line) / C`; never-seen operands get the configured floor.
pub fn relative_access_distance(d: AccessDistance, config: &CacheConfig) -> f64 {
    match d {
        AccessDistance::Finite(lines) => {
            let c = config.capacity as f64;
            (c - (lines * config.line_size) as f64) / c
        }
        AccessDistance::Infinite => config.r_floor,
    }
}
