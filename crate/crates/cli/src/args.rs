use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use dlacache::cachemodel::{CacheConfig, DistanceMode, SplitPolicy};
use dlacache::predictor::{SmoothingMode, SmoothingParams, DEFAULT_ALPHA, DEFAULT_BETA};
use dlacache::timings::MachineModel;
use dlacache::trace::{Algorithm, GemmNtInput, TraceOptions};

#[derive(Debug, Parser)]
#[command(
    name = "dlacache",
    version,
    about = "Cache-aware kernel runtime prediction for blocked dense linear algebra"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the kernel invocation trace (trace.json, trace.csv)
    Trace(TraceArgs),
    /// Access distances, relative distances and LRU hit fractions per operand (classification.csv)
    Classify(ClassifyArgs),
    /// Synthesize a timing table with oracle-derived in-algorithm times (timings.csv)
    Synth(SynthArgs),
    /// Predict per-invocation times from a timing table (predictions.csv, error_report.json)
    Predict(PredictArgs),
    /// Split a predictions file into one series per kernel
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgArg {
    Geqrf,
    Potrf,
    Trtri,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Geqrf => Algorithm::Geqrf,
            AlgArg::Potrf => Algorithm::Potrf,
            AlgArg::Trtri => Algorithm::Trtri,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GemmNtArg {
    W2,
    A12,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sign,
    Tanh,
}

/// Which trace to build.
#[derive(Clone, Debug, Args)]
pub struct Scenario {
    #[arg(long, value_enum, default_value = "geqrf")]
    pub alg: AlgArg,
    /// Matrix order
    #[arg(long, default_value_t = 1568, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Block size
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub b: u64,
    /// Second input of the trailing gemm_NT update
    #[arg(long, value_enum, default_value = "w2")]
    pub gemm_nt_operand: GemmNtArg,
}

impl Scenario {
    pub fn options(&self) -> TraceOptions {
        TraceOptions {
            gemm_nt_input: match self.gemm_nt_operand {
                GemmNtArg::W2 => GemmNtInput::W2,
                GemmNtArg::A12 => GemmNtInput::A12,
            },
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct CacheArgs {
    /// Cache capacity in bytes; K/M suffixes (KiB, MiB) are accepted
    #[arg(long, default_value = "6MiB", value_parser = parse_bytes)]
    pub cache: u64,
    /// Cache line size in bytes
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub line: u64,
    /// Split kernels whose written data is much smaller than their inputs
    #[arg(long, overrides_with = "no_split")]
    pub split: bool,
    #[arg(long, overrides_with = "split")]
    pub no_split: bool,
    /// Deduplicate cache lines when accumulating distances
    #[arg(long, overrides_with = "no_dedup")]
    pub dedup: bool,
    #[arg(long, overrides_with = "dedup")]
    pub no_dedup: bool,
}

impl CacheArgs {
    pub fn config(&self) -> CacheConfig {
        CacheConfig {
            capacity: self.cache,
            line_size: self.line,
            distance_mode: if self.no_dedup {
                DistanceMode::RawSum
            } else {
                DistanceMode::Dedup
            },
            ..CacheConfig::default()
        }
    }

    pub fn policy(&self) -> SplitPolicy {
        if self.no_split {
            SplitPolicy::disabled()
        } else {
            SplitPolicy::default()
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct SmoothArgs {
    /// Steepness of the smoothing for r >= 0
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Steepness of the smoothing for r < 0
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, value_enum, default_value = "tanh")]
    pub mode: ModeArg,
}

impl SmoothArgs {
    pub fn params(&self) -> SmoothingParams {
        SmoothingParams {
            alpha: self.alpha,
            beta: self.beta,
            mode: match self.mode {
                ModeArg::Sign => SmoothingMode::Sign,
                ModeArg::Tanh => SmoothingMode::Tanh,
            },
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub scenario: Scenario,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub scenario: Scenario,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scenario: Scenario,
    #[command(flatten)]
    pub cache: CacheArgs,
    /// Peak flops per cycle
    #[arg(long)]
    pub peak: Option<f64>,
    /// Bytes per cycle with operands in cache
    #[arg(long)]
    pub cache_bw: Option<f64>,
    /// Bytes per cycle with operands in memory
    #[arg(long)]
    pub mem_bw: Option<f64>,
    /// Fixed cycles per kernel call
    #[arg(long)]
    pub overhead: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn machine(&self) -> MachineModel {
        let d = MachineModel::default();
        MachineModel {
            peak_flops_per_cycle: self.peak.unwrap_or(d.peak_flops_per_cycle),
            cache_bw_bytes_per_cycle: self.cache_bw.unwrap_or(d.cache_bw_bytes_per_cycle),
            mem_bw_bytes_per_cycle: self.mem_bw.unwrap_or(d.mem_bw_bytes_per_cycle),
            kernel_overhead_cycles: self.overhead.unwrap_or(d.kernel_overhead_cycles),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub scenario: Scenario,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub smooth: SmoothArgs,
    /// Timing table: invocation_index,kernel,variant,t_ic,t_ooc[,t_alg]
    #[arg(long)]
    pub timings: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReportArgs {
    /// Predictions file [default: <out>/predictions.csv]
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Directory receiving one <kernel>.csv per series
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, suffix) = s.split_at(split);
    let value: u64 = digits
        .parse()
        .map_err(|_| format!("invalid byte count '{s}'"))?;
    let scale = match suffix.trim() {
        "" | "B" => 1,
        "K" | "k" | "KiB" => 1 << 10,
        "M" | "MiB" => 1 << 20,
        "G" | "GiB" => 1 << 30,
        other => return Err(format!("unknown size suffix '{other}'")),
    };
    match value.checked_mul(scale) {
        Some(0) => Err("byte count must be positive".into()),
        Some(v) => Ok(v),
        None => Err(format!("byte count '{s}' overflows")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn byte_suffixes() {
        assert_eq!(parse_bytes("6MiB"), Ok(6 << 20));
        assert_eq!(parse_bytes("6291456"), Ok(6 << 20));
        assert_eq!(parse_bytes("32K"), Ok(32 << 10));
        assert!(parse_bytes("0").is_err());
        assert!(parse_bytes("6MB").is_err());
        assert!(parse_bytes("lots").is_err());
    }

    #[test]
    fn toggles_default_on_and_last_wins() {
        let cli = Cli::try_parse_from(["dlacache", "classify"]).unwrap();
        let Command::Classify(a) = cli.command else {
            panic!()
        };
        assert!(a.cache.policy().enabled);
        assert_eq!(a.cache.config().distance_mode, DistanceMode::Dedup);
        assert_eq!(a.cache.config().capacity, 6 << 20);

        let cli =
            Cli::try_parse_from(["dlacache", "classify", "--no-split", "--no-dedup"]).unwrap();
        let Command::Classify(a) = cli.command else {
            panic!()
        };
        assert!(!a.cache.policy().enabled);
        assert_eq!(a.cache.config().distance_mode, DistanceMode::RawSum);

        let cli = Cli::try_parse_from(["dlacache", "classify", "--no-split", "--split"]).unwrap();
        let Command::Classify(a) = cli.command else {
            panic!()
        };
        assert!(a.cache.policy().enabled);
    }
}
