use std::io::Write;

use super::{
    relative_access_distance, AccessDistance, AccessHistory, CacheConfig, HistoryLimit,
    OracleResult, SplitPolicy,
};
use crate::fmt::sig6;
use crate::lines::LineSet;
use crate::trace::{Role, Trace};

#[derive(Clone, Debug, PartialEq)]
pub struct OperandClass {
    /// Position in the invocation's operand list.
    pub ordinal: usize,
    pub role: Role,
    pub lines: u64,
    pub distance: AccessDistance,
    pub r: f64,
}

impl OperandClass {
    pub fn expected_in_cache(&self) -> bool {
        self.r >= 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvocationClass {
    pub index: usize,
    pub operands: Vec<OperandClass>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub invocations: Vec<InvocationClass>,
    /// History length actually used (`None` = unlimited).
    pub history_limit: Option<usize>,
}

impl Classification {
    pub fn len(&self) -> usize {
        self.invocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invocations.is_empty()
    }
}

/// Upper bound on the records one blocked step can push.
pub(crate) fn records_per_iteration(trace: &Trace, policy: &SplitPolicy) -> usize {
    let per_step = trace.max_invocations_per_step().max(1);
    if policy.enabled {
        2 * per_step
    } else {
        per_step
    }
}

/// Scans the trace in order, computing every operand's access distance
/// against the history of the preceding invocations.
pub fn classify(trace: &Trace, config: &CacheConfig, policy: &SplitPolicy) -> Classification {
    let limit = match config.history_limit {
        HistoryLimit::Unlimited => None,
        HistoryLimit::Records(n) => Some(n),
        HistoryLimit::PerIteration => Some(records_per_iteration(trace, policy)),
    };
    let mut history = match limit {
        Some(n) => AccessHistory::with_limit(n),
        None => AccessHistory::unlimited(),
    };

    let mut invocations = Vec::with_capacity(trace.len());
    for inv in &trace.invocations {
        let lines: Vec<LineSet> = inv
            .operands
            .iter()
            .map(|o| o.region.lines(config.line_size))
            .collect();
        let operands = inv
            .operands
            .iter()
            .zip(&lines)
            .enumerate()
            .map(|(ordinal, (op, l))| {
                let distance = history.distance_of_lines(l, config.distance_mode);
                OperandClass {
                    ordinal,
                    role: op.role,
                    lines: l.len(),
                    distance,
                    r: relative_access_distance(distance, config),
                }
            })
            .collect();
        invocations.push(InvocationClass {
            index: inv.index,
            operands,
        });
        history.push_with_lines(inv, &lines, policy);
    }
    Classification {
        invocations,
        history_limit: limit,
    }
}

/// `invocation_index,kernel,operand_ordinal,role,lines,distance_lines,r,oracle_hit_fraction`;
/// infinite distances print as `inf`, a missing oracle leaves the last column empty.
pub fn write_classification_csv<W: Write>(
    trace: &Trace,
    classification: &Classification,
    oracle: Option<&OracleResult>,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "invocation_index",
        "kernel",
        "operand_ordinal",
        "role",
        "lines",
        "distance_lines",
        "r",
        "oracle_hit_fraction",
    ])?;
    for (inv, class) in trace.invocations.iter().zip(&classification.invocations) {
        let label = inv.label();
        for op in &class.operands {
            w.write_record([
                class.index.to_string(),
                label.clone(),
                op.ordinal.to_string(),
                op.role.as_str().to_string(),
                op.lines.to_string(),
                op.distance
                    .lines()
                    .map_or_else(|| "inf".to_string(), |d| d.to_string()),
                sig6(op.r),
                oracle.map_or_else(String::new, |o| sig6(o.hit(class.index, op.ordinal))),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cachemodel::lru_oracle;
    use crate::trace::{generate_geqrf_trace, generate_potrf_trace, AddressMap};

    #[test]
    fn small_problem_fits_entirely() {
        // 64x64 doubles = 32 KiB, far below 6 MiB
        let t = generate_geqrf_trace(64, 16, &AddressMap::packed()).unwrap();
        let cfg = CacheConfig::default();
        let c = classify(&t, &cfg, &SplitPolicy::default());
        let oracle = lru_oracle(&t, &cfg);
        for (ic, hits) in c.invocations.iter().zip(&oracle.hit_fractions) {
            for op in &ic.operands {
                if op.distance.is_finite() {
                    assert!(op.expected_in_cache());
                    assert_eq!(hits[op.ordinal], 1.0);
                }
            }
        }
        assert!(c.invocations[0]
            .operands
            .iter()
            .all(|o| o.distance == AccessDistance::Infinite));
        // larft reads what geqr2 wrote, but W is touched for the first time
        let larft = &c.invocations[1].operands;
        assert_eq!(larft[0].distance, AccessDistance::Finite(larft[1].lines));
        assert_eq!(larft[1].distance, AccessDistance::Finite(larft[0].lines));
        assert_eq!(larft[2].distance, AccessDistance::Infinite);
    }

    #[test]
    fn csv_dump_shape() {
        let t = generate_potrf_trace(64, 32, &AddressMap::packed()).unwrap();
        let cfg = CacheConfig::default();
        let c = classify(&t, &cfg, &SplitPolicy::default());
        let o = lru_oracle(&t, &cfg);
        let mut buf = Vec::new();
        write_classification_csv(&t, &c, Some(&o), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(
            rows[0],
            "invocation_index,kernel,operand_ordinal,role,lines,distance_lines,r,oracle_hit_fraction"
        );
        assert_eq!(
            rows[1],
            format!(
                "0,potf2_U,0,inout,{},inf,-10,0",
                c.invocations[0].operands[0].lines
            )
        );
        assert_eq!(
            rows[2],
            format!(
                "1,trsm_LUTN,0,input,{},0,1,1",
                c.invocations[1].operands[0].lines
            )
        );
        // 1 + 2 + 2 + 1 operands
        assert_eq!(rows.len(), 7);
    }

    #[test]
    fn per_iteration_limit_counts_split_records() {
        let t = generate_geqrf_trace(96, 32, &AddressMap::packed()).unwrap();
        assert_eq!(records_per_iteration(&t, &SplitPolicy::default()), 78);
        assert_eq!(records_per_iteration(&t, &SplitPolicy::disabled()), 39);
        let c = classify(&t, &CacheConfig::default(), &SplitPolicy::default());
        assert_eq!(c.history_limit, Some(78));
    }
}
