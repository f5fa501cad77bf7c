use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::offsets::PairMean;
use crate::overlap::OverlapIndex;

/// Spread (`max - min` across containing partitions) of shared points of one
/// overlap degree.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisagreementStats {
    pub count: usize,
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Checkpoint {
    Input,
    AfterOffsets,
    AfterRound(u32),
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Checkpoint::Input => f.write_str("input"),
            Checkpoint::AfterOffsets => f.write_str("offsets"),
            Checkpoint::AfterRound(p) => write!(f, "round{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeamSnapshot {
    pub checkpoint: Checkpoint,
    pub by_degree: BTreeMap<u32, DisagreementStats>,
}

impl SeamSnapshot {
    pub fn max(&self) -> f64 {
        self.by_degree.values().map(|s| s.max).fold(0.0, f64::max)
    }

    /// Max over points of degree `>= degree`.
    pub fn max_at_or_above(&self, degree: u32) -> f64 {
        self.by_degree
            .range(degree..)
            .map(|(_, s)| s.max)
            .fold(0.0, f64::max)
    }

    pub fn rms(&self) -> f64 {
        let (n, ss) = self
            .by_degree
            .values()
            .fold((0usize, 0.0), |(n, ss), s| (n + s.count, ss + s.rms * s.rms * s.count as f64));
        if n == 0 {
            0.0
        } else {
            (ss / n as f64).sqrt()
        }
    }
}

/// Cross-partition disagreement at every checkpoint plus the post-merge
/// pair means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeamReport {
    pub snapshots: Vec<SeamSnapshot>,
    pub pair_residuals: Vec<PairMean>,
}

impl SeamReport {
    pub fn final_snapshot(&self) -> Option<&SeamSnapshot> {
        self.snapshots.last()
    }

    pub fn snapshot(&self, checkpoint: Checkpoint) -> Option<&SeamSnapshot> {
        self.snapshots.iter().find(|s| s.checkpoint == checkpoint)
    }

    /// Line-oriented `key=value` rendering.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str("format=seam-report-v1\n");
        out.push_str(&format!("checkpoints={}\n", self.snapshots.len()));
        for s in &self.snapshots {
            let c = s.checkpoint;
            writeln!(out, "{c}.max={:e}", s.max()).unwrap();
            writeln!(out, "{c}.rms={:e}", s.rms()).unwrap();
            for (d, st) in &s.by_degree {
                writeln!(out, "{c}.degree{d}.count={}", st.count).unwrap();
                writeln!(out, "{c}.degree{d}.max={:e}", st.max).unwrap();
                writeln!(out, "{c}.degree{d}.rms={:e}", st.rms).unwrap();
            }
        }
        for p in &self.pair_residuals {
            writeln!(out, "pair.{}.{}.count={}", p.i, p.j, p.count).unwrap();
            writeln!(out, "pair.{}.{}.mean_residual={:e}", p.i, p.j, p.mean_diff).unwrap();
        }
        out
    }
}

/// Disagreement at shared points given each partition's current values.
pub fn disagreement<V: AsRef<[f64]>>(index: &OverlapIndex, values: &[V]) -> BTreeMap<u32, DisagreementStats> {
    let mut acc: BTreeMap<u32, (usize, f64, f64)> = BTreeMap::new();
    for (_, members) in index.shared_points() {
        let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(p, l)| {
            let v = values[p].as_ref()[l];
            (lo.min(v), hi.max(v))
        });
        let spread = hi - lo;
        let e = acc.entry(members.len() as u32).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 = e.1.max(spread);
        e.2 += spread * spread;
    }
    acc.into_iter()
        .map(|(d, (n, max, ss))| {
            (
                d,
                DisagreementStats {
                    count: n,
                    max,
                    rms: (ss / n as f64).sqrt(),
                },
            )
        })
        .collect()
}
