//! Constant per-partition offsets from pairwise overlap means.
//!
//! For each overlapping pair `i < j` the mean of `D_i - D_j` over the overlap
//! is one equation `o_j - o_i = mean_diff`. The least-squares solution is
//! determined up to a common constant; it is fixed by `sum(o) = 0`, which is
//! also the minimum-norm solution. Applying `D_i += o_i` drives every pair
//! mean towards zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::overlap::OverlapIndex;
use crate::point::PointCloudPartition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMean {
    pub i: usize,
    pub j: usize,
    /// Mean over the overlap of `D_i - D_j`.
    pub mean_diff: f64,
    pub count: usize,
}

/// How rows of the offset system are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairWeighting {
    /// One unit row per pair regardless of overlap size.
    #[default]
    Unweighted,
    /// Row scaled by `sqrt(count)`.
    SqrtCount,
}

/// Normalization used to pin the free additive constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    SumZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSolution {
    pub offsets: Vec<f64>,
    /// Norm of the (weighted) residual `A o - d`.
    pub residual_norm: f64,
    pub gauge: Gauge,
}

/// One [`PairMean`] per nonempty overlap, ordered by `(i, j)`.
pub fn pairwise_means(partitions: &[PointCloudPartition], index: &OverlapIndex) -> Vec<PairMean> {
    let pairs: Vec<_> = index.pair_maps().iter().collect();
    pairs
        .par_iter()
        .map(|(&(i, j), matches)| {
            let (vi, vj) = (partitions[i].values(), partitions[j].values());
            let sum: f64 = matches.iter().map(|m| vi[m.local_i] - vj[m.local_j]).sum();
            PairMean {
                i,
                j,
                mean_diff: sum / matches.len() as f64,
                count: matches.len(),
            }
        })
        .collect()
}

pub fn solve_offsets(pairs: &[PairMean], m: usize) -> Result<OffsetSolution> {
    solve_offsets_weighted(pairs, m, PairWeighting::Unweighted)
}

/// Solves the normal equations with the sum-zero constraint appended
/// (a dense `(m + 1) x (m + 1)` KKT system).
pub fn solve_offsets_weighted(
    pairs: &[PairMean],
    m: usize,
    weighting: PairWeighting,
) -> Result<OffsetSolution> {
    if m == 0 {
        return Err(Error::SingularSystem("no partitions".into()));
    }
    for p in pairs {
        if p.i >= p.j || p.j >= m {
            return Err(Error::InvalidProblem(format!(
                "pair ({}, {}) invalid for {m} partitions",
                p.i, p.j
            )));
        }
        if !p.mean_diff.is_finite() || p.count == 0 {
            return Err(Error::InvalidProblem(format!(
                "pair ({}, {}) has mean {} over {} points",
                p.i, p.j, p.mean_diff, p.count
            )));
        }
    }
    check_connected(pairs, m)?;
    if m == 1 {
        return Ok(OffsetSolution {
            offsets: vec![0.0],
            residual_norm: 0.0,
            gauge: Gauge::SumZero,
        });
    }

    let weight = |p: &PairMean| match weighting {
        PairWeighting::Unweighted => 1.0,
        PairWeighting::SqrtCount => p.count as f64,
    };
    let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    for p in pairs {
        let w = weight(p);
        kkt[(p.i, p.i)] += w;
        kkt[(p.j, p.j)] += w;
        kkt[(p.i, p.j)] -= w;
        kkt[(p.j, p.i)] -= w;
        rhs[p.i] -= w * p.mean_diff;
        rhs[p.j] += w * p.mean_diff;
    }
    for k in 0..m {
        kkt[(k, m)] = 1.0;
        kkt[(m, k)] = 1.0;
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("KKT matrix is singular".into()))?;
    let offsets: Vec<f64> = sol.iter().take(m).copied().collect();
    let residual_norm = pairs
        .iter()
        .map(|p| weight(p) * (offsets[p.j] - offsets[p.i] - p.mean_diff).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(OffsetSolution {
        offsets,
        residual_norm,
        gauge: Gauge::SumZero,
    })
}

fn check_connected(pairs: &[PairMean], m: usize) -> Result<()> {
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for p in pairs {
        let (a, b) = (find(&mut parent, p.i), find(&mut parent, p.j));
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    match (1..m).find(|&k| find(&mut parent, k) != root) {
        Some(k) => Err(Error::SingularSystem(format!(
            "pair graph is disconnected (partition {k} unreachable from 0)"
        ))),
        None => Ok(()),
    }
}

/// `D_i += o_i` for every partition.
pub fn apply_offsets(partitions: &mut [PointCloudPartition], solution: &OffsetSolution) {
    assert_eq!(partitions.len(), solution.offsets.len(), "one offset per partition");
    partitions
        .par_iter_mut()
        .zip(solution.offsets.par_iter())
        .for_each(|(part, &o)| {
            if o != 0.0 {
                for v in part.values_mut() {
                    *v += o;
                }
            }
        });
}
