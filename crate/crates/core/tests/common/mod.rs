//! Independent reference solvers and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seamweld::{delaunay_edges, EdgeList, PairMean, Point, PointCloudPartition};

/// Dense harmonic extension: assembles `L` from the edge list and solves
/// `L_II x_I = -L_IB b` by full-pivot LU.
pub fn dense_dirichlet(n: usize, edges: &EdgeList, boundary: &[usize], values: &[f64]) -> Vec<f64> {
    let mut l = DMatrix::<f64>::zeros(n, n);
    for (a, b) in edges.iter() {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    let mut is_b = vec![None; n];
    for (&i, &v) in boundary.iter().zip(values) {
        is_b[i] = Some(v);
    }
    let interior: Vec<usize> = (0..n).filter(|&i| is_b[i].is_none()).collect();
    let mut out: Vec<f64> = (0..n).map(|i| is_b[i].unwrap_or(0.0)).collect();
    if interior.is_empty() {
        return out;
    }
    let k = interior.len();
    let a = DMatrix::from_fn(k, k, |r, c| l[(interior[r], interior[c])]);
    let rhs = DVector::from_fn(k, |r, _| {
        -(0..n)
            .filter_map(|c| is_b[c].map(|v| l[(interior[r], c)] * v))
            .sum::<f64>()
    });
    let x = a.full_piv_lu().solve(&rhs).expect("interior block is nonsingular");
    for (r, &i) in interior.iter().enumerate() {
        out[i] = x[r];
    }
    out
}

/// Minimum-norm least-squares offsets, `x = (AᵀA)⁺ Aᵀd`, with the
/// pseudoinverse taken from the eigendecomposition of the normal matrix. On a
/// connected pair graph the null space is the constant vector, so the result
/// has zero sum.
pub fn pinv_offsets(pairs: &[PairMean], m: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(pairs.len(), m, |r, c| {
        if c == pairs[r].i {
            -1.0
        } else if c == pairs[r].j {
            1.0
        } else {
            0.0
        }
    });
    let d = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.mean_diff));
    let eig = (a.transpose() * &a).symmetric_eigen();
    let atd = a.transpose() * d;
    let mut x = DVector::<f64>::zeros(m);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 1e-9 {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(&atd) / lambda);
        }
    }
    x.iter().copied().collect()
}

/// Random connected pair graph on `m` vertices: a random spanning tree plus
/// extra edges.
pub fn random_pair_graph(rng: &mut ChaCha8Rng, m: usize) -> Vec<PairMean> {
    let mut set = std::collections::BTreeSet::new();
    for v in 1..m {
        let u = rng.random_range(0..v);
        set.insert((u, v));
    }
    let extra = rng.random_range(0..=m * (m - 1) / 2);
    for _ in 0..extra {
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m);
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    set.into_iter()
        .map(|(i, j)| PairMean {
            i,
            j,
            mean_diff: rng.random_range(-50.0..50.0),
            count: rng.random_range(1..1000),
        })
        .collect()
}

/// `n` random points in the unit square with their Delaunay edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Point>, EdgeList) {
    loop {
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random(), rng.random()))
            .collect();
        if let Ok(e) = delaunay_edges(&pts) {
            return (pts, e);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Re-indexes partitions in the given order.
pub fn permute(parts: &[PointCloudPartition], order: &[usize]) -> Vec<PointCloudPartition> {
    order
        .iter()
        .enumerate()
        .map(|(k, &src)| {
            let p = &parts[src];
            PointCloudPartition::new(k, p.points().to_vec(), p.values().to_vec()).unwrap()
        })
        .collect()
}

/// Merged values keyed by coordinate bits, with the mean removed.
pub fn gauge_fixed(merged: &seamweld::MergedDataset) -> std::collections::HashMap<(u64, u64), f64> {
    let mean = merged.values.iter().sum::<f64>() / merged.len() as f64;
    merged
        .points
        .iter()
        .zip(&merged.values)
        .map(|(p, v)| (p.bits(), v - mean))
        .collect()
}

pub fn max_abs_diff(
    a: &std::collections::HashMap<(u64, u64), f64>,
    b: &std::collections::HashMap<(u64, u64), f64>,
) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().map(|(k, v)| (v - b[k]).abs()).fold(0.0, f64::max)
}
