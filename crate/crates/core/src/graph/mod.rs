//! Per-partition neighborhood graphs and their Laplacians.
//!
//! Each partition's points are connected by the edges of a Delaunay
//! triangulation. The combinatorial Laplacian of that graph (degree on the
//! diagonal, `-1` per edge) is the operator of the Dirichlet problems solved
//! during the cascade. It only depends on the point coordinates, so a built
//! [`PartitionGraph`] can be reused across rounds and across merges.

mod cache;
mod sparse;

pub use cache::{content_key, read_laplacian, write_laplacian, LaplacianCache};
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::point::Point;

/// Undirected simple edge set over local point indices, stored as sorted
/// `(a, b)` pairs with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeList {
    edges: Vec<(usize, usize)>,
}

impl EdgeList {
    /// Normalizes orientation, drops self-loops and duplicates.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn as_slice(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Keeps only edges no longer than `max_len`. Connectivity must be
    /// re-checked by the caller (building a Laplacian does that).
    pub fn filter_max_length(&self, points: &[Point], max_len: f64) -> Self {
        Self {
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(a, b)| points[a].distance(&points[b]) <= max_len)
                .collect(),
        }
    }
}

/// Connected-component labels of the graph, numbered in order of the lowest
/// vertex in each component.
pub fn component_labels(n: usize, edges: &EdgeList) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for (a, b) in edges.iter() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|v| {
            let r = find(&mut parent, v);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            label_of_root[r]
        })
        .collect()
}

/// Edges of a Delaunay triangulation of `points`.
///
/// Cocircular configurations are resolved by the triangulator; any valid
/// diagonal is accepted.
pub fn delaunay_edges(points: &[Point]) -> Result<EdgeList> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{} points, need at least 3",
            points.len()
        )));
    }
    let input: Vec<delaunator::Point> = points
        .iter()
        .map(|p| delaunator::Point { x: p.x, y: p.y })
        .collect();
    let tri = delaunator::triangulate(&input);
    if tri.triangles.is_empty() {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }
    let edges = EdgeList::from_pairs(tri.triangles.chunks_exact(3).flat_map(|t| {
        [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
    }));
    let labels = component_labels(points.len(), &edges);
    if labels.iter().any(|&l| l != 0) {
        // the triangulator drops near-duplicate points
        return Err(Error::DisconnectedGraph { labels });
    }
    Ok(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum EdgeWeighting {
    /// Every edge has weight 1.
    #[default]
    Unit,
    /// Weight `1 / length`.
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GraphOptions {
    pub weighting: EdgeWeighting,
    /// Drop Delaunay edges longer than this (long slivers across data gaps).
    pub max_edge_length: Option<f64>,
}

/// Sparse symmetric graph Laplacian `L = Degree - Adjacency`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    matrix: CsrMatrix,
    degree: Vec<u32>,
}

impl GraphLaplacian {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Per-vertex edge count.
    pub fn degree(&self) -> &[u32] {
        &self.degree
    }

    pub fn order(&self) -> usize {
        self.degree.len()
    }

    pub(crate) fn from_parts(matrix: CsrMatrix, degree: Vec<u32>) -> Self {
        Self { matrix, degree }
    }

    /// Recovers the edge set from the off-diagonal pattern.
    pub fn edges(&self) -> EdgeList {
        let m = &self.matrix;
        EdgeList::from_pairs(
            (0..m.nrows()).flat_map(|i| m.row(i).filter(move |&(j, _)| j > i).map(move |(j, _)| (i, j))),
        )
    }
}

/// Unweighted Laplacian of the graph with `n` vertices and the given edges.
pub fn build_laplacian(n: usize, edges: &EdgeList) -> Result<GraphLaplacian> {
    build_weighted_laplacian(n, edges, |_, _| 1.0)
}

/// Laplacian with caller-supplied positive edge weights.
pub fn build_weighted_laplacian(
    n: usize,
    edges: &EdgeList,
    weight: impl Fn(usize, usize) -> f64,
) -> Result<GraphLaplacian> {
    if let Some((a, b)) = edges.iter().find(|&(a, b)| a >= n || b >= n) {
        return Err(Error::InvalidProblem(format!(
            "edge ({a}, {b}) out of range for {n} vertices"
        )));
    }
    let labels = component_labels(n, edges);
    if labels.iter().any(|&l| l != 0) {
        return Err(Error::DisconnectedGraph { labels });
    }
    let mut degree = vec![0u32; n];
    let mut diag = vec![0.0f64; n];
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (a, b) in edges.iter() {
        let w = weight(a, b);
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidProblem(format!("edge ({a}, {b}) has weight {w}")));
        }
        degree[a] += 1;
        degree[b] += 1;
        diag[a] += w;
        diag[b] += w;
        nbrs[a].push((b, -w));
        nbrs[b].push((a, -w));
    }
    let nnz = n + 2 * edges.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for (i, row) in nbrs.iter_mut().enumerate() {
        row.push((i, diag[i]));
        row.sort_unstable_by_key(|&(j, _)| j);
        for &(j, v) in row.iter() {
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(GraphLaplacian {
        matrix: CsrMatrix::from_parts(n, n, row_ptr, col_idx, values),
        degree,
    })
}

/// Delaunay graph plus Laplacian for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionGraph {
    pub edges: EdgeList,
    pub laplacian: GraphLaplacian,
}

impl PartitionGraph {
    pub fn build(points: &[Point], options: &GraphOptions) -> Result<Self> {
        let mut edges = delaunay_edges(points)?;
        if let Some(max_len) = options.max_edge_length {
            edges = edges.filter_max_length(points, max_len);
        }
        let laplacian = match options.weighting {
            EdgeWeighting::Unit => build_laplacian(points.len(), &edges)?,
            EdgeWeighting::InverseDistance => build_weighted_laplacian(points.len(), &edges, |a, b| {
                1.0 / points[a].distance(&points[b])
            })?,
        };
        Ok(Self { edges, laplacian })
    }
}
