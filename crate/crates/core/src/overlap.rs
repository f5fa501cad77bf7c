//! Overlap discovery between partitions.
//!
//! Overlaps are found by a join on [`GlobalPointId`]: all `(id, partition,
//! local)` memberships are sorted by id and grouped. The *overlap degree* of a
//! point is the number of partitions containing it.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::point::{GlobalPointId, PointCloudPartition};

/// One shared point between a pair of partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairMatch {
    pub id: GlobalPointId,
    pub local_i: usize,
    pub local_j: usize,
}

#[derive(Debug, Clone)]
pub struct OverlapIndex {
    pair_maps: BTreeMap<(usize, usize), Vec<PairMatch>>,
    degree: HashMap<GlobalPointId, u32>,
    local_degree: Vec<Vec<u32>>,
    local_ids: Vec<Vec<GlobalPointId>>,
    /// Shared points sorted by id, so iteration order is deterministic.
    shared: Vec<(GlobalPointId, Vec<(usize, usize)>)>,
    /// Position in `shared`.
    memberships: HashMap<GlobalPointId, usize>,
    adjacency: Vec<Vec<usize>>,
}

impl OverlapIndex {
    pub fn partition_count(&self) -> usize {
        self.local_degree.len()
    }

    /// Matches for every pair `(i, j)`, `i < j`, with a nonempty overlap.
    /// Entries are sorted by id.
    pub fn pair_maps(&self) -> &BTreeMap<(usize, usize), Vec<PairMatch>> {
        &self.pair_maps
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&[PairMatch]> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pair_maps.get(&key).map(Vec::as_slice)
    }

    pub fn degree(&self, id: GlobalPointId) -> Option<u32> {
        self.degree.get(&id).copied()
    }

    pub fn degrees(&self) -> &HashMap<GlobalPointId, u32> {
        &self.degree
    }

    /// Overlap degree of each local point of partition `p`.
    pub fn local_degrees(&self, p: usize) -> &[u32] {
        &self.local_degree[p]
    }

    pub fn partition_ids(&self, p: usize) -> &[GlobalPointId] {
        &self.local_ids[p]
    }

    /// `(partition, local index)` of every copy of a shared point, ordered by
    /// partition. `None` for points of degree 1.
    pub fn memberships(&self, id: GlobalPointId) -> Option<&[(usize, usize)]> {
        self.memberships.get(&id).map(|&k| self.shared[k].1.as_slice())
    }

    /// Points of degree >= 2 in id order.
    pub fn shared_points(&self) -> impl Iterator<Item = (GlobalPointId, &[(usize, usize)])> {
        self.shared.iter().map(|(id, m)| (*id, m.as_slice()))
    }

    /// Partitions sharing at least one point with `p`.
    pub fn neighbors(&self, p: usize) -> &[usize] {
        &self.adjacency[p]
    }

    pub fn max_degree(&self) -> u32 {
        max_overlap_degree(self)
    }
}

/// Builds the overlap index. Fails if the partition-adjacency graph has more
/// than one connected component.
pub fn compute_overlaps(partitions: &[PointCloudPartition]) -> Result<OverlapIndex> {
    let m = partitions.len();
    let mut all: Vec<(GlobalPointId, u32, u32)> =
        Vec::with_capacity(partitions.iter().map(|p| p.len()).sum());
    for (pi, part) in partitions.iter().enumerate() {
        all.extend(
            part.global_ids()
                .iter()
                .enumerate()
                .map(|(k, &id)| (id, pi as u32, k as u32)),
        );
    }
    all.sort_unstable();

    let mut local_degree: Vec<Vec<u32>> = partitions.iter().map(|p| vec![1; p.len()]).collect();
    let mut degree = HashMap::with_capacity(all.len());
    let mut memberships = HashMap::new();
    let mut shared = Vec::new();
    let mut pair_maps: BTreeMap<(usize, usize), Vec<PairMatch>> = BTreeMap::new();

    for group in all.chunk_by(|a, b| a.0 == b.0) {
        let id = group[0].0;
        let d = group.len() as u32;
        degree.insert(id, d);
        if d < 2 {
            continue;
        }
        for w in group.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(Error::DuplicatePointInPartition {
                    partition: partitions[w[0].1 as usize].index(),
                    x: partitions[w[0].1 as usize].points()[w[0].2 as usize].x,
                    y: partitions[w[0].1 as usize].points()[w[0].2 as usize].y,
                });
            }
        }
        let members: Vec<(usize, usize)> = group
            .iter()
            .map(|&(_, p, k)| (p as usize, k as usize))
            .collect();
        for &(p, k) in &members {
            local_degree[p][k] = d;
        }
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                let (pi, li) = members[a];
                let (pj, lj) = members[b];
                pair_maps.entry((pi, pj)).or_default().push(PairMatch {
                    id,
                    local_i: li,
                    local_j: lj,
                });
            }
        }
        memberships.insert(id, shared.len());
        shared.push((id, members));
    }

    let mut adjacency = vec![Vec::new(); m];
    for &(i, j) in pair_maps.keys() {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    for a in &mut adjacency {
        a.sort_unstable();
    }

    let components = partition_components(&adjacency);
    if components.len() > 1 {
        let mut components: Vec<Vec<usize>> = components
            .into_iter()
            .map(|c| {
                let mut c: Vec<usize> = c.into_iter().map(|v| partitions[v].index()).collect();
                c.sort_unstable();
                c
            })
            .collect();
        components.sort();
        return Err(Error::DisconnectedPartitionGraph { components });
    }

    Ok(OverlapIndex {
        pair_maps,
        degree,
        local_degree,
        local_ids: partitions.iter().map(|p| p.global_ids().to_vec()).collect(),
        shared,
        memberships,
        adjacency,
    })
}

fn partition_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adjacency.len()];
    let mut out = Vec::new();
    for start in 0..adjacency.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Largest overlap degree over all points (1 for a single partition).
pub fn max_overlap_degree(index: &OverlapIndex) -> u32 {
    index
        .local_degree
        .iter()
        .flat_map(|d| d.iter().copied())
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{assign_global_ids, IdScheme, Point};

    fn parts(sets: &[&[(f64, f64)]]) -> Vec<PointCloudPartition> {
        let ps = sets
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pts: Vec<Point> = s.iter().map(|&(x, y)| Point::new(x, y)).collect();
                let n = pts.len();
                PointCloudPartition::new(i, pts, vec![0.0; n]).unwrap()
            })
            .collect();
        assign_global_ids(ps, &IdScheme::default()).unwrap()
    }

    const A: (f64, f64) = (0.0, 0.0);
    const B: (f64, f64) = (1.0, 0.0);
    const C: (f64, f64) = (0.0, 1.0);
    const D: (f64, f64) = (1.0, 1.0);

    #[test]
    fn two_partitions_share_two() {
        let p = parts(&[&[A, B, C], &[B, C, D]]);
        let idx = compute_overlaps(&p).unwrap();
        assert_eq!(idx.local_degrees(0), &[1, 2, 2]);
        assert_eq!(idx.local_degrees(1), &[2, 2, 1]);
        assert_eq!(idx.pair_maps().len(), 1);
        assert_eq!(idx.pair(0, 1).unwrap().len(), 2);
        assert_eq!(max_overlap_degree(&idx), 2);
        let ids: Vec<_> = idx.pair(0, 1).unwrap().iter().map(|m| m.id).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn triple_point_has_degree_three() {
        let p = parts(&[
            &[A, (5.0, 0.0), (5.0, 1.0)],
            &[A, (-5.0, 0.0), (-5.0, 1.0)],
            &[A, (0.0, -5.0), (1.0, -5.0)],
        ]);
        let idx = compute_overlaps(&p).unwrap();
        assert_eq!(idx.degree(p[0].global_ids()[0]), Some(3));
        assert_eq!(max_overlap_degree(&idx), 3);
        // one entry in each of the three pair maps
        assert_eq!(idx.pair_maps().len(), 3);
        assert!(idx.pair_maps().values().all(|v| v.len() == 1));
        assert_eq!(idx.neighbors(1), &[0, 2]);
    }

    #[test]
    fn disjoint_partitions_fail() {
        let p = parts(&[&[A, B, C], &[(5.0, 5.0), (6.0, 5.0), (5.0, 6.0)]]);
        match compute_overlaps(&p).unwrap_err() {
            Error::DisconnectedPartitionGraph { components } => {
                assert_eq!(components, vec![vec![0], vec![1]])
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn single_partition() {
        let idx = compute_overlaps(&parts(&[&[A, B, C]])).unwrap();
        assert_eq!(max_overlap_degree(&idx), 1);
        assert!(idx.pair_maps().is_empty());
    }
}
