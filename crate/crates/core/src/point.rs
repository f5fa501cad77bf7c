//! Points, partitions and the cross-partition point identity.
//!
//! A [`GlobalPointId`] is a 64-bit hash of the exact bit patterns of a point's
//! coordinates. Two points in different partitions are the same physical point
//! iff their coordinates are bit-identical. Ids are verified against the stored
//! coordinates whenever they are reused, so a hash collision is an error rather
//! than a silent merge.

use std::collections::{hash_map::Entry, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Exact coordinate key used for identity.
    pub fn bits(&self) -> (u64, u64) {
        (self.x.to_bits(), self.y.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalPointId(pub u64);

impl GlobalPointId {
    pub fn of(point: &Point) -> Self {
        let (xb, yb) = point.bits();
        GlobalPointId(mix64(mix64(xb) ^ yb.rotate_left(29)))
    }
}

impl fmt::Display for GlobalPointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One subset of the global point set with its own artifact-bearing data.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudPartition {
    index: usize,
    points: Vec<Point>,
    values: Vec<f64>,
    global_ids: Vec<GlobalPointId>,
}

impl PointCloudPartition {
    /// Builds a partition, checking lengths and finiteness. Ids are derived
    /// from the exact coordinates.
    pub fn new(index: usize, points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidPartition {
            partition: index,
            reason,
        };
        if points.len() != values.len() {
            return Err(invalid(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if points.len() < 3 {
            return Err(invalid(format!("{} points, need at least 3", points.len())));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(invalid(format!("non-finite coordinate ({}, {})", p.x, p.y)));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at row {k}")));
        }
        let global_ids = points.iter().map(GlobalPointId::of).collect();
        Ok(Self {
            index,
            points,
            values,
            global_ids,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn global_ids(&self) -> &[GlobalPointId] {
        &self.global_ids
    }

    /// Replaces the data values, keeping geometry and ids.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.points.len(), "value count mismatch");
        Self {
            index: self.index,
            points: self.points.clone(),
            values,
            global_ids: self.global_ids.clone(),
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// How coordinates map to ids.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdScheme {
    /// Snap coordinates to multiples of this grid step before hashing. For
    /// inputs from heterogeneous sources whose shared points differ by
    /// rounding noise.
    pub quantum: Option<f64>,
}

impl IdScheme {
    pub fn snap(&self, p: Point) -> Point {
        match self.quantum {
            Some(q) => {
                let s = |v: f64| {
                    let r = (v / q).round() * q;
                    // -0.0 and 0.0 must hash identically after snapping
                    if r == 0.0 {
                        0.0
                    } else {
                        r
                    }
                };
                Point::new(s(p.x), s(p.y))
            }
            None => p,
        }
    }
}

/// Populates global ids for every partition and checks identity rules:
/// no repeated coordinates inside one partition and no hash collisions
/// between distinct coordinates anywhere.
///
/// Re-applying this to its own output is the identity.
pub fn assign_global_ids(
    partitions: Vec<PointCloudPartition>,
    scheme: &IdScheme,
) -> Result<Vec<PointCloudPartition>> {
    if let Some(q) = scheme.quantum {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidConfig(format!("quantum must be > 0, got {q}")));
        }
    }
    let mut seen: HashMap<GlobalPointId, (u64, u64)> = HashMap::new();
    let mut out = Vec::with_capacity(partitions.len());
    for mut part in partitions {
        let mut local: HashSet<GlobalPointId> = HashSet::with_capacity(part.len());
        for k in 0..part.points.len() {
            let p = scheme.snap(part.points[k]);
            if !p.is_finite() {
                return Err(Error::InvalidPartition {
                    partition: part.index,
                    reason: "non-finite coordinate after snapping".into(),
                });
            }
            let id = GlobalPointId::of(&p);
            match seen.entry(id) {
                Entry::Occupied(e) => {
                    if *e.get() != p.bits() {
                        let (x0, y0) = e.get();
                        return Err(Error::IdCollision {
                            id,
                            x0: f64::from_bits(*x0),
                            y0: f64::from_bits(*y0),
                            x1: p.x,
                            y1: p.y,
                        });
                    }
                }
                Entry::Vacant(e) => {
                    e.insert(p.bits());
                }
            }
            if !local.insert(id) {
                return Err(Error::DuplicatePointInPartition {
                    partition: part.index,
                    x: p.x,
                    y: p.y,
                });
            }
            part.points[k] = p;
            part.global_ids[k] = id;
        }
        out.push(part);
    }
    Ok(out)
}

/// Membership bookkeeping: `total_memberships - distinct_points` counts the
/// extra memberships contributed by overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MembershipStats {
    pub total_memberships: usize,
    pub distinct_points: usize,
}

impl MembershipStats {
    pub fn of(partitions: &[PointCloudPartition]) -> Self {
        let total_memberships = partitions.iter().map(|p| p.len()).sum();
        let distinct: HashSet<GlobalPointId> = partitions
            .iter()
            .flat_map(|p| p.global_ids.iter().copied())
            .collect();
        Self {
            total_memberships,
            distinct_points: distinct.len(),
        }
    }

    pub fn extra_memberships(&self) -> usize {
        self.total_memberships - self.distinct_points
    }
}

/// The merged result on the union of all partition point sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergedDataset {
    pub global_ids: Vec<GlobalPointId>,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    /// Number of partitions that contained each point.
    pub overlap_degree: Vec<u32>,
}

impl MergedDataset {
    pub fn len(&self) -> usize {
        self.global_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_ids.is_empty()
    }

    pub fn value_map(&self) -> HashMap<GlobalPointId, f64> {
        self.global_ids
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(index: usize, pts: &[(f64, f64)]) -> PointCloudPartition {
        let points = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        PointCloudPartition::new(index, points, vec![0.0; pts.len()]).unwrap()
    }

    #[test]
    fn shared_point_gets_one_id() {
        let a = part(0, &[(1.0, 2.0), (0.0, 0.0), (3.0, 0.0)]);
        let b = part(1, &[(5.0, 5.0), (1.0, 2.0), (6.0, 1.0)]);
        let parts = assign_global_ids(vec![a, b], &IdScheme::default()).unwrap();
        assert_eq!(parts[0].global_ids()[0], parts[1].global_ids()[1]);
        assert_ne!(parts[0].global_ids()[1], parts[1].global_ids()[0]);
    }

    #[test]
    fn single_partition_distinct_ids() {
        let a = part(0, &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let parts = assign_global_ids(vec![a], &IdScheme::default()).unwrap();
        let ids: HashSet<_> = parts[0].global_ids().iter().collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn union_of_two_triangles_has_four_ids() {
        let a = part(0, &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let b = part(1, &[(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let parts = assign_global_ids(vec![a, b], &IdScheme::default()).unwrap();
        let stats = MembershipStats::of(&parts);
        assert_eq!(stats.distinct_points, 4);
        assert_eq!(stats.extra_memberships(), 2);
    }

    #[test]
    fn duplicate_in_partition_is_rejected() {
        let a = part(3, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        let err = assign_global_ids(vec![a], &IdScheme::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::DuplicatePointInPartition { partition: 3, .. }
        ));
    }

    #[test]
    fn idempotent() {
        let a = part(0, &[(0.5, 0.25), (1.0, 0.0), (0.0, 1.0)]);
        let b = part(1, &[(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let once = assign_global_ids(vec![a, b], &IdScheme::default()).unwrap();
        let twice = assign_global_ids(once.clone(), &IdScheme::default()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn quantum_merges_near_points() {
        let a = part(0, &[(0.1000000001, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let b = part(1, &[(0.0999999999, 0.0), (2.0, 0.0), (0.0, 2.0)]);
        let scheme = IdScheme {
            quantum: Some(1e-6),
        };
        let parts = assign_global_ids(vec![a.clone(), b.clone()], &scheme).unwrap();
        assert_eq!(parts[0].global_ids()[0], parts[1].global_ids()[0]);
        let exact = assign_global_ids(vec![a, b], &IdScheme::default()).unwrap();
        assert_ne!(exact[0].global_ids()[0], exact[1].global_ids()[0]);
    }

    #[test]
    fn negative_zero_snaps_to_zero() {
        let s = IdScheme { quantum: Some(1.0) };
        let p = s.snap(Point::new(-0.2, 0.0));
        assert_eq!(p.x.to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(PointCloudPartition::new(0, vec![Point::new(0.0, 0.0); 2], vec![0.0; 2]).is_err());
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(PointCloudPartition::new(0, pts.clone(), vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(PointCloudPartition::new(0, pts.clone(), vec![0.0; 2]).is_err());
        let mut bad = pts;
        bad[1].y = f64::INFINITY;
        assert!(PointCloudPartition::new(0, bad, vec![0.0; 3]).is_err());
    }
}
