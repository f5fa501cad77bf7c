mod common;

use proptest::prelude::*;
use rand::Rng;
use seamweld::point::MembershipStats;
use seamweld::{assign_global_ids, compute_overlaps, IdScheme, Point, PointCloudPartition};

/// Random subsets of a common point pool; partition 0 contains everything so
/// the partition graph is connected.
fn random_partitions(seed: u64, m: usize) -> Vec<PointCloudPartition> {
    let mut rng = common::rng(seed);
    let pool: Vec<Point> = (0..120).map(|_| Point::new(rng.random(), rng.random())).collect();
    (0..m)
        .map(|i| {
            let pts: Vec<Point> = if i == 0 {
                pool.clone()
            } else {
                pool.iter().copied().filter(|_| rng.random_bool(0.4)).collect()
            };
            let vals = pts.iter().map(|p| p.x + i as f64).collect();
            PointCloudPartition::new(i, pts, vals).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extra_memberships_equal_sum_of_degree_minus_one(seed: u64, m in 1usize..7) {
        let parts = random_partitions(seed, m);
        let index = compute_overlaps(&parts).unwrap();
        let extra: u64 = index.degrees().values().map(|&d| d as u64 - 1).sum();
        prop_assert_eq!(extra as usize, MembershipStats::of(&parts).extra_memberships());
        // every pair list has the point in both partitions
        for (&(i, j), matches) in index.pair_maps() {
            prop_assert!(i < j);
            for pm in matches {
                prop_assert_eq!(parts[i].global_ids()[pm.local_i], pm.id);
                prop_assert_eq!(parts[j].global_ids()[pm.local_j], pm.id);
            }
        }
    }

    #[test]
    fn overlaps_do_not_depend_on_partition_order(seed: u64, m in 2usize..7) {
        let parts = random_partitions(seed, m);
        let reversed: Vec<usize> = (0..m).rev().collect();
        let flipped = common::permute(&parts, &reversed);
        let a = compute_overlaps(&parts).unwrap();
        let b = compute_overlaps(&flipped).unwrap();
        prop_assert_eq!(a.degrees(), b.degrees());
        for (&(i, j), matches) in a.pair_maps() {
            let (bi, bj) = (m - 1 - j, m - 1 - i);
            let other = b.pair(bi, bj).unwrap();
            let mut x: Vec<_> = matches.iter().map(|p| p.id).collect();
            let mut y: Vec<_> = other.iter().map(|p| p.id).collect();
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn id_assignment_is_idempotent(seed: u64, m in 1usize..5) {
        let parts = random_partitions(seed, m);
        let once = assign_global_ids(parts, &IdScheme::default()).unwrap();
        let twice = assign_global_ids(once.clone(), &IdScheme::default()).unwrap();
        prop_assert_eq!(once, twice);
    }
}
