use std::collections::{BTreeMap, BinaryHeap};

use super::{RadioMapRecord, ZoneError};
use crate::radio::Position;
use crate::wire::RssVector;

/// One of the K nearest records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Squared distance in cdBm², exact.
    pub sq_distance: u64,
    pub distance: f64,
    pub zone_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Distance to the nearest record, cdBm.
    pub k_dh: f64,
    /// Sorted by ascending distance, ties by record index.
    pub neighbors: Vec<Neighbor>,
    pub matched_zone: u32,
    pub matched_location: Position,
    /// Number of record distances evaluated.
    pub distance_evals: u64,
}

/// Squared Euclidean distance over RSS values aligned by AP id. An AP heard
/// on one side only counts as if the other side read the noise floor.
/// Returns the distance and whether the two vectors share at least one AP.
pub fn rss_sq_distance(a: &RssVector, b: &RssVector, noise_floor_cdbm: i32) -> (u64, bool) {
    let (ra, rb) = (a.readings(), b.readings());
    let (mut i, mut j) = (0, 0);
    let mut sum: u64 = 0;
    let mut shared = false;
    let sq = |d: i64| (d * d) as u64;
    let floor = noise_floor_cdbm as i64;
    while i < ra.len() || j < rb.len() {
        match (ra.get(i), rb.get(j)) {
            (Some(x), Some(y)) if x.ap_id == y.ap_id => {
                sum += sq(x.rss_cdbm as i64 - y.rss_cdbm as i64);
                shared = true;
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.ap_id < y.ap_id => {
                sum += sq(x.rss_cdbm as i64 - floor);
                i += 1;
            }
            (Some(_), Some(y)) => {
                sum += sq(y.rss_cdbm as i64 - floor);
                j += 1;
            }
            (Some(x), None) => {
                sum += sq(x.rss_cdbm as i64 - floor);
                i += 1;
            }
            (None, Some(y)) => {
                sum += sq(y.rss_cdbm as i64 - floor);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (sum, shared)
}

/// K nearest records by linear scan. `majority` breaks vote ties toward the
/// zone holding the best-ranked neighbor.
pub fn knn_match(
    query: &RssVector,
    records: &[RadioMapRecord],
    k: usize,
    noise_floor_cdbm: i32,
) -> Result<MatchResult, ZoneError> {
    if records.is_empty() {
        return Err(ZoneError::EmptyDb);
    }
    if k == 0 {
        return Err(ZoneError::ZeroK);
    }
    // Max-heap of the best k (sq_distance, index) pairs seen so far.
    let mut heap: BinaryHeap<(u64, usize)> = BinaryHeap::with_capacity(k + 1);
    let mut any_shared = false;
    for (index, rec) in records.iter().enumerate() {
        let (d, shared) = rss_sq_distance(query, &rec.rss, noise_floor_cdbm);
        any_shared |= shared;
        if heap.len() < k {
            heap.push((d, index));
        } else if (d, index) < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push((d, index));
        }
    }
    if !any_shared {
        return Err(ZoneError::AllImputed);
    }
    let neighbors: Vec<Neighbor> = heap
        .into_sorted_vec()
        .into_iter()
        .map(|(sq, index)| Neighbor {
            index,
            sq_distance: sq,
            distance: (sq as f64).sqrt(),
            zone_id: records[index].zone_id,
        })
        .collect();

    let nearest = &records[neighbors[0].index];
    Ok(MatchResult {
        k_dh: neighbors[0].distance,
        matched_zone: majority(&neighbors),
        matched_location: nearest.location,
        neighbors,
        distance_evals: records.len() as u64,
    })
}

/// Most frequent zone among the neighbors; among equally frequent zones the
/// one with the best-ranked neighbor wins.
pub(crate) fn majority(neighbors: &[Neighbor]) -> u32 {
    // zone -> (count, rank of first appearance)
    let mut tally: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (rank, n) in neighbors.iter().enumerate() {
        tally.entry(n.zone_id).or_insert((0, rank)).0 += 1;
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(zone, _)| zone)
        .expect("at least one neighbor")
}

/// Accept iff the nearest distance is within `epsilon` and the vote landed
/// on the claimed zone.
pub fn zone_legitimacy(m: &MatchResult, claimed_zone: u32, epsilon: f64) -> bool {
    m.k_dh <= epsilon && m.matched_zone == claimed_zone
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::RssReading;

    const FLOOR: i32 = -9500;

    fn v(pairs: &[(u32, i32)]) -> RssVector {
        RssVector::new(
            pairs
                .iter()
                .map(|&(ap, rss)| RssReading::new(ap, rss, 1).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn rec(zone_id: u32, x: f64, pairs: &[(u32, i32)]) -> RadioMapRecord {
        RadioMapRecord {
            location: Position::new(x, 0.0),
            orientation: 0,
            zone_id,
            cell_id: zone_id + 1,
            rss: v(pairs),
        }
    }

    #[test]
    fn exact_match_has_zero_distance() {
        let db = vec![
            rec(0, 0.0, &[(1, -6000), (2, -7000)]),
            rec(1, 1.0, &[(1, -8000), (2, -9000)]),
        ];
        let m = knn_match(&v(&[(1, -8000), (2, -9000)]), &db, 1, FLOOR).unwrap();
        assert_eq!(m.k_dh, 0.0);
        assert_eq!(m.neighbors[0].index, 1);
        assert_eq!(m.matched_zone, 1);
    }

    #[test]
    fn two_record_example() {
        let db = vec![
            rec(0, 0.0, &[(1, -6000), (2, -7000)]),
            rec(1, 1.0, &[(1, -8000), (2, -9000)]),
        ];
        let m = knn_match(&v(&[(1, -6100), (2, -7000)]), &db, 2, FLOOR).unwrap();
        assert_eq!(m.neighbors[0].index, 0);
        assert_eq!(m.k_dh, 100.0);
        assert_eq!(m.matched_location, Position::new(0.0, 0.0));
        assert!(m.neighbors[0].distance <= m.neighbors[1].distance);
        assert_eq!(m.distance_evals, 2);
    }

    #[test]
    fn imputation_at_noise_floor() {
        let a = v(&[(1, -6000), (2, -7000)]);
        let b = v(&[(2, -7000), (3, -9000)]);
        let (d, shared) = rss_sq_distance(&a, &b, FLOOR);
        assert!(shared);
        assert_eq!(d, 3500u64.pow(2) + 500u64.pow(2));
        let c = v(&[(7, -9000)]);
        assert!(!rss_sq_distance(&a, &c, FLOOR).1);
    }

    #[test]
    fn errors() {
        assert!(matches!(knn_match(&v(&[(1, -6000)]), &[], 3, FLOOR), Err(ZoneError::EmptyDb)));
        let db = vec![rec(0, 0.0, &[(1, -6000)])];
        assert!(matches!(knn_match(&v(&[(1, -6000)]), &db, 0, FLOOR), Err(ZoneError::ZeroK)));
        assert!(matches!(knn_match(&v(&[(9, -6000)]), &db, 1, FLOOR), Err(ZoneError::AllImputed)));
    }

    #[test]
    fn ties_break_by_index_and_vote() {
        let db = vec![
            rec(5, 0.0, &[(1, -6000)]),
            rec(6, 1.0, &[(1, -6000)]),
            rec(6, 2.0, &[(1, -6200)]),
            rec(7, 3.0, &[(1, -5800)]),
        ];
        let m = knn_match(&v(&[(1, -6000)]), &db, 2, FLOOR).unwrap();
        assert_eq!(
            m.neighbors.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1]
        );
        // 1-1 tie: zone of the nearest
        assert_eq!(m.matched_zone, 5);
        let m = knn_match(&v(&[(1, -6000)]), &db, 3, FLOOR).unwrap();
        // -6200 and -5800 tie at 200; index 2 wins
        assert_eq!(
            m.neighbors.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(m.matched_zone, 6);
    }

    #[test]
    fn legitimacy_rules() {
        let db = vec![rec(3, 0.0, &[(1, -6000)])];
        let exact = knn_match(&v(&[(1, -6000)]), &db, 1, FLOOR).unwrap();
        assert!(zone_legitimacy(&exact, 3, 1.0));
        assert!(!zone_legitimacy(&exact, 4, 1.0));
        let off = knn_match(&v(&[(1, -6500)]), &db, 1, FLOOR).unwrap();
        assert!(!zone_legitimacy(&off, 3, 499.0));
        assert!(zone_legitimacy(&off, 3, 500.0));
    }
}
