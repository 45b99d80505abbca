//! Greedy merge heuristics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use crate::error::Result;
use crate::routing::{RoutePlan, TripPool};

use super::{assemble, evaluate_merge, solo_cabs, Cab, MatchParams, MatchResult, OrderProtocol};

/// A candidate merge in the pair heap. Ordered by gain (highest first),
/// then by the (smaller id, larger id) pair so equal gains pop
/// deterministically.
struct Candidate {
    gain: f64,
    a: u64,
    b: u64,
    plan: RoutePlan,
    profit: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

fn merged_cab(id: u64, left: &Cab, right: &Cab, plan: RoutePlan, profit: f64) -> Cab {
    let mut users = left.users.clone();
    users.extend_from_slice(&right.users);
    users.sort_unstable();
    Cab { id, users, plan, profit }
}

/// Start from one solo cab per user and repeatedly merge the feasible pair
/// with the largest incremental profit, until no merge with non-negative
/// gain remains. Zero-gain merges are taken; strictly negative ones end the
/// loop. Full cabs retire from the pool.
///
/// The pair heap uses lazy invalidation: entries naming a cab that has
/// already been merged away are discarded when popped.
pub fn greedy_max_profit(params: &MatchParams) -> Result<MatchResult> {
    let start = Instant::now();
    params.validate()?;
    let pool = TripPool::new(params.trips);
    let solos = solo_cabs(params, &pool)?;
    let n = solos.len();

    let mut active: BTreeMap<u64, Cab> = solos.into_iter().map(|c| (c.id, c)).collect();
    let mut retired: Vec<Cab> = Vec::new();
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();

    let push = |heap: &mut BinaryHeap<Candidate>, pool: &TripPool, x: &Cab, y: &Cab| -> Result<()> {
        if let Some(ev) = evaluate_merge(params, pool, x, y)? {
            if ev.gain >= 0.0 {
                heap.push(Candidate {
                    gain: ev.gain,
                    a: x.id.min(y.id),
                    b: x.id.max(y.id),
                    plan: ev.plan,
                    profit: ev.profit,
                });
            }
        }
        Ok(())
    };

    let ids: Vec<u64> = active.keys().copied().collect();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            push(&mut heap, &pool, &active[&a], &active[&b])?;
        }
    }

    let mut merges = 0usize;
    let mut next_id = n as u64;
    while active.len() >= 2 {
        let Some(cand) = heap.pop() else { break };
        if !active.contains_key(&cand.a) || !active.contains_key(&cand.b) {
            continue;
        }
        let left = active.remove(&cand.a).unwrap();
        let right = active.remove(&cand.b).unwrap();
        let cab = merged_cab(next_id, &left, &right, cand.plan, cand.profit);
        next_id += 1;
        merges += 1;
        if cab.users.len() >= params.zeta {
            retired.push(cab);
        } else {
            for other in active.values() {
                push(&mut heap, &pool, &cab, other)?;
            }
            active.insert(cab.id, cab);
        }
    }

    retired.extend(active.into_values());
    Ok(assemble(params, retired, merges, start))
}

fn rank(a: &Cab, b: &Cab, order: OrderProtocol) -> Ordering {
    match order {
        OrderProtocol::DistanceDesc => b
            .plan
            .total_dist
            .total_cmp(&a.plan.total_dist)
            .then_with(|| a.id.cmp(&b.id)),
        OrderProtocol::ProfitAsc => a.profit.total_cmp(&b.profit).then_with(|| a.id.cmp(&b.id)),
    }
}

/// Keep the cabs in a sorted list; pop the head and merge it with the first
/// cab down the list giving a strictly positive gain (the full list is
/// scanned). Merged cabs re-enter at their key-ordered position; heads with
/// no profitable partner retire.
pub fn greedy_order(params: &MatchParams, order: OrderProtocol) -> Result<MatchResult> {
    let start = Instant::now();
    params.validate()?;
    let pool = TripPool::new(params.trips);
    let mut list = solo_cabs(params, &pool)?;
    let n = list.len();
    list.sort_by(|a, b| rank(a, b, order));

    let mut retired: Vec<Cab> = Vec::new();
    let mut merges = 0usize;
    let mut next_id = n as u64;
    while !list.is_empty() {
        let head = list.remove(0);
        let mut hit: Option<(usize, RoutePlan, f64)> = None;
        for (idx, other) in list.iter().enumerate() {
            if let Some(ev) = evaluate_merge(params, &pool, &head, other)? {
                if ev.gain > 0.0 {
                    hit = Some((idx, ev.plan, ev.profit));
                    break;
                }
            }
        }
        match hit {
            None => retired.push(head),
            Some((idx, plan, profit)) => {
                let partner = list.remove(idx);
                let cab = merged_cab(next_id, &head, &partner, plan, profit);
                next_id += 1;
                merges += 1;
                if cab.users.len() >= params.zeta {
                    retired.push(cab);
                } else {
                    let pos = list.partition_point(|c| rank(c, &cab, order) == Ordering::Less);
                    list.insert(pos, cab);
                }
            }
        }
    }

    Ok(assemble(params, retired, merges, start))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::pricing::{CostSchedule, DiscountPolicy};
    use crate::trips::{GeoPoint, TravelMetric, TripRequest};

    /// 1 lon unit = 1 km = 2 minutes.
    struct LineMetric;

    impl TravelMetric for LineMetric {
        fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64 {
            (from.lon - to.lon).abs()
        }
        fn time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
            2.0 * (from.lon - to.lon).abs()
        }
    }

    fn line_trip(id: u64, from: f64, to: f64) -> TripRequest {
        TripRequest {
            id,
            source: GeoPoint { lat: 0.0, lon: from },
            dest: GeoPoint { lat: 0.0, lon: to },
            request_time: 0,
            recorded_distance: None,
            recorded_time: None,
        }
    }

    /// The head's only profitable partner sorts last in the list; the scan
    /// must reach it.
    #[test]
    fn order_scan_reaches_the_end_of_the_list() {
        // Trip 0 spans [0, 10]; trip 1 is far away; trip 2 nests inside
        // trip 0's corridor with zero detour.
        let trips = vec![
            line_trip(0, 0.0, 10.0),
            line_trip(1, 50.0, 55.0),
            line_trip(2, 4.0, 6.0),
        ];
        let s = CostSchedule::new(2.5, 1.0, 0.35, 0.2).unwrap();
        let p = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
        let params = MatchParams::new(&trips, 2, &LineMetric, &s, &p);
        let result = greedy_order(&params, OrderProtocol::DistanceDesc).unwrap();
        assert_eq!(result.merge_count, 1);
        assert!(result.cabs.iter().any(|c| c.users == vec![0, 2]));
        assert!(result.cabs.iter().any(|c| c.users == vec![1]));
    }

    /// A merged cab that is not yet full re-enters the list at the position
    /// of its recomputed key and can merge again.
    #[test]
    fn merged_cab_reenters_sorted_and_merges_again() {
        let trips = vec![
            line_trip(0, 0.0, 10.0),
            line_trip(1, 1.0, 9.0),
            line_trip(2, 2.0, 8.0),
        ];
        let s = CostSchedule::new(2.5, 1.0, 0.35, 0.2).unwrap();
        let p = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
        let params = MatchParams::new(&trips, 3, &LineMetric, &s, &p);
        let result = greedy_order(&params, OrderProtocol::DistanceDesc).unwrap();
        assert_eq!(result.cabs.len(), 1);
        assert_eq!(result.cabs[0].users, vec![0, 1, 2]);
        assert_eq!(result.merge_count, 2);
    }

    #[test]
    fn both_orders_match_on_random_instances() {
        let (m, s, p) = (metric(), schedule(), policy());
        for seed in 0..5u64 {
            let trips = instance(seed, 20);
            let params = MatchParams::new(&trips, 3, &m, &s, &p);
            for order in [OrderProtocol::DistanceDesc, OrderProtocol::ProfitAsc] {
                let result = greedy_order(&params, order).unwrap();
                assert!(result.merge_count <= trips.len() - 1);
            }
        }
    }

    /// Equal-gain candidates pop by the (min id, max id) tie-break.
    #[test]
    fn equal_gain_merges_prefer_the_smallest_pair() {
        // Two identical twin-pairs: (0,1) and (2,3) have the same gain, and
        // all cross pairs are far worse. The first merge must be (0, 1).
        let trips = vec![
            line_trip(0, 0.0, 5.0),
            line_trip(1, 0.0, 5.0),
            line_trip(2, 100.0, 105.0),
            line_trip(3, 100.0, 105.0),
        ];
        let s = CostSchedule::new(2.5, 1.0, 0.35, 0.2).unwrap();
        let p = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
        let params = MatchParams::new(&trips, 2, &LineMetric, &s, &p);
        let result = greedy_max_profit(&params).unwrap();
        assert_eq!(result.cabs.len(), 2);
        assert_eq!(result.cabs[0].users, vec![0, 1]);
        assert_eq!(result.cabs[1].users, vec![2, 3]);
    }
}
