//! Shared-ride route enumeration and selection.
//!
//! A route for a cab serving up to four riders is an ordering of pickup and
//! dropoff stops in which every pickup precedes its dropoff and the cab is
//! never empty strictly between the first and last stop. Routes are scored
//! by provider profit (or total distance, as a configuration option).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::{cab_profit, CostSchedule, DiscountPolicy};
use crate::trips::{GeoPoint, LegCache, TravelMetric, TripRequest};

/// Largest supported cab capacity for exhaustive enumeration.
pub const MAX_CAPACITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StopKind {
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stop {
    pub user: u64,
    pub kind: StopKind,
}

impl Stop {
    pub fn pickup(user: u64) -> Self {
        Self { user, kind: StopKind::Pickup }
    }

    pub fn dropoff(user: u64) -> Self {
        Self { user, kind: StopKind::Dropoff }
    }

    /// Compact display form: `S3` / `D3`.
    pub fn label(&self) -> String {
        match self.kind {
            StopKind::Pickup => format!("S{}", self.user),
            StopKind::Dropoff => format!("D{}", self.user),
        }
    }
}

/// Per-user outcome of riding a given route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLeg {
    pub user: u64,
    /// In-vehicle distance from the user's pickup to their dropoff, km.
    pub dist: f64,
    /// In-vehicle time, minutes.
    pub time: f64,
    /// Direct-trip distance, km.
    pub solo_dist: f64,
    /// Direct-trip time, minutes.
    pub solo_time: f64,
    /// Distance-wise fractional detour.
    pub delta: f64,
    /// Time-wise fractional detour.
    pub tau: f64,
}

/// A fully evaluated stop sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub stops: Vec<Stop>,
    pub total_dist: f64,
    pub total_time: f64,
    /// One entry per served user, ordered by user id.
    pub legs: Vec<UserLeg>,
}

impl RoutePlan {
    /// The plan of an idle cab: no stops, no cost, no riders.
    pub fn empty() -> Self {
        Self { stops: Vec::new(), total_dist: 0.0, total_time: 0.0, legs: Vec::new() }
    }

    pub fn user_ids(&self) -> Vec<u64> {
        self.legs.iter().map(|l| l.user).collect()
    }

    pub fn leg_for(&self, user: u64) -> Option<&UserLeg> {
        self.legs.iter().find(|l| l.user == user)
    }

    pub fn is_solo(&self) -> bool {
        self.legs.len() == 1
    }
}

/// Lookup from user id to trip request, built once per matcher invocation.
pub struct TripPool<'a> {
    map: HashMap<u64, &'a TripRequest>,
}

impl<'a> TripPool<'a> {
    pub fn new(trips: &'a [TripRequest]) -> Self {
        Self { map: trips.iter().map(|t| (t.id, t)).collect() }
    }

    pub fn get(&self, user: u64) -> Result<&'a TripRequest> {
        self.map
            .get(&user)
            .copied()
            .ok_or_else(|| Error::BadSequence(format!("unknown user {user}")))
    }
}

/// Enumerate every stop sequence for `users` in which each pickup precedes
/// its dropoff and the cab never empties mid-route. Output order is
/// lexicographic (stops compared by user id), so callers see a stable,
/// deterministic candidate list.
pub fn valid_sequences(users: &[u64], zeta: usize) -> Result<Vec<Vec<Stop>>> {
    if zeta > MAX_CAPACITY {
        return Err(Error::BadParam(format!(
            "capacity {zeta} exceeds the supported bound of {MAX_CAPACITY}"
        )));
    }
    let mut ids: Vec<u64> = users.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::BadParam("need at least one user".into()));
    }
    if ids.len() != users.len() {
        return Err(Error::BadSequence("duplicate user ids".into()));
    }
    if ids.len() > zeta {
        return Err(Error::TooManyUsers { requested: ids.len(), limit: zeta });
    }

    let k = ids.len();
    let mut out = Vec::new();
    let mut seq: Vec<Stop> = Vec::with_capacity(2 * k);
    // state per user: 0 = waiting, 1 = onboard, 2 = done
    let mut state = vec![0u8; k];
    dfs(&ids, &mut state, &mut seq, &mut out);
    Ok(out)
}

fn dfs(ids: &[u64], state: &mut [u8], seq: &mut Vec<Stop>, out: &mut Vec<Vec<Stop>>) {
    let k = ids.len();
    if seq.len() == 2 * k {
        out.push(seq.clone());
        return;
    }
    let onboard = state.iter().filter(|&&s| s == 1).count();
    let done = state.iter().filter(|&&s| s == 2).count();
    // An empty cab strictly inside the route would split it into disjoint
    // pieces; only a fresh route (nothing served yet) may start from empty.
    if onboard == 0 && done > 0 {
        return;
    }
    for u in 0..k {
        match state[u] {
            0 => {
                state[u] = 1;
                seq.push(Stop::pickup(ids[u]));
                dfs(ids, state, seq, out);
                seq.pop();
                state[u] = 0;
            }
            1 => {
                state[u] = 2;
                seq.push(Stop::dropoff(ids[u]));
                dfs(ids, state, seq, out);
                seq.pop();
                state[u] = 1;
            }
            _ => {}
        }
    }
}

fn check_sequence(stops: &[Stop]) -> Result<Vec<u64>> {
    if stops.is_empty() {
        return Err(Error::BadSequence("empty sequence".into()));
    }
    let mut onboard: Vec<u64> = Vec::new();
    let mut done: Vec<u64> = Vec::new();
    for (idx, stop) in stops.iter().enumerate() {
        match stop.kind {
            StopKind::Pickup => {
                if onboard.contains(&stop.user) || done.contains(&stop.user) {
                    return Err(Error::BadSequence(format!("user {} picked up twice", stop.user)));
                }
                onboard.push(stop.user);
            }
            StopKind::Dropoff => {
                let pos = onboard.iter().position(|&u| u == stop.user).ok_or_else(|| {
                    Error::BadSequence(format!("user {} dropped off before pickup", stop.user))
                })?;
                onboard.remove(pos);
                done.push(stop.user);
            }
        }
        if onboard.is_empty() && idx + 1 < stops.len() {
            return Err(Error::BadSequence("cab is empty mid-route".into()));
        }
    }
    if !onboard.is_empty() {
        return Err(Error::BadSequence("user never dropped off".into()));
    }
    done.sort_unstable();
    Ok(done)
}

/// Evaluate one stop sequence: leg sums, per-user in-vehicle distance and
/// time, and fractional detours against each user's direct trip.
pub fn evaluate_sequence(
    stops: &[Stop],
    pool: &TripPool,
    metric: &dyn TravelMetric,
) -> Result<RoutePlan> {
    let users = check_sequence(stops)?;

    let points: Vec<GeoPoint> = stops
        .iter()
        .map(|s| {
            pool.get(s.user).map(|t| match s.kind {
                StopKind::Pickup => t.source,
                StopKind::Dropoff => t.dest,
            })
        })
        .collect::<Result<_>>()?;

    // Prefix sums over the driven legs.
    let mut dist_prefix = vec![0.0f64; stops.len()];
    let mut time_prefix = vec![0.0f64; stops.len()];
    for i in 1..stops.len() {
        let (d, t) = metric.leg(points[i - 1], points[i]);
        dist_prefix[i] = dist_prefix[i - 1] + d;
        time_prefix[i] = time_prefix[i - 1] + t;
    }

    let mut legs = Vec::with_capacity(users.len());
    for &user in &users {
        let pick = stops.iter().position(|s| *s == Stop::pickup(user)).unwrap();
        let drop = stops.iter().position(|s| *s == Stop::dropoff(user)).unwrap();
        let trip = pool.get(user)?;
        let (solo_dist, solo_time) = metric.leg(trip.source, trip.dest);
        if solo_dist <= 0.0 || solo_time <= 0.0 {
            return Err(Error::ZeroSoloLeg(user));
        }
        let dist = dist_prefix[drop] - dist_prefix[pick];
        let time = time_prefix[drop] - time_prefix[pick];
        legs.push(UserLeg {
            user,
            dist,
            time,
            solo_dist,
            solo_time,
            delta: (dist - solo_dist) / solo_dist,
            tau: (time - solo_time) / solo_time,
        });
    }

    Ok(RoutePlan {
        stops: stops.to_vec(),
        total_dist: *dist_prefix.last().unwrap(),
        total_time: *time_prefix.last().unwrap(),
        legs,
    })
}

/// Route-selection objective. Profit is the default; distance-minimizing
/// selection is kept for sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteObjective {
    #[default]
    MaxProfit,
    MinDistance,
}

/// Select the best route for a user set: enumerate valid sequences, drop the
/// ones `filter` rejects, and keep the objective maximum. Ties break toward
/// smaller total distance, then smaller total time, then earlier
/// (lexicographic) sequence. Returns `None` when the filter rejects every
/// sequence.
pub fn best_route_filtered(
    users: &[u64],
    pool: &TripPool,
    metric: &dyn TravelMetric,
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
    objective: RouteObjective,
    filter: Option<&dyn Fn(&RoutePlan) -> bool>,
) -> Result<Option<(RoutePlan, f64)>> {
    let cache = LegCache::new(metric);
    let mut best: Option<(RoutePlan, f64)> = None;
    for seq in valid_sequences(users, users.len().max(1))? {
        let plan = evaluate_sequence(&seq, pool, &cache)?;
        if let Some(f) = filter {
            if !f(&plan) {
                continue;
            }
        }
        let profit = cab_profit(schedule, policy, &plan).profit;
        let better = match &best {
            None => true,
            Some((bp, bprofit)) => match objective {
                RouteObjective::MaxProfit => {
                    profit > *bprofit
                        || (profit == *bprofit
                            && (plan.total_dist < bp.total_dist
                                || (plan.total_dist == bp.total_dist
                                    && plan.total_time < bp.total_time)))
                }
                RouteObjective::MinDistance => {
                    plan.total_dist < bp.total_dist
                        || (plan.total_dist == bp.total_dist
                            && (plan.total_time < bp.total_time
                                || (plan.total_time == bp.total_time && profit > *bprofit)))
                }
            },
        };
        if better {
            best = Some((plan, profit));
        }
    }
    Ok(best)
}

/// The profit-maximizing route for a user set, with its profit.
pub fn best_route(
    users: &[u64],
    pool: &TripPool,
    metric: &dyn TravelMetric,
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
) -> Result<(RoutePlan, f64)> {
    let best = best_route_filtered(
        users,
        pool,
        metric,
        schedule,
        policy,
        RouteObjective::MaxProfit,
        None,
    )?;
    Ok(best.expect("unfiltered enumeration yields at least one sequence"))
}

/// Re-check a plan against first principles: stop-order validity, leg-sum
/// totals, and per-user spans. Used by tests and matcher self-checks.
pub fn validate_plan(plan: &RoutePlan, pool: &TripPool, metric: &dyn TravelMetric) -> Result<()> {
    let fresh = evaluate_sequence(&plan.stops, pool, metric)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    if !close(fresh.total_dist, plan.total_dist) || !close(fresh.total_time, plan.total_time) {
        return Err(Error::BadSequence("plan totals do not match its stops".into()));
    }
    if fresh.legs.len() != plan.legs.len() {
        return Err(Error::BadSequence("plan serves the wrong user set".into()));
    }
    for (a, b) in fresh.legs.iter().zip(&plan.legs) {
        if a.user != b.user || !close(a.dist, b.dist) || !close(a.time, b.time) {
            return Err(Error::BadSequence("per-user legs do not match the stops".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::DiscountPolicy;
    use crate::trips::TripRequest;
    use itertools::Itertools;

    /// Metric over points on a line (longitude is the position, unit
    /// spacing, unit speed): dist = |x1 - x2| km, time = dist minutes.
    struct LineMetric;

    impl TravelMetric for LineMetric {
        fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64 {
            (from.lon - to.lon).abs()
        }
        fn time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
            self.dist(from, to)
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

    fn s(u: u64) -> Stop {
        Stop::pickup(u)
    }

    fn d(u: u64) -> Stop {
        Stop::dropoff(u)
    }

    #[test]
    fn one_user_has_exactly_the_solo_sequence() {
        let seqs = valid_sequences(&[7], 3).unwrap();
        assert_eq!(seqs, vec![vec![s(7), d(7)]]);
    }

    #[test]
    fn two_users_have_exactly_four_sequences_in_order() {
        let seqs = valid_sequences(&[1, 2], 2).unwrap();
        assert_eq!(
            seqs,
            vec![
                vec![s(1), s(2), d(1), d(2)],
                vec![s(1), s(2), d(2), d(1)],
                vec![s(2), s(1), d(1), d(2)],
                vec![s(2), s(1), d(2), d(1)],
            ]
        );
    }

    /// Brute-force oracle: all permutations of the 2k stops, filtered by
    /// precedence and the no-empty-mid-route rule.
    fn brute_force_count(k: usize) -> usize {
        let stops: Vec<Stop> = (0..k as u64).flat_map(|u| [s(u), d(u)]).collect();
        stops
            .iter()
            .copied()
            .permutations(2 * k)
            .filter(|perm| check_sequence(perm).is_ok())
            .count()
    }

    #[test]
    fn counts_match_brute_force_enumeration() {
        assert_eq!(valid_sequences(&[0, 1], 2).unwrap().len(), brute_force_count(2));
        let three = valid_sequences(&[0, 1, 2], 3).unwrap();
        assert_eq!(three.len(), brute_force_count(3));
        // Every enumerated sequence passes the independent checker.
        for seq in &three {
            assert!(check_sequence(seq).is_ok());
        }
    }

    #[test]
    fn capacity_bounds_are_enforced() {
        assert!(matches!(
            valid_sequences(&[0, 1, 2], 2),
            Err(Error::TooManyUsers { requested: 3, limit: 2 })
        ));
        assert!(valid_sequences(&[0, 1], 5).is_err());
        assert!(valid_sequences(&[], 2).is_err());
    }

    #[test]
    fn collinear_instance_evaluates_by_hand() {
        // Users on a line: S1=0, S2=1, D1=2, D2=3.
        let trips = vec![line_trip(1, 0.0, 2.0), line_trip(2, 1.0, 3.0)];
        let pool = TripPool::new(&trips);

        let plan = evaluate_sequence(&[s(1), s(2), d(1), d(2)], &pool, &LineMetric).unwrap();
        assert_eq!(plan.total_dist, 3.0);
        let leg1 = plan.leg_for(1).unwrap();
        let leg2 = plan.leg_for(2).unwrap();
        assert_eq!(leg1.dist, 2.0);
        assert_eq!(leg1.delta, 0.0);
        assert_eq!(leg2.dist, 2.0);
        assert_eq!(leg2.delta, 0.0);

        let plan = evaluate_sequence(&[s(1), s(2), d(2), d(1)], &pool, &LineMetric).unwrap();
        assert_eq!(plan.total_dist, 4.0);
        assert_eq!(plan.leg_for(1).unwrap().dist, 4.0);
        assert_eq!(plan.leg_for(1).unwrap().delta, 1.0);
        assert_eq!(plan.leg_for(2).unwrap().delta, 0.0);
    }

    #[test]
    fn solo_sequence_has_zero_detour() {
        let trips = vec![line_trip(0, 0.0, 5.0)];
        let pool = TripPool::new(&trips);
        let plan = evaluate_sequence(&[s(0), d(0)], &pool, &LineMetric).unwrap();
        assert_eq!(plan.leg_for(0).unwrap().delta, 0.0);
        assert_eq!(plan.leg_for(0).unwrap().tau, 0.0);
    }

    #[test]
    fn zero_solo_leg_is_rejected() {
        // Distinct coordinates, but the line metric sees zero distance.
        let trips = vec![TripRequest {
            id: 0,
            source: GeoPoint { lat: 0.0, lon: 1.0 },
            dest: GeoPoint { lat: 1.0, lon: 1.0 },
            request_time: 0,
            recorded_distance: None,
            recorded_time: None,
        }];
        let pool = TripPool::new(&trips);
        assert!(matches!(
            evaluate_sequence(&[s(0), d(0)], &pool, &LineMetric),
            Err(Error::ZeroSoloLeg(0))
        ));
    }

    #[test]
    fn malformed_sequences_are_rejected() {
        let trips = vec![line_trip(0, 0.0, 2.0), line_trip(1, 4.0, 6.0)];
        let pool = TripPool::new(&trips);
        // Dropoff before pickup.
        assert!(evaluate_sequence(&[d(0), s(0)], &pool, &LineMetric).is_err());
        // Empty cab between the two riders.
        assert!(evaluate_sequence(&[s(0), d(0), s(1), d(1)], &pool, &LineMetric).is_err());
        // Missing dropoff.
        assert!(evaluate_sequence(&[s(0)], &pool, &LineMetric).is_err());
    }

    fn default_pricing() -> (CostSchedule, DiscountPolicy) {
        (
            CostSchedule::new(2.0, 1.0, 0.5, 0.2).unwrap(),
            DiscountPolicy::new(45.0, 0.0, 0.1).unwrap(),
        )
    }

    #[test]
    fn best_route_prefers_zero_detour_on_the_line() {
        let trips = vec![line_trip(1, 0.0, 2.0), line_trip(2, 1.0, 3.0)];
        let pool = TripPool::new(&trips);
        let (sched, policy) = default_pricing();
        let (plan, profit) = best_route(&[1, 2], &pool, &LineMetric, &sched, &policy).unwrap();
        assert_eq!(plan.stops, vec![s(1), s(2), d(1), d(2)]);

        // Exhaustiveness: no valid sequence beats the selected one.
        for seq in valid_sequences(&[1, 2], 2).unwrap() {
            let alt = evaluate_sequence(&seq, &pool, &LineMetric).unwrap();
            let alt_profit = cab_profit(&sched, &policy, &alt).profit;
            assert!(alt_profit <= profit + 1e-12);
        }
    }

    #[test]
    fn identical_trips_tie_break_lexicographically() {
        let trips = vec![line_trip(1, 0.0, 2.0), line_trip(2, 0.0, 2.0)];
        let pool = TripPool::new(&trips);
        let (sched, policy) = default_pricing();
        let (plan, _) = best_route(&[1, 2], &pool, &LineMetric, &sched, &policy).unwrap();
        // All four sequences tie on profit, distance, and time; the first
        // lexicographic sequence wins.
        assert_eq!(plan.stops, vec![s(1), s(2), d(1), d(2)]);
    }

    #[test]
    fn best_route_solo_is_the_only_plan() {
        let trips = vec![line_trip(3, 0.0, 2.0)];
        let pool = TripPool::new(&trips);
        let (sched, policy) = default_pricing();
        let (plan, _) = best_route(&[3], &pool, &LineMetric, &sched, &policy).unwrap();
        assert_eq!(plan.stops, vec![s(3), d(3)]);
        assert!(plan.is_solo());
    }

    #[test]
    fn min_distance_objective_is_available() {
        let trips = vec![line_trip(1, 0.0, 2.0), line_trip(2, 1.0, 3.0)];
        let pool = TripPool::new(&trips);
        let (sched, policy) = default_pricing();
        let got = best_route_filtered(
            &[1, 2],
            &pool,
            &LineMetric,
            &sched,
            &policy,
            RouteObjective::MinDistance,
            None,
        )
        .unwrap()
        .unwrap();
        assert_eq!(got.0.total_dist, 3.0);
    }

    #[test]
    fn triangle_metric_gives_nonnegative_detours() {
        use crate::trips::{synth_generate, BoundingBox, HaversineMetric};
        let bbox = BoundingBox::new(
            GeoPoint { lat: 40.70, lon: -74.02 },
            GeoPoint { lat: 40.82, lon: -73.93 },
        )
        .unwrap();
        let metric = HaversineMetric::new(18.0, 1.3).unwrap();
        for seed in 0..10u64 {
            let trips = synth_generate(3, seed, &bbox, 15.0).unwrap();
            let pool = TripPool::new(&trips);
            let ids: Vec<u64> = trips.iter().map(|t| t.id).collect();
            for seq in valid_sequences(&ids, 3).unwrap() {
                let plan = evaluate_sequence(&seq, &pool, &metric).unwrap();
                for leg in &plan.legs {
                    assert!(leg.delta >= -1e-12, "delta {} in {:?}", leg.delta, seq);
                    assert!(leg.tau >= -1e-12);
                }
                validate_plan(&plan, &pool, &metric).unwrap();
            }
        }
    }
}
