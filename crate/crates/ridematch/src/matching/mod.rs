//! Batch ride matchers.
//!
//! Every matcher takes the same [`MatchParams`] and returns a
//! [`MatchResult`] whose cab user-sets partition the input trips:
//!
//! - [`greedy_max_profit`]: repeatedly merge the pair of cabs with the
//!   largest incremental profit.
//! - [`greedy_order`]: scan a sorted cab list and merge each head with the
//!   first profitable partner.
//! - [`exact_partition_dp`]: the optimal partition, by dynamic programming
//!   over user subsets (small batches only).
//! - [`brute_force_partitions`]: exhaustive partition enumeration; the
//!   independent oracle for the exact solver.
//! - [`pairwise_blossom`]: optimal capacity-2 matching via maximum-weight
//!   general matching.

mod blossom;
mod exact;
mod greedy;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use blossom::pairwise_blossom;
pub use exact::{brute_force_partitions, count_partitions, exact_partition_dp};
pub use greedy::{greedy_max_profit, greedy_order};

use crate::error::{Error, Result};
use crate::pricing::{CostSchedule, DiscountPolicy};
use crate::routing::{best_route_filtered, RouteObjective, RoutePlan, TripPool, MAX_CAPACITY};
use crate::trips::{TravelMetric, TripRequest};

/// One cab in a match outcome: the users it serves, the route it drives,
/// and the profit it generates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cab {
    pub id: u64,
    pub users: Vec<u64>,
    pub plan: RoutePlan,
    pub profit: f64,
}

/// A complete matching of a trip batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub cabs: Vec<Cab>,
    pub total_profit: f64,
    pub solo_count: usize,
    pub merge_count: usize,
    /// Wall-clock seconds spent inside the matcher.
    pub wall_time: f64,
}

/// Sort order for [`greedy_order`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderProtocol {
    /// Decreasing route distance.
    DistanceDesc,
    /// Increasing cab profit.
    ProfitAsc,
}

/// Extra feasibility rule applied to every candidate merge, beyond the
/// always-on capacity constraint. `left` and `right` are the plans the two
/// cabs were driving before the merge; `merged` is a candidate plan for the
/// combined user set. Must be deterministic.
pub trait MergeConstraint: Sync {
    fn allows(&self, left: &RoutePlan, right: &RoutePlan, merged: &RoutePlan) -> bool;
}

/// Common inputs for all matchers.
pub struct MatchParams<'a> {
    pub trips: &'a [TripRequest],
    pub zeta: usize,
    pub metric: &'a dyn TravelMetric,
    pub schedule: &'a CostSchedule,
    pub policy: &'a DiscountPolicy,
    pub constraint: Option<&'a dyn MergeConstraint>,
    pub objective: RouteObjective,
}

impl<'a> MatchParams<'a> {
    pub fn new(
        trips: &'a [TripRequest],
        zeta: usize,
        metric: &'a dyn TravelMetric,
        schedule: &'a CostSchedule,
        policy: &'a DiscountPolicy,
    ) -> Self {
        Self {
            trips,
            zeta,
            metric,
            schedule,
            policy,
            constraint: None,
            objective: RouteObjective::MaxProfit,
        }
    }

    pub fn with_constraint(mut self, constraint: &'a dyn MergeConstraint) -> Self {
        self.constraint = Some(constraint);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.trips.is_empty() {
            return Err(Error::BadParam("need at least one trip".into()));
        }
        if self.zeta < 1 || self.zeta > MAX_CAPACITY {
            return Err(Error::BadParam(format!(
                "capacity must be between 1 and {MAX_CAPACITY}, got {}",
                self.zeta
            )));
        }
        let mut ids: Vec<u64> = self.trips.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.trips.len() {
            return Err(Error::BadParam("trip ids must be unique".into()));
        }
        Ok(())
    }
}

/// A feasible merge of two cabs: the best route for the combined user set
/// and its incremental profit over the two parents.
pub(crate) struct MergeEval {
    pub plan: RoutePlan,
    pub profit: f64,
    pub gain: f64,
}

/// Evaluate merging two cabs under the capacity constraint and any
/// [`MergeConstraint`]. Returns `None` when the merge is infeasible (over
/// capacity, or no route survives the constraint).
pub(crate) fn evaluate_merge(
    params: &MatchParams,
    pool: &TripPool,
    left: &Cab,
    right: &Cab,
) -> Result<Option<MergeEval>> {
    if left.users.len() + right.users.len() > params.zeta {
        return Ok(None);
    }
    let mut users = left.users.clone();
    users.extend_from_slice(&right.users);
    users.sort_unstable();

    let filter_fn;
    let filter: Option<&dyn Fn(&RoutePlan) -> bool> = match params.constraint {
        Some(c) => {
            filter_fn = move |merged: &RoutePlan| c.allows(&left.plan, &right.plan, merged);
            Some(&filter_fn)
        }
        None => None,
    };
    let best = best_route_filtered(
        &users,
        pool,
        params.metric,
        params.schedule,
        params.policy,
        params.objective,
        filter,
    )?;
    Ok(best.map(|(plan, profit)| MergeEval {
        gain: profit - left.profit - right.profit,
        plan,
        profit,
    }))
}

/// One solo cab per trip, ids assigned in trip order.
pub(crate) fn solo_cabs(params: &MatchParams, pool: &TripPool) -> Result<Vec<Cab>> {
    params
        .trips
        .iter()
        .enumerate()
        .map(|(idx, trip)| {
            let (plan, profit) = best_route_filtered(
                &[trip.id],
                pool,
                params.metric,
                params.schedule,
                params.policy,
                params.objective,
                None,
            )?
            .expect("a solo trip always has its one route");
            Ok(Cab { id: idx as u64, users: vec![trip.id], plan, profit })
        })
        .collect()
}

/// Final assembly shared by all matchers: order cabs deterministically,
/// re-check the partition property, and compute the totals.
pub(crate) fn assemble(
    params: &MatchParams,
    mut cabs: Vec<Cab>,
    merge_count: usize,
    start: Instant,
) -> MatchResult {
    cabs.sort_by_key(|c| c.users[0]);

    let mut served: Vec<u64> = Vec::with_capacity(params.trips.len());
    for cab in &cabs {
        assert_eq!(cab.plan.user_ids(), cab.users, "cab plan serves the wrong users");
        served.extend_from_slice(&cab.users);
    }
    served.sort_unstable();
    let mut expected: Vec<u64> = params.trips.iter().map(|t| t.id).collect();
    expected.sort_unstable();
    assert_eq!(served, expected, "cab user sets must partition the input");

    let total_profit = cabs.iter().map(|c| c.profit).sum();
    let solo_count = cabs.iter().filter(|c| c.users.len() == 1).count();
    MatchResult {
        cabs,
        total_profit,
        solo_count,
        merge_count,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::trips::{synth_generate, BoundingBox, GeoPoint, HaversineMetric};

    pub fn nyc_box() -> BoundingBox {
        BoundingBox::new(
            GeoPoint { lat: 40.70, lon: -74.02 },
            GeoPoint { lat: 40.82, lon: -73.93 },
        )
        .unwrap()
    }

    pub fn metric() -> HaversineMetric {
        HaversineMetric::new(18.0, 1.3).unwrap()
    }

    pub fn schedule() -> CostSchedule {
        CostSchedule::default()
    }

    pub fn policy() -> DiscountPolicy {
        DiscountPolicy::distance_only(40.0, 0.10).unwrap()
    }

    pub fn instance(seed: u64, n: usize) -> Vec<TripRequest> {
        synth_generate(n, seed, &nyc_box(), 15.0).unwrap()
    }
}
