//! Monetary formulas: detour-based discounts, per-user fares, driver
//! earnings, cab profit, and the incremental profit of merging two cabs.
//!
//! A rider's fare is their *solo* fare base discounted by a linear function
//! of the fractional detours they experience in the shared ride; the driver
//! is paid from the *driven* route. The provider's profit is the gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::RoutePlan;

/// Fare parameters: base fare, per-km and per-minute rates, and the fraction
/// of the fare base withheld from the driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSchedule {
    /// Fixed fare component, $.
    pub base: f64,
    /// $ per km.
    pub per_km: f64,
    /// $ per minute.
    pub per_min: f64,
    /// Provider's cut of driver payments, in [0, 1).
    pub driver_cut: f64,
}

impl CostSchedule {
    pub fn new(base: f64, per_km: f64, per_min: f64, driver_cut: f64) -> Result<Self> {
        for (name, v) in [("base", base), ("per_km", per_km), ("per_min", per_min)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::BadParam(format!("cost.{name} must be non-negative")));
            }
        }
        if !driver_cut.is_finite() || !(0.0..1.0).contains(&driver_cut) {
            return Err(Error::BadParam("driver cut must be in [0, 1)".into()));
        }
        Ok(Self { base, per_km, per_min, driver_cut })
    }

    /// Undiscounted price of driving `dist` km in `time` minutes.
    pub fn fare_base(&self, dist: f64, time: f64) -> f64 {
        self.base + self.per_km * dist + self.per_min * time
    }
}

impl Default for CostSchedule {
    /// Configurable placeholders of realistic magnitude; not calibrated to
    /// any specific provider's price sheet.
    fn default() -> Self {
        Self { base: 2.50, per_km: 1.10, per_min: 0.35, driver_cut: 0.20 }
    }
}

/// Discount parameters: slope angles (degrees) against the distance-wise and
/// time-wise fractional detours, plus the up-front discount `b` every
/// sharing rider gets. The time slope defaults to zero, which recovers the
/// distance-only discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountPolicy {
    pub theta_dist_deg: f64,
    pub theta_time_deg: f64,
    pub min_b: f64,
    #[serde(skip)]
    tan_dist: f64,
    #[serde(skip)]
    tan_time: f64,
}

impl DiscountPolicy {
    pub fn new(theta_dist_deg: f64, theta_time_deg: f64, min_b: f64) -> Result<Self> {
        for (name, v) in [("theta_dist_deg", theta_dist_deg), ("theta_time_deg", theta_time_deg)] {
            if !v.is_finite() || !(0.0..90.0).contains(&v) {
                return Err(Error::BadParam(format!("{name} must be in [0, 90)")));
            }
        }
        if !min_b.is_finite() || !(0.0..1.0).contains(&min_b) {
            return Err(Error::BadParam("minimum discount b must be in [0, 1)".into()));
        }
        Ok(Self {
            theta_dist_deg,
            theta_time_deg,
            min_b,
            tan_dist: theta_dist_deg.to_radians().tan(),
            tan_time: theta_time_deg.to_radians().tan(),
        })
    }

    /// Distance-only policy (zero time slope).
    pub fn distance_only(theta_deg: f64, min_b: f64) -> Result<Self> {
        Self::new(theta_deg, 0.0, min_b)
    }

    /// Discount fraction for the given detours, clamped to [0, 1]. The
    /// linear form is unbounded in the detours; clamping keeps fares
    /// non-negative.
    pub fn discount(&self, delta: f64, tau: f64) -> f64 {
        (self.tan_dist * delta + self.tan_time * tau + self.min_b).clamp(0.0, 1.0)
    }
}

/// The money flow of one cab: per-user fares, driver earnings, profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideEconomics {
    /// Fares in the same order as the plan's user legs.
    pub fares: Vec<f64>,
    pub earnings: f64,
    pub profit: f64,
}

/// A rider's fare: the solo fare base (their direct-trip distance and time)
/// reduced by the detour discount.
pub fn user_cost(
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
    solo_dist: f64,
    solo_time: f64,
    delta: f64,
    tau: f64,
) -> f64 {
    (1.0 - policy.discount(delta, tau)) * schedule.fare_base(solo_dist, solo_time)
}

/// The driver's payment for driving a route; an idle cab earns nothing.
pub fn driver_earnings(schedule: &CostSchedule, route_dist: f64, route_time: f64, active: bool) -> f64 {
    if !active {
        return 0.0;
    }
    (1.0 - schedule.driver_cut) * schedule.fare_base(route_dist, route_time)
}

/// Full economics of a plan: fares from each rider's detours, earnings from
/// the driven totals, profit as the difference.
pub fn cab_profit(schedule: &CostSchedule, policy: &DiscountPolicy, plan: &RoutePlan) -> RideEconomics {
    let fares: Vec<f64> = plan
        .legs
        .iter()
        .map(|leg| user_cost(schedule, policy, leg.solo_dist, leg.solo_time, leg.delta, leg.tau))
        .collect();
    let earnings = driver_earnings(schedule, plan.total_dist, plan.total_time, !plan.legs.is_empty());
    let profit = fares.iter().sum::<f64>() - earnings;
    RideEconomics { fares, earnings, profit }
}

/// Closed form for a solo ride's profit: `(driver_cut - b) * fare_base`.
pub fn solo_profit(schedule: &CostSchedule, policy: &DiscountPolicy, solo_dist: f64, solo_time: f64) -> f64 {
    (schedule.driver_cut - policy.min_b) * schedule.fare_base(solo_dist, solo_time)
}

/// Incremental profit of merging two cabs: `p(merged) - p(left) - p(right)`.
/// The merged plan must serve exactly the disjoint union of the two user
/// sets.
pub fn incremental_profit(
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
    left: &RoutePlan,
    right: &RoutePlan,
    merged: &RoutePlan,
) -> Result<f64> {
    let mut expected = left.user_ids();
    let rights = right.user_ids();
    if rights.iter().any(|u| expected.contains(u)) {
        return Err(Error::OverlappingUsers);
    }
    expected.extend(rights);
    expected.sort_unstable();
    if merged.user_ids() != expected {
        return Err(Error::OverlappingUsers);
    }
    let p = |plan: &RoutePlan| cab_profit(schedule, policy, plan).profit;
    Ok(p(merged) - p(left) - p(right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{evaluate_sequence, Stop, TripPool};
    use crate::trips::{GeoPoint, TravelMetric, TripRequest};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    struct LineMetric;

    impl TravelMetric for LineMetric {
        fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64 {
            (from.lon - to.lon).abs() * 2.0
        }
        fn time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
            (from.lon - to.lon).abs() * 4.0
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

    #[test]
    fn discount_examples() {
        let flat = DiscountPolicy::new(0.0, 0.0, 0.10).unwrap();
        assert_eq!(flat.discount(0.7, 0.3), 0.10);

        let slope45 = DiscountPolicy::distance_only(45.0, 0.10).unwrap();
        assert_relative_eq!(slope45.discount(0.25, 0.0), 0.35, epsilon = 1e-12);

        let slope40 = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
        assert_relative_eq!(slope40.discount(0.5, 0.0), 0.5196, epsilon = 1e-4);
    }

    #[test]
    fn discount_clamps_both_ends() {
        let policy = DiscountPolicy::distance_only(80.0, 0.10).unwrap();
        assert_eq!(policy.discount(100.0, 0.0), 1.0);
        // A negative detour (triangle-inequality violation in a matrix
        // metric) can push the linear form below zero.
        assert_eq!(policy.discount(-1.0, 0.0), 0.0);
    }

    #[test]
    fn discount_equals_b_at_zero_detour() {
        let policy = DiscountPolicy::new(40.0, 20.0, 0.15).unwrap();
        assert_eq!(policy.discount(0.0, 0.0), 0.15);
    }

    #[test]
    fn policy_rejects_out_of_range_params() {
        assert!(DiscountPolicy::new(90.0, 0.0, 0.1).is_err());
        assert!(DiscountPolicy::new(-1.0, 0.0, 0.1).is_err());
        assert!(DiscountPolicy::new(40.0, 0.0, 1.0).is_err());
        assert!(CostSchedule::new(-1.0, 1.0, 1.0, 0.2).is_err());
        assert!(CostSchedule::new(2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn user_cost_examples() {
        let sched = CostSchedule::new(2.0, 1.0, 0.5, 0.2).unwrap();
        let no_discount = DiscountPolicy::new(0.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(user_cost(&sched, &no_discount, 10.0, 20.0, 0.0, 0.0), 22.0);

        let b10 = DiscountPolicy::distance_only(45.0, 0.10).unwrap();
        assert_relative_eq!(user_cost(&sched, &b10, 10.0, 20.0, 0.0, 0.0), 19.80);

        // A huge detour clamps the discount to 1: the ride is free.
        assert_eq!(user_cost(&sched, &b10, 10.0, 20.0, 50.0, 0.0), 0.0);
    }

    #[test]
    fn driver_earnings_examples() {
        let sched = CostSchedule::new(2.0, 1.0, 0.5, 0.2).unwrap();
        assert_eq!(driver_earnings(&sched, 10.0, 20.0, false), 0.0);
        assert_relative_eq!(driver_earnings(&sched, 10.0, 20.0, true), 17.60);

        let all_to_driver = CostSchedule::new(2.0, 1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(
            driver_earnings(&all_to_driver, 10.0, 20.0, true),
            all_to_driver.fare_base(10.0, 20.0)
        );
    }

    #[test]
    fn solo_profit_matches_margin_formula() {
        let sched = CostSchedule::new(2.0, 1.0, 0.5, 0.2).unwrap();
        let policy = DiscountPolicy::distance_only(45.0, 0.10).unwrap();
        // 5 lon units under LineMetric: dist 10 km, time 20 min.
        let trips = vec![line_trip(0, 0.0, 5.0)];
        let pool = TripPool::new(&trips);
        let plan =
            evaluate_sequence(&[Stop::pickup(0), Stop::dropoff(0)], &pool, &LineMetric).unwrap();
        let econ = cab_profit(&sched, &policy, &plan);
        assert_relative_eq!(econ.profit, 2.20, epsilon = 1e-12);
        assert_relative_eq!(econ.profit, solo_profit(&sched, &policy, 10.0, 20.0), epsilon = 1e-12);

        // Margins cancel when b equals the driver cut.
        let b_eq = DiscountPolicy::distance_only(45.0, 0.2).unwrap();
        assert_relative_eq!(cab_profit(&sched, &b_eq, &plan).profit, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_detour_pair_checked_against_hand_computation() {
        let sched = CostSchedule::new(2.0, 1.0, 0.5, 0.2).unwrap();
        let policy = DiscountPolicy::distance_only(45.0, 0.10).unwrap();
        // Two identical trips share one cab with zero detours.
        let trips = vec![line_trip(0, 0.0, 5.0), line_trip(1, 0.0, 5.0)];
        let pool = TripPool::new(&trips);
        let seq = [Stop::pickup(0), Stop::pickup(1), Stop::dropoff(0), Stop::dropoff(1)];
        let pair = evaluate_sequence(&seq, &pool, &LineMetric).unwrap();
        let econ = cab_profit(&sched, &policy, &pair);

        // Independent recomputation, one formula at a time: each rider pays
        // (1 - b) * fare_base; the driver is paid once for the same route.
        let fare = 2.0 + 1.0 * 10.0 + 0.5 * 20.0;
        let expected_fare = (1.0 - 0.10) * fare;
        let expected_earnings = (1.0 - 0.2) * fare;
        let expected_profit = 2.0 * expected_fare - expected_earnings;
        assert_relative_eq!(econ.fares[0], expected_fare, epsilon = 1e-12);
        assert_relative_eq!(econ.fares[1], expected_fare, epsilon = 1e-12);
        assert_relative_eq!(econ.earnings, expected_earnings, epsilon = 1e-12);
        assert_relative_eq!(econ.profit, expected_profit, epsilon = 1e-12);

        // And the merge gain over two solos is the saved driver payment.
        let solo = evaluate_sequence(&[Stop::pickup(0), Stop::dropoff(0)], &pool, &LineMetric).unwrap();
        let solo1 = evaluate_sequence(&[Stop::pickup(1), Stop::dropoff(1)], &pool, &LineMetric).unwrap();
        let dp = incremental_profit(&sched, &policy, &solo, &solo1, &pair).unwrap();
        assert_relative_eq!(dp, (1.0 - 0.2) * fare, epsilon = 1e-12);
    }

    #[test]
    fn incremental_profit_with_empty_cab_is_zero() {
        let sched = CostSchedule::default();
        let policy = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
        let trips = vec![line_trip(0, 0.0, 5.0)];
        let pool = TripPool::new(&trips);
        let solo = evaluate_sequence(&[Stop::pickup(0), Stop::dropoff(0)], &pool, &LineMetric).unwrap();
        let dp = incremental_profit(&sched, &policy, &RoutePlan::empty(), &solo, &solo).unwrap();
        assert_eq!(dp, 0.0);
    }

    #[test]
    fn incremental_profit_is_symmetric_and_rejects_overlap() {
        let sched = CostSchedule::default();
        let policy = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
        let trips = vec![line_trip(0, 0.0, 5.0), line_trip(1, 1.0, 6.0)];
        let pool = TripPool::new(&trips);
        let a = evaluate_sequence(&[Stop::pickup(0), Stop::dropoff(0)], &pool, &LineMetric).unwrap();
        let b = evaluate_sequence(&[Stop::pickup(1), Stop::dropoff(1)], &pool, &LineMetric).unwrap();
        let seq = [Stop::pickup(0), Stop::pickup(1), Stop::dropoff(0), Stop::dropoff(1)];
        let merged = evaluate_sequence(&seq, &pool, &LineMetric).unwrap();

        let jk = incremental_profit(&sched, &policy, &a, &b, &merged).unwrap();
        let kj = incremental_profit(&sched, &policy, &b, &a, &merged).unwrap();
        assert_eq!(jk, kj);

        assert!(matches!(
            incremental_profit(&sched, &policy, &a, &a, &merged),
            Err(Error::OverlappingUsers)
        ));
    }

    proptest! {
        /// Discounts are non-decreasing in every argument.
        #[test]
        fn discount_monotone(
            theta1 in 0.0f64..89.0, theta2 in 0.0f64..89.0,
            b in 0.0f64..0.9,
            d1 in 0.0f64..3.0, d2 in 0.0f64..3.0,
            t1 in 0.0f64..3.0, t2 in 0.0f64..3.0,
        ) {
            let lo_t = theta1.min(theta2);
            let hi_t = theta1.max(theta2);
            let lo_d = d1.min(d2);
            let hi_d = d1.max(d2);
            let lo_tau = t1.min(t2);
            let hi_tau = t1.max(t2);
            let lo = DiscountPolicy::new(lo_t, lo_t, b).unwrap();
            let hi = DiscountPolicy::new(hi_t, hi_t, b).unwrap();
            prop_assert!(lo.discount(lo_d, lo_tau) <= lo.discount(hi_d, hi_tau) + 1e-12);
            prop_assert!(lo.discount(hi_d, hi_tau) <= hi.discount(hi_d, hi_tau) + 1e-12);
        }

        /// Scaling all fare rates by a common factor scales profit by the
        /// same factor (b and the driver cut held fixed).
        #[test]
        fn profit_is_homogeneous_in_rates(
            lambda in 0.1f64..10.0,
            from in 0.0f64..5.0,
            gap in 0.5f64..5.0,
        ) {
            let policy = DiscountPolicy::distance_only(40.0, 0.10).unwrap();
            let sched = CostSchedule::new(2.0, 1.0, 0.5, 0.2).unwrap();
            let scaled = CostSchedule::new(2.0 * lambda, lambda, 0.5 * lambda, 0.2).unwrap();
            let trips = vec![line_trip(0, from, from + gap), line_trip(1, from + 0.3, from + gap + 0.4)];
            let pool = TripPool::new(&trips);
            let seq = [Stop::pickup(0), Stop::pickup(1), Stop::dropoff(0), Stop::dropoff(1)];
            let plan = evaluate_sequence(&seq, &pool, &LineMetric).unwrap();
            let p1 = cab_profit(&sched, &policy, &plan).profit;
            let p2 = cab_profit(&scaled, &policy, &plan).profit;
            prop_assert!((p2 - lambda * p1).abs() <= 1e-9 * p1.abs().max(1.0));
        }

        /// Solo rides are profitable exactly when the provider's cut covers
        /// the up-front discount.
        #[test]
        fn solo_profit_sign_matches_margin(
            fd in 0.0f64..0.99, b in 0.0f64..0.99,
        ) {
            let sched = CostSchedule::new(2.0, 1.0, 0.5, fd).unwrap();
            let policy = DiscountPolicy::distance_only(40.0, b).unwrap();
            let p = solo_profit(&sched, &policy, 10.0, 20.0);
            prop_assert_eq!(p >= 0.0, fd >= b);
        }
    }
}
