//! Detour-aware routing impact: the minimum-incremental-benefit merge rule
//! and the participation model around it.
//!
//! A rider's disutility for a ride is their fare plus an inconvenience cost
//! of `alpha` dollars per detour kilometer. A merge is "gamma-feasible"
//! when every rider in the merged cab sees their disutility drop by at
//! least `gamma` relative to the ride they were already on. Imposing the
//! rule prunes matches (lowering profit) but draws riders into the market;
//! the experiment quantifies that trade-off over a `(c_in, gamma)` grid.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matching::{pairwise_blossom, MatchParams, MergeConstraint};
use crate::pricing::{user_cost, CostSchedule, DiscountPolicy};
use crate::routing::{best_route_filtered, RouteObjective, RoutePlan, TripPool};
use crate::trips::{TravelMetric, TripRequest, KM_PER_MILE};
use crate::util::mix_seed;

/// Profit lower bounds (relative to baseline) for the trade-off curves.
pub const PROFIT_LB_GRID: [f64; 4] = [0.0, 0.02, 0.05, 0.10];

/// One rider in the market simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub trip: TripRequest,
    /// Detour sensitivity, $ per km of extra in-vehicle distance.
    pub alpha_per_km: f64,
    /// Reachable by the provider before any routing-quality response.
    pub in_market: bool,
    /// Opted into sharing before the detour-aware policy was announced.
    pub opted_base: bool,
}

/// Experiment parameters.
#[derive(Debug, Clone, Copy)]
pub struct SirConfig {
    /// Fraction of the population initially reachable.
    pub base_share: f64,
    /// Bias multiplier for riders outside the initial market.
    pub outside_factor: f64,
    /// Coin-flip realizations per instance and `c_in`.
    pub realizations: usize,
    /// Proportionality constant of the baseline opt-in bias.
    pub kappa: f64,
    /// Detour sensitivities are sampled uniformly from [0, this].
    pub alpha_max_per_km: f64,
    /// Apply the gamma = 0 non-increase rule to the baseline matching too
    /// (off by default: the baseline is the unconstrained market).
    pub constrained_baseline: bool,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            base_share: 0.6,
            outside_factor: 0.5,
            realizations: 30,
            kappa: 0.5,
            // The sensitivity range is quoted per mile; one distance unit
            // (km) is used throughout.
            alpha_max_per_km: 5.0 / KM_PER_MILE,
            constrained_baseline: false,
        }
    }
}

/// A rider's disutility for riding `plan`: fare plus detour inconvenience.
pub fn disutility(
    profile: &UserProfile,
    plan: &RoutePlan,
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
) -> f64 {
    let leg = plan
        .leg_for(profile.trip.id)
        .expect("user must be served by the plan");
    user_cost(schedule, policy, leg.solo_dist, leg.solo_time, leg.delta, leg.tau)
        + profile.alpha_per_km * (leg.dist - leg.solo_dist)
}

/// The merge rule: every rider of the merged cab must gain at least
/// `gamma` dollars of disutility reduction over the ride they were on
/// before the merge (their solo ride, for singleton merges).
pub fn sir_feasible(
    left: &RoutePlan,
    right: &RoutePlan,
    merged: &RoutePlan,
    gamma: f64,
    profiles: &BTreeMap<u64, UserProfile>,
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
) -> bool {
    merged.legs.iter().all(|leg| {
        let profile = &profiles[&leg.user];
        let previous = if left.leg_for(leg.user).is_some() { left } else { right };
        disutility(profile, merged, schedule, policy)
            <= disutility(profile, previous, schedule, policy) - gamma
    })
}

/// [`MergeConstraint`] adapter for the matchers.
pub struct SirConstraint<'a> {
    pub gamma: f64,
    pub profiles: &'a BTreeMap<u64, UserProfile>,
    pub schedule: &'a CostSchedule,
    pub policy: &'a DiscountPolicy,
}

impl MergeConstraint for SirConstraint<'_> {
    fn allows(&self, left: &RoutePlan, right: &RoutePlan, merged: &RoutePlan) -> bool {
        sir_feasible(left, right, merged, self.gamma, self.profiles, self.schedule, self.policy)
    }
}

/// Baseline opt-in bias: proportional to the discount slope and the
/// up-front discount, inversely proportional to detour sensitivity.
pub fn baseline_bias(policy: &DiscountPolicy, kappa: f64, alpha_per_km: f64) -> f64 {
    (kappa * (policy.theta_dist_deg / 90.0) * (policy.min_b / 0.1) / (1.0 + alpha_per_km)).min(1.0)
}

/// Response bias after announcing the gamma rule: additionally proportional
/// to gamma, with `c_in` (scaled by its grid ceiling of 1000) measuring how
/// strongly riders value the quality guarantee.
pub fn response_bias(policy: &DiscountPolicy, gamma: f64, c_in: f64, alpha_per_km: f64) -> f64 {
    ((c_in / 1000.0) * (policy.theta_dist_deg / 90.0) * (policy.min_b / 0.1) * gamma
        / (1.0 + alpha_per_km))
        .min(1.0)
}

/// One baseline opt-in coin flip for an in-market rider.
pub fn opt_in_baseline(
    profile: &UserProfile,
    policy: &DiscountPolicy,
    kappa: f64,
    rng: &mut impl Rng,
) -> bool {
    debug_assert!(profile.in_market);
    rng.random::<f64>() < baseline_bias(policy, kappa, profile.alpha_per_km)
}

/// One response coin flip for a rider who has not yet opted in. Riders
/// outside the initial market flip with `outside_factor` times the bias.
pub fn opt_in_response(
    profile: &UserProfile,
    policy: &DiscountPolicy,
    gamma: f64,
    c_in: f64,
    outside_factor: f64,
    rng: &mut impl Rng,
) -> bool {
    debug_assert!(!profile.opted_base);
    let factor = if profile.in_market { 1.0 } else { outside_factor };
    rng.random::<f64>() < factor * response_bias(policy, gamma, c_in, profile.alpha_per_km)
}

/// Sample per-rider sensitivities, market membership, and baseline opt-ins
/// for one instance. Draw order is fixed per rider, so the profile set is
/// reproducible from the seed alone.
pub fn sample_profiles(
    trips: &[TripRequest],
    policy: &DiscountPolicy,
    cfg: &SirConfig,
    seed: u64,
) -> Vec<UserProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    trips
        .iter()
        .map(|trip| {
            let alpha_per_km = rng.random_range(0.0..cfg.alpha_max_per_km);
            let in_market = rng.random::<f64>() < cfg.base_share;
            let u_base = rng.random::<f64>();
            let opted_base =
                in_market && u_base < baseline_bias(policy, cfg.kappa, alpha_per_km);
            UserProfile { trip: trip.clone(), alpha_per_km, in_market, opted_base }
        })
        .collect()
}

/// Number of unordered pairs whose merge admits at least one gamma-feasible
/// route (profitability not required).
pub fn sir_feasible_edge_count(
    trips: &[TripRequest],
    profiles: &BTreeMap<u64, UserProfile>,
    gamma: f64,
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
    metric: &dyn TravelMetric,
) -> Result<usize> {
    let pool = TripPool::new(trips);
    let mut solos: BTreeMap<u64, RoutePlan> = BTreeMap::new();
    for trip in trips {
        let (plan, _) = best_route_filtered(
            &[trip.id],
            &pool,
            metric,
            schedule,
            policy,
            RouteObjective::MaxProfit,
            None,
        )?
        .expect("solo route always exists");
        solos.insert(trip.id, plan);
    }
    let mut count = 0;
    for (i, a) in trips.iter().enumerate() {
        for b in &trips[i + 1..] {
            let filter = |merged: &RoutePlan| {
                sir_feasible(&solos[&a.id], &solos[&b.id], merged, gamma, profiles, schedule, policy)
            };
            let feasible = best_route_filtered(
                &[a.id, b.id],
                &pool,
                metric,
                schedule,
                policy,
                RouteObjective::MaxProfit,
                Some(&filter),
            )?
            .is_some();
            if feasible {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// One grid-cell observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirRow {
    pub instance: usize,
    pub realization: usize,
    pub c_in: f64,
    pub gamma: f64,
    pub market_share: f64,
    pub matched_pairs: usize,
    pub profit: f64,
    pub baseline_profit: f64,
}

/// Seed-averaged cell of the `(c_in, gamma)` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub c_in: f64,
    pub gamma: f64,
    pub mean_profit: f64,
    pub mean_matched_pairs: f64,
    pub mean_market_share: f64,
}

/// Minimum market-share increase that meets a profit lower bound, per gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareCurveRow {
    pub gamma: f64,
    pub profit_lb: f64,
    pub min_share_increase: Option<f64>,
}

/// Best achievable profit increase among cells within a share increase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffRow {
    pub share_increase: f64,
    pub max_profit_increase: f64,
}

#[derive(Debug, Clone)]
pub struct SirReport {
    pub rows: Vec<SirRow>,
    pub cells: Vec<CellSummary>,
    pub share_curves: Vec<ShareCurveRow>,
    pub tradeoff: Vec<TradeoffRow>,
    pub baseline_mean_profit: f64,
    pub baseline_mean_share: f64,
}

/// Run the full market experiment.
///
/// Per instance, rider origins, sensitivities, market membership, and
/// baseline opt-ins are fixed. The baseline profit matches the baseline
/// opt-ins with no gamma rule. Then, per `(c_in, realization)`, each
/// not-yet-opted rider draws one uniform variate; sweeping gamma upward,
/// the rider opts in at the smallest gamma whose bias exceeds their
/// variate, so opted sets grow monotonically with gamma. Opted riders are
/// matched pairwise under the gamma rule; profit counts every opted rider
/// (solo margins included), matched or not.
pub fn run_sir_experiment(
    instances: &[Vec<TripRequest>],
    gamma_grid: &[f64],
    cin_grid: &[f64],
    cfg: &SirConfig,
    schedule: &CostSchedule,
    policy: &DiscountPolicy,
    metric: &dyn TravelMetric,
    seed: u64,
) -> Result<SirReport> {
    if instances.is_empty() || gamma_grid.is_empty() || cin_grid.is_empty() {
        return Err(Error::BadParam("instances and both grids must be non-empty".into()));
    }
    if cfg.realizations == 0 {
        return Err(Error::BadParam("need at least one realization".into()));
    }
    let mut gammas = gamma_grid.to_vec();
    gammas.sort_by(f64::total_cmp);
    let mut cins = cin_grid.to_vec();
    cins.sort_by(f64::total_cmp);
    if gammas[0] < 0.0 {
        return Err(Error::BadParam("gamma must be non-negative".into()));
    }

    let mut rows = Vec::new();
    let mut baseline_profit_sum = 0.0;
    let mut baseline_share_sum = 0.0;
    for (ii, trips) in instances.iter().enumerate() {
        if trips.is_empty() {
            return Err(Error::BadParam(format!("instance {ii} has no trips")));
        }
        let n = trips.len();
        let profiles = sample_profiles(trips, policy, cfg, mix_seed(seed, ii as u64));
        let profile_map: BTreeMap<u64, UserProfile> =
            profiles.iter().map(|p| (p.trip.id, p.clone())).collect();

        let in_market_count = profiles.iter().filter(|p| p.in_market).count();
        let baseline_share = in_market_count as f64 / n as f64;
        baseline_share_sum += baseline_share;

        let baseline_trips: Vec<TripRequest> = profiles
            .iter()
            .filter(|p| p.opted_base)
            .map(|p| p.trip.clone())
            .collect();
        let baseline_profit = if baseline_trips.is_empty() {
            0.0
        } else {
            let zero = SirConstraint { gamma: 0.0, profiles: &profile_map, schedule, policy };
            let mut params = MatchParams::new(&baseline_trips, 2, metric, schedule, policy);
            if cfg.constrained_baseline {
                params = params.with_constraint(&zero);
            }
            pairwise_blossom(&params)?.total_profit
        };
        baseline_profit_sum += baseline_profit;

        for &c_in in &cins {
            for realization in 0..cfg.realizations {
                let cell_salt =
                    (ii as u64) << 40 | ((c_in.round() as u64) & 0xFFFFF) << 20 | realization as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x5a5a_5a5a, cell_salt));
                let variates: Vec<f64> = profiles.iter().map(|_| rng.random()).collect();

                let mut prev_opted = 0usize;
                for &gamma in &gammas {
                    let opted: Vec<&UserProfile> = profiles
                        .iter()
                        .zip(&variates)
                        .filter(|(p, &u)| {
                            if p.opted_base {
                                return true;
                            }
                            let factor = if p.in_market { 1.0 } else { cfg.outside_factor };
                            u < factor * response_bias(policy, gamma, c_in, p.alpha_per_km)
                        })
                        .map(|(p, _)| p)
                        .collect();
                    debug_assert!(opted.len() >= prev_opted, "opted set must grow with gamma");
                    prev_opted = opted.len();

                    // Market share recomputed from the raw flags: everyone
                    // in the initial market plus outside riders who opted.
                    let market = profiles
                        .iter()
                        .zip(&variates)
                        .filter(|(p, &u)| {
                            p.in_market
                                || u < cfg.outside_factor
                                    * response_bias(policy, gamma, c_in, p.alpha_per_km)
                        })
                        .count();
                    let market_share = market as f64 / n as f64;

                    let opted_trips: Vec<TripRequest> =
                        opted.iter().map(|p| p.trip.clone()).collect();
                    let (profit, matched_pairs) = if opted_trips.is_empty() {
                        (0.0, 0)
                    } else {
                        let constraint =
                            SirConstraint { gamma, profiles: &profile_map, schedule, policy };
                        let params = MatchParams::new(&opted_trips, 2, metric, schedule, policy)
                            .with_constraint(&constraint);
                        let result = pairwise_blossom(&params)?;
                        (result.total_profit, result.merge_count)
                    };

                    rows.push(SirRow {
                        instance: ii,
                        realization,
                        c_in,
                        gamma,
                        market_share,
                        matched_pairs,
                        profit,
                        baseline_profit,
                    });
                }
            }
        }
    }

    let baseline_mean_profit = baseline_profit_sum / instances.len() as f64;
    let baseline_mean_share = baseline_share_sum / instances.len() as f64;

    // Seed-averaged grid cells, in (c_in, gamma) order.
    let mut cells = Vec::with_capacity(cins.len() * gammas.len());
    for &c_in in &cins {
        for &gamma in &gammas {
            let select: Vec<&SirRow> = rows
                .iter()
                .filter(|r| r.c_in == c_in && r.gamma == gamma)
                .collect();
            let count = select.len() as f64;
            cells.push(CellSummary {
                c_in,
                gamma,
                mean_profit: select.iter().map(|r| r.profit).sum::<f64>() / count,
                mean_matched_pairs: select.iter().map(|r| r.matched_pairs as f64).sum::<f64>()
                    / count,
                mean_market_share: select.iter().map(|r| r.market_share).sum::<f64>() / count,
            });
        }
    }

    // Minimum share increase to reach each profit lower bound, per gamma.
    let mut share_curves = Vec::new();
    for &gamma in &gammas {
        for lb in PROFIT_LB_GRID {
            let threshold = baseline_mean_profit + lb * baseline_mean_profit.abs();
            let min_share_increase = cells
                .iter()
                .filter(|c| c.gamma == gamma && c.mean_profit >= threshold)
                .map(|c| c.mean_market_share - baseline_mean_share)
                .min_by(f64::total_cmp);
            share_curves.push(ShareCurveRow { gamma, profit_lb: lb, min_share_increase });
        }
    }

    // Best profit increase achievable within a given share increase:
    // running maximum over cells ordered by share increase.
    let mut ordered: Vec<(f64, f64)> = cells
        .iter()
        .map(|c| (c.mean_market_share - baseline_mean_share, c.mean_profit - baseline_mean_profit))
        .collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut tradeoff = Vec::with_capacity(ordered.len());
    let mut running = f64::NEG_INFINITY;
    for (share_increase, profit_increase) in ordered {
        running = running.max(profit_increase);
        tradeoff.push(TradeoffRow { share_increase, max_profit_increase: running });
    }

    Ok(SirReport {
        rows,
        cells,
        share_curves,
        tradeoff,
        baseline_mean_profit,
        baseline_mean_share,
    })
}
