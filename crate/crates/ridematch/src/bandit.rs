//! Learning the profit-maximizing discount slope.
//!
//! Each simulated day the provider declares a discount slope theta; riders
//! opt into sharing with probability given by a non-decreasing acceptance
//! curve, opted riders are matched, and the day's total profit is the
//! reward. A UCB1 learner picks the slope day by day and is scored against
//! the best-fixed-slope oracle (the arm with the highest mean profit when
//! every arm is replayed over every day with paired randomness).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matching::{
    exact_partition_dp, greedy_max_profit, greedy_order, pairwise_blossom, MatchParams,
    OrderProtocol,
};
use crate::pricing::{CostSchedule, DiscountPolicy};
use crate::trips::{synth_generate, BoundingBox, TravelMetric, TripRequest};
use crate::util::mix_seed;

/// Running statistics for one discount-slope arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    pub theta_deg: f64,
    /// Cumulative profit earned on days this arm was played, $.
    pub total_profit: f64,
    pub pulls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullRecord {
    pub day: u64,
    pub arm: usize,
    pub profit: f64,
}

/// How observed dollar profits are scaled before entering the UCB index.
///
/// The exploration bonus `sqrt(2 ln t / k)` presumes rewards of order one;
/// dollar-scale rewards drown it out. `Normalized` divides observed profits
/// by a scale (by default the largest magnitude seen during the one-pull-
/// per-arm initialization) before indexing. `Raw` indexes dollars directly,
/// reproducing the printed algorithm's behavior: near-greedy exploitation
/// after initialization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RewardScale {
    #[default]
    NormalizedAuto,
    Normalized(f64),
    Raw,
}

/// The UCB1 index in the units the arm statistics are stored in.
pub fn ucb_index(arm: &ArmStats, day: u64) -> f64 {
    let k = arm.pulls as f64;
    arm.total_profit / k + (2.0 * (day as f64).ln() / k).sqrt()
}

/// Learner state: one arm per slope value, a day counter, and the pull
/// history.
#[derive(Debug, Clone)]
pub struct BanditState {
    pub arms: Vec<ArmStats>,
    /// Completed days.
    pub day: u64,
    pub history: Vec<PullRecord>,
    scaling: RewardScale,
    resolved_scale: f64,
}

impl BanditState {
    pub fn new(theta_grid: &[f64], scaling: RewardScale) -> Result<Self> {
        if theta_grid.is_empty() {
            return Err(Error::BadParam("theta grid must be non-empty".into()));
        }
        for &t in theta_grid {
            DiscountPolicy::distance_only(t, 0.0)?;
        }
        Ok(Self {
            arms: theta_grid
                .iter()
                .map(|&theta_deg| ArmStats { theta_deg, total_profit: 0.0, pulls: 0 })
                .collect(),
            day: 0,
            history: Vec::new(),
            scaling,
            resolved_scale: match scaling {
                RewardScale::Normalized(r) if r > 0.0 => r,
                _ => 1.0,
            },
        })
    }

    /// Arm to play next. The first `|arms|` days pull each arm once in
    /// array order; afterwards the UCB1 argmax, evaluated with the day
    /// count completed so far and with ties going to the lowest arm index.
    pub fn select_arm(&self) -> usize {
        let m = self.arms.len() as u64;
        if self.day < m {
            return self.day as usize;
        }
        let mut best = 0;
        let mut best_index = f64::NEG_INFINITY;
        for (h, arm) in self.arms.iter().enumerate() {
            let scaled = ArmStats {
                theta_deg: arm.theta_deg,
                total_profit: arm.total_profit / self.resolved_scale,
                pulls: arm.pulls,
            };
            let index = ucb_index(&scaled, self.day);
            if index > best_index {
                best_index = index;
                best = h;
            }
        }
        best
    }

    /// Record the observed profit for a pulled arm.
    pub fn record(&mut self, arm: usize, profit: f64) -> Result<()> {
        if !profit.is_finite() {
            return Err(Error::NonFiniteProfit);
        }
        self.day += 1;
        self.arms[arm].total_profit += profit;
        self.arms[arm].pulls += 1;
        self.history.push(PullRecord { day: self.day, arm, profit });
        if self.day == self.arms.len() as u64 {
            if let RewardScale::NormalizedAuto = self.scaling {
                let max_abs = self
                    .arms
                    .iter()
                    .map(|a| a.total_profit.abs())
                    .fold(0.0f64, f64::max);
                self.resolved_scale = if max_abs > 0.0 { max_abs } else { 1.0 };
            }
        }
        Ok(())
    }
}

/// One learner step: select an arm, observe the day's profit through the
/// callback, update the state. Returns the arm played.
pub fn idfla_step(
    state: &mut BanditState,
    mut profit_of: impl FnMut(f64) -> Result<f64>,
) -> Result<usize> {
    let arm = state.select_arm();
    let profit = profit_of(state.arms[arm].theta_deg)?;
    state.record(arm, profit)?;
    Ok(arm)
}

/// Probability that a rider opts into sharing at slope theta. Must be
/// non-decreasing in theta and within [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum DemandCurve {
    /// `p0 + (p1 - p0) * (theta / 90)^2`.
    Quadratic { p0: f64, p1: f64 },
    /// Piecewise-linear interpolation through `(theta, p)` knots, clamped
    /// at the ends.
    Table(Vec<(f64, f64)>),
}

impl Default for DemandCurve {
    fn default() -> Self {
        DemandCurve::Quadratic { p0: 0.2, p1: 0.95 }
    }
}

impl DemandCurve {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::BadParam(format!("demand curve: {msg}")));
        match self {
            DemandCurve::Quadratic { p0, p1 } => {
                if !(0.0..=1.0).contains(p0) || !(0.0..=1.0).contains(p1) || p1 < p0 {
                    return bad("need 0 <= p0 <= p1 <= 1");
                }
            }
            DemandCurve::Table(knots) => {
                if knots.is_empty() {
                    return bad("need at least one knot");
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return bad("knot angles must be strictly increasing");
                    }
                    if w[1].1 < w[0].1 {
                        return bad("acceptance must be non-decreasing");
                    }
                }
                for &(theta, p) in knots {
                    if !(0.0..=90.0).contains(&theta) || !(0.0..=1.0).contains(&p) {
                        return bad("knots must lie in [0, 90] x [0, 1]");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn probability(&self, theta_deg: f64) -> f64 {
        match self {
            DemandCurve::Quadratic { p0, p1 } => {
                let x = (theta_deg / 90.0).clamp(0.0, 1.0);
                p0 + (p1 - p0) * x * x
            }
            DemandCurve::Table(knots) => {
                if theta_deg <= knots[0].0 {
                    return knots[0].1;
                }
                for w in knots.windows(2) {
                    if theta_deg <= w[1].0 {
                        let f = (theta_deg - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + f * (w[1].1 - w[0].1);
                    }
                }
                knots.last().unwrap().1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatcherKind {
    GreedyMaxProfit,
    GreedyOrderDistance,
    GreedyOrderProfit,
    ExactPartition,
    PairwiseBlossom,
}

/// Everything about the simulated day besides the slope being learned.
pub struct DayContext<'a> {
    pub metric: &'a dyn TravelMetric,
    pub schedule: &'a CostSchedule,
    /// Up-front discount applied regardless of theta.
    pub min_b: f64,
    /// Time-wise discount slope, usually zero.
    pub theta_time_deg: f64,
    pub zeta: usize,
    pub matcher: MatcherKind,
}

impl DayContext<'_> {
    fn run_matcher(&self, params: &MatchParams) -> Result<f64> {
        let result = match self.matcher {
            MatcherKind::GreedyMaxProfit => greedy_max_profit(params)?,
            MatcherKind::GreedyOrderDistance => greedy_order(params, OrderProtocol::DistanceDesc)?,
            MatcherKind::GreedyOrderProfit => greedy_order(params, OrderProtocol::ProfitAsc)?,
            MatcherKind::ExactPartition => exact_partition_dp(params)?,
            MatcherKind::PairwiseBlossom => pairwise_blossom(params)?,
        };
        Ok(result.total_profit)
    }
}

/// Simulate one day at a declared slope: each rider opts in independently
/// with the curve's probability, opted riders are matched under the
/// corresponding discount policy, and the matcher's total profit is the
/// reward. Riders who do not opt in contribute nothing.
///
/// Opt-in draws use one uniform per rider in trip order, so the same seed
/// yields coupled (inverse-uniform) opt-in sets across different slopes.
pub fn simulate_day(
    theta_deg: f64,
    trips: &[TripRequest],
    demand: &DemandCurve,
    ctx: &DayContext,
    seed: u64,
) -> Result<f64> {
    let p = demand.probability(theta_deg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opted: Vec<TripRequest> = trips
        .iter()
        .filter(|_| rng.random::<f64>() < p)
        .cloned()
        .collect();
    if opted.is_empty() {
        return Ok(0.0);
    }
    let policy = DiscountPolicy::new(theta_deg, ctx.theta_time_deg, ctx.min_b)?;
    let params = MatchParams::new(&opted, ctx.zeta, ctx.metric, ctx.schedule, &policy);
    ctx.run_matcher(&params)
}

/// Supplies the trip batch for each simulated day. Implementations must be
/// deterministic per day: the oracle replays days.
pub trait DaySource {
    fn trips_for_day(&self, day: u64) -> Result<Vec<TripRequest>>;
}

/// Synthetic days drawn from a bounding box; either a fresh batch per day
/// or the same batch replayed.
pub struct SynthDays {
    pub base_seed: u64,
    pub n: usize,
    pub bbox: BoundingBox,
    pub horizon_min: f64,
    pub fresh_each_day: bool,
}

impl DaySource for SynthDays {
    fn trips_for_day(&self, day: u64) -> Result<Vec<TripRequest>> {
        let seed = if self.fresh_each_day {
            mix_seed(self.base_seed, day)
        } else {
            self.base_seed
        };
        synth_generate(self.n, seed, &self.bbox, self.horizon_min)
    }
}

/// The same fixed batch every day.
pub struct FixedDays(pub Vec<TripRequest>);

impl DaySource for FixedDays {
    fn trips_for_day(&self, _day: u64) -> Result<Vec<TripRequest>> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LearnConfig {
    pub days: u64,
    pub scaling: RewardScale,
    /// Master seed for the per-day opt-in randomness.
    pub seed: u64,
}

/// Per-day learning trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRow {
    pub day: u64,
    pub theta_deg: f64,
    pub profit: f64,
    /// Learner's running average daily profit.
    pub cumavg: f64,
    /// Oracle arm's running average daily profit over the same days.
    pub bdf_cumavg: f64,
    /// `bdf_cumavg - cumavg`; equals cumulative regret divided by the day
    /// count, and is identically zero for a single-arm grid.
    pub regret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmRow {
    pub theta_deg: f64,
    pub pulls: u64,
    pub mean_profit: f64,
}

#[derive(Debug, Clone)]
pub struct LearnReport {
    pub daily: Vec<DailyRow>,
    pub arms: Vec<ArmRow>,
    pub bdf_arm: usize,
    pub bdf_theta_deg: f64,
    /// Oracle arm's mean daily profit over the whole horizon.
    pub bdf_mean: f64,
}

/// Run the learner for `days` days over `theta_grid`, then replay every arm
/// over every day with the same per-day seeds to find the best-fixed-slope
/// oracle, and report the daily trace against it.
pub fn run_learning(
    cfg: &LearnConfig,
    theta_grid: &[f64],
    source: &dyn DaySource,
    demand: &DemandCurve,
    ctx: &DayContext,
) -> Result<LearnReport> {
    demand.validate()?;
    let m = theta_grid.len() as u64;
    if cfg.days < m {
        return Err(Error::TooFewDays { need: m, got: cfg.days });
    }

    let mut state = BanditState::new(theta_grid, cfg.scaling)?;
    let mut played: Vec<(usize, f64)> = Vec::with_capacity(cfg.days as usize);
    for day in 1..=cfg.days {
        let trips = source.trips_for_day(day)?;
        let day_seed = mix_seed(cfg.seed, day);
        let arm = idfla_step(&mut state, |theta| {
            simulate_day(theta, &trips, demand, ctx, day_seed)
        })?;
        played.push((arm, state.history.last().unwrap().profit));
    }

    // Oracle pass: every arm on every day, same seeds.
    let mut arm_daily: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.days as usize); theta_grid.len()];
    for day in 1..=cfg.days {
        let trips = source.trips_for_day(day)?;
        let day_seed = mix_seed(cfg.seed, day);
        for (h, &theta) in theta_grid.iter().enumerate() {
            arm_daily[h].push(simulate_day(theta, &trips, demand, ctx, day_seed)?);
        }
    }
    let mut bdf_arm = 0;
    let mut bdf_mean = f64::NEG_INFINITY;
    for (h, profits) in arm_daily.iter().enumerate() {
        let mean = profits.iter().sum::<f64>() / profits.len() as f64;
        if mean > bdf_mean {
            bdf_mean = mean;
            bdf_arm = h;
        }
    }

    let mut daily = Vec::with_capacity(cfg.days as usize);
    let mut learner_sum = 0.0;
    let mut oracle_sum = 0.0;
    for (i, &(arm, profit)) in played.iter().enumerate() {
        let day = (i + 1) as u64;
        learner_sum += profit;
        oracle_sum += arm_daily[bdf_arm][i];
        let cumavg = learner_sum / day as f64;
        let bdf_cumavg = oracle_sum / day as f64;
        daily.push(DailyRow {
            day,
            theta_deg: theta_grid[arm],
            profit,
            cumavg,
            bdf_cumavg,
            regret: bdf_cumavg - cumavg,
        });
    }

    let arms = state
        .arms
        .iter()
        .map(|a| ArmRow {
            theta_deg: a.theta_deg,
            pulls: a.pulls,
            mean_profit: if a.pulls > 0 { a.total_profit / a.pulls as f64 } else { 0.0 },
        })
        .collect();

    Ok(LearnReport {
        daily,
        arms,
        bdf_arm,
        bdf_theta_deg: theta_grid[bdf_arm],
        bdf_mean,
    })
}

/// The paper's eight-slope grid.
pub fn default_theta_grid() -> Vec<f64> {
    (1..=8).map(|i| 10.0 * i as f64).collect()
}
