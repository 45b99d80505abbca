//! Optimal partition matching over user subsets, plus the exhaustive
//! partition oracle used to validate it.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::routing::{best_route_filtered, RoutePlan, TripPool};

use super::{assemble, Cab, MatchParams, MatchResult};

/// The subset DP is exponential in the user count; past this it is not a
/// realistic benchmark anymore.
pub const DP_MAX_USERS: usize = 24;
/// Exhaustive partition enumeration grows with the Bell numbers.
pub const BRUTE_FORCE_MAX_USERS: usize = 10;
const DP_MAX_ZETA: usize = 3;

/// Best plan and profit for one block (a candidate cab's user set), or
/// `None` when a merge constraint rules every route out.
type BlockEval = Option<(RoutePlan, f64)>;

/// Evaluate every subset of at most `zeta` users as a potential cab, keyed
/// by index bitmask.
///
/// Without a merge constraint a block's value is simply its best route.
/// With one, a block is feasible if the cabs could have reached it through
/// some sequence of constraint-respecting merges, mirroring how the greedy
/// matchers build cabs: a pair must be a feasible merge of its two solos,
/// and a triple a feasible merge of a feasible pair with the remaining
/// solo. The block's plan is the best route over all such merge paths.
fn block_table(params: &MatchParams, pool: &TripPool, ids: &[u64]) -> Result<HashMap<u32, BlockEval>> {
    let n = ids.len();
    let zeta = params.zeta.min(DP_MAX_ZETA);
    let mut table: HashMap<u32, BlockEval> = HashMap::new();

    let route = |members: &[u64], filter: Option<&dyn Fn(&RoutePlan) -> bool>| -> Result<BlockEval> {
        best_route_filtered(
            members,
            pool,
            params.metric,
            params.schedule,
            params.policy,
            params.objective,
            filter,
        )
    };

    for i in 0..n {
        table.insert(1 << i, route(&[ids[i]], None)?);
    }

    if zeta >= 2 {
        for i in 0..n {
            for j in i + 1..n {
                let mask = (1 << i) | (1 << j);
                let eval = match params.constraint {
                    None => route(&[ids[i], ids[j]], None)?,
                    Some(c) => {
                        let (li, _) = table[&(1u32 << i)].clone().unwrap();
                        let (lj, _) = table[&(1u32 << j)].clone().unwrap();
                        let filter = move |m: &RoutePlan| c.allows(&li, &lj, m);
                        route(&[ids[i], ids[j]], Some(&filter))?
                    }
                };
                table.insert(mask, eval);
            }
        }
    }

    if zeta >= 3 {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let mask = (1 << i) | (1 << j) | (1 << k);
                    let members = [ids[i], ids[j], ids[k]];
                    let eval = match params.constraint {
                        None => route(&members, None)?,
                        Some(c) => {
                            // Try each pair-plus-single merge path, keep the
                            // most profitable feasible outcome.
                            let mut best: BlockEval = None;
                            for (pair, single) in [
                                ((i, j), k),
                                ((i, k), j),
                                ((j, k), i),
                            ] {
                                let pair_mask = (1u32 << pair.0) | (1 << pair.1);
                                let Some((pair_plan, _)) = table[&pair_mask].clone() else {
                                    continue;
                                };
                                let (solo_plan, _) = table[&(1u32 << single)].clone().unwrap();
                                let filter = move |m: &RoutePlan| c.allows(&pair_plan, &solo_plan, m);
                                if let Some((plan, profit)) = route(&members, Some(&filter))? {
                                    let better = match &best {
                                        None => true,
                                        Some((_, bp)) => profit > *bp,
                                    };
                                    if better {
                                        best = Some((plan, profit));
                                    }
                                }
                            }
                            best
                        }
                    };
                    table.insert(mask, eval);
                }
            }
        }
    }

    Ok(table)
}

/// Call `f` with every block of `mask` that contains `mask`'s lowest set
/// bit and has at most `zeta` members, in lexicographic member order.
fn for_each_block(mask: u32, zeta: usize, mut f: impl FnMut(u32)) {
    let bits: Vec<u32> = (0..32).filter(|&b| mask & (1 << b) != 0).collect();
    let low = 1u32 << bits[0];
    f(low);
    if zeta >= 2 {
        for (i, &bi) in bits.iter().enumerate().skip(1) {
            let pair = low | (1 << bi);
            f(pair);
            if zeta >= 3 {
                for &bj in &bits[i + 1..] {
                    f(pair | (1 << bj));
                }
            }
        }
    }
}

/// Maximize total profit over all partitions of the users into blocks of at
/// most `zeta`, by dynamic programming over subsets: the best value of a
/// subset considers every block containing its lowest-indexed user. Profit
/// ties prefer the lexicographically smallest block.
pub fn exact_partition_dp(params: &MatchParams) -> Result<MatchResult> {
    let start = Instant::now();
    params.validate()?;
    let n = params.trips.len();
    if n > DP_MAX_USERS {
        return Err(Error::TooManyUsers { requested: n, limit: DP_MAX_USERS });
    }
    if params.zeta > DP_MAX_ZETA {
        return Err(Error::BadParam(format!(
            "exact solver supports capacity up to {DP_MAX_ZETA}, got {}",
            params.zeta
        )));
    }

    let pool = TripPool::new(params.trips);
    let ids: Vec<u64> = params.trips.iter().map(|t| t.id).collect();
    let blocks = block_table(params, &pool, &ids)?;

    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut best = vec![f64::NEG_INFINITY; (full as usize) + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let mut value = f64::NEG_INFINITY;
        for_each_block(mask, params.zeta, |block| {
            if let Some(Some((_, profit))) = blocks.get(&block) {
                let cand = profit + best[(mask ^ block) as usize];
                if cand > value {
                    value = cand;
                }
            }
        });
        best[mask as usize] = value;
    }

    // Walk the optimum back out. Re-scanning in the same order and taking
    // the first block that attains the stored value reproduces the DP's
    // first-strict-maximum tie-break exactly.
    let mut cabs = Vec::new();
    let mut mask = full;
    let mut next_id = 0u64;
    while mask != 0 {
        let mut chosen: Option<u32> = None;
        for_each_block(mask, params.zeta, |block| {
            if chosen.is_some() {
                return;
            }
            if let Some(Some((_, profit))) = blocks.get(&block) {
                if profit + best[(mask ^ block) as usize] == best[mask as usize] {
                    chosen = Some(block);
                }
            }
        });
        let block = chosen.expect("every mask decomposes into singletons");
        let (plan, profit) = blocks[&block].clone().unwrap();
        let users: Vec<u64> = (0..32)
            .filter(|&b| block & (1 << b) != 0)
            .map(|b| ids[b as usize])
            .collect();
        cabs.push(Cab { id: next_id, users, plan, profit });
        next_id += 1;
        mask ^= block;
    }

    let merge_count = n - cabs.len();
    Ok(assemble(params, cabs, merge_count, start))
}

/// Visit every partition of `n` items into blocks of at most `zeta`, as
/// restricted-growth strings (`assign[i]` = block index of item `i`).
fn for_each_partition(n: usize, zeta: usize, f: &mut impl FnMut(&[usize])) {
    fn recurse(
        assign: &mut Vec<usize>,
        sizes: &mut Vec<usize>,
        n: usize,
        zeta: usize,
        f: &mut impl FnMut(&[usize]),
    ) {
        if assign.len() == n {
            f(assign);
            return;
        }
        for block in 0..=sizes.len() {
            if block < sizes.len() && sizes[block] >= zeta {
                continue;
            }
            if block == sizes.len() {
                sizes.push(0);
            }
            sizes[block] += 1;
            assign.push(block);
            recurse(assign, sizes, n, zeta, f);
            assign.pop();
            sizes[block] -= 1;
            if sizes[block] == 0 {
                sizes.pop();
            }
        }
    }
    recurse(&mut Vec::with_capacity(n), &mut Vec::new(), n, zeta, f);
}

/// Number of partitions [`brute_force_partitions`] enumerates for `n` users
/// at capacity `zeta`.
pub fn count_partitions(n: usize, zeta: usize) -> u64 {
    let mut count = 0u64;
    for_each_partition(n, zeta, &mut |_| count += 1);
    count
}

/// Independent oracle for the exact solver: enumerate every set partition
/// with block sizes at most `zeta`, evaluate each, return the maximum.
pub fn brute_force_partitions(params: &MatchParams) -> Result<MatchResult> {
    let start = Instant::now();
    params.validate()?;
    let n = params.trips.len();
    if n > BRUTE_FORCE_MAX_USERS {
        return Err(Error::TooManyUsers { requested: n, limit: BRUTE_FORCE_MAX_USERS });
    }
    if params.zeta > DP_MAX_ZETA {
        return Err(Error::BadParam(format!(
            "brute force supports capacity up to {DP_MAX_ZETA}, got {}",
            params.zeta
        )));
    }

    let pool = TripPool::new(params.trips);
    let ids: Vec<u64> = params.trips.iter().map(|t| t.id).collect();
    let blocks = block_table(params, &pool, &ids)?;

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut scratch_masks: Vec<u32> = Vec::new();
    for_each_partition(n, params.zeta, &mut |assign| {
        scratch_masks.clear();
        scratch_masks.resize(assign.iter().max().unwrap() + 1, 0);
        for (item, &block) in assign.iter().enumerate() {
            scratch_masks[block] |= 1 << item;
        }
        let mut total = 0.0;
        for &mask in &*scratch_masks {
            match &blocks[&mask] {
                Some((_, profit)) => total += profit,
                None => return,
            }
        }
        let better = match &best {
            None => true,
            Some((bt, _)) => total > *bt,
        };
        if better {
            best = Some((total, assign.to_vec()));
        }
    });

    let (_, assign) = best.ok_or_else(|| {
        Error::BadParam("no feasible partition (constraint rejects even solo rides?)".into())
    })?;
    let block_count = assign.iter().max().unwrap() + 1;
    let mut cabs = Vec::with_capacity(block_count);
    for block in 0..block_count {
        let mask: u32 = assign
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == block)
            .map(|(item, _)| 1u32 << item)
            .sum();
        let users: Vec<u64> = (0..32)
            .filter(|&b| mask & (1 << b) != 0)
            .map(|b| ids[b as usize])
            .collect();
        let (plan, profit) = blocks[&mask].clone().unwrap();
        cabs.push(Cab { id: block as u64, users, plan, profit });
    }

    let merge_count = n - cabs.len();
    Ok(assemble(params, cabs, merge_count, start))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::matching::MatchParams;

    #[test]
    fn partition_counts_match_closed_forms() {
        // Bell(3) = 5, all blocks fit under capacity 3.
        assert_eq!(count_partitions(3, 3), 5);
        // Partitions of a 4-set into blocks of size <= 2.
        assert_eq!(count_partitions(4, 2), 10);
        // Singletons only.
        assert_eq!(count_partitions(5, 1), 1);
    }

    #[test]
    fn dp_matches_brute_force_on_seeded_instances() {
        let (m, s, p) = (metric(), schedule(), policy());
        for seed in 0..10u64 {
            let n = 4 + (seed as usize % 4);
            let trips = instance(seed, n);
            let params = MatchParams::new(&trips, 3, &m, &s, &p);
            let dp = exact_partition_dp(&params).unwrap();
            let bf = brute_force_partitions(&params).unwrap();
            assert!(
                (dp.total_profit - bf.total_profit).abs() <= 1e-9,
                "seed {seed}: dp {} vs brute force {}",
                dp.total_profit,
                bf.total_profit
            );
        }
    }

    #[test]
    fn identical_pair_is_merged_by_the_dp() {
        let mut trips = instance(2, 1);
        let mut twin = trips[0].clone();
        twin.id = 1;
        trips.push(twin);
        let (m, s, p) = (metric(), schedule(), policy());
        let params = MatchParams::new(&trips, 2, &m, &s, &p);
        let result = exact_partition_dp(&params).unwrap();
        assert_eq!(result.cabs.len(), 1);
        assert_eq!(result.cabs[0].users, vec![0, 1]);
    }

    #[test]
    fn guards_reject_oversized_instances() {
        let (m, s, p) = (metric(), schedule(), policy());
        let trips = instance(0, 11);
        let params = MatchParams::new(&trips, 3, &m, &s, &p);
        assert!(matches!(
            brute_force_partitions(&params),
            Err(Error::TooManyUsers { requested: 11, limit: BRUTE_FORCE_MAX_USERS })
        ));
        let trips = instance(0, 25);
        let params = MatchParams::new(&trips, 3, &m, &s, &p);
        assert!(matches!(
            exact_partition_dp(&params),
            Err(Error::TooManyUsers { requested: 25, limit: DP_MAX_USERS })
        ));
    }
}
