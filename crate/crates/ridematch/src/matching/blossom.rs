//! Optimal pairing for capacity-2 cabs via maximum-weight general matching.

use std::collections::HashMap;
use std::time::Instant;

use petgraph::graph::UnGraph;
use rustworkx_core::max_weight_matching::max_weight_matching;

use crate::error::{Error, Result};
use crate::routing::TripPool;

use super::{assemble, evaluate_merge, solo_cabs, Cab, MatchParams, MatchResult};

/// Incremental profits are dollars; scaling to integers keeps the matching
/// arithmetic exact. 1e-12 resolution is far below the 1e-9 profit
/// tolerances used everywhere else.
const WEIGHT_SCALE: f64 = 1e12;

/// Maximum-weight matching on an undirected graph over nodes
/// `0..node_count`, given `(i, j, weight)` edges. Returns the matched pairs
/// as `(min, max)`, sorted.
pub(crate) fn max_weight_pairs(node_count: usize, edges: &[(usize, usize, f64)]) -> Vec<(usize, usize)> {
    if edges.is_empty() {
        return Vec::new();
    }
    let mut graph: UnGraph<(), i128> = UnGraph::with_capacity(node_count, edges.len());
    for _ in 0..node_count {
        graph.add_node(());
    }
    for &(i, j, w) in edges {
        debug_assert!(w.is_finite());
        graph.add_edge((i as u32).into(), (j as u32).into(), (w * WEIGHT_SCALE).round() as i128);
    }
    let matching: rustworkx_core::Result<_> =
        max_weight_matching(&graph, false, |e| Ok(*e.weight()), true);
    let mut pairs: Vec<(usize, usize)> = matching
        .expect("weight callback is infallible")
        .into_iter()
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Capacity-2 matcher: build the complete graph over users weighted by the
/// incremental profit of pairing them, keep only strictly profitable and
/// feasible pairs, and take a maximum-weight matching. Everyone unmatched
/// rides solo.
pub fn pairwise_blossom(params: &MatchParams) -> Result<MatchResult> {
    let start = Instant::now();
    params.validate()?;
    if params.zeta != 2 {
        return Err(Error::BadParam(format!(
            "pairwise matching requires capacity 2, got {}",
            params.zeta
        )));
    }

    let pool = TripPool::new(params.trips);
    let solos = solo_cabs(params, &pool)?;
    let n = solos.len();

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut evals: HashMap<(usize, usize), super::MergeEval> = HashMap::new();
    for i in 0..n {
        for j in i + 1..n {
            if let Some(ev) = evaluate_merge(params, &pool, &solos[i], &solos[j])? {
                if ev.gain > 0.0 {
                    edges.push((i, j, ev.gain));
                    evals.insert((i, j), ev);
                }
            }
        }
    }

    let pairs = max_weight_pairs(n, &edges);

    let mut taken = vec![false; n];
    let mut cabs: Vec<Cab> = Vec::with_capacity(n - pairs.len());
    let mut next_id = n as u64;
    for &(i, j) in &pairs {
        let ev = evals.remove(&(i, j)).expect("matched edges were evaluated");
        let mut users = solos[i].users.clone();
        users.extend_from_slice(&solos[j].users);
        users.sort_unstable();
        cabs.push(Cab { id: next_id, users, plan: ev.plan, profit: ev.profit });
        next_id += 1;
        taken[i] = true;
        taken[j] = true;
    }
    for (idx, solo) in solos.into_iter().enumerate() {
        if !taken[idx] {
            cabs.push(solo);
        }
    }

    let merge_count = pairs.len();
    Ok(assemble(params, cabs, merge_count, start))
}
