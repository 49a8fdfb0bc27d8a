//! Candidate pools for missing-edge prediction.

use std::collections::BTreeSet;

use rand::Rng;

use super::{CandidateSet, Digraph, MaterialId, PartialPlan};
use crate::error::{Error, Result};

/// Constrained candidate pool Ω of a partial plan.
///
/// A pair `(u, v)` is a candidate iff, in the known-edge graph and before
/// inserting it: `u ≠ v`, the pair is not known, `out(u) < 4`, `in(v) ≤ 1`,
/// `u` is not a starting material (starting materials are never products),
/// and `u → v` closes no directed cycle.
///
/// Starting materials stay admissible as end nodes: they are exactly the
/// ingredients of mining recipes, so excluding them would drop true missing
/// edges.
pub fn candidate_sampling(partial: &PartialPlan, starting_set: &BTreeSet<MaterialId>) -> CandidateSet {
    candidate_sampling_view(&partial.view(), starting_set)
}

/// [`candidate_sampling`] over an arbitrary known-edge view.
pub fn candidate_sampling_view(g: &Digraph, starting_set: &BTreeSet<MaterialId>) -> CandidateSet {
    let reach = g.reachability();
    let mut pairs = Vec::new();
    for &u in g.nodes() {
        if starting_set.contains(&u) || g.out_degree(u) >= 4 {
            continue;
        }
        let ui = g.local_index(u).expect("node of view");
        for &v in g.nodes() {
            if u == v || g.has_edge(u, v) || g.in_degree(v) > 1 {
                continue;
            }
            let vi = g.local_index(v).expect("node of view");
            if reach[vi][ui] {
                continue;
            }
            pairs.push((u, v));
        }
    }
    CandidateSet::from_pairs(pairs)
}

/// Every ordered pair of distinct materials that is not already known.
pub fn naive_pool(partial: &PartialPlan) -> Vec<(MaterialId, MaterialId)> {
    let g = partial.view();
    let mut pool = Vec::new();
    for &u in g.nodes() {
        for &v in g.nodes() {
            if u != v && !g.has_edge(u, v) {
                pool.push((u, v));
            }
        }
    }
    pool
}

/// Uniform sample of `count` pairs without replacement from
/// [`naive_pool`]; the whole pool when `count` exceeds it.
pub fn naive_sampling<R: Rng + ?Sized>(
    partial: &PartialPlan,
    count: usize,
    rng: &mut R,
) -> Result<CandidateSet> {
    if count == 0 {
        return Err(Error::Contract("naive_sampling needs count ≥ 1".into()));
    }
    let pool = naive_pool(partial);
    if count >= pool.len() {
        return Ok(CandidateSet::from_pairs(pool));
    }
    let picked = rand::seq::index::sample(rng, pool.len(), count);
    Ok(CandidateSet::from_pairs(picked.into_iter().map(|i| pool[i])))
}
