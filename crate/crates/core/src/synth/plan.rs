//! Random plan graphs, knowledge splits and tool splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::GameConfig;
use crate::error::{Error, Result};
use crate::plangraph::{
    Material, MaterialId, PartialPlan, PlanEdge, PlanGraph, ToolId, NUM_BASE_MATERIALS,
    NUM_MATERIALS,
};

pub const MIN_MATERIALS: usize = 5;
pub const MAX_MATERIALS: usize = 10;
pub const MIN_STEPS: usize = 7;
pub const MAX_STEPS: usize = 11;

const MAX_OUT: usize = 3;
const MAX_IN: usize = 2;

/// Most edges a plan with `products` craftable nodes (goal included) and
/// `n - products` starting materials can carry when nodes are ordered goal,
/// products, starting materials and edges only point forward.
fn edge_capacity(n: usize, products: usize) -> usize {
    let into_products: usize = (1..products).map(|i| i.min(MAX_IN)).sum();
    let into_starting = (n - products) * products.min(MAX_IN);
    (into_products + into_starting).min(MAX_OUT * products)
}

fn feasible_product_counts(n: usize, steps: usize) -> Vec<usize> {
    (1..n)
        .filter(|&p| p <= NUM_MATERIALS - NUM_BASE_MATERIALS && n - p <= NUM_BASE_MATERIALS)
        .filter(|&p| edge_capacity(n, p) >= steps && steps >= p)
        .collect()
}

/// Errors unless a plan with `n` nodes and `steps` edges exists.
pub fn check_size(n: usize, steps: usize) -> Result<()> {
    if !(MIN_MATERIALS..=MAX_MATERIALS).contains(&n) {
        return Err(Error::Config(format!(
            "num_materials must lie in [{MIN_MATERIALS}, {MAX_MATERIALS}], got {n}"
        )));
    }
    if !(MIN_STEPS..=MAX_STEPS).contains(&steps) {
        return Err(Error::Config(format!(
            "num_steps must lie in [{MIN_STEPS}, {MAX_STEPS}], got {steps}"
        )));
    }
    if steps + 1 < n {
        return Err(Error::Config(format!(
            "{steps} steps cannot connect {n} materials (need at least {})",
            n - 1
        )));
    }
    if feasible_product_counts(n, steps).is_empty() {
        return Err(Error::Config(format!(
            "{steps} steps exceed the degree bounds for {n} materials"
        )));
    }
    Ok(())
}

/// Draws a feasible `(num_materials, num_steps)` pair uniformly.
pub fn sample_size<R: Rng + ?Sized>(rng: &mut R) -> (usize, usize) {
    let pairs: Vec<(usize, usize)> = (MIN_MATERIALS..=MAX_MATERIALS)
        .flat_map(|n| (MIN_STEPS..=MAX_STEPS).map(move |s| (n, s)))
        .filter(|&(n, s)| check_size(n, s).is_ok())
        .collect();
    pairs[rng.random_range(0..pairs.len())]
}

/// Generates a plan with exactly `cfg.num_materials` nodes and
/// `cfg.num_steps` edges satisfying every [`PlanGraph`] invariant.
///
/// Nodes are ordered goal, other products, starting materials. Every
/// non-goal node first receives a parent among earlier products (so all
/// nodes are reachable from the goal), then random forward edges are added
/// under the degree bounds. Products draw ids from the craftable range of
/// the global vocabulary, starting materials from the base range. All
/// edges of one product share a single tool.
pub fn generate_plan<R: Rng + ?Sized>(cfg: &GameConfig, rng: &mut R) -> Result<PlanGraph> {
    let (n, steps) = (cfg.num_materials, cfg.num_steps);
    check_size(n, steps)?;
    if cfg.num_tools == 0 {
        return Err(Error::Config("num_tools must be positive".into()));
    }
    let counts = feasible_product_counts(n, steps);
    for _ in 0..10_000 {
        let p = counts[rng.random_range(0..counts.len())];
        if let Some(edges) = try_layout(n, p, steps, rng) {
            return Ok(materialize(n, p, &edges, cfg.num_tools, rng));
        }
    }
    Err(Error::Config(format!(
        "could not generate a plan with {n} materials and {steps} steps"
    )))
}

fn try_layout<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    steps: usize,
    rng: &mut R,
) -> Option<Vec<(usize, usize)>> {
    let mut out = vec![0usize; n];
    let mut inn = vec![0usize; n];
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let parents: Vec<usize> = (0..p.min(v)).filter(|&u| out[u] < MAX_OUT).collect();
        if parents.is_empty() {
            return None;
        }
        let u = parents[rng.random_range(0..parents.len())];
        edges.insert((u, v));
        out[u] += 1;
        inn[v] += 1;
    }
    while edges.len() < steps {
        // products without a recipe get priority so rejection stays rare
        let needy: Vec<usize> = (0..p).filter(|&u| out[u] == 0).collect();
        let pool: Vec<(usize, usize)> = (0..p)
            .filter(|u| needy.is_empty() || needy.contains(u))
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| out[u] < MAX_OUT && inn[v] < MAX_IN && !edges.contains(&(u, v)))
            .collect();
        let &(u, v) = pool.get(rng.random_range(0..pool.len().max(1)))?;
        edges.insert((u, v));
        out[u] += 1;
        inn[v] += 1;
    }
    if (0..p).any(|u| out[u] == 0) {
        return None;
    }
    Some(edges.into_iter().collect())
}

fn materialize<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    edges: &[(usize, usize)],
    num_tools: usize,
    rng: &mut R,
) -> PlanGraph {
    let mut crafted: Vec<usize> = (NUM_BASE_MATERIALS..NUM_MATERIALS).collect();
    crafted.shuffle(rng);
    let mut base: Vec<usize> = (0..NUM_BASE_MATERIALS).collect();
    base.shuffle(rng);
    let ids: Vec<usize> = crafted[..p].iter().chain(&base[..n - p]).copied().collect();
    let tools: Vec<usize> = (0..p).map(|_| rng.random_range(0..num_tools)).collect();
    let materials = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| Material {
            id: MaterialId(id),
            is_starting: i >= p,
        })
        .collect();
    let plan_edges = edges
        .iter()
        .map(|&(u, v)| PlanEdge::new(ids[u], ids[v], tools[u]))
        .collect();
    PlanGraph::new(materials, plan_edges, MaterialId(ids[0])).expect("generator respects invariants")
}

/// Splits the plan's edges into two partial plans.
///
/// `round(overlap · |E|)` edges are shared (capped at `|E| − 2` when
/// `overlap < 1` so that both sides keep an exclusive edge). Shared edges
/// are drawn recipe by recipe; the rest are dealt out recipe by recipe to
/// whichever player currently holds fewer exclusive edges, so missing
/// knowledge tends to be whole recipes.
pub fn split_knowledge<R: Rng + ?Sized>(
    plan: &PlanGraph,
    overlap_fraction: f64,
    rng: &mut R,
) -> Result<(PartialPlan, PartialPlan)> {
    let e = plan.edges().len();
    if e < 2 {
        return Err(Error::Split(format!("cannot split a plan with {e} edges")));
    }
    if !(0.0..=1.0).contains(&overlap_fraction) {
        return Err(Error::Split(format!(
            "overlap_fraction must lie in [0, 1], got {overlap_fraction}"
        )));
    }
    if overlap_fraction >= 1.0 {
        return Ok((
            plan.partial(plan.edges().to_vec(), 1)?,
            plan.partial(plan.edges().to_vec(), 2)?,
        ));
    }
    let shared_n = ((overlap_fraction * e as f64).round() as usize).min(e - 2);

    let mut groups: BTreeMap<MaterialId, Vec<PlanEdge>> = BTreeMap::new();
    for edge in plan.edges() {
        groups.entry(edge.src).or_default().push(*edge);
    }
    let mut groups: Vec<Vec<PlanEdge>> = groups.into_values().collect();
    groups.shuffle(rng);
    for g in &mut groups {
        g.shuffle(rng);
    }

    let mut shared = Vec::new();
    let mut rest: Vec<Vec<PlanEdge>> = Vec::new();
    for g in groups {
        let room = shared_n - shared.len();
        if room >= g.len() {
            shared.extend(g);
        } else if room > 0 {
            shared.extend_from_slice(&g[..room]);
            rest.push(g[room..].to_vec());
        } else {
            rest.push(g);
        }
    }

    let mut own: [Vec<PlanEdge>; 2] = [Vec::new(), Vec::new()];
    if rest.len() == 1 {
        // a single remaining recipe must still give each player an edge
        let g = rest.pop().expect("one group");
        let cut = rng.random_range(1..g.len());
        own[0].extend_from_slice(&g[..cut]);
        own[1].extend_from_slice(&g[cut..]);
    } else {
        rest.sort_by_key(|g| std::cmp::Reverse(g.len()));
        for g in rest {
            let who = match own[0].len().cmp(&own[1].len()) {
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Equal => rng.random_range(0..2),
            };
            own[who].extend(g);
        }
    }
    let p1 = plan.partial(shared.iter().chain(&own[0]).copied(), 1)?;
    let p2 = plan.partial(shared.iter().chain(&own[1]).copied(), 2)?;
    Ok((p1, p2))
}

/// Partitions `0..num_tools` between the two players, each getting at least
/// one tool.
pub fn split_tools<R: Rng + ?Sized>(num_tools: usize, rng: &mut R) -> Result<[BTreeSet<ToolId>; 2]> {
    if num_tools < 2 {
        return Err(Error::Config("need at least two tools to split".into()));
    }
    let mut tools: Vec<usize> = (0..num_tools).collect();
    tools.shuffle(rng);
    let mut out = [BTreeSet::new(), BTreeSet::new()];
    for (i, t) in tools.into_iter().enumerate() {
        out[i % 2].insert(ToolId(t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn capacity_matches_hand_count() {
        // 5 nodes: three products carry at most 7 edges
        assert_eq!(edge_capacity(5, 3), 7);
        assert!(check_size(5, 7).is_ok());
        assert!(check_size(5, 8).is_err());
        assert!(check_size(10, 7).is_err());
        assert!(check_size(4, 7).is_err());
    }

    #[test]
    fn single_group_is_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = GameConfig {
            num_materials: 8,
            num_steps: 9,
            ..Default::default()
        };
        let plan = generate_plan(&cfg, &mut rng).unwrap();
        for overlap in [0.0, 0.3, 0.5, 0.9, 0.99] {
            let (a, b) = split_knowledge(&plan, overlap, &mut rng).unwrap();
            let e = plan.edges().len();
            assert!(!a.known_edges().is_empty() && a.known_edges().len() < e);
            assert!(!b.known_edges().is_empty() && b.known_edges().len() < e);
        }
    }
}
