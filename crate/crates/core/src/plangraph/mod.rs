//! Directed AND-graphs of materials.
//!
//! An edge `src → dst` reads "crafting `src` requires `dst`" and carries the
//! tool needed for that recipe. A [`PlanGraph`] is a complete joint plan; a
//! [`PartialPlan`] is one player's known subset of its edges. Missing-edge
//! inference is link prediction over a [`CandidateSet`] of node pairs.

mod graph;
mod sampling;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use graph::{Digraph, Direction};
pub use sampling::{candidate_sampling, candidate_sampling_view, naive_pool, naive_sampling};

/// Size of the global material vocabulary (the class count of an intention
/// answer, minus `NOT_SURE`).
pub const NUM_MATERIALS: usize = 21;

/// Global ids `0..NUM_BASE_MATERIALS` are raw materials that can only be
/// starting materials; the rest are craftable.
pub const NUM_BASE_MATERIALS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialId(pub usize);

impl MaterialId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for MaterialId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolId(pub usize);

/// A material of a plan's vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Material {
    pub id: MaterialId,
    pub is_starting: bool,
}

/// `src` (product) requires `dst` (ingredient) using `tool`. Ordered by
/// `(src, dst)` first, which is the canonical output order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlanEdge {
    pub src: MaterialId,
    pub dst: MaterialId,
    pub tool: ToolId,
}

impl PlanEdge {
    pub fn new(src: usize, dst: usize, tool: usize) -> Self {
        PlanEdge {
            src: MaterialId(src),
            dst: MaterialId(dst),
            tool: ToolId(tool),
        }
    }

    pub fn pair(&self) -> (MaterialId, MaterialId) {
        (self.src, self.dst)
    }
}

fn canonical_edges(mut edges: Vec<PlanEdge>) -> Vec<PlanEdge> {
    edges.sort();
    edges.dedup();
    edges
}

fn check_vocabulary(materials: &[Material], edges: &[PlanEdge]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for m in materials {
        if !seen.insert(m.id) {
            return Err(Error::Schema(format!("duplicate material {}", m.id)));
        }
    }
    for e in edges {
        if e.src == e.dst {
            return Err(Error::Schema(format!("self-loop on {}", e.src)));
        }
        for n in [e.src, e.dst] {
            if !seen.contains(&n) {
                return Err(Error::Schema(format!("edge endpoint {n} not in vocabulary")));
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for e in edges {
        if !pairs.insert(e.pair()) {
            return Err(Error::Schema(format!(
                "edge {}→{} listed with two tools",
                e.src, e.dst
            )));
        }
    }
    Ok(())
}

/// A complete joint plan `P = (V, E)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanGraphRaw")]
pub struct PlanGraph {
    materials: Vec<Material>,
    goal: MaterialId,
    edges: Vec<PlanEdge>,
}

#[derive(Deserialize)]
struct PlanGraphRaw {
    materials: Vec<Material>,
    goal: MaterialId,
    edges: Vec<PlanEdge>,
}

impl TryFrom<PlanGraphRaw> for PlanGraph {
    type Error = Error;

    fn try_from(r: PlanGraphRaw) -> Result<Self> {
        PlanGraph::new(r.materials, r.edges, r.goal)
    }
}

impl PlanGraph {
    /// Builds and validates a plan. Edges are stored sorted by `(src, dst)`.
    pub fn new(materials: Vec<Material>, edges: Vec<PlanEdge>, goal: MaterialId) -> Result<Self> {
        let mut materials = materials;
        materials.sort_by_key(|m| m.id);
        let plan = PlanGraph {
            materials,
            goal,
            edges: canonical_edges(edges),
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks every plan invariant, naming the first violation.
    pub fn validate(&self) -> Result<()> {
        check_vocabulary(&self.materials, &self.edges)?;
        let goal = self
            .material(self.goal)
            .ok_or_else(|| Error::Schema(format!("goal {} not in vocabulary", self.goal)))?;
        if goal.is_starting {
            return Err(Error::Schema("goal is a starting material".into()));
        }
        let g = self.view();
        if !g.is_acyclic() {
            return Err(Error::Cycle);
        }
        if g.in_degree(self.goal) != 0 {
            return Err(Error::Schema("goal has an incoming edge".into()));
        }
        let reachable = g.reachable_from(self.goal);
        for m in &self.materials {
            let out = g.out_degree(m.id);
            let inn = g.in_degree(m.id);
            if m.is_starting && out != 0 {
                return Err(Error::Schema(format!("starting material {} is a product", m.id)));
            }
            if !m.is_starting && reachable.contains(&m.id) && !(1..=3).contains(&out) {
                return Err(Error::Schema(format!(
                    "product {} has out-degree {out}, expected 1..=3",
                    m.id
                )));
            }
            if inn > 2 {
                return Err(Error::Schema(format!("{} has in-degree {inn} > 2", m.id)));
            }
        }
        Ok(())
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn material(&self, id: MaterialId) -> Option<&Material> {
        self.materials
            .binary_search_by_key(&id, |m| m.id)
            .ok()
            .map(|i| &self.materials[i])
    }

    pub fn node_ids(&self) -> Vec<MaterialId> {
        self.materials.iter().map(|m| m.id).collect()
    }

    pub fn goal(&self) -> MaterialId {
        self.goal
    }

    pub fn edges(&self) -> &[PlanEdge] {
        &self.edges
    }

    pub fn starting_set(&self) -> BTreeSet<MaterialId> {
        self.materials
            .iter()
            .filter(|m| m.is_starting)
            .map(|m| m.id)
            .collect()
    }

    /// Non-starting materials, i.e. the craftable products and the goal.
    pub fn products(&self) -> Vec<MaterialId> {
        self.materials
            .iter()
            .filter(|m| !m.is_starting)
            .map(|m| m.id)
            .collect()
    }

    /// Edges whose product is `product` (its full recipe).
    pub fn recipe(&self, product: MaterialId) -> impl Iterator<Item = &PlanEdge> {
        self.edges.iter().filter(move |e| e.src == product)
    }

    pub fn view(&self) -> Digraph {
        Digraph::new(self.node_ids(), self.edges.iter().map(|e| e.pair()))
    }

    /// Canonical JSON: fixed field order, edges sorted by `(src, dst)`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            offset: json_offset(s, &e),
            msg: e.to_string(),
        })
    }

    /// A partial plan of this plan's vocabulary; `known` must be a subset of
    /// the plan's edges.
    pub fn partial(&self, known: impl IntoIterator<Item = PlanEdge>, owner: u8) -> Result<PartialPlan> {
        let known: BTreeSet<PlanEdge> = known.into_iter().collect();
        for e in &known {
            if self.edges.binary_search(e).is_err() {
                return Err(Error::Schema(format!(
                    "known edge {}→{} is not part of the plan",
                    e.src, e.dst
                )));
            }
        }
        PartialPlan::new(self.materials.clone(), self.goal, known, owner)
    }
}

/// Byte offset of a serde_json error within `s` (line start plus column).
pub(crate) fn json_offset(s: &str, e: &serde_json::Error) -> usize {
    let line = e.line();
    if line == 0 {
        return 0;
    }
    let start: usize = s.split_inclusive('\n').take(line - 1).map(str::len).sum();
    start + e.column().saturating_sub(1)
}

/// One player's view of the plan: the shared vocabulary and `E_i ⊆ E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialPlan {
    materials: Vec<Material>,
    goal: MaterialId,
    known_edges: BTreeSet<PlanEdge>,
    owner: u8,
}

impl PartialPlan {
    pub fn new(
        materials: Vec<Material>,
        goal: MaterialId,
        known_edges: BTreeSet<PlanEdge>,
        owner: u8,
    ) -> Result<Self> {
        if !(1..=2).contains(&owner) {
            return Err(Error::Schema(format!("owner must be 1 or 2, got {owner}")));
        }
        let mut materials = materials;
        materials.sort_by_key(|m| m.id);
        let edges: Vec<PlanEdge> = known_edges.iter().copied().collect();
        check_vocabulary(&materials, &edges)?;
        Ok(PartialPlan {
            materials,
            goal,
            known_edges,
            owner,
        })
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn node_ids(&self) -> Vec<MaterialId> {
        self.materials.iter().map(|m| m.id).collect()
    }

    pub fn goal(&self) -> MaterialId {
        self.goal
    }

    pub fn owner(&self) -> u8 {
        self.owner
    }

    pub fn known_edges(&self) -> &BTreeSet<PlanEdge> {
        &self.known_edges
    }

    pub fn knows(&self, src: MaterialId, dst: MaterialId) -> bool {
        self.known_edges
            .iter()
            .any(|e| e.src == src && e.dst == dst)
    }

    pub fn starting_set(&self) -> BTreeSet<MaterialId> {
        self.materials
            .iter()
            .filter(|m| m.is_starting)
            .map(|m| m.id)
            .collect()
    }

    /// Adds an edge (used when knowledge is shared). Returns whether it was new.
    pub fn learn(&mut self, edge: PlanEdge) -> bool {
        self.known_edges.insert(edge)
    }

    pub fn view(&self) -> Digraph {
        Digraph::new(self.node_ids(), self.known_edges.iter().map(|e| e.pair()))
    }
}

/// `Ē_i = E \ E_i`, sorted by `(src, dst)`.
pub fn missing_edges(full: &PlanGraph, partial: &PartialPlan) -> Result<Vec<PlanEdge>> {
    if full.materials() != partial.materials() || full.goal() != partial.goal() {
        return Err(Error::Schema(
            "partial plan vocabulary differs from the full plan".into(),
        ));
    }
    for e in partial.known_edges() {
        if full.edges().binary_search(e).is_err() {
            return Err(Error::Schema(format!(
                "known edge {}→{} is not in the full plan",
                e.src, e.dst
            )));
        }
    }
    Ok(full
        .edges()
        .iter()
        .filter(|e| !partial.known_edges().contains(e))
        .copied()
        .collect())
}

/// An ordered set of `(src, dst)` pairs to score; tools are unknown at
/// prediction time.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pairs: Vec<(MaterialId, MaterialId)>,
}

impl CandidateSet {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (MaterialId, MaterialId)>) -> Self {
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        pairs.sort();
        pairs.dedup();
        CandidateSet { pairs }
    }

    pub fn pairs(&self) -> &[(MaterialId, MaterialId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: (MaterialId, MaterialId)) -> bool {
        self.pairs.binary_search(&pair).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mats(spec: &[(usize, bool)]) -> Vec<Material> {
        spec.iter()
            .map(|&(id, s)| Material {
                id: MaterialId(id),
                is_starting: s,
            })
            .collect()
    }

    fn small_plan() -> PlanGraph {
        // 10 requires 11 and 0; 11 requires 1 and 2.
        PlanGraph::new(
            mats(&[(0, true), (1, true), (2, true), (10, false), (11, false)]),
            vec![
                PlanEdge::new(11, 2, 1),
                PlanEdge::new(10, 11, 0),
                PlanEdge::new(11, 1, 1),
                PlanEdge::new(10, 0, 0),
            ],
            MaterialId(10),
        )
        .unwrap()
    }

    #[test]
    fn edges_are_canonically_sorted() {
        let p = small_plan();
        let pairs: Vec<_> = p.edges().iter().map(|e| (e.src.0, e.dst.0)).collect();
        assert_eq!(pairs, vec![(10, 0), (10, 11), (11, 1), (11, 2)]);
        let json = p.to_json();
        assert!(json.starts_with("{\"materials\":[{\"id\":0,\"is_starting\":true}"));
        assert_eq!(PlanGraph::from_json(&json).unwrap(), p);
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let m = mats(&[(0, true), (10, false), (11, false)]);
        // starting material as product
        assert!(PlanGraph::new(
            m.clone(),
            vec![PlanEdge::new(10, 0, 0), PlanEdge::new(0, 11, 0), PlanEdge::new(11, 0, 0)],
            MaterialId(10)
        )
        .is_err());
        // cycle
        assert!(matches!(
            PlanGraph::new(
                m.clone(),
                vec![PlanEdge::new(10, 11, 0), PlanEdge::new(11, 10, 0)],
                MaterialId(10)
            ),
            Err(Error::Cycle) | Err(Error::Schema(_))
        ));
        // reachable product without a recipe
        assert!(PlanGraph::new(m.clone(), vec![PlanEdge::new(10, 11, 0)], MaterialId(10)).is_err());
        // goal is starting
        assert!(PlanGraph::new(m, vec![], MaterialId(0)).is_err());
    }

    #[test]
    fn missing_edges_set_difference() {
        let p = small_plan();
        let known = [p.edges()[0], p.edges()[2]];
        let partial = p.partial(known, 1).unwrap();
        let missing = missing_edges(&p, &partial).unwrap();
        assert_eq!(missing, vec![p.edges()[1], p.edges()[3]]);
        let all = p.partial(p.edges().to_vec(), 2).unwrap();
        assert!(missing_edges(&p, &all).unwrap().is_empty());
    }

    #[test]
    fn missing_edges_rejects_foreign_vocabulary() {
        let p = small_plan();
        let other = PartialPlan::new(
            mats(&[(0, true), (10, false)]),
            MaterialId(10),
            BTreeSet::new(),
            1,
        )
        .unwrap();
        assert!(matches!(missing_edges(&p, &other), Err(Error::Schema(_))));
    }

    #[test]
    fn json_error_offset_points_into_input() {
        let s = "{\"materials\": [}";
        match PlanGraph::from_json(s) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 15),
            other => panic!("{other:?}"),
        }
    }
}
