//! Degree bookkeeping, reachability and topological order over a fixed node
//! set and a set of directed pairs.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use super::MaterialId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

/// Read-only adjacency view. Pairs whose endpoints are outside the node set
/// are ignored.
#[derive(Clone, Debug)]
pub struct Digraph {
    nodes: Vec<MaterialId>,
    local: Vec<Option<usize>>,
    succ: Vec<Vec<usize>>,
    in_deg: Vec<usize>,
}

impl Digraph {
    pub fn new(
        nodes: impl IntoIterator<Item = MaterialId>,
        pairs: impl IntoIterator<Item = (MaterialId, MaterialId)>,
    ) -> Self {
        let nodes: Vec<MaterialId> = nodes.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let width = nodes.iter().map(|n| n.0 + 1).max().unwrap_or(0);
        let mut local = vec![None; width];
        for (i, n) in nodes.iter().enumerate() {
            local[n.0] = Some(i);
        }
        let mut succ = vec![Vec::new(); nodes.len()];
        let mut in_deg = vec![0; nodes.len()];
        let lookup = |m: MaterialId| local.get(m.0).copied().flatten();
        for (a, b) in pairs {
            if let (Some(i), Some(j)) = (lookup(a), lookup(b)) {
                if !succ[i].contains(&j) {
                    succ[i].push(j);
                    in_deg[j] += 1;
                }
            }
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        Digraph {
            nodes,
            local,
            succ,
            in_deg,
        }
    }

    pub fn nodes(&self) -> &[MaterialId] {
        &self.nodes
    }

    fn idx(&self, m: MaterialId) -> Option<usize> {
        self.local.get(m.0).copied().flatten()
    }

    pub fn contains(&self, m: MaterialId) -> bool {
        self.idx(m).is_some()
    }

    pub fn has_edge(&self, a: MaterialId, b: MaterialId) -> bool {
        match (self.idx(a), self.idx(b)) {
            (Some(i), Some(j)) => self.succ[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    pub fn out_degree(&self, m: MaterialId) -> usize {
        self.idx(m).map_or(0, |i| self.succ[i].len())
    }

    pub fn in_degree(&self, m: MaterialId) -> usize {
        self.idx(m).map_or(0, |i| self.in_deg[i])
    }

    pub fn degree(&self, m: MaterialId, dir: Direction) -> usize {
        match dir {
            Direction::In => self.in_degree(m),
            Direction::Out => self.out_degree(m),
        }
    }

    pub fn successors(&self, m: MaterialId) -> Vec<MaterialId> {
        self.idx(m)
            .map(|i| self.succ[i].iter().map(|&j| self.nodes[j]).collect())
            .unwrap_or_default()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm, smallest id first among ready nodes, so every edge
    /// `a → b` has `a` before `b`. Errors on a cycle.
    pub fn topological_order(&self) -> Result<Vec<MaterialId>> {
        let mut indeg = self.in_deg.clone();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..self.nodes.len())
            .filter(|&i| indeg[i] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(i)) = ready.pop() {
            order.push(self.nodes[i]);
            for &j in &self.succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            Err(Error::Cycle)
        }
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// All nodes reachable from `m` along edge direction, including `m`.
    pub fn reachable_from(&self, m: MaterialId) -> BTreeSet<MaterialId> {
        let mut seen = BTreeSet::new();
        let Some(start) = self.idx(m) else {
            return seen;
        };
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(i) = stack.pop() {
            seen.insert(self.nodes[i]);
            for &j in &self.succ[i] {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// `reach[i][j]` iff local node `j` is reachable from local node `i`
    /// (reflexive).
    pub(crate) fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                let r = self.reachable_from(self.nodes[i]);
                let mut row = vec![false; n];
                for m in r {
                    row[self.idx(m).expect("reachable nodes are in the view")] = true;
                }
                row
            })
            .collect()
    }

    pub(crate) fn local_index(&self, m: MaterialId) -> Option<usize> {
        self.idx(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> Vec<MaterialId> {
        v.iter().map(|&i| MaterialId(i)).collect()
    }

    #[test]
    fn single_edge_degrees() {
        let g = Digraph::new(ids(&[0, 1]), [(MaterialId(0), MaterialId(1))]);
        assert_eq!(g.degree(MaterialId(0), Direction::Out), 1);
        assert_eq!(g.degree(MaterialId(1), Direction::In), 1);
        assert_eq!(g.degree(MaterialId(0), Direction::In), 0);
    }

    #[test]
    fn empty_graph() {
        let g = Digraph::new(ids(&[3, 1, 2]), []);
        for n in ids(&[1, 2, 3]) {
            assert_eq!(g.out_degree(n) + g.in_degree(n), 0);
        }
        assert_eq!(g.topological_order().unwrap().len(), 3);
    }

    #[test]
    fn cycle_detected() {
        let g = Digraph::new(
            ids(&[0, 1, 2]),
            [
                (MaterialId(0), MaterialId(1)),
                (MaterialId(1), MaterialId(2)),
                (MaterialId(2), MaterialId(0)),
            ],
        );
        assert!(matches!(g.topological_order(), Err(Error::Cycle)));
        assert!(!g.is_acyclic());
    }
}
