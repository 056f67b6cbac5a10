//! Shortest paths and union-find over an [`Instance`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::instance::{EdgeIx, Instance, NodeIx};

/// Relative tolerance for float comparisons of path lengths and costs.
pub const EPS: f64 = 1e-9;

pub fn approx_eq(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= EPS * a.abs().max(b.abs()).max(1e-300)
}

/// `a < b` by more than the tolerance.
pub fn definitely_less(a: f64, b: f64) -> bool {
    a < b && !approx_eq(a, b)
}

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    /// Merges the sets of `a` and `b`; false when they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    /// `(previous node, edge)` on the chosen path from a source.
    pub pred: Vec<Option<(NodeIx, EdgeIx)>>,
}

impl ShortestPaths {
    pub fn reachable(&self, v: NodeIx) -> bool {
        self.dist[v].is_finite()
    }

    /// Edges on the path from the source set to `v`, listed from `v` backwards.
    pub fn path_edges(&self, v: NodeIx) -> Vec<EdgeIx> {
        let mut out = Vec::new();
        let mut cur = v;
        while let Some((p, e)) = self.pred[cur] {
            out.push(e);
            cur = p;
        }
        out
    }

    /// Nodes on the path from `v` back to its source, starting with `v`.
    pub fn path_nodes(&self, v: NodeIx) -> Vec<NodeIx> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some((p, _)) = self.pred[cur] {
            out.push(p);
            cur = p;
        }
        out
    }
}

#[derive(PartialEq)]
struct Entry(f64, NodeIx);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra under `weights`, optionally restricted to `allowed` edges.
///
/// Among equal-length paths the predecessor with the smallest node index wins,
/// so the resulting tree is deterministic.
pub fn dijkstra(
    inst: &Instance,
    sources: &[NodeIx],
    weights: &[f64],
    allowed: Option<&[bool]>,
) -> ShortestPaths {
    let n = inst.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(NodeIx, EdgeIx)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Entry(0.0, s));
    }
    while let Some(Entry(d, u)) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        for &(v, e) in inst.neighbors(u) {
            if allowed.is_some_and(|a| !a[e]) || done[v] {
                continue;
            }
            let nd = d + weights[e];
            if definitely_less(nd, dist[v]) {
                dist[v] = nd;
                pred[v] = Some((u, e));
                heap.push(Entry(nd, v));
            } else if approx_eq(nd, dist[v]) && pred[v].is_some_and(|(p, _)| u < p) {
                pred[v] = Some((u, e));
            }
        }
    }
    ShortestPaths { dist, pred }
}

/// Edge lengths as weights.
pub fn shortest_paths_from(inst: &Instance, source: NodeIx) -> ShortestPaths {
    dijkstra(inst, &[source], &inst.lengths(), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_break_prefers_smaller_predecessor() {
        // Square r-a-c and r-b-c with equal lengths: c's predecessor must be a.
        let inst = Instance::new(
            &["a", "b", "c", "r"],
            &[("r", "a", 1.0), ("r", "b", 1.0), ("a", "c", 1.0), ("b", "c", 1.0)],
            &[("c", 1)],
            "r",
        )
        .unwrap();
        let sp = shortest_paths_from(&inst, inst.root());
        let c = inst.node_index("c").unwrap();
        assert_eq!(sp.dist[c], 2.0);
        assert_eq!(sp.pred[c].unwrap().0, inst.node_index("a").unwrap());
        assert_eq!(sp.path_nodes(c).len(), 3);
    }

    #[test]
    fn restricted_edges_and_union_find() {
        let inst = Instance::new(
            &["r", "a", "b"],
            &[("r", "a", 1.0), ("a", "b", 1.0), ("r", "b", 5.0)],
            &[("b", 1)],
            "r",
        )
        .unwrap();
        let b = inst.node_index("b").unwrap();
        let full = shortest_paths_from(&inst, inst.root());
        assert_eq!(full.dist[b], 2.0);
        let direct = inst.edge_between(inst.root(), b).unwrap();
        let mut allowed = vec![false; 3];
        allowed[direct] = true;
        let only = dijkstra(&inst, &[inst.root()], &inst.lengths(), Some(&allowed));
        assert_eq!(only.dist[b], 5.0);
        assert!(!only.reachable(inst.node_index("a").unwrap()));

        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(uf.union(2, 3));
        assert!(!uf.union(1, 0));
        assert_ne!(uf.find(0), uf.find(3));
    }
}
