//! Single-source buy-at-bulk instances: graph, lengths, demands, root.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UnionFind;

pub type NodeIx = usize;
pub type EdgeIx = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints with `u < v` in node index order.
    pub u: NodeIx,
    pub v: NodeIx,
    pub length: f64,
}

impl Edge {
    pub fn other(&self, x: NodeIx) -> NodeIx {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// A validated, immutable instance.
///
/// Nodes are indexed in lexicographic order of their ids, so index order is
/// the tie-break order used everywhere. Edges are sorted by endpoint indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    ids: Vec<String>,
    index: BTreeMap<String, NodeIx>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeIx, EdgeIx)>>,
    demands: Vec<u64>,
    root: NodeIx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DemandProfile {
    pub total: u64,
    pub d: u64,
    pub levels: usize,
}

impl DemandProfile {
    pub fn from_total(total: u64) -> DemandProfile {
        let d = total.max(1).next_power_of_two();
        DemandProfile {
            total,
            d,
            levels: d.trailing_zeros() as usize + 1,
        }
    }

    pub fn log_d(&self) -> u32 {
        self.d.trailing_zeros()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    u: String,
    v: String,
    length: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    nodes: Vec<String>,
    edges: Vec<RawEdge>,
    demands: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<InstanceMeta>,
}

/// Provenance of a generated instance; ignored when loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMeta {
    pub schema_version: u32,
    pub model: String,
    pub nodes: usize,
    pub demand_count: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl Instance {
    /// Builds and validates an instance from id-based parts.
    pub fn new(
        nodes: &[&str],
        edges: &[(&str, &str, f64)],
        demands: &[(&str, u64)],
        root: &str,
    ) -> Result<Instance> {
        Instance::from_parts(
            nodes.iter().map(|s| s.to_string()).collect(),
            edges
                .iter()
                .map(|(u, v, l)| (u.to_string(), v.to_string(), *l))
                .collect(),
            demands.iter().map(|(v, d)| (v.to_string(), *d)).collect(),
            root.to_string(),
        )
    }

    pub fn from_parts(
        nodes: Vec<String>,
        edges: Vec<(String, String, f64)>,
        demands: Vec<(String, u64)>,
        root: String,
    ) -> Result<Instance> {
        if nodes.is_empty() {
            return Err(Error::Validation("node set must be nonempty".into()));
        }
        let mut sorted = nodes.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Validation(format!("duplicate node id {:?}", w[0])));
            }
        }
        let index: BTreeMap<String, NodeIx> =
            sorted.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let lookup = |id: &str, what: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{what} {id:?} is not in the node set")))
        };

        let mut seen = BTreeSet::new();
        let mut edge_list = Vec::with_capacity(edges.len());
        for (u, v, length) in &edges {
            let a = lookup(u, "edge endpoint")?;
            let b = lookup(v, "edge endpoint")?;
            if a == b {
                return Err(Error::Validation(format!("self-loop at node {u:?}")));
            }
            if !length.is_finite() || *length < 0.0 {
                return Err(Error::Validation(format!(
                    "length must be ≥ 0 (edge {u:?}-{v:?} has {length})"
                )));
            }
            let (a, b) = (a.min(b), a.max(b));
            if !seen.insert((a, b)) {
                return Err(Error::Validation(format!("parallel edge {u:?}-{v:?}")));
            }
            edge_list.push(Edge { u: a, v: b, length: *length });
        }
        edge_list.sort_by_key(|e| (e.u, e.v));

        let mut demand_vec = vec![0u64; sorted.len()];
        for (v, d) in &demands {
            let ix = lookup(v, "demand node")?;
            if *d == 0 {
                return Err(Error::Validation(format!("demand at {v:?} must be positive")));
            }
            if demand_vec[ix] != 0 {
                return Err(Error::Validation(format!("duplicate demand entry for {v:?}")));
            }
            demand_vec[ix] = *d;
        }
        let total: u128 = demand_vec.iter().map(|&d| d as u128).sum();
        if total == 0 {
            return Err(Error::Validation("total demand must be ≥ 1".into()));
        }
        if total > (1u128 << 62) {
            return Err(Error::Validation("total demand too large".into()));
        }
        let root = lookup(&root, "root")?;

        let mut adjacency = vec![Vec::new(); sorted.len()];
        for (ix, e) in edge_list.iter().enumerate() {
            adjacency[e.u].push((e.v, ix));
            adjacency[e.v].push((e.u, ix));
        }
        for adj in &mut adjacency {
            adj.sort();
        }

        let mut uf = UnionFind::new(sorted.len());
        for e in &edge_list {
            uf.union(e.u, e.v);
        }
        if let Some(bad) = (0..sorted.len()).find(|&v| uf.find(v) != uf.find(root)) {
            return Err(Error::Validation(format!(
                "graph is disconnected: node {:?} cannot reach the root",
                sorted[bad]
            )));
        }

        Ok(Instance {
            ids: sorted,
            index,
            edges: edge_list,
            adjacency,
            demands: demand_vec,
            root,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Instance> {
        let raw: RawInstance = serde_json::from_str(text)?;
        let root = raw.root.ok_or_else(|| Error::Validation("root required".into()))?;
        Instance::from_parts(
            raw.nodes,
            raw.edges.into_iter().map(|e| (e.u, e.v, e.length)).collect(),
            raw.demands.into_iter().collect(),
            root,
        )
    }

    pub fn to_json_string(&self) -> String {
        self.to_json_string_with_meta(None)
    }

    pub fn to_json_string_with_meta(&self, meta: Option<InstanceMeta>) -> String {
        let raw = RawInstance {
            nodes: self.ids.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| RawEdge {
                    u: self.ids[e.u].clone(),
                    v: self.ids[e.v].clone(),
                    length: e.length,
                })
                .collect(),
            demands: self
                .demand_nodes()
                .map(|v| (self.ids[v].clone(), self.demands[v]))
                .collect(),
            root: Some(self.ids[self.root].clone()),
            meta,
        };
        serde_json::to_string_pretty(&raw).expect("instance serializes")
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeIx) -> &Edge {
        &self.edges[e]
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.length).collect()
    }

    /// Neighbors of `v` with the connecting edge, in node index order.
    pub fn neighbors(&self, v: NodeIx) -> &[(NodeIx, EdgeIx)] {
        &self.adjacency[v]
    }

    pub fn edge_between(&self, a: NodeIx, b: NodeIx) -> Option<EdgeIx> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, e)| e)
    }

    pub fn root(&self) -> NodeIx {
        self.root
    }

    pub fn id(&self, v: NodeIx) -> &str {
        &self.ids[v]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn demand(&self, v: NodeIx) -> u64 {
        self.demands[v]
    }

    pub fn demands(&self) -> &[u64] {
        &self.demands
    }

    /// Nodes with positive demand, in index order.
    pub fn demand_nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        (0..self.ids.len()).filter(move |&v| self.demands[v] > 0)
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().sum()
    }

    pub fn demand_profile(&self) -> DemandProfile {
        DemandProfile::from_total(self.total_demand())
    }
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Instance::from_json_str(&text)
}

pub fn save_instance(inst: &Instance, path: &Path) -> Result<()> {
    std::fs::write(path, inst.to_json_string() + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    RandomGeometric,
    Grid,
    Star,
    Path,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Model> {
        match s {
            "random-geometric" => Ok(Model::RandomGeometric),
            "grid" => Ok(Model::Grid),
            "star" => Ok(Model::Star),
            "path" => Ok(Model::Path),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected random-geometric, grid, star or path)"
            ))),
        }
    }
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::RandomGeometric => "random-geometric",
            Model::Grid => "grid",
            Model::Star => "star",
            Model::Path => "path",
        }
    }
}

const GEOMETRIC_RADIUS: f64 = 0.5;

fn round3(x: f64) -> f64 {
    ((x * 1000.0).round() / 1000.0).max(0.001)
}

/// Generates a connected instance with unit demands at `demand_count` sampled non-root nodes.
///
/// Node 0 is the root `r`; the others are `v1`, `v2`, ... zero-padded so that
/// id order matches generation order. Star and path use unit lengths.
pub fn generate_instance(model: Model, n: usize, demand_count: usize, seed: u64) -> Result<Instance> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be ≥ 2, got {n}")));
    }
    if demand_count == 0 || demand_count > n - 1 {
        return Err(Error::InvalidArgument(format!(
            "demand count must be in 1..={} for n = {n}, got {demand_count}",
            n - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (n - 1).to_string().len();
    let names: Vec<String> = (0..n)
        .map(|i| if i == 0 { "r".to_string() } else { format!("v{i:0width$}") })
        .collect();

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    match model {
        Model::Path => {
            for i in 1..n {
                edges.push((i - 1, i, 1.0));
            }
        }
        Model::Star => {
            for i in 1..n {
                edges.push((0, i, 1.0));
            }
        }
        Model::Grid => {
            let cols = (n as f64).sqrt().ceil() as usize;
            for i in 0..n {
                let col = i % cols;
                if col + 1 < cols && i + 1 < n {
                    edges.push((i, i + 1, 0.0));
                }
                if i + cols < n {
                    edges.push((i, i + cols, 0.0));
                }
            }
            for e in &mut edges {
                e.2 = round3(1.0 + rng.gen::<f64>());
            }
        }
        Model::RandomGeometric => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            let dist = |a: usize, b: usize| {
                let (dx, dy) = (pts[a].0 - pts[b].0, pts[a].1 - pts[b].1);
                (dx * dx + dy * dy).sqrt()
            };
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    pairs.push((dist(a, b), a, b));
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
            let mut uf = UnionFind::new(n);
            let mut chosen = BTreeSet::new();
            for &(d, a, b) in &pairs {
                if uf.union(a, b) || d <= GEOMETRIC_RADIUS {
                    chosen.insert((a, b));
                }
            }
            for (a, b) in chosen {
                edges.push((a, b, round3(dist(a, b))));
            }
        }
    }

    let picked = sample(&mut rng, n - 1, demand_count);
    let mut demand_nodes: Vec<usize> = picked.into_iter().map(|i| i + 1).collect();
    demand_nodes.sort();

    Instance::from_parts(
        names.clone(),
        edges
            .into_iter()
            .map(|(a, b, l)| (names[a].clone(), names[b].clone(), l))
            .collect(),
        demand_nodes.into_iter().map(|v| (names[v].clone(), 1)).collect(),
        names[0].clone(),
    )
}
