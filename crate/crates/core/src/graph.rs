//! Communication topologies.
//!
//! An edge `(i, r)` means node `r` can send to node `i`. Every node carries a
//! self-loop. Indices are 0-based in memory and 1-based in the edge-list text
//! format.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Placement attempts made by [`geometric`] before giving up.
pub const GEOMETRIC_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: BTreeSet<(usize, usize)>,
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from `(receiver, sender)` pairs. Self-loops are added.
    ///
    /// With `directed = false` the edge set must already be symmetric.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, directed: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("graph needs at least one node".into()));
        }
        let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for (i, r) in edges {
            if i >= n || r >= n {
                return Err(Error::Graph(format!("edge ({i}, {r}) out of range for n = {n}")));
            }
            set.insert((i, r));
        }
        if !directed {
            if let Some(&(i, r)) = set.iter().find(|&&(i, r)| !set.contains(&(r, i))) {
                return Err(Error::Graph(format!(
                    "undirected graph is missing the reverse of edge ({i}, {r})"
                )));
            }
        }
        Ok(Self::from_set(n, set, directed))
    }

    /// Symmetric graph from unordered pairs.
    pub fn undirected(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut both = Vec::new();
        for (a, b) in pairs {
            both.push((a, b));
            both.push((b, a));
        }
        Self::new(n, both, false)
    }

    fn from_set(n: usize, edges: BTreeSet<(usize, usize)>, directed: bool) -> Self {
        let mut in_nbrs = vec![Vec::new(); n];
        let mut out_nbrs = vec![Vec::new(); n];
        for &(i, r) in &edges {
            in_nbrs[i].push(r);
            out_nbrs[r].push(i);
        }
        Graph {
            n,
            directed,
            edges,
            in_nbrs,
            out_nbrs,
        }
    }

    /// Graph induced by the positive pattern of a square matrix: `(i, r)` is
    /// an edge iff `m[(i, r)] > 0`.
    pub fn from_pattern(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Graph("pattern matrix must be square".into()));
        }
        let n = m.nrows();
        let mut set = BTreeSet::new();
        for i in 0..n {
            for r in 0..n {
                if m[(i, r)] > 0.0 {
                    set.insert((i, r));
                }
            }
        }
        let directed = set.iter().any(|&(i, r)| !set.contains(&(r, i)));
        Graph::new(n, set, directed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, r: usize) -> bool {
        self.edges.contains(&(i, r))
    }

    /// Nodes that send to `i`, including `i`.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nbrs[i]
    }

    /// Nodes that receive from `i`, including `i`.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nbrs[i]
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, r)| self.edges.contains(&(r, i)))
    }

    /// In-degree equals out-degree at every node.
    pub fn is_weight_balanced(&self) -> bool {
        (0..self.n).all(|i| self.in_nbrs[i].len() == self.out_nbrs[i].len())
    }

    /// Nodes reachable from `root` following the direction information flows.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        sweep(self.n, root, |v| self.out_neighbors(v))
    }

    /// Nodes from which `root` is reachable.
    pub fn reaching(&self, root: usize) -> Vec<bool> {
        sweep(self.n, root, |v| self.in_neighbors(v))
    }

    /// Serializes to the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {} directed {}\n", self.n, u8::from(self.directed));
        for &(i, r) in &self.edges {
            let _ = writeln!(out, "{} {}", i + 1, r + 1);
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Graph("empty edge list".into()))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let (n, directed) = match tokens.as_slice() {
            ["n", n, "directed", d] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Graph(format!("bad node count in header `{header}`")))?;
                let directed = match *d {
                    "0" => false,
                    "1" => true,
                    _ => return Err(Error::Graph(format!("bad directed flag in header `{header}`"))),
                };
                (n, directed)
            }
            _ => {
                return Err(Error::Graph(format!(
                    "expected header `n <count> directed <0|1>`, got `{header}`"
                )))
            }
        };
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let parse = |t: Option<&str>| -> Result<usize> {
                let v: usize = t
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Graph(format!("bad edge line `{line}`")))?;
                if v == 0 {
                    return Err(Error::Graph(format!("node indices are 1-based: `{line}`")));
                }
                Ok(v - 1)
            };
            let i = parse(it.next())?;
            let r = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Graph(format!("bad edge line `{line}`")));
            }
            edges.push((i, r));
        }
        Graph::new(n, edges, directed)
    }
}

fn sweep<'a>(n: usize, root: usize, next: impl Fn(usize) -> &'a [usize]) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for &u in next(v) {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    seen
}

/// Every ordered pair of nodes is joined by a directed path.
pub fn is_strongly_connected(g: &Graph) -> bool {
    g.reachable_from(0).iter().all(|&b| b) && g.reaching(0).iter().all(|&b| b)
}

/// Transposes the edge set.
pub fn reverse(g: &Graph) -> Graph {
    let set = g.edges.iter().map(|&(i, r)| (r, i)).collect();
    Graph::from_set(g.n, set, g.directed)
}

/// Nodes that reach every node in `g_a` and are reached by every node in `g_b`.
pub fn common_roots(g_a: &Graph, g_b: &Graph) -> Vec<usize> {
    if g_a.n() != g_b.n() {
        return Vec::new();
    }
    (0..g_a.n())
        .filter(|&v| g_a.reachable_from(v).iter().all(|&b| b) && g_b.reaching(v).iter().all(|&b| b))
        .collect()
}

/// Graph condition of the push-pull method: some node roots a spanning tree
/// of `g_a` and of the reverse of `g_b`.
pub fn has_common_root(g_a: &Graph, g_b: &Graph) -> bool {
    !common_roots(g_a, g_b).is_empty()
}

/// Directed exponential graph: node `i` sends to `(i + 2^j) mod n`.
pub fn directed_exponential(n: usize) -> Result<Graph> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Graph(format!("exponential graph needs a power of two, got {n}")));
    }
    let mut edges = BTreeSet::new();
    let mut offset = 1;
    while offset < n {
        for i in 0..n {
            edges.insert(((i + offset) % n, i));
        }
        offset *= 2;
    }
    for i in 0..n {
        edges.insert((i, i));
    }
    let directed = edges.iter().any(|&(i, r)| !edges.contains(&(r, i)));
    Ok(Graph::from_set(n, edges, directed))
}

/// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
pub fn directed_ring(n: usize) -> Result<Graph> {
    Graph::new(n, (0..n).map(|i| ((i + 1) % n, i)), n > 2)
}

pub fn complete(n: usize) -> Result<Graph> {
    Graph::undirected(n, (0..n).flat_map(|i| (0..n).map(move |r| (i, r))))
}

pub fn path(n: usize) -> Result<Graph> {
    Graph::undirected(n, (1..n).map(|i| (i - 1, i)))
}

/// Random geometric graph in the unit square with its provenance.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub graph: Graph,
    pub positions: Vec<[f64; 2]>,
    /// Links made one-directional, stored as the surviving `(receiver, sender)` edge.
    pub one_way_links: Vec<(usize, usize)>,
    /// 1-based index of the placement that was accepted.
    pub attempts: usize,
}

/// Nearest-neighbour geometric graph, optionally with a fraction of links
/// made one-directional. Placements are redrawn until strongly connected.
pub fn geometric(n: usize, radius: f64, one_way_fraction: f64, seed: u64) -> Result<GeometricGraph> {
    if n == 0 {
        return Err(Error::Graph("graph needs at least one node".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Graph(format!("radius must be positive, got {radius}")));
    }
    if !(0.0..=1.0).contains(&one_way_fraction) {
        return Err(Error::Graph(format!(
            "one-way fraction must lie in [0, 1], got {one_way_fraction}"
        )));
    }
    for attempt in 0..GEOMETRIC_RETRIES {
        let mut rng = rng::stream(&[seed, attempt as u64, 0x6E0]);
        let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
        let mut links = Vec::new();
        for i in 0..n {
            for r in (i + 1)..n {
                let dx = positions[i][0] - positions[r][0];
                let dy = positions[i][1] - positions[r][1];
                if (dx * dx + dy * dy).sqrt() <= radius {
                    links.push((i, r));
                }
            }
        }
        let k = (one_way_fraction * links.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..links.len()).collect();
        order.shuffle(&mut rng);
        let mut one_way = vec![false; links.len()];
        for &idx in order.iter().take(k) {
            one_way[idx] = true;
        }
        let mut edges = BTreeSet::new();
        let mut kept = Vec::new();
        for (idx, &(a, b)) in links.iter().enumerate() {
            if one_way[idx] {
                let e = if rng.random::<bool>() { (a, b) } else { (b, a) };
                edges.insert(e);
                kept.push(e);
            } else {
                edges.insert((a, b));
                edges.insert((b, a));
            }
        }
        for i in 0..n {
            edges.insert((i, i));
        }
        let graph = Graph::from_set(n, edges, one_way_fraction > 0.0);
        if is_strongly_connected(&graph) {
            return Ok(GeometricGraph {
                graph,
                positions,
                one_way_links: kept,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::Disconnected {
        attempts: GEOMETRIC_RETRIES,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_reach(g: &Graph) -> Vec<Vec<bool>> {
        let n = g.n();
        let mut r = vec![vec![false; n]; n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(i, s) in &g.edges {
            r[s][i] = true;
        }
        for k in 0..n {
            for a in 0..n {
                for b in 0..n {
                    if r[a][k] && r[k][b] {
                        r[a][b] = true;
                    }
                }
            }
        }
        r
    }

    #[test]
    fn single_node_geometric() {
        let g = geometric(1, 0.1, 0.0, 7).unwrap();
        assert_eq!(g.graph.n(), 1);
        assert!(g.graph.has_edge(0, 0));
        assert_eq!(g.graph.edge_count(), 1);
    }

    #[test]
    fn geometric_fifty_nodes() {
        let und = geometric(50, 0.3, 0.0, 11).unwrap();
        assert!(!und.graph.is_directed());
        assert!(und.graph.is_symmetric());
        assert!(is_strongly_connected(&und.graph));
        let dir = geometric(50, 0.3, 0.5, 11).unwrap();
        assert!(dir.graph.is_directed());
        assert!(is_strongly_connected(&dir.graph));
        assert!(!dir.one_way_links.is_empty());
        for &(i, r) in &dir.one_way_links {
            assert!(dir.graph.has_edge(i, r));
            assert!(!dir.graph.has_edge(r, i));
        }
    }

    #[test]
    fn tiny_radius_fails() {
        assert!(matches!(geometric(30, 1e-4, 0.0, 1), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn exponential_graphs() {
        let g1 = directed_exponential(1).unwrap();
        assert_eq!(g1.edge_count(), 1);
        let g4 = directed_exponential(4).unwrap();
        for i in 0..4 {
            let mut outs = g4.out_neighbors(i).to_vec();
            outs.sort();
            let mut want = vec![i, (i + 1) % 4, (i + 2) % 4];
            want.sort();
            assert_eq!(outs, want);
        }
        let g8 = directed_exponential(8).unwrap();
        for i in 0..8 {
            assert_eq!(g8.in_neighbors(i).len(), 4);
            assert_eq!(g8.out_neighbors(i).len(), 4);
        }
        assert!(g8.is_weight_balanced());
        assert!(brute_reach(&g8).iter().all(|row| row.iter().all(|&b| b)));
        assert!(is_strongly_connected(&g8));
        assert!(directed_exponential(6).is_err());
        assert!(directed_exponential(0).is_err());
    }

    #[test]
    fn connectivity_cases() {
        let one_way = Graph::new(2, [(1, 0)], true).unwrap();
        assert!(!is_strongly_connected(&one_way));
        assert!(is_strongly_connected(&directed_ring(5).unwrap()));
    }

    #[test]
    fn reversal() {
        let g = Graph::new(3, [(1, 2)], true).unwrap();
        let r = reverse(&g);
        assert!(r.has_edge(2, 1));
        assert!(!r.has_edge(1, 2));
        assert!((0..3).all(|i| r.has_edge(i, i)));
        assert_eq!(reverse(&r), g);
        let rev4 = reverse(&directed_exponential(4).unwrap());
        for i in 0..4 {
            let mut outs = rev4.out_neighbors(i).to_vec();
            outs.sort();
            let mut want = vec![i, (i + 3) % 4, (i + 2) % 4];
            want.sort();
            assert_eq!(outs, want);
        }
    }

    #[test]
    fn common_root_cases() {
        let ring = directed_ring(4).unwrap();
        assert!(has_common_root(&ring, &ring));
        // Star: node 0 pulls to everyone through A, everyone pushes to node 0 through B.
        let ga = Graph::new(4, [(1, 0), (2, 0), (3, 0)], true).unwrap();
        let gb = Graph::new(4, [(0, 1), (0, 2), (0, 3)], true).unwrap();
        assert_eq!(common_roots(&ga, &gb), vec![0]);
        let two_cycles = Graph::undirected(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!has_common_root(&two_cycles, &two_cycles));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = geometric(12, 0.5, 0.5, 3).unwrap().graph;
        let text = g.to_edge_list();
        assert!(text.starts_with("n 12 directed 1\n"));
        assert_eq!(Graph::parse_edge_list(&text).unwrap(), g);
        assert!(Graph::parse_edge_list("n 2 directed 0\n1 2\n").is_err());
        assert!(Graph::parse_edge_list("n 2 directed 1\n0 1\n").is_err());
    }

    #[test]
    fn undirected_requires_symmetry() {
        assert!(Graph::new(2, [(0, 1)], false).is_err());
        assert!(Graph::new(2, [(0, 5)], true).is_err());
    }
}
