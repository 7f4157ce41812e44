//! k-growing graphs and the shortest-path machinery built on top of them.
//!
//! A k-growing graph is built by adding nodes one at a time; node `j` (in join
//! order) connects to `min(k, j)` distinct, uniformly chosen earlier nodes.
//! The result is simple and connected by construction.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel distance for nodes not reachable from the BFS root.
pub const UNREACHABLE: u32 = u32::MAX;

/// Above this size, pooled histograms default to sampling sources.
pub const POOL_ALL_LIMIT: usize = 10_000;
pub const DEFAULT_SAMPLED_SOURCES: usize = 1_000;

const SOURCE_SAMPLE_SALT: u64 = 0x5eed_0f_5a3e;

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    k: usize,
    seed: u64,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an explicit edge list. `k` and `seed` are recorded as 0.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_edges(n, 0, 0, edges.iter().copied())
    }

    fn with_edges(
        n: usize,
        k: usize,
        seed: u64,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::param(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::param(format!("self-loop at node {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            if list.len() != before {
                return Err(Error::param(format!("duplicate edge at node {u}")));
            }
        }
        Ok(Graph {
            n,
            k,
            seed,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.n as f64
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs(0).iter().all(|&d| d != UNREACHABLE)
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(Error::param(format!("node {v} out of range for n = {}", self.n)));
        }
        Ok(())
    }

    /// Hop distances from `source` to every node.
    pub fn bfs(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.n];
        let mut queue = VecDeque::with_capacity(self.n);
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = dist[u] + 1;
            for &v in &self.adjacency[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn distance(&self, u: usize, v: usize) -> Result<u32> {
        self.check_node(u)?;
        self.check_node(v)?;
        Ok(self.bfs(u)[v])
    }

    /// Writes the edge-list format: a `n k seed` header, then one `u v` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.n, self.k, self.seed)?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n, self.k, self.seed);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, k, seed] = fields[..] else {
            return Err(Error::Parse(format!("bad header line: {header:?}")));
        };
        let n = parse_field::<usize>(n)?;
        let k = parse_field::<usize>(k)?;
        let seed = parse_field::<u64>(seed)?;
        let mut edges = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(u), Some(v), None) => edges.push((parse_field(u)?, parse_field(v)?)),
                _ => return Err(Error::Parse(format!("bad edge line: {line:?}"))),
            }
        }
        Graph::with_edges(n, k, seed, edges)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

/// Number of edges a k-growing graph on `n` nodes has: `sum_j min(k, j)`.
pub fn k_growing_edge_count(n: usize, k: usize) -> usize {
    (1..n).map(|j| j.min(k)).sum()
}

/// Generates a k-growing graph. Deterministic in `(n, k, seed)`.
pub fn generate_k_growing(n: usize, k: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!("k-growing graph needs n >= 2, got {n}")));
    }
    if k < 1 {
        return Err(Error::param("k-growing graph needs k >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(k_growing_edge_count(n, k));
    for j in 1..n {
        for target in rand::seq::index::sample(&mut rng, j, k.min(j)) {
            edges.push((j, target));
        }
    }
    let g = Graph::with_edges(n, k, seed, edges)?;
    debug_assert!(g.is_connected());
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramSource {
    Node(usize),
    Pooled,
}

/// `counts[i]` is the number of (source, node) pairs at hop distance `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub source: HistogramSource,
    pub counts: Vec<u64>,
}

impl DistanceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn accumulate(&mut self, distances: &[u32]) {
        for &d in distances {
            if d == UNREACHABLE {
                continue;
            }
            let d = d as usize;
            if self.counts.len() <= d {
                self.counts.resize(d + 1, 0);
            }
            self.counts[d] += 1;
        }
    }

    fn merge(mut self, other: DistanceHistogram) -> DistanceHistogram {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }

    /// Mean hop distance, excluding the zero-distance self pairs.
    pub fn mean_excluding_self(&self) -> f64 {
        let (mut w, mut s) = (0.0, 0.0);
        for (d, &c) in self.counts.iter().enumerate().skip(1) {
            w += c as f64;
            s += c as f64 * d as f64;
        }
        s / w
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance,count\n");
        for (d, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{d},{c}");
        }
        s
    }
}

pub fn shortest_path_histogram(g: &Graph, source: usize) -> Result<DistanceHistogram> {
    g.check_node(source)?;
    let mut h = DistanceHistogram {
        source: HistogramSource::Node(source),
        counts: Vec::new(),
    };
    h.accumulate(&g.bfs(source));
    Ok(h)
}

/// Which sources contribute to a pooled histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceSample {
    All,
    /// Sample this many distinct sources, seeded from the graph seed.
    Count(usize),
}

impl SourceSample {
    /// All sources up to 10^4 nodes, 1000 sampled sources above.
    pub fn default_for(n: usize) -> Self {
        if n <= POOL_ALL_LIMIT {
            SourceSample::All
        } else {
            SourceSample::Count(DEFAULT_SAMPLED_SOURCES)
        }
    }
}

pub fn pooled_histogram(g: &Graph, sample: SourceSample) -> Result<DistanceHistogram> {
    let sources: Vec<usize> = match sample {
        SourceSample::All => (0..g.n).collect(),
        SourceSample::Count(0) => return Err(Error::param("need at least one source")),
        SourceSample::Count(m) if m >= g.n => (0..g.n).collect(),
        SourceSample::Count(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed ^ SOURCE_SAMPLE_SALT);
            let mut picked = rand::seq::index::sample(&mut rng, g.n, m).into_vec();
            picked.sort_unstable();
            picked
        }
    };
    let empty = || DistanceHistogram {
        source: HistogramSource::Pooled,
        counts: Vec::new(),
    };
    let h = sources
        .par_iter()
        .fold(empty, |mut acc, &s| {
            acc.accumulate(&g.bfs(s));
            acc
        })
        .reduce(empty, DistanceHistogram::merge);
    Ok(h)
}

/// Set of node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<usize>);

impl NodeSet {
    pub fn new() -> Self {
        NodeSet(BTreeSet::new())
    }

    /// Builds a set, rejecting ids outside `0..n`.
    pub fn checked(members: impl IntoIterator<Item = usize>, n: usize) -> Result<Self> {
        let set: BTreeSet<usize> = members.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&v| v >= n) {
            return Err(Error::param(format!("node {bad} out of range for n = {n}")));
        }
        Ok(NodeSet(set))
    }

    pub fn insert(&mut self, v: usize) -> bool {
        self.0.insert(v)
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        NodeSet(iter.into_iter().collect())
    }
}

/// Which nodes may be returned as Jordan centres.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum CandidatePool {
    /// Only members of the infected set.
    #[default]
    Infected,
    /// Every node of the graph.
    AllNodes,
    /// An explicit set of nodes.
    Only(NodeSet),
}

/// Eccentricity of every node with respect to `targets`: `max_{v in targets} d(u, v)`.
pub fn eccentricities(g: &Graph, targets: &NodeSet) -> Vec<u32> {
    let mut ecc = vec![0u32; g.n];
    for v in targets.iter() {
        for (e, d) in ecc.iter_mut().zip(g.bfs(v)) {
            *e = (*e).max(d);
        }
    }
    ecc
}

/// All infected nodes minimizing the maximum distance to the infected set.
pub fn jordan_center(g: &Graph, infected: &NodeSet) -> Result<NodeSet> {
    jordan_center_with(g, infected, &CandidatePool::Infected)
}

pub fn jordan_center_with(g: &Graph, infected: &NodeSet, pool: &CandidatePool) -> Result<NodeSet> {
    if infected.is_empty() {
        return Err(Error::param("Jordan centre of an empty set"));
    }
    if let Some(bad) = infected.iter().find(|&v| v >= g.n) {
        return Err(Error::param(format!("node {bad} out of range for n = {}", g.n)));
    }
    let ecc = eccentricities(g, infected);
    let candidates: Vec<usize> = match pool {
        CandidatePool::Infected => infected.to_vec(),
        CandidatePool::AllNodes => (0..g.n).collect(),
        CandidatePool::Only(set) => set.iter().filter(|&v| v < g.n).collect(),
    };
    let Some(best) = candidates.iter().map(|&u| ecc[u]).min() else {
        return Err(Error::param("empty candidate pool"));
    };
    Ok(candidates.into_iter().filter(|&u| ecc[u] == best).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn two_nodes_large_k_gives_single_edge() {
        let g = generate_k_growing(2, 3, 7).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn k1_is_a_tree() {
        let g = generate_k_growing(5, 1, 3).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert!(g.is_connected());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(generate_k_growing(1, 1, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_k_growing(10, 0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn rejects_loops_and_duplicates() {
        assert!(Graph::from_edges(3, &[(1, 1)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 3)]).is_err());
    }

    #[test]
    fn path_histogram() {
        let h = shortest_path_histogram(&path3(), 0).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert!(shortest_path_histogram(&path3(), 3).is_err());
    }

    #[test]
    fn complete_graph_histogram() {
        let edges: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let g = Graph::from_edges(4, &edges).unwrap();
        assert_eq!(shortest_path_histogram(&g, 2).unwrap().counts, vec![1, 3]);
    }

    #[test]
    fn pooled_path_and_star() {
        let h = pooled_histogram(&path3(), SourceSample::All).unwrap();
        assert_eq!(h.counts, vec![3, 4, 2]);
        assert_eq!(h.source, HistogramSource::Pooled);

        let star = Graph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(pooled_histogram(&star, SourceSample::All).unwrap().counts, vec![5, 8, 12]);
        assert!(pooled_histogram(&star, SourceSample::Count(0)).is_err());
    }

    #[test]
    fn jordan_center_examples() {
        let all: NodeSet = [0, 1, 2].into_iter().collect();
        assert_eq!(jordan_center(&path3(), &all).unwrap().to_vec(), vec![1]);

        let g = generate_k_growing(20, 2, 1).unwrap();
        let single: NodeSet = [7].into_iter().collect();
        assert_eq!(jordan_center(&g, &single).unwrap().to_vec(), vec![7]);

        let cycle = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let all: NodeSet = (0..4).collect();
        assert_eq!(jordan_center(&cycle, &all).unwrap().to_vec(), vec![0, 1, 2, 3]);

        assert!(jordan_center(&cycle, &NodeSet::new()).is_err());
    }

    #[test]
    fn widened_pool_can_leave_the_infected_set() {
        // Ends of a path: the midpoint is outside the infected set.
        let infected: NodeSet = [0, 2].into_iter().collect();
        assert_eq!(jordan_center(&path3(), &infected).unwrap().to_vec(), vec![0, 2]);
        let wide = jordan_center_with(&path3(), &infected, &CandidatePool::AllNodes).unwrap();
        assert_eq!(wide.to_vec(), vec![1]);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate_k_growing(30, 3, 9).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("30 3 9\n"));
        let back = Graph::read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(back, g);
        assert!(Graph::read_edge_list("3 1\n".as_bytes()).is_err());
    }
}
