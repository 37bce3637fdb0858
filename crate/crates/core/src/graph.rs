//! Undirected, connected graphs with the shortest-path metric, degree-weighted
//! summability functionals, sphere/ball enumeration, and simple-path censuses.
//!
//! Vertices are dense indices `0..num_vertices`. One vertex is distinguished
//! as the *root*; distance-to-root enters every tempered weight. Distance
//! tables are memoized per source vertex behind a lock so that read-heavy
//! verification passes can share them across threads.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

/// Default expansion budget for [`Graph::simple_path_census`].
pub const DEFAULT_CENSUS_BUDGET: u64 = 10_000_000;

/// Errors from graph construction, queries, and censuses.
#[derive(Debug, Clone, thiserror::Error)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("vertex {vertex} out of range (num_vertices = {num_vertices})")]
    VertexOutOfRange { vertex: usize, num_vertices: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is not connected: vertex {missing} unreachable from root {root} ({reached} of {total} reached)")]
    Disconnected {
        root: usize,
        missing: usize,
        reached: usize,
        total: usize,
    },
    #[error("vertex {0} is isolated; minimum degree 1 is required")]
    IsolatedVertex(usize),
    #[error("distance table for source {vertex}: {detail}")]
    BadDistanceTable { vertex: usize, detail: String },
    #[error("path census from {start} at length {length} exceeded budget of {budget} expansions ({paths} paths, max product {max_degree_product} so far)")]
    CensusBudgetExceeded {
        start: usize,
        length: u32,
        budget: u64,
        paths: u64,
        max_degree_product: f64,
    },
    #[error("path is empty")]
    EmptyPath,
    #[error("path step {index} joins non-adjacent vertices {from} and {to}")]
    NotAdjacent { index: usize, from: usize, to: usize },
    #[error("spin vector has length {got}, expected {expected}")]
    ValueLength { got: usize, expected: usize },
}

/// Serialized form: `{"root": .., "edges": [[x, y], ..], "num_vertices": ..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    root: usize,
    edges: Vec<(usize, usize)>,
    num_vertices: usize,
}

/// A finite connected graph with a distinguished root vertex.
pub struct Graph {
    adj: Vec<Vec<usize>>,
    root: usize,
    dist_cache: RwLock<HashMap<usize, Arc<Vec<u32>>>>,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        let cache = self.dist_cache.read().unwrap().clone();
        Graph {
            adj: self.adj.clone(),
            root: self.root,
            dist_cache: RwLock::new(cache),
        }
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("num_vertices", &self.num_vertices())
            .field("num_edges", &self.num_edges())
            .field("root", &self.root)
            .finish()
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.adj == other.adj
    }
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphFile {
            root: self.root,
            edges: self.edges(),
            num_vertices: self.num_vertices(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = GraphFile::deserialize(deserializer)?;
        Graph::from_edges(file.num_vertices, file.root, &file.edges)
            .map_err(serde::de::Error::custom)
    }
}

impl Graph {
    /// Builds a graph from an undirected edge list, validating that vertices
    /// are in range, there are no self-loops or duplicate edges, every vertex
    /// has degree at least one, and the graph is connected.
    pub fn from_edges(
        num_vertices: usize,
        root: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        if num_vertices == 0 {
            return Err(GraphError::Empty);
        }
        if root >= num_vertices {
            return Err(GraphError::VertexOutOfRange {
                vertex: root,
                num_vertices,
            });
        }
        let mut adj = vec![Vec::new(); num_vertices];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(x, y) in edges {
            for v in [x, y] {
                if v >= num_vertices {
                    return Err(GraphError::VertexOutOfRange {
                        vertex: v,
                        num_vertices,
                    });
                }
            }
            if x == y {
                return Err(GraphError::SelfLoop(x));
            }
            let key = (x.min(y), x.max(y));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            adj[x].push(y);
            adj[y].push(x);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        if let Some(v) = adj.iter().position(Vec::is_empty) {
            return Err(GraphError::IsolatedVertex(v));
        }
        let graph = Graph {
            adj,
            root,
            dist_cache: RwLock::new(HashMap::new()),
        };
        let dist = graph.bfs(root);
        if let Some(missing) = dist.iter().position(|&d| d == u32::MAX) {
            let reached = dist.iter().filter(|&&d| d != u32::MAX).count();
            return Err(GraphError::Disconnected {
                root,
                missing,
                reached,
                total: num_vertices,
            });
        }
        graph
            .dist_cache
            .write()
            .unwrap()
            .insert(root, Arc::new(dist));
        Ok(graph)
    }

    /// Parses the JSON wire format `{"root", "edges", "num_vertices"}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Degree `n(x)`.
    pub fn degree(&self, x: usize) -> usize {
        self.adj[x].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Neighbors of `x` in increasing vertex order.
    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adj[x]
    }

    /// Undirected edge list, each pair ordered and the list sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (x, nbrs) in self.adj.iter().enumerate() {
            for &y in nbrs {
                if x < y {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn check_vertex(&self, x: usize) -> Result<(), GraphError> {
        if x >= self.num_vertices() {
            return Err(GraphError::VertexOutOfRange {
                vertex: x,
                num_vertices: self.num_vertices(),
            });
        }
        Ok(())
    }

    fn bfs(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.num_vertices()];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v];
            for &w in &self.adj[v] {
                if dist[w] == u32::MAX {
                    dist[w] = dv + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Shortest-path distances from `source`, memoized per source vertex.
    pub fn distances(&self, source: usize) -> Result<Arc<Vec<u32>>, GraphError> {
        self.check_vertex(source)?;
        if let Some(hit) = self.dist_cache.read().unwrap().get(&source) {
            return Ok(Arc::clone(hit));
        }
        let table = Arc::new(self.bfs(source));
        let mut cache = self.dist_cache.write().unwrap();
        let entry = cache.entry(source).or_insert_with(|| Arc::clone(&table));
        Ok(Arc::clone(entry))
    }

    /// One-shot breadth-first scan that bypasses the memo table; use for
    /// sweeps over many sources where caching every table would not pay.
    pub fn distances_uncached(&self, source: usize) -> Result<Vec<u32>, GraphError> {
        self.check_vertex(source)?;
        Ok(self.bfs(source))
    }

    /// Installs an externally computed distance table (e.g. from a disk
    /// cache) after validating it against the edge structure.
    pub fn install_distances(&self, source: usize, table: Vec<u32>) -> Result<(), GraphError> {
        self.check_vertex(source)?;
        let n = self.num_vertices();
        let fail = |detail: &str| GraphError::BadDistanceTable {
            vertex: source,
            detail: detail.to_string(),
        };
        if table.len() != n {
            return Err(fail(&format!("length {} != {}", table.len(), n)));
        }
        if table[source] != 0 {
            return Err(fail("nonzero distance at the source"));
        }
        for (x, nbrs) in self.adj.iter().enumerate() {
            if x != source && table[x] == 0 {
                return Err(fail(&format!("zero distance at non-source vertex {x}")));
            }
            let mut has_parent = x == source;
            for &y in nbrs {
                if table[x].abs_diff(table[y]) > 1 {
                    return Err(fail(&format!("edge ({x}, {y}) spans more than one level")));
                }
                has_parent |= table[y] + 1 == table[x];
            }
            if !has_parent {
                return Err(fail(&format!("vertex {x} has no neighbor one level up")));
            }
        }
        self.dist_cache
            .write()
            .unwrap()
            .insert(source, Arc::new(table));
        Ok(())
    }

    /// Distance `rho(x, y)`.
    pub fn distance(&self, x: usize, y: usize) -> Result<u32, GraphError> {
        self.check_vertex(y)?;
        Ok(self.distances(x)?[y])
    }

    pub fn eccentricity(&self, x: usize) -> Result<u32, GraphError> {
        Ok(*self.distances(x)?.iter().max().expect("non-empty graph"))
    }

    pub fn diameter(&self) -> Result<u32, GraphError> {
        let mut best = 0;
        for x in 0..self.num_vertices() {
            best = best.max(*self.distances_uncached(x)?.iter().max().unwrap());
        }
        Ok(best)
    }

    /// Tempering weight `w_alpha(x) = exp(-alpha * rho(root, x))`.
    pub fn weight(&self, alpha: f64, x: usize) -> Result<f64, GraphError> {
        let d = self.distances(self.root)?[x];
        Ok((-alpha * f64::from(d)).exp())
    }

    /// Degree functional `m_theta(x) = sum_{y ~ x} (n(x) n(y))^theta`.
    pub fn randic_term(&self, theta: f64, x: usize) -> f64 {
        let nx = self.adj[x].len() as f64;
        self.adj[x]
            .iter()
            .map(|&y| (nx * self.adj[y].len() as f64).powf(theta))
            .sum()
    }

    /// Weighted degree sum `sum_y n(y)^(1+theta) exp(-alpha rho(x, y))`,
    /// taken over every vertex including `x` itself.
    pub fn neighborhood_sum(&self, alpha: f64, theta: f64, x: usize) -> Result<f64, GraphError> {
        let dist = self.distances(x)?;
        let mut acc = KahanSum::default();
        for (y, &d) in dist.iter().enumerate() {
            let term = (self.adj[y].len() as f64).powf(1.0 + theta) * (-alpha * f64::from(d)).exp();
            acc.add(term);
        }
        Ok(acc.value())
    }

    /// Evaluates the tempered summability functional
    /// `sum_x m_theta(x) exp(-alpha rho(root, x))`, bucketing contributions by
    /// distance from the root so the decay of the tail is observable.
    pub fn weighted_degree_sum(&self, alpha: f64, theta: f64) -> Result<WeightedSumLedger, GraphError> {
        let dist = self.distances(self.root)?;
        let radius = *dist.iter().max().expect("non-empty graph") as usize;
        let mut increments = vec![0.0f64; radius + 1];
        for x in 0..self.num_vertices() {
            let term = self.randic_term(theta, x) * (-alpha * f64::from(dist[x])).exp();
            increments[dist[x] as usize] += term;
        }
        Ok(WeightedSumLedger::new(alpha, theta, increments))
    }

    /// Vertices at distance exactly `n` from `x`, in increasing order.
    pub fn sphere(&self, x: usize, n: u32) -> Result<Vec<usize>, GraphError> {
        let dist = self.distances(x)?;
        Ok((0..self.num_vertices()).filter(|&y| dist[y] == n).collect())
    }

    /// Vertices at distance at most `n` from `x`, in increasing order.
    pub fn ball(&self, x: usize, n: u32) -> Result<Vec<usize>, GraphError> {
        let dist = self.distances(x)?;
        Ok((0..self.num_vertices()).filter(|&y| dist[y] <= n).collect())
    }

    /// `sum_{y in sphere(x, n)} n(y)^(1+theta)`.
    pub fn sphere_degree_sum(&self, theta: f64, n: u32, x: usize) -> Result<f64, GraphError> {
        let dist = self.distances(x)?;
        let mut acc = KahanSum::default();
        for y in 0..self.num_vertices() {
            if dist[y] == n {
                acc.add((self.adj[y].len() as f64).powf(1.0 + theta));
            }
        }
        Ok(acc.value())
    }

    /// Counts self-avoiding paths of exactly `length` edges starting at `x`
    /// and tracks the largest degree product over a path's vertices excluding
    /// its endpoint (the product is 1 for `length` 0). Aborts with partial
    /// tallies once `budget` vertex expansions have been spent.
    pub fn simple_path_census(
        &self,
        x: usize,
        length: u32,
        budget: u64,
    ) -> Result<PathCensus, GraphError> {
        self.check_vertex(x)?;
        let mut paths = 0u64;
        let mut max_degree_product = 0.0f64;
        let mut expansions = 0u64;
        if length == 0 {
            return Ok(PathCensus {
                start: x,
                length,
                paths: 1,
                max_degree_product: 1.0,
                expansions,
            });
        }
        // Iterative depth-first walk; `stack[d]` holds the tip at depth `d`,
        // the index of the next neighbor to try, and the degree product over
        // path vertices strictly before the tip.
        let mut on_path = vec![false; self.num_vertices()];
        on_path[x] = true;
        let mut stack: Vec<(usize, usize, f64)> = vec![(x, 0, 1.0)];
        while let Some(&(tip, next, prod)) = stack.last() {
            let depth = (stack.len() - 1) as u32;
            if depth == length {
                paths += 1;
                if prod > max_degree_product {
                    max_degree_product = prod;
                }
                on_path[tip] = false;
                stack.pop();
                continue;
            }
            match self.adj[tip].get(next) {
                Some(&w) => {
                    stack.last_mut().expect("non-empty stack").1 += 1;
                    if !on_path[w] {
                        expansions += 1;
                        if expansions > budget {
                            return Err(GraphError::CensusBudgetExceeded {
                                start: x,
                                length,
                                budget,
                                paths,
                                max_degree_product,
                            });
                        }
                        on_path[w] = true;
                        let tip_degree = self.adj[tip].len() as f64;
                        stack.push((w, 0, prod * tip_degree));
                    }
                }
                None => {
                    on_path[tip] = false;
                    stack.pop();
                }
            }
        }
        Ok(PathCensus {
            start: x,
            length,
            paths,
            max_degree_product,
            expansions,
        })
    }

    /// Tempered p-norm `(sum_x |values[x]|^p w_alpha(x))^(1/p)` of a spin
    /// vector indexed by vertex.
    pub fn tempered_norm(&self, values: &[f64], p: f64, alpha: f64) -> Result<f64, GraphError> {
        if values.len() != self.num_vertices() {
            return Err(GraphError::ValueLength {
                got: values.len(),
                expected: self.num_vertices(),
            });
        }
        let dist = self.distances(self.root)?;
        let mut acc = KahanSum::default();
        for (x, &v) in values.iter().enumerate() {
            acc.add(v.abs().powf(p) * (-alpha * f64::from(dist[x])).exp());
        }
        Ok(acc.value().powf(1.0 / p))
    }
}

/// A walk through the graph, checked for adjacency on construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    vertices: Vec<usize>,
}

impl Path {
    pub fn new(graph: &Graph, vertices: Vec<usize>) -> Result<Self, GraphError> {
        if vertices.is_empty() {
            return Err(GraphError::EmptyPath);
        }
        for &v in &vertices {
            graph.check_vertex(v)?;
        }
        for (i, pair) in vertices.windows(2).enumerate() {
            if graph.neighbors(pair[0]).binary_search(&pair[1]).is_err() {
                return Err(GraphError::NotAdjacent {
                    index: i,
                    from: pair[0],
                    to: pair[1],
                });
            }
        }
        Ok(Path { vertices })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Number of edges traversed.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when no vertex repeats.
    pub fn is_simple(&self) -> bool {
        let mut sorted = self.vertices.clone();
        sorted.sort_unstable();
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    /// Degree product over all vertices except the final one; 1 for a
    /// single-vertex path.
    pub fn interior_degree_product(&self, graph: &Graph) -> f64 {
        self.vertices[..self.vertices.len() - 1]
            .iter()
            .map(|&v| graph.degree(v) as f64)
            .product()
    }
}

/// Result of [`Graph::simple_path_census`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathCensus {
    pub start: usize,
    pub length: u32,
    pub paths: u64,
    pub max_degree_product: f64,
    pub expansions: u64,
}

/// Per-radius breakdown of the tempered summability functional. The running
/// total is, bit for bit, the sequential sum of the increments.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedSumLedger {
    pub alpha: f64,
    pub theta: f64,
    /// Contribution of vertices at each distance from the root.
    pub increments: Vec<f64>,
    pub total: f64,
}

impl WeightedSumLedger {
    fn new(alpha: f64, theta: f64, increments: Vec<f64>) -> Self {
        let total = increments.iter().fold(0.0, |acc, &inc| acc + inc);
        WeightedSumLedger {
            alpha,
            theta,
            increments,
            total,
        }
    }

    /// Running totals; the last entry equals `total` exactly.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len());
        let mut acc = 0.0;
        for &inc in &self.increments {
            acc += inc;
            out.push(acc);
        }
        out
    }

    /// Least-squares decay rate of `ln increment` against radius over the
    /// trailing half of the ledger; `None` when fewer than two radii with
    /// positive increments are available.
    pub fn tail_decay_rate(&self) -> Option<f64> {
        let start = self.increments.len() / 2;
        let pts: Vec<(f64, f64)> = self
            .increments
            .iter()
            .enumerate()
            .skip(start.max(1))
            .filter(|(_, &inc)| inc > 0.0)
            .map(|(r, &inc)| (r as f64, inc.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom <= 0.0 {
            return None;
        }
        Some(-(n * sxy - sx * sy) / denom)
    }

    /// Renders `radius,increment,cumulative` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,increment,cumulative\n");
        let mut acc = 0.0;
        for (r, &inc) in self.increments.iter().enumerate() {
            acc += inc;
            out.push_str(&format!("{r},{inc:.16e},{acc:.16e}\n"));
        }
        out
    }
}

/// Compensated accumulator used wherever sums must be both accurate and
/// independent of chunking.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, term: f64) {
        let y = term - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
