//! Directed-graph types, random-DAG generators, and reachability machinery.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;

/// A directed acyclic graph over nodes `0..d`. Immutable after construction;
/// the constructor rejects self-loops and directed cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    d: usize,
    adj: Vec<bool>, // row-major, adj[i*d + j] == true iff edge i -> j
}

impl Dag {
    pub fn empty(d: usize) -> Dag {
        Dag {
            d,
            adj: vec![false; d * d],
        }
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Dag> {
        let mut adj = vec![false; d * d];
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::Parameter(format!(
                    "edge ({i}, {j}) out of range for d={d}"
                )));
            }
            if i == j {
                return Err(Error::Parameter(format!("self-loop at node {i}")));
            }
            adj[i * d + j] = true;
        }
        let dag = Dag { d, adj };
        if !dag.kahn_is_acyclic() {
            return Err(Error::Parameter("edge set contains a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn from_adj(adj: &ArrayView2<bool>) -> Result<Dag> {
        if adj.nrows() != adj.ncols() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                adj.nrows(),
                adj.ncols()
            )));
        }
        let d = adj.nrows();
        let edges: Vec<(usize, usize)> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| adj[[i, j]])
            .collect();
        Dag::from_edges(d, &edges)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d + j]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in 0..self.d {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.has_edge(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_edge(i, j)).collect()
    }

    fn kahn_is_acyclic(&self) -> bool {
        kahn_peel(self.d, |i, j| self.has_edge(i, j)).is_some()
    }

    /// Topological order by Kahn peeling, smallest node index first among
    /// ready nodes so the order is deterministic.
    pub fn topological_order(&self) -> Vec<usize> {
        kahn_peel(self.d, |i, j| self.has_edge(i, j))
            .expect("Dag invariant guarantees acyclicity")
    }

    /// All nodes reachable from `i` by directed paths, excluding `i` itself.
    pub fn descendants(&self, i: usize) -> Result<BTreeSet<usize>> {
        if i >= self.d {
            return Err(Error::Parameter(format!("node {i} out of range")));
        }
        let mut seen = vec![false; self.d];
        let mut stack = vec![i];
        while let Some(u) = stack.pop() {
            for v in self.children(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        Ok((0..self.d).filter(|&v| seen[v] && v != i).collect())
    }

    /// Ancestors of `i`, excluding `i`.
    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut seen = vec![false; self.d];
        let mut stack = vec![i];
        while let Some(u) = stack.pop() {
            for v in self.parents(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..self.d).filter(|&v| seen[v] && v != i).collect()
    }

    /// Serializes to the edge-list text format: a `# dag d=<d>` header line
    /// followed by one `i j` pair per line, 0-based, row-major order.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# dag d={}\n", self.d);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Dag> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty edge-list document".into()))?;
        let d: usize = header
            .strip_prefix("# dag d=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("bad header line: {header:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                    Error::Format(format!("bad edge at line {}: {line:?}", lineno + 2))
                })
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            edges.push((i, j));
        }
        Dag::from_edges(d, &edges)
    }
}

fn kahn_peel(d: usize, has_edge: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; d];
    for i in 0..d {
        for j in 0..d {
            if has_edge(i, j) {
                indeg[j] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..d).filter(|&j| indeg[j] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(&u) = ready.iter().next() {
        ready.remove(&u);
        order.push(u);
        for v in 0..d {
            if has_edge(u, v) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
    }
    if order.len() == d {
        Some(order)
    } else {
        None
    }
}

/// True iff the boolean matrix has no directed cycle. A `true` diagonal entry
/// is a self-loop and therefore a cycle.
pub fn is_acyclic(adj: &ArrayView2<bool>) -> Result<bool> {
    if adj.nrows() != adj.ncols() {
        return Err(Error::Shape(format!(
            "adjacency must be square, got {}x{}",
            adj.nrows(),
            adj.ncols()
        )));
    }
    let d = adj.nrows();
    for i in 0..d {
        if adj[[i, i]] {
            return Ok(false);
        }
    }
    Ok(kahn_peel(d, |i, j| adj[[i, j]]).is_some())
}

/// Graph family of the synthetic benchmark protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    Er,
    Sf,
    Grp,
}

/// A graph family together with its expected node degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphKind {
    pub family: GraphFamily,
    pub degree: usize,
}

impl GraphKind {
    pub fn new(family: GraphFamily, degree: usize) -> GraphKind {
        GraphKind { family, degree }
    }

    /// The degree/family pairings used by the benchmark protocol: ER-k and
    /// SF-k with k in {2, 4}, GRP with k = 6. Other pairings run fine but are
    /// flagged so reports can mark them.
    pub fn is_canonical(&self) -> bool {
        match self.family {
            GraphFamily::Er | GraphFamily::Sf => matches!(self.degree, 2 | 4 | 6),
            GraphFamily::Grp => self.degree == 6,
        }
    }

    pub fn generate(&self, d: usize, seed: u64) -> Result<Dag> {
        match self.family {
            GraphFamily::Er => gen_er(d, self.degree, seed),
            GraphFamily::Sf => gen_sf(d, self.degree, seed),
            GraphFamily::Grp => gen_grp(d, self.degree, seed),
        }
    }

    pub fn label(&self) -> String {
        let fam = match self.family {
            GraphFamily::Er => "ER",
            GraphFamily::Sf => "SF",
            GraphFamily::Grp => "GRP",
        };
        format!("{fam}-{}", self.degree)
    }
}

/// Erdos-Renyi DAG with exactly `round(k*d/2)` edges chosen uniformly among
/// unordered pairs, oriented low-to-high along a uniformly random node ranking.
pub fn gen_er(d: usize, k: usize, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::Parameter(format!("gen_er requires d >= 2, got {d}")));
    }
    let m = ((k as f64) * (d as f64) / 2.0).round() as usize;
    let cap = d * (d - 1) / 2;
    if m > cap {
        return Err(Error::Parameter(format!(
            "edge budget {m} exceeds complete-graph capacity {cap}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(&mut rng);
    let rank = random_permutation(d, &mut rng);
    let edges: Vec<(usize, usize)> = pairs[..m]
        .iter()
        .map(|&(a, b)| {
            if rank[a] < rank[b] {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    Dag::from_edges(d, &edges)
}

/// Scale-free DAG by preferential attachment with `k/2` out-edges per added
/// node, acyclic because every edge points from a later node to an earlier
/// one; node labels are then randomized.
pub fn gen_sf(d: usize, k: usize, seed: u64) -> Result<Dag> {
    if k % 2 != 0 {
        return Err(Error::Parameter(format!(
            "gen_sf requires an even degree (attachment count k/2 must be integral), got k={k}"
        )));
    }
    let m = k / 2;
    if m < 1 || d <= m {
        return Err(Error::Parameter(format!(
            "gen_sf requires d > k/2 >= 1, got d={d}, k={k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Preferential attachment over construction labels 0..d; `repeated` holds
    // one entry per unit of degree.
    let mut targets: Vec<usize> = (0..m).collect();
    let mut repeated: Vec<usize> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for source in m..d {
        for &t in &targets {
            edges.push((source, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat(source).take(m));
        if source + 1 < d {
            let mut chosen = BTreeSet::new();
            while chosen.len() < m {
                let pick = repeated[rng.gen_range(0..repeated.len())];
                chosen.insert(pick);
            }
            targets = chosen.into_iter().collect();
        }
    }

    let relabel = random_permutation(d, &mut rng);
    let edges: Vec<(usize, usize)> = edges
        .into_iter()
        .map(|(i, j)| (relabel[i], relabel[j]))
        .collect();
    Dag::from_edges(d, &edges)
}

/// Gaussian-random-partition DAG: clusters sized around d/5, dense inside
/// (p_in = 0.4) and sparse across, with the cross probability solved so the
/// expected degree is ~k; oriented acyclically by a random node ranking.
pub fn gen_grp(d: usize, k: usize, seed: u64) -> Result<Dag> {
    if d < 4 {
        return Err(Error::Parameter(format!("gen_grp requires d >= 4, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Cluster sizes ~ max(2, round(Normal(d/5, d/10))), clipped to fit.
    let mean = d as f64 / 5.0;
    let sd = d as f64 / 10.0;
    let mut cluster = vec![0usize; d];
    let mut assigned = 0usize;
    let mut cluster_id = 0usize;
    let mut sizes: Vec<usize> = Vec::new();
    while assigned < d {
        let raw: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sd + mean;
        let mut s = raw.round().max(2.0) as usize;
        s = s.min(d - assigned);
        for node in assigned..assigned + s {
            cluster[node] = cluster_id;
        }
        sizes.push(s);
        assigned += s;
        cluster_id += 1;
    }

    let target = (k as f64) * (d as f64) / 2.0;
    let pairs_in: f64 = sizes.iter().map(|&s| (s * (s - 1) / 2) as f64).sum();
    let pairs_total = (d * (d - 1) / 2) as f64;
    let pairs_out = pairs_total - pairs_in;
    let (p_in, p_out) = if pairs_in > 0.0 && target <= 0.4 * pairs_in {
        ((target / pairs_in).min(1.0), 0.0)
    } else {
        let p_out = if pairs_out > 0.0 {
            ((target - 0.4 * pairs_in) / pairs_out).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (0.4, p_out)
    };

    let rank = random_permutation(d, &mut rng);
    let mut edges = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            let p = if cluster[a] == cluster[b] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                if rank[a] < rank[b] {
                    edges.push((a, b));
                } else {
                    edges.push((b, a));
                }
            }
        }
    }
    Dag::from_edges(d, &edges)
}

fn random_permutation(d: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..d).collect();
    p.shuffle(rng);
    p
}

/// d-separation of `i` and `j` given `z`, by Bayes-ball reachability.
pub fn d_separated(g: &Dag, i: usize, j: usize, z: &BTreeSet<usize>) -> Result<bool> {
    let d = g.d();
    if i >= d || j >= d || z.iter().any(|&v| v >= d) {
        return Err(Error::Parameter("node out of range".into()));
    }
    if i == j || z.contains(&i) || z.contains(&j) {
        return Err(Error::Parameter(
            "d_separated requires i != j and i, j not in Z".into(),
        ));
    }
    Ok(!bayes_ball_reaches(g, i, j, z))
}

/// Whether an active trail from `src` reaches `dst` given conditioning set `z`.
///
/// States are (node, arrived-from-parent?). Arriving from a parent at an
/// unobserved node continues downward; at an observed node it bounces to the
/// parents (an opened collider). Arriving from a child at an unobserved node
/// fans out both ways; an observed node blocks it.
fn bayes_ball_reaches(g: &Dag, src: usize, dst: usize, z: &BTreeSet<usize>) -> bool {
    let d = g.d();
    let mut seen_down = vec![false; d]; // reached with the edge pointing at the node
    let mut seen_up = vec![false; d]; // reached against the edge direction
    let mut queue: Vec<(usize, bool)> = Vec::new();

    // The ball leaves the source along every incident edge.
    for c in g.children(src) {
        queue.push((c, true));
    }
    for p in g.parents(src) {
        queue.push((p, false));
    }

    while let Some((u, from_parent)) = queue.pop() {
        if u == dst {
            return true;
        }
        let seen = if from_parent {
            &mut seen_down
        } else {
            &mut seen_up
        };
        if std::mem::replace(&mut seen[u], true) {
            continue;
        }
        let observed = z.contains(&u);
        if from_parent {
            if observed {
                for p in g.parents(u) {
                    queue.push((p, false));
                }
            } else {
                for c in g.children(u) {
                    queue.push((c, true));
                }
            }
        } else if !observed {
            for p in g.parents(u) {
                queue.push((p, false));
            }
            for c in g.children(u) {
                queue.push((c, true));
            }
        }
    }
    false
}

/// Sum over all directed paths i -> ... -> j of the product of edge weights,
/// computed as `((I - W)^-1 - I)[i, j]`. The weight matrix must be supported
/// on the graph's edges.
pub fn total_effect(g: &Dag, weights: &ArrayView2<f64>, i: usize, j: usize) -> Result<f64> {
    let m = total_effect_matrix(g, weights)?;
    if i >= g.d() || j >= g.d() {
        return Err(Error::Parameter("node out of range".into()));
    }
    Ok(m[[i, j]])
}

/// All-pairs total effects: `(I - W)^-1 - I`.
pub fn total_effect_matrix(g: &Dag, weights: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let d = g.d();
    if weights.nrows() != d || weights.ncols() != d {
        return Err(Error::Shape(format!(
            "weights are {}x{}, graph has d={d}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    for i in 0..d {
        for j in 0..d {
            if weights[[i, j]] != 0.0 && !g.has_edge(i, j) {
                return Err(Error::Parameter(format!(
                    "weight at ({i}, {j}) is off the graph's support"
                )));
            }
        }
    }
    let mut a = Array2::eye(d);
    a -= weights;
    let inv = Lu::factor(&a.view())
        .map_err(|_| Error::Numerical("I - W is singular".into()))?
        .inverse();
    Ok(inv - Array2::<f64>::eye(d))
}
