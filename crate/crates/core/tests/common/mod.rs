#![allow(dead_code)] // each test binary uses its own subset of these helpers

//! Shared helpers for the integration suites: random DAG sampling and the
//! brute-force d-separation oracle used to cross-check the reachability
//! implementation.

use std::collections::BTreeSet;

use dagbench_core::graph::Dag;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random DAG: each upper-triangular pair gets an edge with the given
/// probability, then node labels are permuted.
pub fn random_dag(d: usize, density: f64, rng: &mut ChaCha8Rng) -> Dag {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.gen::<f64>() < density {
                edges.push((perm[a], perm[b]));
            }
        }
    }
    Dag::from_edges(d, &edges).expect("upper-triangular construction is acyclic")
}

/// Exhaustive path-blocking oracle: enumerates every simple path between
/// `i` and `j` in the skeleton and applies the blocking rules directly. A
/// path is active given Z iff every non-collider on it is outside Z and
/// every collider has itself or a descendant inside Z.
pub fn brute_force_d_separated(g: &Dag, i: usize, j: usize, z: &BTreeSet<usize>) -> bool {
    let d = g.d();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); d];
    for a in 0..d {
        for b in 0..d {
            if g.has_edge(a, b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
        n.dedup();
    }

    let mut stack: Vec<Vec<usize>> = vec![vec![i]];
    while let Some(path) = stack.pop() {
        let last = *path.last().unwrap();
        if last == j {
            if path_is_active(g, &path, z) {
                return false;
            }
            continue;
        }
        for &next in &neighbors[last] {
            if !path.contains(&next) {
                let mut longer = path.clone();
                longer.push(next);
                stack.push(longer);
            }
        }
    }
    true
}

fn path_is_active(g: &Dag, path: &[usize], z: &BTreeSet<usize>) -> bool {
    for w in 1..path.len() - 1 {
        let prev = path[w - 1];
        let v = path[w];
        let next = path[w + 1];
        let collider = g.has_edge(prev, v) && g.has_edge(next, v);
        if collider {
            let mut opened = z.contains(&v);
            if !opened {
                let desc = g.descendants(v).expect("node in range");
                opened = desc.iter().any(|node| z.contains(node));
            }
            if !opened {
                return false;
            }
        } else if z.contains(&v) {
            return false;
        }
    }
    true
}

/// All subsets of `pool`, as sorted sets.
pub fn subsets(pool: &[usize]) -> Vec<BTreeSet<usize>> {
    let mut out = Vec::with_capacity(1 << pool.len());
    for mask in 0u32..(1 << pool.len()) {
        let mut set = BTreeSet::new();
        for (idx, &v) in pool.iter().enumerate() {
            if mask & (1 << idx) != 0 {
                set.insert(v);
            }
        }
        out.push(set);
    }
    out
}
