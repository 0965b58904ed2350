//! Classical box covering on explicit graphs.
//!
//! A box of size `theta` is a node set whose pairwise shortest-path distances
//! are all `<= theta`. The heuristics here are reference points for the
//! simulated box counts in [`crate::fractal`]; [`exact_min_cover`] is a
//! brute-force oracle for graphs of at most [`EXACT_MAX_NODES`] nodes.
//!
//! Disconnected graphs need no special casing: hop distance between
//! components is [`UNREACHABLE`], so every box stays inside one component and
//! the total count is the sum over components.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractal::{power_law_dim, DimFit};
use crate::rng::{stream, Stream};

pub const UNREACHABLE: usize = usize::MAX;
pub const EXACT_MAX_NODES: usize = 12;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl SimpleGraph {
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        let mut norm = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) has an endpoint outside 0..{n}")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
            if adj[u].contains(&v) {
                return Err(Error::invalid(format!("duplicate edge ({u}, {v})")));
            }
            adj[u].push(v);
            adj[v].push(u);
            norm.push((u.min(v), u.max(v)));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(SimpleGraph { n, edges: norm, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges).expect("path edges are valid")
    }

    pub fn ring(n: usize) -> Self {
        assert!(n >= 3, "ring needs at least 3 nodes");
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges).expect("ring edges are valid")
    }

    /// Node 0 is the center.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Self::new(leaves + 1, &edges).expect("star edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::new(n, &edges).expect("complete edges are valid")
    }

    /// Random spanning tree plus each remaining pair with probability `extra`.
    pub fn random_connected(n: usize, extra: f64, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::BoxCover);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = Vec::new();
        for i in 1..n {
            let parent = order[rng.random_range(0..i)];
            edges.push((parent, order[i]));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let present = edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i));
                if !present && rng.random::<f64>() < extra {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, &edges).expect("generated edges are valid")
    }
}

/// Parses "u v" lines (0-indexed); `#` starts a comment. Node count is one
/// past the largest id seen.
pub fn parse_edge_list(text: &str) -> Result<SimpleGraph> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected 'u v', got '{raw}'", lineno + 1)));
        }
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse(format!("line {}: '{s}' is not a node id", lineno + 1)))
        };
        let (u, v) = (parse(parts[0])?, parse(parts[1])?);
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v));
    }
    SimpleGraph::new(n, &edges)
}

/// Inverse of [`parse_edge_list`]: one "u v" line per edge.
pub fn edge_list_text(g: &SimpleGraph) -> String {
    g.edges.iter().map(|(u, v)| format!("{u} {v}\n")).collect()
}

pub fn read_edge_list(path: &Path) -> Result<SimpleGraph> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}

/// Hop distances; [`UNREACHABLE`] between components.
pub fn bfs_all_pairs(g: &SimpleGraph) -> Vec<Vec<usize>> {
    let mut out = vec![vec![UNREACHABLE; g.n]; g.n];
    let mut queue = VecDeque::new();
    for (s, row) in out.iter_mut().enumerate() {
        row[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &g.adj[u] {
                if row[v] == UNREACHABLE {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxCover {
    /// Box id per node.
    pub assignment: Vec<usize>,
    pub theta: usize,
    pub count: usize,
}

impl BoxCover {
    fn from_boxes(n: usize, theta: usize, boxes: &[Vec<usize>]) -> Self {
        let mut assignment = vec![usize::MAX; n];
        for (id, members) in boxes.iter().enumerate() {
            for &v in members {
                assignment[v] = id;
            }
        }
        BoxCover { assignment, theta, count: boxes.len() }
    }

    pub fn boxes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (v, &b) in self.assignment.iter().enumerate() {
            out[b].push(v);
        }
        out
    }

    /// Every node assigned, and all pairs inside each box within `theta` hops.
    pub fn is_valid(&self, dist: &[Vec<usize>]) -> bool {
        if self.assignment.len() != dist.len() || self.assignment.iter().any(|&b| b >= self.count) {
            return false;
        }
        self.boxes().iter().all(|members| {
            !members.is_empty() && members.iter().all(|&a| members.iter().all(|&b| dist[a][b] <= self.theta))
        })
    }
}

/// Repeatedly takes the candidate box covering the most uncovered nodes.
///
/// Each uncovered node seeds a candidate that absorbs uncovered nodes in
/// order of hop distance from the seed (ties follow a seeded shuffle) while
/// the box constraint holds. The largest candidate wins; among equal sizes,
/// the one whose smallest member id is lowest.
///
/// A cover valid at `theta - 1` is also valid at `theta`, so the result is the
/// smaller of the fresh cover and the one for `theta - 1`; counts are
/// therefore non-increasing in `theta`.
pub fn greedy_box_cover(g: &SimpleGraph, theta: usize, seed: u64) -> BoxCover {
    let dist = bfs_all_pairs(g);
    monotone(theta, |t| greedy_with(&dist, t, seed))
}

fn monotone(theta: usize, mut cover: impl FnMut(usize) -> BoxCover) -> BoxCover {
    let mut best = cover(0);
    for t in 1..=theta {
        let fresh = cover(t);
        if fresh.count <= best.count {
            best = fresh;
        }
    }
    best.theta = theta;
    best
}

fn greedy_with(dist: &[Vec<usize>], theta: usize, seed: u64) -> BoxCover {
    let n = dist.len();
    let mut rng = stream(seed, Stream::BoxCover);
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let mut rank = vec![0; n];
    for (r, &v) in shuffled.iter().enumerate() {
        rank[v] = r;
    }

    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut boxes = Vec::new();
    while remaining > 0 {
        let mut best: Option<Vec<usize>> = None;
        for &s in shuffled.iter().filter(|&&v| !covered[v]) {
            let mut order: Vec<usize> = (0..n).filter(|&u| !covered[u] && u != s && dist[s][u] <= theta).collect();
            order.sort_by_key(|&u| (dist[s][u], rank[u]));
            let mut members = vec![s];
            for u in order {
                if members.iter().all(|&m| dist[m][u] <= theta) {
                    members.push(u);
                }
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    members.len() > b.len() || (members.len() == b.len() && members.iter().min() < b.iter().min())
                }
            };
            if better {
                best = Some(members);
            }
        }
        let chosen = best.expect("an uncovered node always seeds a candidate");
        for &v in &chosen {
            covered[v] = true;
        }
        remaining -= chosen.len();
        boxes.push(chosen);
    }
    BoxCover::from_boxes(n, theta, &boxes)
}

/// Compact box burning: grow each box from random uncovered nodes, pruning
/// candidates farther than `theta` from every node added. Always satisfies
/// the box constraint. Made monotone in `theta` the same way as
/// [`greedy_box_cover`].
pub fn burning_box_cover(g: &SimpleGraph, theta: usize, seed: u64) -> BoxCover {
    let dist = bfs_all_pairs(g);
    monotone(theta, |t| burning_with(&dist, t, seed))
}

fn burning_with(dist: &[Vec<usize>], theta: usize, seed: u64) -> BoxCover {
    let n = dist.len();
    let mut rng = stream(seed, Stream::BoxCover);
    let mut covered = vec![false; n];
    let mut boxes = Vec::new();
    loop {
        let mut candidates: Vec<usize> = (0..n).filter(|&v| !covered[v]).collect();
        if candidates.is_empty() {
            break;
        }
        let mut members = Vec::new();
        while !candidates.is_empty() {
            let p = candidates.swap_remove(rng.random_range(0..candidates.len()));
            members.push(p);
            candidates.retain(|&u| dist[p][u] <= theta);
        }
        for &v in &members {
            covered[v] = true;
        }
        boxes.push(members);
    }
    BoxCover::from_boxes(n, theta, &boxes)
}

/// Radius burning: each box is every uncovered node within `theta - 1` hops
/// of a random uncovered seed. For `theta >= 3` such boxes can have diameter
/// above `theta`, so the result is not guaranteed to satisfy
/// [`BoxCover::is_valid`]; it is reported alongside the other covers.
pub fn radius_burning_cover(g: &SimpleGraph, theta: usize, seed: u64) -> BoxCover {
    let dist = bfs_all_pairs(g);
    let n = g.n;
    let radius = theta.saturating_sub(1);
    let mut rng = stream(seed, Stream::BoxCover);
    let mut covered = vec![false; n];
    let mut boxes = Vec::new();
    loop {
        let open: Vec<usize> = (0..n).filter(|&v| !covered[v]).collect();
        if open.is_empty() {
            break;
        }
        let s = open[rng.random_range(0..open.len())];
        let members: Vec<usize> = open.into_iter().filter(|&u| dist[s][u] <= radius).collect();
        for &v in &members {
            covered[v] = true;
        }
        boxes.push(members);
    }
    BoxCover::from_boxes(n, theta, &boxes)
}

/// Minimum number of boxes, by dynamic programming over node subsets.
pub fn exact_min_cover(g: &SimpleGraph, theta: usize) -> Result<usize> {
    let n = g.n;
    if n > EXACT_MAX_NODES {
        return Err(Error::invalid(format!("exact cover limited to {EXACT_MAX_NODES} nodes, got {n}")));
    }
    if n == 0 {
        return Ok(0);
    }
    let dist = bfs_all_pairs(g);
    let compat: Vec<u32> =
        (0..n).map(|i| (0..n).filter(|&j| dist[i][j] <= theta).fold(0u32, |m, j| m | (1 << j))).collect();
    let full = (1u32 << n) - 1;
    // a set is a valid box iff every member is compatible with all others
    let valid: Vec<bool> =
        (0..=full).map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).all(|i| mask & !compat[i] == 0)).collect();
    let mut best = vec![usize::MAX; (full + 1) as usize];
    best[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask & !low;
        // every box containing the lowest node: low | sub for sub in subsets(rest)
        let mut sub = rest;
        loop {
            let b = low | sub;
            if valid[b as usize] {
                let prev = best[(mask & !b) as usize];
                if prev != usize::MAX {
                    best[mask as usize] = best[mask as usize].min(prev + 1);
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full as usize])
}

/// `d_B` from classical counts: negated OLS slope of `ln N` on `ln(1 + theta)`.
pub fn db_from_counts(thetas: &[f64], counts: &[f64]) -> Result<DimFit> {
    power_law_dim(thetas, counts)
}
