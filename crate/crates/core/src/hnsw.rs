//! Hierarchical navigable small-world graph for approximate cosine search.
//!
//! The graph is fully deterministic: node levels derive from a fixed seed and
//! the insertion index alone, and every heap tie breaks on node id. Building
//! twice from the same vector sequence therefore yields the same graph, which
//! is what lets collections rebuild the index on load instead of serializing
//! it.
//!
//! Vectors are unit-normalized on entry; internal distance is `1 - dot`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Graph parameters, recorded in collection manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Max connections per node per layer (layer 0 uses `2 * m`).
    pub m: usize,
    /// Beam width while inserting.
    pub ef_construction: usize,
    /// Beam width while searching.
    pub ef_search: usize,
}

impl Default for HnswParams {
    fn default() -> Self {
        // ef_search is sized for recall@10 >= 0.95 on isotropic 384-dim
        // vectors, where narrow beams lose the true neighbors; see the
        // ann_recall example for the measurement.
        Self { m: 16, ef_construction: 200, ef_search: 768 }
    }
}

impl HnswParams {
    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m * 2
        } else {
            self.m
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    /// neighbors[layer] holds ids, layer 0 ..= node level.
    neighbors: Vec<Vec<u32>>,
}

/// Search candidate ordered by (distance, id). Distances are finite by
/// construction, so the total order is safe.
#[derive(Clone, Copy, PartialEq)]
struct Candidate<S> {
    dist: S,
    id: u32,
}

impl<S: Scalar> Eq for Candidate<S> {}

impl<S: Scalar> Ord for Candidate<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

impl<S: Scalar> PartialOrd for Candidate<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// In-memory HNSW graph over unit-normalized vectors.
pub struct Hnsw<S = f32> {
    params: HnswParams,
    seed: u64,
    /// 1 / ln(m): scale of the exponential level distribution.
    level_scale: f64,
    nodes: Vec<Node>,
    vectors: Vec<Vec<S>>,
    entry: Option<u32>,
    max_level: usize,
}

impl<S: Scalar> Hnsw<S> {
    pub fn new(params: HnswParams, seed: u64) -> Self {
        let level_scale = 1.0 / (params.m.max(2) as f64).ln();
        Self {
            params,
            seed,
            level_scale,
            nodes: Vec::new(),
            vectors: Vec::new(),
            entry: None,
            max_level: 0,
        }
    }

    /// Builds a graph by inserting every vector in order. Node id i maps to
    /// `vectors[i]`.
    pub fn build<'a, I>(vectors: I, params: HnswParams, seed: u64) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: 'a,
    {
        let mut graph = Self::new(params, seed);
        for vector in vectors {
            graph.insert(vector);
        }
        graph
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    fn normalize(vector: &[S]) -> Vec<S> {
        let norm_sq: S = vector.iter().map(|&v| v * v).sum();
        if norm_sq > S::zero() {
            let norm = norm_sq.sqrt();
            vector.iter().map(|&v| v / norm).collect()
        } else {
            vector.to_vec()
        }
    }

    fn distance(&self, a: &[S], id: u32) -> S {
        let b = &self.vectors[id as usize];
        // 8 independent accumulators so the reduction vectorizes
        let mut acc = [S::zero(); 8];
        let whole = a.len() / 8 * 8;
        for (ca, cb) in a[..whole].chunks_exact(8).zip(b[..whole].chunks_exact(8)) {
            for lane in 0..8 {
                acc[lane] += ca[lane] * cb[lane];
            }
        }
        let mut dot = acc.into_iter().fold(S::zero(), |s, v| s + v);
        for (&x, &y) in a[whole..].iter().zip(b[whole..].iter()) {
            dot += x * y;
        }
        S::one() - dot
    }

    /// Level for the node about to take index `id`: a pure function of
    /// (seed, id) so rebuilds reproduce the same layer assignment.
    fn level_for(&self, id: u64) -> usize {
        let bits = splitmix64(self.seed ^ id.wrapping_mul(0xd134_2543_de82_ef95));
        // uniform in (0, 1]; avoids ln(0)
        let unit = ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let level = (-unit.ln() * self.level_scale).floor() as usize;
        level.min(31)
    }

    /// Greedy beam search within one layer, returning up to `ef` candidates
    /// sorted by (distance, id).
    fn search_layer(&self, query: &[S], entries: &[u32], ef: usize, layer: usize) -> Vec<Candidate<S>> {
        let mut visited = vec![false; self.nodes.len()];
        let mut frontier: BinaryHeap<std::cmp::Reverse<Candidate<S>>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate<S>> = BinaryHeap::new();

        for &id in entries {
            if std::mem::replace(&mut visited[id as usize], true) {
                continue;
            }
            let candidate = Candidate { dist: self.distance(query, id), id };
            frontier.push(std::cmp::Reverse(candidate));
            best.push(candidate);
        }
        while best.len() > ef {
            best.pop();
        }

        while let Some(std::cmp::Reverse(current)) = frontier.pop() {
            let worst = best.peek().copied();
            if let Some(worst) = worst {
                if best.len() >= ef && current > worst {
                    break;
                }
            }
            for &neighbor in &self.nodes[current.id as usize].neighbors[layer] {
                if std::mem::replace(&mut visited[neighbor as usize], true) {
                    continue;
                }
                let candidate = Candidate { dist: self.distance(query, neighbor), id: neighbor };
                if best.len() < ef || candidate < *best.peek().unwrap() {
                    frontier.push(std::cmp::Reverse(candidate));
                    best.push(candidate);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Neighbor selection heuristic: keep candidates closer to the query than
    /// to any already-kept neighbor, then backfill with the nearest discards.
    fn select_neighbors(&self, candidates: &[Candidate<S>], m: usize) -> Vec<u32> {
        let mut kept: Vec<Candidate<S>> = Vec::with_capacity(m);
        let mut discarded: Vec<Candidate<S>> = Vec::new();
        for &candidate in candidates {
            if kept.len() >= m {
                break;
            }
            let vector = &self.vectors[candidate.id as usize];
            let diverse = kept
                .iter()
                .all(|kept| self.distance(vector, kept.id) > candidate.dist);
            if diverse {
                kept.push(candidate);
            } else {
                discarded.push(candidate);
            }
        }
        for candidate in discarded {
            if kept.len() >= m {
                break;
            }
            kept.push(candidate);
        }
        kept.into_iter().map(|c| c.id).collect()
    }

    /// Inserts one vector; its id is the current length.
    pub fn insert(&mut self, vector: &[S]) {
        let id = self.nodes.len() as u32;
        let level = self.level_for(u64::from(id));
        self.vectors.push(Self::normalize(vector));
        self.nodes.push(Node { neighbors: vec![Vec::new(); level + 1] });

        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };

        let query = self.vectors[id as usize].clone();
        let mut entries = vec![entry];

        // descend through layers above the new node's level
        let mut layer = self.max_level;
        while layer > level {
            let found = self.search_layer(&query, &entries, 1, layer);
            if let Some(best) = found.first() {
                entries = vec![best.id];
            }
            layer -= 1;
        }

        // connect on each layer from min(level, max_level) down to 0
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&query, &entries, self.params.ef_construction, layer);
            let neighbors = self.select_neighbors(&found, self.params.m);
            self.nodes[id as usize].neighbors[layer] = neighbors.clone();

            for neighbor in neighbors {
                self.nodes[neighbor as usize].neighbors[layer].push(id);
                let max_degree = self.params.max_degree(layer);
                if self.nodes[neighbor as usize].neighbors[layer].len() > max_degree {
                    self.prune(neighbor, layer, max_degree);
                }
            }
            entries = found.into_iter().map(|c| c.id).collect();
        }

        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
    }

    fn prune(&mut self, id: u32, layer: usize, max_degree: usize) {
        let base = self.vectors[id as usize].clone();
        let mut candidates: Vec<Candidate<S>> = self.nodes[id as usize].neighbors[layer]
            .iter()
            .map(|&n| Candidate { dist: self.distance(&base, n), id: n })
            .collect();
        candidates.sort_unstable();
        self.nodes[id as usize].neighbors[layer] = self.select_neighbors(&candidates, max_degree);
    }

    /// Approximate nearest ids for `query`, best first. `ef` is clamped to at
    /// least `k`; the query need not be normalized.
    pub fn search(&self, query: &[S], k: usize, ef: usize) -> Vec<u32> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let query = Self::normalize(query);
        let mut entries = vec![entry];
        for layer in (1..=self.max_level).rev() {
            let found = self.search_layer(&query, &entries, 1, layer);
            if let Some(best) = found.first() {
                entries = vec![best.id];
            }
        }
        let found = self.search_layer(&query, &entries, ef.max(k).max(1), 0);
        found.into_iter().take(k).map(|c| c.id).collect()
    }
}
