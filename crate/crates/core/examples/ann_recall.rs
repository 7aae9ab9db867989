//! Recall benchmark: HNSW vs exact search on random unit vectors.
//!
//! Usage: `cargo run --release -p scene-rag --example ann_recall -- [n] [dim] [queries] [ef]`

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_rag::embed::cosine;
use scene_rag::hnsw::{Hnsw, HnswParams};

fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let mut values = Vec::with_capacity(dim);
    while values.len() < dim {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        values.push((radius * angle.cos()) as f32);
        if values.len() < dim {
            values.push((radius * angle.sin()) as f32);
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
    values.iter().map(|v| v / norm).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let dim: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(384);
    let queries: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let ef: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let k = 10;

    let mut rng = ChaCha8Rng::seed_from_u64(0xBE7C);
    let vectors: Vec<Vec<f32>> = (0..n).map(|_| random_unit_vector(&mut rng, dim)).collect();

    let params = HnswParams { ef_search: ef, ..HnswParams::default() };
    let started = Instant::now();
    let index = Hnsw::build(vectors.iter().map(Vec::as_slice), params, 0x5343);
    println!("built {n} x {dim} in {:?} (m={}, ef_construction={})", started.elapsed(), params.m, params.ef_construction);

    let mut total_recall = 0.0;
    let mut search_time = std::time::Duration::ZERO;
    for _ in 0..queries {
        let query = random_unit_vector(&mut rng, dim);

        let mut scored: Vec<(usize, f32)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, cosine(&query, v)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let truth: HashSet<u32> = scored.iter().take(k).map(|&(i, _)| i as u32).collect();

        let t = Instant::now();
        let found = index.search(&query, k, ef);
        search_time += t.elapsed();
        total_recall += found.iter().filter(|id| truth.contains(id)).count() as f64 / k as f64;
    }
    println!(
        "recall@{k} = {:.4}, mean query {:?} (ef={ef})",
        total_recall / queries as f64,
        search_time / queries as u32
    );
}
