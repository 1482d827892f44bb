//! Independent oracles and generators shared by the integration tests.
//!
//! Everything here recomputes results from first principles: cell sets
//! instead of run arithmetic, full sorts instead of selection, exhaustive
//! scans instead of incremental caches. The oracles deliberately avoid
//! the library's fast paths so agreement means something.
#![allow(dead_code)] // each test target uses its own subset

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use propsel_core::cluster::{cluster_pool, ClusterAssignment, ClusterParams};
use propsel_core::mask::RegionMask;
use propsel_core::pool::{RewardTransform, Segment, SegmentPool};
use propsel_core::simgraph::{build_graph, GraphParams, SimilarityGraph};
use propsel_core::synth::SynthConfig;

/// Canonical 500-segment pipeline fixture; several pinned regression
/// values depend on it, so its config never changes.
pub fn fixture_config() -> SynthConfig {
    SynthConfig {
        seed: 0,
        grid: (96, 96),
        num_objects: 6,
        num_layers: 4,
        parts_per_object: 5,
        background_tiles: 466,
        reward_noise_std: 0.05,
        feature_noise_std: 0.05,
    }
}

pub fn mask_cells(mask: &RegionMask) -> BTreeSet<u64> {
    mask.cells().collect()
}

/// Random pool with freely overlapping rectangle masks, the general
/// shape the library must handle (synth pools are partitions, these
/// are not).
pub fn random_pool(rng: &mut ChaCha8Rng, n: usize, layers: u32) -> SegmentPool {
    let grid = (24u32, 24u32);
    let dim = 4usize;
    let segments = (0..n)
        .map(|i| {
            // First `layers` segments pin one per layer so none is empty.
            let layer = if i < layers as usize {
                i as u32
            } else {
                rng.random_range(0..layers)
            };
            let w = rng.random_range(1..=6u32);
            let h = rng.random_range(1..=6u32);
            let x0 = rng.random_range(0..=grid.0 - w);
            let y0 = rng.random_range(0..=grid.1 - h);
            Segment {
                id: i as u64,
                layer,
                feature: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                reward: rng.random_range(0.0..1.0),
                mask: RegionMask::rect(grid.0, grid.1, x0, y0, w, h).unwrap(),
            }
        })
        .collect();
    SegmentPool::new(grid, layers, dim, segments, RewardTransform::None).unwrap()
}

/// Graph and default clustering for a pool, the standard test harness.
pub fn build_instance(pool: &SegmentPool) -> (SimilarityGraph, ClusterAssignment) {
    let params = GraphParams {
        scale_neighbors: 7.min(pool.len() - 1).max(1),
        dilation: 1,
    };
    let graph = build_graph(pool, params).unwrap();
    let clusters = cluster_pool(pool, &graph, &ClusterParams::default()).unwrap();
    (graph, clusters)
}

fn manhattan(a: u64, b: u64, width: u64) -> u64 {
    let (ax, ay) = (a % width, a / width);
    let (bx, by) = (b % width, b / width);
    ax.abs_diff(bx) + ay.abs_diff(by)
}

/// Pairwise edge check straight from the adjacency definition: masks of
/// the same layer relate when some cell pair sits within Manhattan
/// distance 2*dilation, masks of different layers when they share a cell.
pub fn edge_oracle(pool: &SegmentPool, dilation: u32) -> BTreeSet<(u32, u32)> {
    let width = pool.grid().0 as u64;
    let cells: Vec<BTreeSet<u64>> = pool
        .segments()
        .iter()
        .map(|s| mask_cells(&s.mask))
        .collect();
    let mut edges = BTreeSet::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            let related = if pool.segment(i).layer == pool.segment(j).layer {
                let reach = 2 * dilation as u64;
                cells[i]
                    .iter()
                    .any(|&a| cells[j].iter().any(|&b| manhattan(a, b, width) <= reach))
            } else {
                cells[i].intersection(&cells[j]).next().is_some()
            };
            if related {
                edges.insert((i as u32, j as u32));
            }
        }
    }
    edges
}

/// Local scales by sorting all pairwise distances per segment.
pub fn scale_oracle(pool: &SegmentPool, m: usize) -> Vec<f64> {
    (0..pool.len())
        .map(|i| {
            let mut dists: Vec<f64> = (0..pool.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let fi = &pool.segment(i).feature;
                    let fj = &pool.segment(j).feature;
                    fi.iter()
                        .zip(fj)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            dists.sort_by(f64::total_cmp);
            dists[m - 1].max(1e-9)
        })
        .collect()
}

/// Objective terms recomputed from their definitions on every call.
pub struct DefOracle<'a> {
    pool: &'a SegmentPool,
    graph: &'a SimilarityGraph,
    clusters: &'a ClusterAssignment,
    q: Vec<f64>,
}

impl<'a> DefOracle<'a> {
    pub fn new(
        pool: &'a SegmentPool,
        graph: &'a SimilarityGraph,
        clusters: &'a ClusterAssignment,
    ) -> Self {
        let q = (0..pool.len())
            .map(|j| {
                let layer = pool.segment(j).layer;
                let same_layer: f64 = graph
                    .neighbors(j)
                    .iter()
                    .filter(|&&(i, _)| pool.segment(i as usize).layer == layer)
                    .map(|&(_, w)| w)
                    .sum();
                (1.0 + same_layer) / pool.layer_size(layer) as f64
            })
            .collect();
        DefOracle {
            pool,
            graph,
            clusters,
            q,
        }
    }

    pub fn coverage(&self, set: &[usize]) -> f64 {
        (0..self.pool.len())
            .map(|i| {
                set.iter()
                    .map(|&a| {
                        if a == i {
                            1.0
                        } else {
                            self.graph.weight(i, a).unwrap_or(0.0)
                        }
                    })
                    .fold(0.0f64, f64::max)
            })
            .sum()
    }

    pub fn diversity(&self, set: &[usize]) -> f64 {
        let mut masses: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
        for &a in set {
            *masses.entry(self.clusters.of(a)).or_insert(0.0) += self.q[a];
        }
        masses.values().map(|&m| m.sqrt()).sum()
    }

    pub fn reward(&self, set: &[usize]) -> f64 {
        let mut masses: std::collections::BTreeMap<u32, f64> = Default::default();
        for &a in set {
            *masses.entry(self.pool.segment(a).layer).or_insert(0.0) +=
                self.pool.segment(a).reward;
        }
        masses.values().map(|&m| m.sqrt()).sum()
    }

    pub fn objective(&self, set: &[usize], alpha: f64, beta: f64) -> f64 {
        self.coverage(set) + alpha * self.diversity(set) + beta * self.reward(set)
    }
}

/// Draws A subset of B plus an outside element, the raw material of a
/// diminishing-returns check. None when the pool is too small to split.
pub fn submodular_triple(
    rng: &mut ChaCha8Rng,
    n: usize,
) -> Option<(Vec<usize>, Vec<usize>, usize)> {
    if n < 2 {
        return None;
    }
    let mut indices: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let b_len = rng.random_range(1..=(n - 1).min(10));
    let b: Vec<usize> = {
        let mut b = indices[..b_len].to_vec();
        b.sort_unstable();
        b
    };
    let a: Vec<usize> = b.iter().copied().filter(|_| rng.random::<bool>()).collect();
    let outside = indices[b_len];
    Some((a, b, outside))
}

/// Ground-truth scoring over raw cell sets.
pub struct CellOracle {
    objects: Vec<(u64, String, BTreeSet<u64>)>,
}

impl CellOracle {
    pub fn new(gt: &propsel_core::pool::GroundTruth) -> Self {
        CellOracle {
            objects: gt
                .objects()
                .iter()
                .map(|o| (o.instance, o.class.clone(), mask_cells(&o.mask)))
                .collect(),
        }
    }

    pub fn jaccard(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
        let inter = a.intersection(b).count() as f64;
        let union = a.union(b).count() as f64;
        inter / union
    }

    /// (per-object BSS, J_instance, recall@0.5) for a selection prefix.
    pub fn score(&self, pool: &SegmentPool, order: &[u64], k: usize) -> (Vec<f64>, f64, f64) {
        let chosen: Vec<BTreeSet<u64>> = order[..k]
            .iter()
            .map(|&id| mask_cells(&pool.segment(pool.index_of(id).unwrap()).mask))
            .collect();
        let bss: Vec<f64> = self
            .objects
            .iter()
            .map(|(_, _, cells)| {
                chosen
                    .iter()
                    .map(|c| Self::jaccard(c, cells))
                    .fold(0.0, f64::max)
            })
            .collect();
        let j_instance = bss.iter().sum::<f64>() / bss.len() as f64;
        let recall = bss.iter().filter(|&&b| b >= 0.5).count() as f64 / bss.len() as f64;
        (bss, j_instance, recall)
    }
}
