//! Per-layer exemplar clustering.
//!
//! Each layer is partitioned by greedy facility location: exemplars are
//! chosen one at a time to maximize the summed best-similarity of the
//! layer's segments, using dense within-layer Gaussian similarities built
//! from the graph's local scales (self-similarity is 1). Every segment
//! then joins its most similar exemplar. The lazy-queue trick applies
//! unchanged because facility location is submodular: a stale gain is
//! always an upper bound, so only queue tops need re-evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lazyq::Entry;
use crate::pool::SegmentPool;
use crate::simgraph::{dist2, SimilarityGraph};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("explicit cluster counts list {got} layers, pool has {want}")]
    PerLayerLengthMismatch { got: usize, want: usize },
    #[error("layer {layer}: cluster count {t} must be in 1..={size}")]
    BadClusterCount { layer: u32, t: usize, size: usize },
    #[error("graph was built for {graph} segments, pool has {pool}")]
    GraphPoolMismatch { graph: usize, pool: usize },
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed cluster file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cluster file names unknown segment id {id}")]
    UnknownId { id: u64 },
    #[error("cluster file is missing segment id {id}")]
    MissingId { id: u64 },
    #[error("cluster file puts segment {id} in layer {got}, pool says {want}")]
    LayerMismatch { id: u64, got: u32, want: u32 },
}

/// How many clusters each layer gets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Layers with at most this many segments keep every segment as its
    /// own cluster; larger layers get ceil(sqrt(size)) clusters.
    pub coarse_threshold: usize,
    /// Explicit per-layer cluster counts, overriding the rule above.
    pub per_layer: Option<Vec<usize>>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            coarse_threshold: 8,
            per_layer: None,
        }
    }
}

impl ClusterParams {
    /// Cluster count for a layer of `size` segments.
    pub fn count_for(&self, layer: u32, size: usize) -> Result<usize, ClusterError> {
        let t = match &self.per_layer {
            Some(list) => list[layer as usize],
            None if size <= self.coarse_threshold => size,
            None => (size as f64).sqrt().ceil() as usize,
        };
        if t == 0 || t > size {
            return Err(ClusterError::BadClusterCount { layer, t, size });
        }
        Ok(t)
    }
}

/// A partition of every layer into exemplar-led clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    // Per vertex: (layer, cluster index within that layer).
    cluster_of: Vec<(u32, u32)>,
    clusters_per_layer: Vec<u32>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn num_layers(&self) -> u32 {
        self.clusters_per_layer.len() as u32
    }

    /// `(layer, cluster)` of the vertex at pool index `i`.
    pub fn of(&self, i: usize) -> (u32, u32) {
        self.cluster_of[i]
    }

    pub fn clusters_in_layer(&self, layer: u32) -> u32 {
        self.clusters_per_layer[layer as usize]
    }

    pub fn to_json(&self, pool: &SegmentPool) -> String {
        let file = ClusterFile {
            assignments: pool
                .segments()
                .iter()
                .enumerate()
                .map(|(i, s)| (s.id.to_string(), self.cluster_of[i]))
                .collect(),
        };
        let mut out =
            serde_json::to_string_pretty(&file).expect("cluster serialization cannot fail");
        out.push('\n');
        out
    }

    /// Parses and validates an assignment against `pool`: every segment
    /// must appear exactly once, in its own layer.
    pub fn from_json(bytes: &[u8], pool: &SegmentPool) -> Result<Self, ClusterError> {
        let file: ClusterFile = serde_json::from_slice(bytes)?;
        let mut by_id: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
        for (key, value) in file.assignments {
            let id: u64 = key.parse().map_err(|_| {
                ClusterError::Json(<serde_json::Error as serde::de::Error>::custom(format!(
                    "segment id {key:?} is not an integer"
                )))
            })?;
            if pool.index_of(id).is_none() {
                return Err(ClusterError::UnknownId { id });
            }
            by_id.insert(id, value);
        }
        let mut cluster_of = vec![(0u32, 0u32); pool.len()];
        let mut clusters_per_layer = vec![0u32; pool.num_layers() as usize];
        for (i, seg) in pool.segments().iter().enumerate() {
            let &(layer, cluster) = by_id
                .get(&seg.id)
                .ok_or(ClusterError::MissingId { id: seg.id })?;
            if layer != seg.layer {
                return Err(ClusterError::LayerMismatch {
                    id: seg.id,
                    got: layer,
                    want: seg.layer,
                });
            }
            cluster_of[i] = (layer, cluster);
            let slot = &mut clusters_per_layer[layer as usize];
            *slot = (*slot).max(cluster + 1);
        }
        Ok(Self {
            cluster_of,
            clusters_per_layer,
        })
    }
}

pub fn save_clusters(
    assignment: &ClusterAssignment,
    pool: &SegmentPool,
    path: &Path,
) -> Result<(), ClusterError> {
    fs::write(path, assignment.to_json(pool)).map_err(|source| ClusterError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_clusters(path: &Path, pool: &SegmentPool) -> Result<ClusterAssignment, ClusterError> {
    let bytes = fs::read(path).map_err(|source| ClusterError::Read {
        path: path.display().to_string(),
        source,
    })?;
    ClusterAssignment::from_json(&bytes, pool)
}

#[derive(Serialize, Deserialize)]
struct ClusterFile {
    assignments: BTreeMap<String, (u32, u32)>,
}

/// Result of clustering one layer: exemplars in selection order (pool
/// indices) and, for each layer member in `pool.layer_members(layer)`
/// order, the cluster it joined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerClustering {
    pub exemplars: Vec<usize>,
    pub member_cluster: Vec<u32>,
}

/// Clusters one layer around `t` exemplars.
pub fn cluster_layer(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    layer: u32,
    t: usize,
) -> Result<LayerClustering, ClusterError> {
    if graph.len() != pool.len() {
        return Err(ClusterError::GraphPoolMismatch {
            graph: graph.len(),
            pool: pool.len(),
        });
    }
    let members = pool.layer_members(layer);
    let n = members.len();
    if t == 0 || t > n {
        return Err(ClusterError::BadClusterCount { layer, t, size: n });
    }
    let dim = pool.feature_dim();
    let mut feats = Vec::with_capacity(n * dim);
    let mut scales = Vec::with_capacity(n);
    for &v in members {
        feats.extend_from_slice(&pool.segment(v).feature);
        scales.push(graph.local_scale(v));
    }

    let sim = |a: usize, b: usize| -> f64 {
        if a == b {
            1.0
        } else {
            (-dist2(&feats[a * dim..(a + 1) * dim], &feats[b * dim..(b + 1) * dim])
                / (scales[a] * scales[b]))
                .exp()
        }
    };
    let fill_row = |e: usize, row: &mut Vec<f64>| {
        row.clear();
        row.extend((0..n).map(|i| sim(e, i)));
    };

    // Lazy greedy over candidate exemplars. Entries order by (gain desc,
    // id asc); a stale gain never underestimates, so the popped top wins
    // outright when its fresh gain still beats the next entry.
    let initial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|e| (0..n).map(|i| sim(e, i)).sum())
        .collect();
    let mut heap: std::collections::BinaryHeap<Entry> = initial
        .into_iter()
        .enumerate()
        .map(|(id, gain)| Entry {
            gain,
            id,
            evaluated_at: 0,
        })
        .collect();

    let mut best = vec![0.0f64; n];
    let mut exemplars = Vec::with_capacity(t);
    let mut row = Vec::with_capacity(n);
    while exemplars.len() < t {
        let top = heap.pop().expect("queue holds every unselected candidate");
        if top.evaluated_at == exemplars.len() {
            fill_row(top.id, &mut row);
            select(&mut best, &row, top.id, &mut exemplars);
            continue;
        }
        fill_row(top.id, &mut row);
        let gain: f64 = row
            .iter()
            .zip(&best)
            .map(|(w, b)| (w - b).max(0.0))
            .sum();
        let fresh = Entry {
            gain,
            id: top.id,
            evaluated_at: exemplars.len(),
        };
        match heap.peek() {
            Some(next) if fresh < *next => heap.push(fresh),
            _ => select(&mut best, &row, top.id, &mut exemplars),
        }
    }

    // Assign each member to its most similar exemplar, scanning exemplars
    // in ascending id order so exact ties go to the lowest id. An exemplar
    // keeps its own cluster even if another exemplar duplicates its
    // features, otherwise forced singleton clusterings could come out
    // non-singleton.
    let mut own_cluster: Vec<Option<u32>> = vec![None; n];
    for (c, &e) in exemplars.iter().enumerate() {
        own_cluster[e] = Some(c as u32);
    }
    let mut exemplar_cluster: Vec<(usize, u32)> = exemplars
        .iter()
        .enumerate()
        .map(|(c, &e)| (e, c as u32))
        .collect();
    exemplar_cluster.sort_unstable();
    let member_cluster: Vec<u32> = (0..n)
        .into_par_iter()
        .map(|i| {
            if let Some(c) = own_cluster[i] {
                return c;
            }
            let mut best_c = 0u32;
            let mut best_w = f64::NEG_INFINITY;
            for &(e, c) in &exemplar_cluster {
                let w = sim(i, e);
                if w > best_w {
                    best_w = w;
                    best_c = c;
                }
            }
            best_c
        })
        .collect();

    Ok(LayerClustering {
        exemplars,
        member_cluster,
    })
}

fn select(best: &mut [f64], row: &[f64], id: usize, exemplars: &mut Vec<usize>) {
    for (b, &w) in best.iter_mut().zip(row) {
        if w > *b {
            *b = w;
        }
    }
    exemplars.push(id);
}

/// Clusters every layer of `pool` with counts from `params`.
pub fn cluster_pool(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    params: &ClusterParams,
) -> Result<ClusterAssignment, ClusterError> {
    if let Some(list) = &params.per_layer {
        if list.len() != pool.num_layers() as usize {
            return Err(ClusterError::PerLayerLengthMismatch {
                got: list.len(),
                want: pool.num_layers() as usize,
            });
        }
    }
    let mut cluster_of = vec![(0u32, 0u32); pool.len()];
    let mut clusters_per_layer = Vec::with_capacity(pool.num_layers() as usize);
    for layer in 0..pool.num_layers() {
        let members = pool.layer_members(layer);
        let t = params.count_for(layer, members.len())?;
        let clustering = cluster_layer(pool, graph, layer, t)?;
        for (k, &v) in members.iter().enumerate() {
            cluster_of[v] = (layer, clustering.member_cluster[k]);
        }
        clusters_per_layer.push(t as u32);
    }
    Ok(ClusterAssignment {
        cluster_of,
        clusters_per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::RegionMask;
    use crate::pool::{RewardTransform, Segment};
    use crate::simgraph::{build_graph, GraphParams};

    fn pool_with_features(features: &[Vec<f64>]) -> SegmentPool {
        let segments = features
            .iter()
            .enumerate()
            .map(|(i, f)| Segment {
                id: i as u64,
                layer: 0,
                feature: f.clone(),
                reward: 0.1,
                mask: RegionMask::new(16, 16, vec![(i as u64, 1)]).unwrap(),
            })
            .collect();
        SegmentPool::new((16, 16), 1, features[0].len(), segments, RewardTransform::None)
            .unwrap()
    }

    fn graph_for(pool: &SegmentPool) -> SimilarityGraph {
        build_graph(
            pool,
            GraphParams {
                scale_neighbors: 1,
                dilation: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn one_cluster_takes_everything() {
        let pool = pool_with_features(&[vec![0.0], vec![1.0], vec![5.0], vec![5.1]]);
        let graph = graph_for(&pool);
        let c = cluster_layer(&pool, &graph, 0, 1).unwrap();
        assert_eq!(c.exemplars.len(), 1);
        assert!(c.member_cluster.iter().all(|&t| t == 0));
    }

    #[test]
    fn full_count_gives_singletons() {
        let pool = pool_with_features(&[vec![0.0], vec![1.0], vec![5.0], vec![5.1]]);
        let graph = graph_for(&pool);
        let c = cluster_layer(&pool, &graph, 0, 4).unwrap();
        let mut seen: Vec<u32> = c.member_cluster.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 4, "every segment sits in its own cluster");
    }

    #[test]
    fn two_tight_groups_separate() {
        let pool = pool_with_features(&[
            vec![0.0, 0.0],
            vec![0.2, 0.0],
            vec![0.1, 0.1],
            vec![9.0, 9.0],
            vec![9.2, 9.0],
            vec![9.1, 9.1],
        ]);
        let graph = graph_for(&pool);
        let c = cluster_layer(&pool, &graph, 0, 2).unwrap();
        assert_eq!(c.member_cluster[0], c.member_cluster[1]);
        assert_eq!(c.member_cluster[1], c.member_cluster[2]);
        assert_eq!(c.member_cluster[3], c.member_cluster[4]);
        assert_eq!(c.member_cluster[4], c.member_cluster[5]);
        assert_ne!(c.member_cluster[0], c.member_cluster[3]);
    }

    #[test]
    fn count_rule_keeps_small_layers_whole_and_roots_large_ones() {
        let params = ClusterParams::default();
        assert_eq!(params.count_for(0, 5).unwrap(), 5);
        assert_eq!(params.count_for(0, 8).unwrap(), 8);
        assert_eq!(params.count_for(0, 9).unwrap(), 3);
        assert_eq!(params.count_for(0, 100).unwrap(), 10);
        assert_eq!(params.count_for(0, 101).unwrap(), 11);
    }

    #[test]
    fn explicit_counts_are_validated() {
        let pool = pool_with_features(&[vec![0.0], vec![1.0], vec![2.0]]);
        let graph = graph_for(&pool);
        let wrong_len = ClusterParams {
            coarse_threshold: 8,
            per_layer: Some(vec![1, 1]),
        };
        assert!(matches!(
            cluster_pool(&pool, &graph, &wrong_len),
            Err(ClusterError::PerLayerLengthMismatch { got: 2, want: 1 })
        ));
        let too_many = ClusterParams {
            coarse_threshold: 8,
            per_layer: Some(vec![4]),
        };
        assert!(matches!(
            cluster_pool(&pool, &graph, &too_many),
            Err(ClusterError::BadClusterCount { layer: 0, t: 4, size: 3 })
        ));
    }

    #[test]
    fn assignment_partitions_the_pool() {
        let pool = pool_with_features(&[
            vec![0.0],
            vec![0.1],
            vec![4.0],
            vec![4.1],
            vec![8.0],
            vec![8.1],
            vec![12.0],
            vec![12.1],
            vec![16.0],
        ]);
        let graph = graph_for(&pool);
        let assignment = cluster_pool(&pool, &graph, &ClusterParams::default()).unwrap();
        assert_eq!(assignment.len(), pool.len());
        assert_eq!(assignment.clusters_in_layer(0), 3);
        for i in 0..pool.len() {
            let (layer, cluster) = assignment.of(i);
            assert_eq!(layer, pool.segment(i).layer);
            assert!(cluster < assignment.clusters_in_layer(layer));
        }
    }

    #[test]
    fn cluster_file_round_trips_and_validates() {
        let pool = pool_with_features(&[vec![0.0], vec![1.0], vec![9.0]]);
        let graph = graph_for(&pool);
        let assignment = cluster_pool(&pool, &graph, &ClusterParams::default()).unwrap();
        let json = assignment.to_json(&pool);
        let back = ClusterAssignment::from_json(json.as_bytes(), &pool).unwrap();
        assert_eq!(back, assignment);

        let missing = r#"{ "assignments": { "0": [0, 0], "1": [0, 1] } }"#;
        assert!(matches!(
            ClusterAssignment::from_json(missing.as_bytes(), &pool),
            Err(ClusterError::MissingId { id: 2 })
        ));
        let unknown = r#"{ "assignments": { "0": [0,0], "1": [0,1], "2": [0,2], "9": [0,0] } }"#;
        assert!(matches!(
            ClusterAssignment::from_json(unknown.as_bytes(), &pool),
            Err(ClusterError::UnknownId { id: 9 })
        ));
        let wrong_layer = r#"{ "assignments": { "0": [1, 0], "1": [0, 1], "2": [0, 2] } }"#;
        assert!(matches!(
            ClusterAssignment::from_json(wrong_layer.as_bytes(), &pool),
            Err(ClusterError::LayerMismatch { id: 0, got: 1, want: 0 })
        ));
    }
}
