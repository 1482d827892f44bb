//! Sparse similarity graph over a segment pool.
//!
//! Two segments are connected when they are spatially related: segments on
//! different layers must overlap, segments on the same layer must overlap
//! after dilating both masks by `dilation` cells in 4-connectivity. Edge
//! weights are Gaussian similarities with self-tuning local scales:
//! `w_ij = exp(-d^2(x_i, x_j) / (sigma_i * sigma_j))`, where `sigma_i` is
//! the Euclidean feature distance from segment `i` to its M'th closest
//! other segment in the whole pool.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::content_hash;
use crate::mask::{self, RowSpan};
use crate::pool::SegmentPool;

/// Scale floor used when a segment has duplicate features and its M'th
/// neighbor distance is exactly zero.
pub const SCALE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("scale_neighbors {m} must be smaller than the pool size {n}; lower it")]
    ScaleNeighborsTooLarge { m: usize, n: usize },
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
    #[error("malformed graph cache: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphParams {
    /// M: the neighbor rank that sets each segment's local scale.
    pub scale_neighbors: usize,
    /// Same-layer masks are dilated by this many cells before the
    /// intersection test; cross-layer edges always require overlap.
    pub dilation: u32,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            scale_neighbors: 7,
            dilation: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    local_scales: Vec<f64>,
    // Per vertex, sorted by neighbor index; stores both directions.
    adjacency: Vec<Vec<(u32, f64)>>,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn local_scale(&self, i: usize) -> f64 {
        self.local_scales[i]
    }

    pub fn local_scales(&self) -> &[f64] {
        &self.local_scales
    }

    /// Neighbors of `i` with weights, ascending by neighbor index.
    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = &self.adjacency[i];
        row.binary_search_by_key(&(j as u32), |&(v, _)| v)
            .ok()
            .map(|pos| row[pos].1)
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edge list with weights, `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, w) in row {
                if (i as u32) < j {
                    out.push((i as u32, j, w));
                }
            }
        }
        out
    }
}

/// Squared Euclidean distance between feature vectors.
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Local scale of every segment: Euclidean distance to the M'th closest
/// other segment in feature space, floored at [`SCALE_FLOOR`].
pub fn local_scales(pool: &SegmentPool, m: usize) -> Result<Vec<f64>, GraphError> {
    let n = pool.len();
    if m == 0 || m >= n {
        return Err(GraphError::ScaleNeighborsTooLarge { m, n });
    }
    let scales = (0..n)
        .into_par_iter()
        .map(|i| {
            let fi = &pool.segment(i).feature;
            let mut d2: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| dist2(fi, &pool.segment(j).feature))
                .collect();
            // M'th closest = index m-1 after ordering ascending.
            let (_, kth, _) = d2.select_nth_unstable_by(m - 1, |a, b| a.total_cmp(b));
            let sigma = kth.sqrt();
            if sigma > 0.0 {
                sigma
            } else {
                SCALE_FLOOR
            }
        })
        .collect();
    Ok(scales)
}

/// All spatially related pairs `(i, j)` with `i < j`, sorted.
///
/// Candidates are pruned with row buckets over mask bounding boxes before
/// the exact run-list tests, so sparse pools stay far below the quadratic
/// worst case.
pub fn build_edges(pool: &SegmentPool, dilation: u32) -> Vec<(u32, u32)> {
    let n = pool.len();
    let (_, height) = pool.grid();
    let same_layer_dist = 2 * dilation as u64;

    let boxes: Vec<(u32, u32, u32, u32)> = (0..n)
        .map(|i| pool.segment(i).mask.bounding_box().expect("masks are non-empty"))
        .collect();
    let spans: Vec<Vec<RowSpan>> = (0..n).map(|i| pool.segment(i).mask.row_spans()).collect();

    // Row buckets: segment i appears in every row its bounding box covers.
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); height as usize];
    for (i, b) in boxes.iter().enumerate() {
        for y in b.1..=b.3 {
            buckets[y as usize].push(i as u32);
        }
    }

    let mut edges = Vec::new();
    let mut last_seen = vec![u32::MAX; n];
    for i in 0..n {
        let si = pool.segment(i);
        let bi = boxes[i];
        let y_lo = (bi.1 as u64).saturating_sub(same_layer_dist) as u32;
        let y_hi = ((bi.3 as u64 + same_layer_dist).min(height as u64 - 1)) as u32;
        for y in y_lo..=y_hi {
            for &j in &buckets[y as usize] {
                let j = j as usize;
                if j <= i || last_seen[j] == i as u32 {
                    continue;
                }
                last_seen[j] = i as u32;
                let sj = pool.segment(j);
                let related = if si.layer == sj.layer {
                    mask::box_l1_gap(bi, boxes[j]) <= same_layer_dist
                        && mask::spans_within_l1(&spans[i], &spans[j], same_layer_dist)
                } else {
                    mask::box_l1_gap(bi, boxes[j]) == 0
                        && mask::runs_intersect(si.mask.runs(), sj.mask.runs())
                };
                if related {
                    edges.push((i as u32, j as u32));
                }
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Builds the weighted similarity graph for `pool`.
///
/// Edges whose Gaussian weight underflows to exactly zero are dropped;
/// they are numerically indistinguishable from absent edges.
pub fn build_graph(pool: &SegmentPool, params: GraphParams) -> Result<SimilarityGraph, GraphError> {
    let n = pool.len();
    let scales = local_scales(pool, params.scale_neighbors)?;
    let edges = build_edges(pool, params.dilation);
    let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (i, j) in edges {
        let (i, j) = (i as usize, j as usize);
        let d2 = dist2(&pool.segment(i).feature, &pool.segment(j).feature);
        let w = (-d2 / (scales[i] * scales[j])).exp();
        if w > 0.0 {
            adjacency[i].push((j as u32, w));
            adjacency[j].push((i as u32, w));
        }
    }
    for row in &mut adjacency {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    Ok(SimilarityGraph {
        n,
        local_scales: scales,
        adjacency,
    })
}

/// Cache key binding a graph file to the exact pool bytes and parameters
/// it was built from.
pub fn cache_key(pool_hash: &str, params: GraphParams) -> String {
    content_hash(
        format!(
            "graph|pool={}|scale_neighbors={}|dilation={}",
            pool_hash, params.scale_neighbors, params.dilation
        )
        .as_bytes(),
    )
}

#[derive(Serialize, Deserialize)]
struct GraphCacheFile {
    key: String,
    n: usize,
    local_scales: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
}

/// Reads a cached graph, returning `None` when the file is absent or was
/// built from different inputs (the caller should rebuild and rewrite).
pub fn read_cache(path: &Path, key: &str) -> Result<Option<SimilarityGraph>, GraphError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => {
            return Err(GraphError::Read {
                path: path.display().to_string(),
                source,
            })
        }
    };
    let file: GraphCacheFile = serde_json::from_slice(&bytes)?;
    if file.key != key {
        return Ok(None);
    }
    let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); file.n];
    for (i, j, w) in file.edges {
        adjacency[i as usize].push((j, w));
        adjacency[j as usize].push((i, w));
    }
    for row in &mut adjacency {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    Ok(Some(SimilarityGraph {
        n: file.n,
        local_scales: file.local_scales,
        adjacency,
    }))
}

pub fn write_cache(path: &Path, key: &str, graph: &SimilarityGraph) -> Result<(), GraphError> {
    let file = GraphCacheFile {
        key: key.to_string(),
        n: graph.n,
        local_scales: graph.local_scales.clone(),
        edges: graph.edges(),
    };
    let mut out = serde_json::to_string(&file)?;
    out.push('\n');
    fs::write(path, out).map_err(|source| GraphError::Write {
        path: path.display().to_string(),
        source,
    })
}
