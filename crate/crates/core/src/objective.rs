//! Selection objective: weighted coverage plus square-root discounted
//! cluster diversity and layer rewards.
//!
//! For a selected set A the score is
//!
//! ```text
//! F(A) = sum_i max_{j in A} w_ij
//!      + alpha * sum_{clusters (l,t)} sqrt(sum_{j in P_tl ∩ A} q_j)
//!      + beta  * sum_{layers l}       sqrt(sum_{j in V_l ∩ A} r_j)
//! ```
//!
//! with `w_jj = 1` and `q_j = (1 + sum of j's same-layer edge weights) /
//! |V_l|`. All three terms have diminishing returns, so greedy selection
//! carries the usual constant-factor guarantee. [`SelectionState`] keeps
//! per-vertex cover, per-cluster mass, and per-layer reward caches so a
//! gain query costs O(deg) and never mutates; `apply` is the only writer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterAssignment;
use crate::pool::SegmentPool;
use crate::simgraph::SimilarityGraph;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("alpha must be non-negative and finite, got {alpha}")]
    BadAlpha { alpha: f64 },
    #[error("beta must be non-negative and finite, got {beta}")]
    BadBeta { beta: f64 },
    #[error("budget k must be at least 1")]
    ZeroBudget,
    #[error("budget k={k} exceeds pool size {n}")]
    BudgetExceedsPool { k: usize, n: usize },
    #[error("graph was built for {got} segments, pool has {want}")]
    GraphMismatch { got: usize, want: usize },
    #[error("cluster assignment covers {got} segments, pool has {want}")]
    ClusterMismatch { got: usize, want: usize },
    #[error("segment {id} is already selected")]
    AlreadySelected { id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    /// Weight of the cluster-diversity term.
    pub alpha: f64,
    /// Weight of the layer-reward term.
    pub beta: f64,
    /// Selection budget.
    pub k: usize,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            alpha: 3.9,
            beta: 2.0,
            k: 100,
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self, pool_size: usize) -> Result<(), ObjectiveError> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(ObjectiveError::BadAlpha { alpha: self.alpha });
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(ObjectiveError::BadBeta { beta: self.beta });
        }
        if self.k == 0 {
            return Err(ObjectiveError::ZeroBudget);
        }
        if self.k > pool_size {
            return Err(ObjectiveError::BudgetExceedsPool {
                k: self.k,
                n: pool_size,
            });
        }
        Ok(())
    }
}

/// Guards the square roots of running sums against tiny negative dust.
fn mass_sqrt(x: f64) -> f64 {
    debug_assert!(x > -1e-15, "cluster/reward mass went negative: {x}");
    x.max(0.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct SelectionState<'a> {
    pool: &'a SegmentPool,
    graph: &'a SimilarityGraph,
    clusters: &'a ClusterAssignment,
    /// Diversity mass of each vertex: positive even for isolated segments.
    q: Vec<f64>,
    /// Start of each layer's cluster block in `cluster_mass`.
    cluster_offset: Vec<usize>,
    selected: Vec<usize>,
    is_selected: Vec<bool>,
    /// cover[i] = max over selected j of w_ij (1.0 once i itself is in).
    cover: Vec<f64>,
    /// Selected diversity mass per cluster, flat over (layer, cluster).
    cluster_mass: Vec<f64>,
    /// Selected reward per layer.
    layer_reward: Vec<f64>,
}

impl<'a> SelectionState<'a> {
    pub fn new(
        pool: &'a SegmentPool,
        graph: &'a SimilarityGraph,
        clusters: &'a ClusterAssignment,
    ) -> Result<Self, ObjectiveError> {
        let n = pool.len();
        if graph.len() != n {
            return Err(ObjectiveError::GraphMismatch {
                got: graph.len(),
                want: n,
            });
        }
        if clusters.len() != n {
            return Err(ObjectiveError::ClusterMismatch {
                got: clusters.len(),
                want: n,
            });
        }
        let num_layers = pool.num_layers();
        let mut cluster_offset = Vec::with_capacity(num_layers as usize + 1);
        cluster_offset.push(0usize);
        for l in 0..num_layers {
            let last = *cluster_offset.last().unwrap();
            cluster_offset.push(last + clusters.clusters_in_layer(l) as usize);
        }
        let total_clusters = *cluster_offset.last().unwrap();

        let mut q = Vec::with_capacity(n);
        for i in 0..n {
            let seg = pool.segment(i);
            let layer_size = pool.layer_size(seg.layer) as f64;
            let mut mass = 1.0; // own weight
            for &(j, w) in graph.neighbors(i) {
                if pool.segment(j as usize).layer == seg.layer {
                    mass += w;
                }
            }
            q.push(mass / layer_size);
        }

        Ok(Self {
            pool,
            graph,
            clusters,
            q,
            cluster_offset,
            selected: Vec::new(),
            is_selected: vec![false; n],
            cover: vec![0.0; n],
            cluster_mass: vec![0.0; total_clusters],
            layer_reward: vec![0.0; num_layers as usize],
        })
    }

    pub fn pool(&self) -> &SegmentPool {
        self.pool
    }

    /// Selected vertices in selection order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.is_selected[i]
    }

    /// Diversity mass q of vertex `i`; strictly positive.
    pub fn vertex_mass(&self, i: usize) -> f64 {
        self.q[i]
    }

    fn flat_cluster(&self, i: usize) -> usize {
        let (layer, cluster) = self.clusters.of(i);
        self.cluster_offset[layer as usize] + cluster as usize
    }

    fn check_unselected(&self, a: usize) -> Result<(), ObjectiveError> {
        if self.is_selected[a] {
            return Err(ObjectiveError::AlreadySelected {
                id: self.pool.segment(a).id,
            });
        }
        Ok(())
    }

    /// Coverage the pool would newly receive from `a`: its own self-weight
    /// above the current cover plus every neighbor improvement.
    pub fn coverage_gain(&self, a: usize) -> Result<f64, ObjectiveError> {
        self.check_unselected(a)?;
        let mut gain = (1.0 - self.cover[a]).max(0.0);
        for &(j, w) in self.graph.neighbors(a) {
            gain += (w - self.cover[j as usize]).max(0.0);
        }
        Ok(gain)
    }

    pub fn diversity_gain(&self, a: usize) -> Result<f64, ObjectiveError> {
        self.check_unselected(a)?;
        let s = self.cluster_mass[self.flat_cluster(a)];
        Ok(mass_sqrt(s + self.q[a]) - mass_sqrt(s))
    }

    pub fn reward_gain(&self, a: usize) -> Result<f64, ObjectiveError> {
        self.check_unselected(a)?;
        let u = self.layer_reward[self.pool.segment(a).layer as usize];
        Ok(mass_sqrt(u + self.pool.segment(a).reward) - mass_sqrt(u))
    }

    pub fn objective_gain(&self, params: &ObjectiveParams, a: usize) -> Result<f64, ObjectiveError> {
        Ok(self.coverage_gain(a)?
            + params.alpha * self.diversity_gain(a)?
            + params.beta * self.reward_gain(a)?)
    }

    /// Adds `a` to the selection, updating all caches in O(deg(a)).
    pub fn apply(&mut self, a: usize) -> Result<(), ObjectiveError> {
        self.check_unselected(a)?;
        self.cover[a] = self.cover[a].max(1.0);
        for &(j, w) in self.graph.neighbors(a) {
            let c = &mut self.cover[j as usize];
            if w > *c {
                *c = w;
            }
        }
        let slot = self.flat_cluster(a);
        self.cluster_mass[slot] += self.q[a];
        self.layer_reward[self.pool.segment(a).layer as usize] += self.pool.segment(a).reward;
        self.is_selected[a] = true;
        self.selected.push(a);
        Ok(())
    }

    pub fn coverage_value(&self) -> f64 {
        self.cover.iter().sum()
    }

    pub fn diversity_value(&self) -> f64 {
        self.cluster_mass.iter().map(|&s| mass_sqrt(s)).sum()
    }

    pub fn reward_value(&self) -> f64 {
        self.layer_reward.iter().map(|&u| mass_sqrt(u)).sum()
    }

    pub fn objective_value(&self, params: &ObjectiveParams) -> f64 {
        self.coverage_value()
            + params.alpha * self.diversity_value()
            + params.beta * self.reward_value()
    }
}

/// Objective of an explicit vertex set, computed from the definition
/// rather than the incremental caches. Backs the exhaustive search and
/// the cache-consistency checks.
pub fn evaluate_set(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    clusters: &ClusterAssignment,
    params: &ObjectiveParams,
    set: &[usize],
) -> Result<f64, ObjectiveError> {
    use std::collections::BTreeMap;
    let n = pool.len();
    if graph.len() != n {
        return Err(ObjectiveError::GraphMismatch {
            got: graph.len(),
            want: n,
        });
    }
    if clusters.len() != n {
        return Err(ObjectiveError::ClusterMismatch {
            got: clusters.len(),
            want: n,
        });
    }
    let state = SelectionState::new(pool, graph, clusters)?;
    let mut coverage = 0.0;
    for i in 0..n {
        let mut best = 0.0f64;
        for &a in set {
            let w = if a == i {
                1.0
            } else {
                graph.weight(i, a).unwrap_or(0.0)
            };
            best = best.max(w);
        }
        coverage += best;
    }
    // Keyed maps keep the summation order fixed, so repeat evaluations
    // agree bit for bit.
    let mut cluster_mass: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut layer_reward: BTreeMap<u32, f64> = BTreeMap::new();
    for &a in set {
        *cluster_mass.entry(clusters.of(a)).or_insert(0.0) += state.vertex_mass(a);
        *layer_reward.entry(pool.segment(a).layer).or_insert(0.0) += pool.segment(a).reward;
    }
    let diversity: f64 = cluster_mass.values().map(|&s| mass_sqrt(s)).sum();
    let reward: f64 = layer_reward.values().map(|&u| mass_sqrt(u)).sum();
    Ok(coverage + params.alpha * diversity + params.beta * reward)
}
