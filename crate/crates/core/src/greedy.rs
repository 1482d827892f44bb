//! Budgeted selection: naive greedy, lazy greedy, and an exhaustive
//! oracle for small instances.
//!
//! Both greedy variants produce the same order. The lazy variant keeps a
//! max-queue of possibly stale gains and re-evaluates only the popped
//! top; because every term of the objective has diminishing returns, a
//! stale gain never underestimates the current one, so the top can be
//! selected as soon as its fresh gain still beats the next queue entry.
//! Selection ties break toward the lowest segment id in both variants.

use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterAssignment;
use crate::lazyq::Entry;
use crate::objective::{evaluate_set, ObjectiveError, ObjectiveParams, SelectionState};
use crate::pool::SegmentPool;
use crate::simgraph::SimilarityGraph;

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("exhaustive search over C({n}, {k}) subsets exceeds the {limit} guard")]
    SearchSpaceTooLarge { n: usize, k: usize, limit: u128 },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Naive,
    Lazy,
    Oracle,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Naive => write!(f, "naive"),
            Algorithm::Lazy => write!(f, "lazy"),
            Algorithm::Oracle => write!(f, "oracle"),
        }
    }
}

/// Outcome of a selection run. `order` holds segment ids; `trace[k]` is
/// the objective after `k + 1` selections, so adjacent differences equal
/// `gains`. `evaluations` counts gain queries (set evaluations for the
/// oracle), the cost driver worth comparing across algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub algorithm: Algorithm,
    pub order: Vec<u64>,
    pub gains: Vec<f64>,
    pub trace: Vec<f64>,
    pub evaluations: u64,
    pub params: ObjectiveParams,
}

impl SelectionResult {
    pub fn to_json(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("selection serialization cannot fail");
        out.push('\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

pub fn save_selection(result: &SelectionResult, path: &Path) -> Result<(), GreedyError> {
    fs::write(path, result.to_json()).map_err(|source| GreedyError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Plain greedy: every step scans all remaining candidates.
pub fn greedy_naive(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    clusters: &ClusterAssignment,
    params: &ObjectiveParams,
) -> Result<SelectionResult, GreedyError> {
    params.validate(pool.len())?;
    let n = pool.len();
    let mut state = SelectionState::new(pool, graph, clusters)?;
    let mut evaluations = 0u64;
    let mut order = Vec::with_capacity(params.k);
    let mut gains = Vec::with_capacity(params.k);
    let mut trace = Vec::with_capacity(params.k);
    for _ in 0..params.k {
        let mut best: Option<(f64, usize)> = None;
        for a in 0..n {
            if state.is_selected(a) {
                continue;
            }
            let gain = state.objective_gain(params, a)?;
            evaluations += 1;
            // Strict comparison keeps the lowest id on exact ties.
            if best.map_or(true, |(g, _)| gain > g) {
                best = Some((gain, a));
            }
        }
        let (gain, a) = best.expect("k is validated against the pool size");
        state.apply(a)?;
        order.push(pool.segment(a).id);
        gains.push(gain);
        trace.push(state.objective_value(params));
    }
    Ok(SelectionResult {
        algorithm: Algorithm::Naive,
        order,
        gains,
        trace,
        evaluations,
        params: *params,
    })
}

/// Lazy greedy: identical order to [`greedy_naive`], usually far fewer
/// gain evaluations.
pub fn greedy_lazy(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    clusters: &ClusterAssignment,
    params: &ObjectiveParams,
) -> Result<SelectionResult, GreedyError> {
    params.validate(pool.len())?;
    let n = pool.len();
    let mut state = SelectionState::new(pool, graph, clusters)?;
    let mut evaluations = 0u64;
    let mut heap = BinaryHeap::with_capacity(n);
    for a in 0..n {
        let gain = state.objective_gain(params, a)?;
        evaluations += 1;
        heap.push(Entry {
            gain,
            id: a,
            evaluated_at: 0,
        });
    }
    let mut order = Vec::with_capacity(params.k);
    let mut gains = Vec::with_capacity(params.k);
    let mut trace = Vec::with_capacity(params.k);
    for step in 0..params.k {
        let picked = loop {
            let top = heap.pop().expect("queue holds every unselected candidate");
            if top.evaluated_at == step {
                break top;
            }
            let gain = state.objective_gain(params, top.id)?;
            evaluations += 1;
            let fresh = Entry {
                gain,
                id: top.id,
                evaluated_at: step,
            };
            match heap.peek() {
                // A sub-tolerance winner would still be pushed back here;
                // the fresh stamp makes the very next pop settle it, so
                // exactness over the queue order costs at most one spin.
                Some(next) if fresh < *next => heap.push(fresh),
                _ => break fresh,
            }
        };
        state.apply(picked.id)?;
        order.push(pool.segment(picked.id).id);
        gains.push(picked.gain);
        trace.push(state.objective_value(params));
    }
    Ok(SelectionResult {
        algorithm: Algorithm::Lazy,
        order,
        gains,
        trace,
        evaluations,
        params: *params,
    })
}

const ORACLE_SUBSET_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Advances `combo` to the next lexicographic k-combination of `0..n`;
/// false once the last combination has been visited.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] != i + n - k {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive oracle: evaluates every k-subset and returns a maximizer.
///
/// The objective is monotone (all gains are non-negative), so the best
/// k-subset also maximizes over all subsets of size at most k. Refuses
/// instances where C(n, k) exceeds one million subsets.
pub fn brute_force(
    pool: &SegmentPool,
    graph: &SimilarityGraph,
    clusters: &ClusterAssignment,
    params: &ObjectiveParams,
) -> Result<SelectionResult, GreedyError> {
    params.validate(pool.len())?;
    let n = pool.len();
    let k = params.k;
    let subsets = binomial(n, k).unwrap_or(u128::MAX);
    if subsets > ORACLE_SUBSET_LIMIT {
        return Err(GreedyError::SearchSpaceTooLarge {
            n,
            k,
            limit: ORACLE_SUBSET_LIMIT,
        });
    }

    let mut best_value = f64::NEG_INFINITY;
    let mut best_set: Vec<usize> = Vec::new();
    let mut evaluations = 0u64;
    // Lexicographic k-combinations of 0..n; the first maximizer wins,
    // which makes the oracle deterministic.
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let value = evaluate_set(pool, graph, clusters, params, &combo)?;
        evaluations += 1;
        if value > best_value {
            best_value = value;
            best_set = combo.clone();
        }
        if !next_combination(&mut combo, n) {
            break;
        }
    }

    // Report the winning set in ascending id order with the gains that
    // order produces; unlike the greedy variants this order is not a
    // greedy trajectory, so its gains need not be monotone.
    let mut state = SelectionState::new(pool, graph, clusters)?;
    let mut order = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    for &a in &best_set {
        gains.push(state.objective_gain(params, a)?);
        state.apply(a)?;
        order.push(pool.segment(a).id);
        trace.push(state.objective_value(params));
    }
    Ok(SelectionResult {
        algorithm: Algorithm::Oracle,
        order,
        gains,
        trace,
        evaluations,
        params: *params,
    })
}
