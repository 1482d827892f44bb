//! Multi-scale segment pools and submodular proposal selection.
//!
//! The pipeline: a [`pool::SegmentPool`] holds candidate segments across
//! granularity layers; [`simgraph`] connects spatially related segments
//! with feature similarities; [`cluster`] groups each layer around
//! exemplars; [`objective`] scores selections by coverage, cluster
//! diversity, and layer-discounted reward; [`greedy`] maximizes that
//! score under a budget; [`eval`] compares selections against ground
//! truth; [`synth`] generates seeded instances for tests and benchmarks.

pub mod cluster;
pub mod eval;
pub mod greedy;
pub mod hash;
mod lazyq;
pub mod mask;
pub mod objective;
pub mod pool;
pub mod simgraph;
pub mod synth;

pub use cluster::{ClusterAssignment, ClusterError, ClusterParams};
pub use eval::{budget_curve, curve_to_csv, score_selection, BudgetCurve, EvalError, Metrics};
pub use greedy::{greedy_lazy, greedy_naive, Algorithm, GreedyError, SelectionResult};
pub use mask::{MaskError, RegionMask};
pub use objective::{ObjectiveError, ObjectiveParams, SelectionState};
pub use pool::{
    load_ground_truth, load_pool, save_ground_truth, save_pool, GroundTruth, GtObject, PoolError,
    RewardTransform, Segment, SegmentPool,
};
pub use simgraph::{GraphError, GraphParams, SimilarityGraph};
pub use synth::{synthesize, SynthConfig, SynthError};
