//! Segment pools and ground truth: the on-disk JSON formats, validation,
//! and canonical serialization.
//!
//! A pool is a flat list of candidate segments spread over `num_layers`
//! granularity layers on one grid. Pools are immutable once constructed;
//! every algorithm in this crate borrows them read-only. Canonical form
//! sorts segments by id and mask runs by start, so `save` output is
//! byte-stable and `load . save` is the identity on saved files.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{MaskError, RegionMask};

#[derive(Debug, Error)]
pub enum PoolError {
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
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("grid must be non-zero, got {width}x{height}")]
    ZeroGrid { width: u32, height: u32 },
    #[error("num_layers must be at least 1")]
    ZeroLayers,
    #[error("feature_dim must be at least 1")]
    ZeroFeatureDim,
    #[error("duplicate segment id {id}")]
    DuplicateId { id: u64 },
    #[error("segment {id}: layer {layer} out of range (num_layers {num_layers})")]
    LayerOutOfRange { id: u64, layer: u32, num_layers: u32 },
    #[error("segment {id}: feature has {got} entries, pool feature_dim is {want}")]
    FeatureDimMismatch { id: u64, got: usize, want: usize },
    #[error("segment {id}: feature entry is not finite")]
    FeatureNotFinite { id: u64 },
    #[error("segment {id}: reward {reward} is negative (pass a reward transform for signed scores)")]
    NegativeReward { id: u64, reward: f64 },
    #[error("segment {id}: reward is not finite")]
    RewardNotFinite { id: u64 },
    #[error("segment {id}: mask is empty")]
    EmptyMask { id: u64 },
    #[error("segment {id}: mask invalid: {source}")]
    Mask { id: u64, source: MaskError },
    #[error("layer {layer} has no segments")]
    EmptyLayer { layer: u32 },
    #[error("ground truth has no objects")]
    NoObjects,
    #[error("duplicate ground-truth instance {instance}")]
    DuplicateInstance { instance: u64 },
    #[error("ground-truth object {instance}: mask is empty")]
    EmptyObjectMask { instance: u64 },
    #[error("ground-truth object {instance}: mask invalid: {source}")]
    ObjectMask { instance: u64, source: MaskError },
}

/// Transform applied to raw segment scores at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTransform {
    /// Scores are used as-is and must already be non-negative.
    #[default]
    None,
    /// Maps any real score s to 1 / (1 + e^-s), so signed detector
    /// outputs land in (0, 1).
    Logistic,
}

impl RewardTransform {
    pub fn apply(self, s: f64) -> f64 {
        match self {
            RewardTransform::None => s,
            RewardTransform::Logistic => 1.0 / (1.0 + (-s).exp()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: u64,
    pub layer: u32,
    pub feature: Vec<f64>,
    pub reward: f64,
    pub mask: RegionMask,
}

#[derive(Debug, Clone)]
pub struct SegmentPool {
    grid: (u32, u32),
    num_layers: u32,
    feature_dim: usize,
    // Sorted by id; positions are the vertex indices used everywhere else.
    segments: Vec<Segment>,
    id_to_index: HashMap<u64, usize>,
    layer_members: Vec<Vec<usize>>,
}

impl SegmentPool {
    pub fn new(
        grid: (u32, u32),
        num_layers: u32,
        feature_dim: usize,
        mut segments: Vec<Segment>,
        transform: RewardTransform,
    ) -> Result<Self, PoolError> {
        let (width, height) = grid;
        if width == 0 || height == 0 {
            return Err(PoolError::ZeroGrid { width, height });
        }
        if num_layers == 0 {
            return Err(PoolError::ZeroLayers);
        }
        if feature_dim == 0 {
            return Err(PoolError::ZeroFeatureDim);
        }
        segments.sort_by_key(|s| s.id);
        let mut id_to_index = HashMap::with_capacity(segments.len());
        let mut layer_members = vec![Vec::new(); num_layers as usize];
        for (index, seg) in segments.iter_mut().enumerate() {
            if id_to_index.insert(seg.id, index).is_some() {
                return Err(PoolError::DuplicateId { id: seg.id });
            }
            if seg.layer >= num_layers {
                return Err(PoolError::LayerOutOfRange {
                    id: seg.id,
                    layer: seg.layer,
                    num_layers,
                });
            }
            if seg.feature.len() != feature_dim {
                return Err(PoolError::FeatureDimMismatch {
                    id: seg.id,
                    got: seg.feature.len(),
                    want: feature_dim,
                });
            }
            if seg.feature.iter().any(|x| !x.is_finite()) {
                return Err(PoolError::FeatureNotFinite { id: seg.id });
            }
            if !seg.reward.is_finite() {
                return Err(PoolError::RewardNotFinite { id: seg.id });
            }
            seg.reward = transform.apply(seg.reward);
            if seg.reward < 0.0 {
                return Err(PoolError::NegativeReward {
                    id: seg.id,
                    reward: seg.reward,
                });
            }
            if seg.mask.is_empty() {
                return Err(PoolError::EmptyMask { id: seg.id });
            }
            if seg.mask.grid() != grid {
                return Err(PoolError::Mask {
                    id: seg.id,
                    source: MaskError::GridMismatch {
                        a_width: seg.mask.width(),
                        a_height: seg.mask.height(),
                        b_width: width,
                        b_height: height,
                    },
                });
            }
            layer_members[seg.layer as usize].push(index);
        }
        for (layer, members) in layer_members.iter().enumerate() {
            if members.is_empty() {
                return Err(PoolError::EmptyLayer {
                    layer: layer as u32,
                });
            }
        }
        Ok(Self {
            grid,
            num_layers,
            feature_dim,
            segments,
            id_to_index,
            layer_members,
        })
    }

    pub fn grid(&self) -> (u32, u32) {
        self.grid
    }

    pub fn num_layers(&self) -> u32 {
        self.num_layers
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, index: usize) -> &Segment {
        &self.segments[index]
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.id_to_index.get(&id).copied()
    }

    /// Vertex indices of the segments in `layer`, ascending.
    pub fn layer_members(&self, layer: u32) -> &[usize] {
        &self.layer_members[layer as usize]
    }

    pub fn layer_size(&self, layer: u32) -> usize {
        self.layer_members[layer as usize].len()
    }

    pub fn from_json(bytes: &[u8], transform: RewardTransform) -> Result<Self, PoolError> {
        let file: PoolFile = serde_json::from_slice(bytes)?;
        file.into_pool(transform)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&PoolFile::from_pool(self))
            .expect("pool serialization cannot fail");
        out.push('\n');
        out
    }
}

pub fn load_pool(path: &Path, transform: RewardTransform) -> Result<SegmentPool, PoolError> {
    let bytes = fs::read(path).map_err(|source| PoolError::Read {
        path: path.display().to_string(),
        source,
    })?;
    SegmentPool::from_json(&bytes, transform)
}

pub fn save_pool(pool: &SegmentPool, path: &Path) -> Result<(), PoolError> {
    fs::write(path, pool.to_json()).map_err(|source| PoolError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct GtObject {
    pub instance: u64,
    pub class: String,
    pub mask: RegionMask,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    grid: (u32, u32),
    objects: Vec<GtObject>,
}

impl GroundTruth {
    pub fn new(grid: (u32, u32), mut objects: Vec<GtObject>) -> Result<Self, PoolError> {
        let (width, height) = grid;
        if width == 0 || height == 0 {
            return Err(PoolError::ZeroGrid { width, height });
        }
        if objects.is_empty() {
            return Err(PoolError::NoObjects);
        }
        objects.sort_by_key(|o| o.instance);
        for pair in objects.windows(2) {
            if pair[0].instance == pair[1].instance {
                return Err(PoolError::DuplicateInstance {
                    instance: pair[0].instance,
                });
            }
        }
        for obj in &objects {
            if obj.mask.is_empty() {
                return Err(PoolError::EmptyObjectMask {
                    instance: obj.instance,
                });
            }
            if obj.mask.grid() != grid {
                return Err(PoolError::ObjectMask {
                    instance: obj.instance,
                    source: MaskError::GridMismatch {
                        a_width: obj.mask.width(),
                        a_height: obj.mask.height(),
                        b_width: width,
                        b_height: height,
                    },
                });
            }
        }
        Ok(Self { grid, objects })
    }

    pub fn grid(&self) -> (u32, u32) {
        self.grid
    }

    pub fn objects(&self) -> &[GtObject] {
        &self.objects
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, PoolError> {
        let file: GroundTruthFile = serde_json::from_slice(bytes)?;
        file.into_ground_truth()
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&GroundTruthFile::from_ground_truth(self))
            .expect("ground truth serialization cannot fail");
        out.push('\n');
        out
    }
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, PoolError> {
    let bytes = fs::read(path).map_err(|source| PoolError::Read {
        path: path.display().to_string(),
        source,
    })?;
    GroundTruth::from_json(&bytes)
}

pub fn save_ground_truth(gt: &GroundTruth, path: &Path) -> Result<(), PoolError> {
    fs::write(path, gt.to_json()).map_err(|source| PoolError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
struct MaskFile {
    runs: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct SegmentFile {
    id: u64,
    layer: u32,
    feature: Vec<f64>,
    reward: f64,
    mask: MaskFile,
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    grid: [u32; 2],
    num_layers: u32,
    feature_dim: usize,
    segments: Vec<SegmentFile>,
}

impl PoolFile {
    fn into_pool(self, transform: RewardTransform) -> Result<SegmentPool, PoolError> {
        let [width, height] = self.grid;
        if width == 0 || height == 0 {
            return Err(PoolError::ZeroGrid { width, height });
        }
        let segments = self
            .segments
            .into_iter()
            .map(|s| {
                let mask = RegionMask::new(width, height, s.mask.runs)
                    .map_err(|source| PoolError::Mask { id: s.id, source })?;
                Ok(Segment {
                    id: s.id,
                    layer: s.layer,
                    feature: s.feature,
                    reward: s.reward,
                    mask,
                })
            })
            .collect::<Result<Vec<_>, PoolError>>()?;
        SegmentPool::new(
            (width, height),
            self.num_layers,
            self.feature_dim,
            segments,
            transform,
        )
    }

    fn from_pool(pool: &SegmentPool) -> Self {
        Self {
            grid: [pool.grid.0, pool.grid.1],
            num_layers: pool.num_layers,
            feature_dim: pool.feature_dim,
            segments: pool
                .segments
                .iter()
                .map(|s| SegmentFile {
                    id: s.id,
                    layer: s.layer,
                    feature: s.feature.clone(),
                    reward: s.reward,
                    mask: MaskFile {
                        runs: s.mask.runs().to_vec(),
                    },
                })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GtObjectFile {
    instance: u64,
    class: String,
    mask: MaskFile,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    grid: [u32; 2],
    objects: Vec<GtObjectFile>,
}

impl GroundTruthFile {
    fn into_ground_truth(self) -> Result<GroundTruth, PoolError> {
        let [width, height] = self.grid;
        if width == 0 || height == 0 {
            return Err(PoolError::ZeroGrid { width, height });
        }
        let objects = self
            .objects
            .into_iter()
            .map(|o| {
                let mask = RegionMask::new(width, height, o.mask.runs).map_err(|source| {
                    PoolError::ObjectMask {
                        instance: o.instance,
                        source,
                    }
                })?;
                Ok(GtObject {
                    instance: o.instance,
                    class: o.class,
                    mask,
                })
            })
            .collect::<Result<Vec<_>, PoolError>>()?;
        GroundTruth::new((width, height), objects)
    }

    fn from_ground_truth(gt: &GroundTruth) -> Self {
        Self {
            grid: [gt.grid.0, gt.grid.1],
            objects: gt
                .objects
                .iter()
                .map(|o| GtObjectFile {
                    instance: o.instance,
                    class: o.class.clone(),
                    mask: MaskFile {
                        runs: o.mask.runs().to_vec(),
                    },
                })
                .collect(),
        }
    }
}
