//! Seeded synthetic pools with ground truth.
//!
//! Objects are axis-aligned rectangles placed so that their margin
//! expansions stay inside the grid and never touch each other. Each
//! layer is a full segmentation: object-derived masks plus the
//! complement as background. Granularity varies by layer:
//!
//! * layer 0 shows each object merged with its margin (area at least
//!   four times the object, so overlap with the object stays below a
//!   quarter),
//! * intermediate layers absorb objects into the background,
//! * the finest layer splits each object into parts and chops the
//!   background into tiles.
//!
//! The one exception is an object's host layer, which shows the object
//! exactly. Hosts rotate from the finest layer downward, so every
//! object has exactly one exact-match segment in the pool and, while
//! objects number at most the layers, no layer holds two of them. That
//! keeps perfect recall reachable by construction and lets end-to-end
//! tests measure the selector instead of the data.
//!
//! All randomness comes from ChaCha8 seeded with the config seed, a
//! portable generator, so a config identifies its output byte for byte
//! on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::RegionMask;
use crate::pool::{GroundTruth, GtObject, PoolError, RewardTransform, Segment, SegmentPool};

const PLACEMENT_ATTEMPTS: u32 = 1000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synth config: {field} {requirement}")]
    InvalidConfig {
        field: &'static str,
        requirement: &'static str,
    },
    #[error("grid {width}x{height} cannot fit even one margin-expanded object")]
    GridTooSmall { width: u32, height: u32 },
    #[error("could not place object {object} after {attempts} attempts; enlarge the grid or drop objects")]
    Placement { object: usize, attempts: u32 },
    #[error("finest-layer background has {cells} cells, fewer than background_tiles={tiles}")]
    TooManyTiles { cells: u64, tiles: usize },
    #[error(transparent)]
    Pool(#[from] PoolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub grid: (u32, u32),
    pub num_objects: usize,
    pub num_layers: u32,
    /// Finest-layer slices per non-host object.
    pub parts_per_object: usize,
    /// Finest-layer background chunks.
    pub background_tiles: usize,
    pub reward_noise_std: f64,
    pub feature_noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            grid: (64, 64),
            num_objects: 3,
            num_layers: 3,
            parts_per_object: 2,
            background_tiles: 4,
            reward_noise_std: 0.0,
            feature_noise_std: 0.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |field, requirement| Err(SynthError::InvalidConfig { field, requirement });
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return bad("grid", "must have nonzero width and height");
        }
        if self.num_objects == 0 {
            return bad("num_objects", "must be at least 1");
        }
        if self.num_layers < 2 {
            return bad("num_layers", "must be at least 2");
        }
        if self.parts_per_object == 0 {
            return bad("parts_per_object", "must be at least 1");
        }
        if self.background_tiles == 0 {
            return bad("background_tiles", "must be at least 1");
        }
        if !(self.reward_noise_std.is_finite() && self.reward_noise_std >= 0.0) {
            return bad("reward_noise_std", "must be finite and non-negative");
        }
        if !(self.feature_noise_std.is_finite() && self.feature_noise_std >= 0.0) {
            return bad("feature_noise_std", "must be finite and non-negative");
        }
        Ok(())
    }
}

/// Object rectangle with the margin its merged form expands by.
#[derive(Debug, Clone, Copy)]
struct Placed {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
    margin: u32,
}

impl Placed {
    fn expanded(&self) -> (u32, u32, u32, u32) {
        (
            self.x0 - self.margin,
            self.y0 - self.margin,
            self.x0 + self.w + self.margin,
            self.y0 + self.h + self.margin,
        )
    }
}

fn boxes_overlap(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32)) -> bool {
    a.0 < b.2 && b.0 < a.2 && a.1 < b.3 && b.1 < a.3
}

fn rect_mask(grid: (u32, u32), x0: u32, y0: u32, w: u32, h: u32) -> RegionMask {
    RegionMask::rect(grid.0, grid.1, x0, y0, w, h).expect("rect stays inside the grid")
}

/// Places margin-separated rectangles. Margin is half the longer side,
/// rounded up, which makes the merged area at least four times the
/// object area.
fn place_objects(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Placed>, SynthError> {
    let (gw, gh) = config.grid;
    let min_dim = gw.min(gh);
    let lo = (min_dim / 12).max(2);
    let hi = (min_dim / 6).max(lo);
    let min_extent = lo + 2 * lo.div_ceil(2);
    if gw < min_extent || gh < min_extent {
        return Err(SynthError::GridTooSmall {
            width: gw,
            height: gh,
        });
    }

    let mut placed: Vec<Placed> = Vec::with_capacity(config.num_objects);
    for object in 0..config.num_objects {
        let mut accepted = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng.random_range(lo..=hi);
            let h = rng.random_range(lo..=hi);
            let margin = w.max(h).div_ceil(2);
            if gw < w + 2 * margin || gh < h + 2 * margin {
                continue;
            }
            let x0 = rng.random_range(margin..=gw - w - margin);
            let y0 = rng.random_range(margin..=gh - h - margin);
            let candidate = Placed {
                x0,
                y0,
                w,
                h,
                margin,
            };
            let free = placed
                .iter()
                .all(|p| !boxes_overlap(candidate.expanded(), p.expanded()));
            if free {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(p) => placed.push(p),
            None => {
                return Err(SynthError::Placement {
                    object,
                    attempts: PLACEMENT_ATTEMPTS,
                })
            }
        }
    }
    Ok(placed)
}

/// Layer that shows object `i` exactly; rotates finest-first so the
/// first `num_layers` objects land in distinct layers.
fn host_layer(object: usize, num_layers: u32) -> u32 {
    num_layers - 1 - (object as u32 % num_layers)
}

/// Splits a rectangle into `parts` slices along its longer side,
/// clamped so every slice is non-empty.
fn split_rect(grid: (u32, u32), p: &Placed, parts: usize) -> Vec<RegionMask> {
    let along_x = p.w >= p.h;
    let side = if along_x { p.w } else { p.h } as usize;
    let parts = parts.min(side);
    let base = (side / parts) as u32;
    let rem = (side % parts) as u32;
    let mut out = Vec::with_capacity(parts);
    let mut offset = 0;
    for s in 0..parts as u32 {
        let len = base + u32::from(s < rem);
        out.push(if along_x {
            rect_mask(grid, p.x0 + offset, p.y0, len, p.h)
        } else {
            rect_mask(grid, p.x0, p.y0 + offset, p.w, len)
        });
        offset += len;
    }
    out
}

/// Complement of disjoint runs over a row-major grid of `cells` cells.
fn complement_runs(cells: u64, mut covered: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    covered.sort_unstable();
    let mut out = Vec::new();
    let mut cursor = 0;
    for (start, len) in covered {
        if start > cursor {
            out.push((cursor, start - cursor));
        }
        cursor = start + len;
    }
    if cursor < cells {
        out.push((cursor, cells - cursor));
    }
    out
}

/// Cuts runs into `tiles` chunks of near-equal cell count, in row-major
/// order, splitting runs at chunk boundaries.
fn chunk_runs(runs: &[(u64, u64)], tiles: usize) -> Vec<Vec<(u64, u64)>> {
    let total: u64 = runs.iter().map(|&(_, len)| len).sum();
    let tiles_u = tiles as u64;
    let base = total / tiles_u;
    let rem = total % tiles_u;
    let mut chunks = Vec::with_capacity(tiles);
    let mut run_iter = runs.iter().copied();
    let mut pending: Option<(u64, u64)> = None;
    for t in 0..tiles_u {
        let mut want = base + u64::from(t < rem);
        let mut chunk = Vec::new();
        while want > 0 {
            let (start, len) = match pending.take().or_else(|| run_iter.next()) {
                Some(r) => r,
                None => break,
            };
            if len <= want {
                chunk.push((start, len));
                want -= len;
            } else {
                chunk.push((start, want));
                pending = Some((start + want, len - want));
                want = 0;
            }
        }
        chunks.push(chunk);
    }
    chunks
}

/// Mean cell coordinates of a mask, in cells.
fn centroid(mask: &RegionMask) -> (f64, f64) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    for span in mask.row_spans() {
        let count = (span.x1 - span.x0 + 1) as f64;
        sx += 0.5 * (span.x0 + span.x1) as f64 * count;
        sy += span.y as f64 * count;
    }
    let area = mask.area() as f64;
    (sx / area, sy / area)
}

fn feature_of(mask: &RegionMask, grid: (u32, u32), color: [f64; 3]) -> Vec<f64> {
    let (cx, cy) = centroid(mask);
    let cells = grid.0 as f64 * grid.1 as f64;
    vec![
        cx / grid.0 as f64,
        cy / grid.1 as f64,
        (mask.area() as f64 / cells).sqrt(),
        color[0],
        color[1],
        color[2],
    ]
}

fn max_iou(mask: &RegionMask, objects: &[RegionMask]) -> f64 {
    objects
        .iter()
        .map(|o| {
            let inter = mask.intersection_area(o).expect("same grid by construction");
            inter as f64 / (mask.area() + o.area() - inter) as f64
        })
        .fold(0.0, f64::max)
}

/// Generates a pool and its ground truth from `config`. Identical
/// configs produce identical output, down to serialized bytes.
pub fn synthesize(config: &SynthConfig) -> Result<(SegmentPool, GroundTruth), SynthError> {
    config.validate()?;
    let grid = config.grid;
    let layers = config.num_layers;
    let finest = layers - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let placed = place_objects(config, &mut rng)?;
    let bg_color: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let colors: Vec<[f64; 3]> = (0..config.num_objects)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect();

    let object_masks: Vec<RegionMask> = placed
        .iter()
        .map(|p| rect_mask(grid, p.x0, p.y0, p.w, p.h))
        .collect();

    // (layer, mask, color) in emission order; ids follow.
    let mut drafts: Vec<(u32, RegionMask, [f64; 3])> = Vec::new();
    for layer in 0..layers {
        let mut covered: Vec<(u64, u64)> = Vec::new();
        for (i, p) in placed.iter().enumerate() {
            let masks: Vec<RegionMask> = if host_layer(i, layers) == layer {
                vec![object_masks[i].clone()]
            } else if layer == 0 {
                let (ex0, ey0, ex1, ey1) = p.expanded();
                vec![rect_mask(grid, ex0, ey0, ex1 - ex0, ey1 - ey0)]
            } else if layer == finest && config.parts_per_object >= 2 {
                split_rect(grid, p, config.parts_per_object)
            } else {
                // Absorbed into this layer's background.
                Vec::new()
            };
            for mask in masks {
                covered.extend(mask.runs().iter().copied());
                drafts.push((layer, mask, colors[i]));
            }
        }
        let cells = grid.0 as u64 * grid.1 as u64;
        let background = complement_runs(cells, covered);
        if layer == finest {
            let free: u64 = background.iter().map(|&(_, len)| len).sum();
            if free < config.background_tiles as u64 {
                return Err(SynthError::TooManyTiles {
                    cells: free,
                    tiles: config.background_tiles,
                });
            }
            for chunk in chunk_runs(&background, config.background_tiles) {
                let mask = RegionMask::new(grid.0, grid.1, chunk).expect("chunks are disjoint runs");
                drafts.push((layer, mask, bg_color));
            }
        } else {
            let mask = RegionMask::new(grid.0, grid.1, background)
                .expect("complement of in-grid rects is non-empty");
            drafts.push((layer, mask, bg_color));
        }
    }

    let feature_noise = (config.feature_noise_std > 0.0)
        .then(|| Normal::new(0.0, config.feature_noise_std).expect("validated std"));
    let reward_noise = (config.reward_noise_std > 0.0)
        .then(|| Normal::new(0.0, config.reward_noise_std).expect("validated std"));

    let mut segments = Vec::with_capacity(drafts.len());
    for (id, (layer, mask, color)) in drafts.into_iter().enumerate() {
        let mut feature = feature_of(&mask, grid, color);
        if let Some(noise) = &feature_noise {
            for f in &mut feature {
                *f += noise.sample(&mut rng);
            }
        }
        let mut reward = max_iou(&mask, &object_masks);
        if let Some(noise) = &reward_noise {
            reward = (reward + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
        segments.push(Segment {
            id: id as u64,
            layer,
            feature,
            reward,
            mask,
        });
    }

    let pool = SegmentPool::new(grid, layers, 6, segments, RewardTransform::None)?;
    let gt = GroundTruth::new(
        grid,
        object_masks
            .into_iter()
            .enumerate()
            .map(|(i, mask)| GtObject {
                instance: i as u64,
                class: format!("c{}", i % 4),
                mask,
            })
            .collect(),
    )?;
    Ok((pool, gt))
}
