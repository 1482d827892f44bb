//! Fixture builders shared by the benchmark targets.

use propsel_core::{synthesize, GroundTruth, SegmentPool, SynthConfig};

/// Structural segments in the recipe below: six objects across four
/// layers contribute 34 segments before background tiling.
const STRUCTURAL: usize = 34;

/// Deterministic pool with exactly `segments` candidates. Background
/// tile count absorbs the difference, so sizes are comparable without
/// changing object geometry.
pub fn sized_pool(segments: usize) -> (SegmentPool, GroundTruth) {
    assert!(
        segments > STRUCTURAL,
        "recipe needs at least one background tile"
    );
    let config = SynthConfig {
        seed: 0,
        grid: (96, 96),
        num_objects: 6,
        num_layers: 4,
        parts_per_object: 5,
        background_tiles: segments - STRUCTURAL,
        reward_noise_std: 0.05,
        feature_noise_std: 0.05,
    };
    let (pool, gt) = synthesize(&config).expect("fixture recipe is valid");
    assert_eq!(pool.len(), segments, "structural count drifted");
    (pool, gt)
}
