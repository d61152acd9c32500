//! Shared fixtures for the benchmarks: the two antenna layouts used in the
//! experiments and deterministic inputs drawn from them.

use csifb_core::channel::{synth_channel, ChannelSample, SceneConfig};
use csifb_core::eigen::{extract_target, EigenTarget};
use csifb_core::nn::{spec::input_row, Architecture, Mat};
use csifb_core::ArrayConfig;

/// 8 ports, one RB.
pub fn small_scene() -> SceneConfig {
    SceneConfig::new(ArrayConfig::new(2, 2, 4, 4, 2).unwrap(), 1, 1, 1)
}

/// 32 ports, 52 RBs in 13 subbands.
pub fn wide_scene() -> SceneConfig {
    SceneConfig::new(ArrayConfig::new(8, 2, 4, 4, 4).unwrap(), 52, 13, 1)
}

pub fn channels(scene: &SceneConfig, n: usize) -> Vec<ChannelSample> {
    (0..n as u64).map(|i| synth_channel(scene, i).unwrap()).collect()
}

pub fn targets(scene: &SceneConfig, n: usize) -> Vec<EigenTarget> {
    channels(scene, n)
        .iter()
        .map(|c| extract_target(c, scene.n_subbands).unwrap())
        .collect()
}

/// Network input rows for a batch of targets.
pub fn batch(architecture: Architecture, targets: &[EigenTarget]) -> Mat<f32> {
    let rows: Vec<Vec<f32>> = targets
        .iter()
        .map(|t| input_row(architecture, t).into_iter().map(|x| x as f32).collect())
        .collect();
    Mat::from_rows(&rows)
}
