//! Shared fixtures for the kernel benchmarks.

use scsa_core::{
    semantic_embedding, LabelMap, Preset, ProjectionSet, Quadruple, ScsaConfig, ToyCodec,
};

pub struct Fixture {
    pub quad: Quadruple,
    pub cfg: ScsaConfig,
    pub codec: ToyCodec,
    pub proj: ProjectionSet,
}

/// A 64x64 three-region quadruple with the default cnn preset.
pub fn fixture() -> Fixture {
    Fixture {
        quad: scsa_core::synthetic_quadruple(64, 3, 0),
        cfg: ScsaConfig::for_preset(Preset::Cnn, 3),
        codec: ToyCodec::new_seeded(2, 16, 0).expect("valid codec dims"),
        proj: ProjectionSet::seeded(16, 16, 16, 0),
    }
}

/// Striped feature-resolution label map with every label present.
pub fn striped_labels(h: usize, w: usize, n: usize) -> LabelMap {
    let labels = (0..h * w).map(|i| (i % n) as u16).collect();
    LabelMap::new(h, w, n, labels).expect("valid label map")
}

/// One-hot embeddings for a striped label map.
pub fn striped_embedding(h: usize, w: usize, n: usize, channels: usize) -> scsa_core::FeatureMap {
    semantic_embedding(&striped_labels(h, w, n), channels).expect("channels >= labels")
}
