//! Semantically masked attention for style transfer.
//!
//! The crate implements a full feature-space pipeline: a toy orthonormal
//! patch codec in place of a pretrained encoder/decoder, joint color
//! quantization of semantic maps, per-region adaptive instance
//! normalization, continuous (per-region softmax) and sparse (per-region
//! argmax) cross-attention with label masks, weighted fusion, and a
//! region-statistics loss for evaluating how closely stylized features match
//! the style's per-region statistics.
//!
//! All arithmetic is `f64`, single-threaded, and deterministic for a given
//! seed; `f32` appears only in the feature-map serialization format.

pub mod attention;
pub mod error;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod semantics;
pub mod tensor;

pub use attention::{
    g1_mask, g2_mask, normalize_features, sca, sca_with_inputs, ssa, ssa_with_inputs,
    universal_attention, universal_attention_full, AttentionOutcome, LinearMap, ProjectionSet,
    TiePolicy,
};
pub use error::{Error, Result, Side, StageExt};
pub use metrics::{semantic_style_loss, RegionSsl, SslReport};
pub use normalize::{region_stats, s_adain, RegionStats};
pub use pipeline::{
    attention_dump, blend_features, fuse, fuse_with_content_blend, scsa_transform,
    scsa_transform_full, stylize, synthetic_quadruple, AttentionKind, FloatImage, Preset,
    Quadruple, ScsaConfig, ToyCodec, TransformOutput,
};
pub use semantics::{
    downsample_labels, masks_from_labels, quantize_semantic_maps, semantic_embedding,
    validate_aligned, write_label_png, LabelMap, Mask, Palette,
};
pub use tensor::{AttentionMatrix, FeatureMap, Mat};
