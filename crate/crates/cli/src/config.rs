//! Flag/file configuration resolution: preset defaults, then JSON config
//! values, then explicit flags, most specific last.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use scsa_core::{Error, Preset, Result, ScsaConfig};

/// JSON mirror of the tuning flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub b: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub clusters: Option<usize>,
    pub seed: Option<u64>,
    pub passes: Option<usize>,
    pub eps: Option<f64>,
    pub patch_size: Option<usize>,
    pub channels: Option<usize>,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("bad config {}: {e}", path.display())))
}

/// Tuning flags shared by transfer, dump-attn, and sweep.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct TuningFlags {
    /// Hyperparameter preset: cnn, transformer, diffusion, or custom.
    #[arg(long)]
    pub preset: Option<String>,
    /// Continuous-attention fusion weight (custom preset only).
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Sparse-attention fusion weight (custom preset only).
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Content blend between renormalized and raw content in the fusion.
    #[arg(long)]
    pub b: Option<f64>,
    /// Query/key blend toward semantic embeddings in continuous attention.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Query blend toward renormalized content in sparse attention.
    #[arg(long)]
    pub t2: Option<f64>,
    /// Number of semantic regions to quantize to.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Seed for quantization, codec, and projection initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of stylization passes (output fed back as content).
    #[arg(long)]
    pub passes: Option<usize>,
    /// Denominator guard for region renormalization.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Codec patch edge length in pixels.
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Codec feature channels (at least 3 * patch_size^2 and >= clusters).
    #[arg(long)]
    pub channels: Option<usize>,
    /// JSON file mirroring these flags; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use identity projections instead of seeded orthonormal ones.
    #[arg(long)]
    pub identity_proj: bool,
}

/// Fully resolved run parameters.
pub struct Resolved {
    pub cfg: ScsaConfig,
    pub patch_size: usize,
    pub channels: usize,
    pub identity_proj: bool,
}

pub fn resolve(flags: &TuningFlags, default_preset: Preset) -> Result<Resolved> {
    let file = match &flags.config {
        Some(p) => load(p)?,
        None => FileConfig::default(),
    };
    let preset = match flags.preset.as_ref().or(file.preset.as_ref()) {
        Some(name) => name.parse()?,
        None => default_preset,
    };
    let clusters = flags.clusters.or(file.clusters).ok_or_else(|| {
        Error::InvalidConfig("--clusters is required (as a flag or in the config file)".into())
    })?;
    let mut cfg = ScsaConfig::for_preset(preset, clusters);
    for layer in [&file_overrides(&file), &flag_overrides(flags)] {
        layer.apply(&mut cfg);
    }
    cfg.validate()?;
    let patch_size = flags.patch_size.or(file.patch_size).unwrap_or(2);
    let channels = flags.channels.or(file.channels).unwrap_or(16);
    if channels < clusters {
        return Err(Error::InvalidConfig(format!(
            "channels ({channels}) must be at least the cluster count ({clusters})"
        )));
    }
    Ok(Resolved {
        cfg,
        patch_size,
        channels,
        identity_proj: flags.identity_proj,
    })
}

/// One layer of optional overrides onto a config.
struct Overrides {
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    b: Option<f64>,
    t1: Option<f64>,
    t2: Option<f64>,
    seed: Option<u64>,
    passes: Option<usize>,
    eps: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScsaConfig) {
        if let Some(v) = self.alpha1 {
            cfg.alpha1 = v;
        }
        if let Some(v) = self.alpha2 {
            cfg.alpha2 = v;
        }
        if let Some(v) = self.b {
            cfg.b = Some(v);
        }
        if let Some(v) = self.t1 {
            cfg.t1 = v;
        }
        if let Some(v) = self.t2 {
            cfg.t2 = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.passes {
            cfg.passes = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
    }
}

fn file_overrides(f: &FileConfig) -> Overrides {
    Overrides {
        alpha1: f.alpha1,
        alpha2: f.alpha2,
        b: f.b,
        t1: f.t1,
        t2: f.t2,
        seed: f.seed,
        passes: f.passes,
        eps: f.eps,
    }
}

fn flag_overrides(f: &TuningFlags) -> Overrides {
    Overrides {
        alpha1: f.alpha1,
        alpha2: f.alpha2,
        b: f.b,
        t1: f.t1,
        t2: f.t2,
        seed: f.seed,
        passes: f.passes,
        eps: f.eps,
    }
}
