//! End-to-end orchestration: a toy patch codec standing in for a pretrained
//! encoder/decoder, preset hyperparameter bundles, the fusion rules, and the
//! full semantically masked transform over one content/style quadruple.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    normalize_features, sca_with_inputs, ssa_with_inputs, universal_attention_full,
    AttentionOutcome, ProjectionSet, TiePolicy,
};
use crate::error::{Error, Result, StageExt};
use crate::normalize::s_adain;
use crate::semantics::{
    downsample_labels, quantize_semantic_maps, semantic_embedding, validate_aligned, LabelMap,
};
use crate::tensor::{random_orthonormal, AttentionMatrix, FeatureMap, Mat};

/// Named hyperparameter bundles mirroring the hosting-framework flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Cnn,
    Transformer,
    Diffusion,
    Custom,
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Preset::Cnn => "cnn",
            Preset::Transformer => "transformer",
            Preset::Diffusion => "diffusion",
            Preset::Custom => "custom",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        match s {
            "cnn" => Ok(Preset::Cnn),
            "transformer" => Ok(Preset::Transformer),
            "diffusion" => Ok(Preset::Diffusion),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (expected cnn, transformer, diffusion, or custom)"
            ))),
        }
    }
}

/// Transform hyperparameters. The query/key blend weights `t1`/`t2` are 1 for
/// the non-diffusion presets, which makes their blended input paths collapse
/// bitwise to the plain semantic-embedding and renormalized-content paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ScsaConfig {
    pub preset: Preset,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Content blend for the transformer-flavored fusion; `None` selects the
    /// plain three-term fusion.
    pub b: Option<f64>,
    pub t1: f64,
    pub t2: f64,
    pub clusters: usize,
    pub eps: f64,
    pub seed: u64,
    pub passes: usize,
}

impl ScsaConfig {
    /// The canonical configuration of a preset. Non-custom presets pin their
    /// published values; custom starts from the cnn numbers with every field
    /// adjustable.
    pub fn for_preset(preset: Preset, clusters: usize) -> ScsaConfig {
        let mut cfg = ScsaConfig {
            preset,
            alpha1: 0.7,
            alpha2: 0.3,
            b: None,
            t1: 1.0,
            t2: 1.0,
            clusters,
            eps: 1e-5,
            seed: 0,
            passes: 1,
        };
        match preset {
            Preset::Cnn | Preset::Custom => {}
            Preset::Transformer => {
                cfg.alpha1 = 1.2;
                cfg.alpha2 = 0.5;
                cfg.b = Some(0.7);
            }
            Preset::Diffusion => {
                cfg.alpha1 = 0.8;
                cfg.alpha2 = 0.2;
                cfg.t1 = 0.3;
                cfg.t2 = 0.5;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64, name: &str| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
            Ok(())
        };
        let unit_range = |v: f64, name: &str| -> Result<()> {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
            Ok(())
        };
        finite_nonneg(self.alpha1, "alpha1")?;
        finite_nonneg(self.alpha2, "alpha2")?;
        if let Some(b) = self.b {
            unit_range(b, "b")?;
        }
        unit_range(self.t1, "t1")?;
        unit_range(self.t2, "t2")?;
        if self.clusters == 0 {
            return Err(Error::InvalidConfig("clusters must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eps must be a small positive number, got {}",
                self.eps
            )));
        }
        if self.passes == 0 {
            return Err(Error::InvalidConfig("passes must be at least 1".into()));
        }
        // Non-custom presets pin their published hyperparameters.
        let pinned: Option<(f64, f64, Option<f64>, f64, f64)> = match self.preset {
            Preset::Cnn => Some((0.7, 0.3, None, 1.0, 1.0)),
            Preset::Transformer => Some((1.2, 0.5, Some(0.7), 1.0, 1.0)),
            Preset::Diffusion => Some((0.8, 0.2, None, 0.3, 0.5)),
            Preset::Custom => None,
        };
        if let Some((a1, a2, b, t1, t2)) = pinned {
            if self.alpha1 != a1
                || self.alpha2 != a2
                || self.b != b
                || self.t1 != t1
                || self.t2 != t2
            {
                return Err(Error::InvalidConfig(format!(
                    "preset {} pins alpha1={a1}, alpha2={a2}, b={:?}, t1={t1}, t2={t2}; \
                     use the custom preset to adjust them",
                    self.preset, b
                )));
            }
        }
        Ok(())
    }
}

/// Linear patch embedding with an orthonormal inverse: images are cut into
/// non-overlapping patches, each flattened (channel-major) and multiplied by
/// a weight matrix whose columns are orthonormal, so the transposed weight
/// reconstructs patches exactly up to rounding.
#[derive(Debug, Clone)]
pub struct ToyCodec {
    patch: usize,
    channels: usize,
    weight: Mat,
}

impl ToyCodec {
    /// Pass-through codec: one-pixel patches, three channels, identity weight.
    pub fn identity() -> ToyCodec {
        ToyCodec {
            patch: 1,
            channels: 3,
            weight: Mat::identity(3),
        }
    }

    pub fn new_seeded(patch: usize, channels: usize, seed: u64) -> Result<ToyCodec> {
        if patch == 0 {
            return Err(Error::InvalidConfig("patch size must be at least 1".into()));
        }
        let d = 3 * patch * patch;
        if channels < d {
            return Err(Error::InvalidConfig(format!(
                "codec needs at least 3*patch^2 = {d} channels, got {channels}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(ToyCodec {
            patch,
            channels,
            weight: random_orthonormal(channels, d, &mut rng),
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Feature grid dimensions for an image, after divisibility checks.
    pub fn feature_dims(&self, img: &RgbImage) -> Result<(usize, usize)> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 || w % self.patch != 0 || h % self.patch != 0 {
            return Err(Error::IndivisibleDims {
                width: img.width(),
                height: img.height(),
                patch: self.patch,
            });
        }
        Ok((h / self.patch, w / self.patch))
    }

    /// Pixel values are mapped to [0, 1]; patch vectors are laid out
    /// channel-major (all red, all green, all blue within the patch).
    pub fn encode(&self, img: &RgbImage) -> Result<FeatureMap> {
        let (fh, fw) = self.feature_dims(img)?;
        let p = self.patch;
        let d = 3 * p * p;
        let cells = fh * fw;
        let mut patches = Mat::zeros(d, cells);
        for fy in 0..fh {
            for fx in 0..fw {
                let cell = fy * fw + fx;
                for py in 0..p {
                    for px in 0..p {
                        let pix = img.get_pixel((fx * p + px) as u32, (fy * p + py) as u32);
                        for c in 0..3 {
                            patches.data[(c * p * p + py * p + px) * cells + cell] =
                                pix.0[c] as f64 / 255.0;
                        }
                    }
                }
            }
        }
        FeatureMap::from_mat(self.weight.matmul(&patches)?, fh, fw)
    }

    pub fn decode(&self, f: &FeatureMap) -> Result<FloatImage> {
        if f.channels() != self.channels {
            return Err(Error::ShapeMismatch {
                context: "decoding".into(),
                expected: format!("{} channels", self.channels),
                got: f.channels().to_string(),
            });
        }
        let p = self.patch;
        let patches = self.weight.transpose().matmul(&f.to_mat())?;
        let (h, w) = (f.height() * p, f.width() * p);
        let mut img = FloatImage {
            width: w,
            height: h,
            data: vec![0.0; w * h * 3],
        };
        for fy in 0..f.height() {
            for fx in 0..f.width() {
                let cell = fy * f.width() + fx;
                for py in 0..p {
                    for px in 0..p {
                        let (y, x) = (fy * p + py, fx * p + px);
                        for c in 0..3 {
                            img.data[(y * w + x) * 3 + c] =
                                patches.data[(c * p * p + py * p + px) * f.cells() + cell];
                        }
                    }
                }
            }
        }
        Ok(img)
    }
}

/// Unclamped RGB image in [0, 1] nominal range, interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Clamps to [0, 1] and quantizes to 8-bit — the only place values are
    /// clamped.
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize);
            image::Rgb(v.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }
}

fn check_same_dims(a: &FeatureMap, b: &FeatureMap, what: &str) -> Result<()> {
    if a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width() {
        return Err(Error::ShapeMismatch {
            context: what.into(),
            expected: format!("{}x{}x{}", a.channels(), a.height(), a.width()),
            got: format!("{}x{}x{}", b.channels(), b.height(), b.width()),
        });
    }
    Ok(())
}

/// Three-term fusion: alpha1·F_sca + alpha2·F_ssa + F_c. With both weights
/// zero the content passes through bitwise.
pub fn fuse(
    f_sca: &FeatureMap,
    f_ssa: &FeatureMap,
    fc: &FeatureMap,
    alpha1: f64,
    alpha2: f64,
) -> Result<FeatureMap> {
    check_same_dims(fc, f_sca, "fusion")?;
    check_same_dims(fc, f_ssa, "fusion")?;
    if alpha1 == 0.0 && alpha2 == 0.0 {
        return Ok(fc.clone());
    }
    let data = f_sca
        .data()
        .iter()
        .zip(f_ssa.data())
        .zip(fc.data())
        .map(|((&a, &b), &c)| alpha1 * a + alpha2 * b + c)
        .collect();
    FeatureMap::new(fc.channels(), fc.height(), fc.width(), data)
}

/// Four-term fusion blending the renormalized and raw content:
/// alpha1·F_sca + alpha2·F_ssa + b·F_c(renormalized) + (1−b)·F_c(raw).
/// The endpoints b = 1 and b = 0 reduce bitwise to `fuse` on the
/// corresponding content argument.
pub fn fuse_with_content_blend(
    f_sca: &FeatureMap,
    f_ssa: &FeatureMap,
    fc_renorm: &FeatureMap,
    fc_raw: &FeatureMap,
    alpha1: f64,
    alpha2: f64,
    b: f64,
) -> Result<FeatureMap> {
    if b == 1.0 {
        return fuse(f_sca, f_ssa, fc_renorm, alpha1, alpha2);
    }
    if b == 0.0 {
        return fuse(f_sca, f_ssa, fc_raw, alpha1, alpha2);
    }
    check_same_dims(fc_raw, f_sca, "fusion")?;
    check_same_dims(fc_raw, f_ssa, "fusion")?;
    check_same_dims(fc_raw, fc_renorm, "fusion")?;
    let data = f_sca
        .data()
        .iter()
        .zip(f_ssa.data())
        .zip(fc_renorm.data().iter().zip(fc_raw.data()))
        .map(|((&x, &y), (&rn, &rw))| alpha1 * x + alpha2 * y + b * rn + (1.0 - b) * rw)
        .collect();
    FeatureMap::new(fc_raw.channels(), fc_raw.height(), fc_raw.width(), data)
}

/// Elementwise blend t·a + (1−t)·b; the endpoints return the operand bitwise.
pub fn blend_features(t: f64, a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    check_same_dims(a, b, "feature blending")?;
    if t == 1.0 {
        return Ok(a.clone());
    }
    if t == 0.0 {
        return Ok(b.clone());
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| t * x + (1.0 - t) * y)
        .collect();
    FeatureMap::new(a.channels(), a.height(), a.width(), data)
}

/// The input tuple: content image, content semantic map, style image, style
/// semantic map. Each image and its map share a resolution; the two sides
/// need not.
#[derive(Debug, Clone)]
pub struct Quadruple {
    pub content: RgbImage,
    pub content_sem: RgbImage,
    pub style: RgbImage,
    pub style_sem: RgbImage,
}

impl Quadruple {
    fn validate(&self) -> Result<()> {
        if self.content.dimensions() != self.content_sem.dimensions() {
            return Err(Error::ShapeMismatch {
                context: "quadruple (content)".into(),
                expected: format!("{:?} semantic map", self.content.dimensions()),
                got: format!("{:?}", self.content_sem.dimensions()),
            });
        }
        if self.style.dimensions() != self.style_sem.dimensions() {
            return Err(Error::ShapeMismatch {
                context: "quadruple (style)".into(),
                expected: format!("{:?} semantic map", self.style.dimensions()),
                got: format!("{:?}", self.style_sem.dimensions()),
            });
        }
        Ok(())
    }
}

/// Everything the per-pass computation needs, fixed across passes.
struct Prepared {
    f_c: FeatureMap,
    f_s: FeatureMap,
    lc: LabelMap,
    ls: LabelMap,
    norm_emb_c: FeatureMap,
    norm_emb_s: FeatureMap,
    norm_fs: FeatureMap,
}

fn prepare(quad: &Quadruple, cfg: &ScsaConfig, codec: &ToyCodec) -> Result<Prepared> {
    quad.validate()?;
    let f_c = codec.encode(&quad.content).stage("image encoding")?;
    let f_s = codec.encode(&quad.style).stage("image encoding")?;
    let (lc_full, ls_full, _) =
        quantize_semantic_maps(&quad.content_sem, &quad.style_sem, cfg.clusters, cfg.seed)
            .stage("semantic quantization")?;
    let lc = downsample_labels(&lc_full, f_c.height(), f_c.width()).stage("label downsampling")?;
    let ls = downsample_labels(&ls_full, f_s.height(), f_s.width()).stage("label downsampling")?;
    // A region can vanish at feature resolution; the attention masks rely on
    // both sides staying complete, so re-validate here.
    validate_aligned(&lc, &ls).stage("label downsampling")?;
    let emb_c = semantic_embedding(&lc, codec.channels()).stage("semantic embedding")?;
    let emb_s = semantic_embedding(&ls, codec.channels()).stage("semantic embedding")?;
    Ok(Prepared {
        norm_emb_c: normalize_features(&emb_c),
        norm_emb_s: normalize_features(&emb_s),
        norm_fs: normalize_features(&f_s),
        f_c,
        f_s,
        lc,
        ls,
    })
}

/// One pass's attention outcomes plus the content features used as the
/// fusion's renormalized term.
struct PassOutcome {
    sca: AttentionOutcome,
    ssa: AttentionOutcome,
    f_init: FeatureMap,
}

fn run_pass(
    prep: &Prepared,
    cfg: &ScsaConfig,
    p: &ProjectionSet,
    content: &FeatureMap,
    pass: usize,
) -> Result<PassOutcome> {
    // Region renormalization seeds every pass except the later passes of the
    // diffusion flavor, which substitute the pass's own input features.
    let f_init = if cfg.preset == Preset::Diffusion && pass > 0 {
        content.clone()
    } else {
        s_adain(content, &prep.f_s, &prep.lc, &prep.ls, cfg.eps).stage("region renormalization")?
    };
    let norm_init = normalize_features(&f_init);

    // Continuous attention: queries/keys blend semantic embeddings with
    // image features (t1 = 1 collapses to the pure embeddings).
    let q1 = blend_features(cfg.t1, &prep.norm_emb_c, &norm_init)?;
    let k1 = blend_features(cfg.t1, &prep.norm_emb_s, &prep.norm_fs)?;
    let sca = sca_with_inputs(&q1, &k1, &prep.f_s, &prep.lc, &prep.ls, p)
        .stage("continuous attention")?;

    // Sparse attention: the query blends the renormalized features with the
    // pass's raw input (t2 = 1 collapses to the renormalized features).
    let q2 = blend_features(cfg.t2, &norm_init, &normalize_features(content))?;
    let ssa = ssa_with_inputs(&q2, &prep.f_s, &prep.lc, &prep.ls, p, TiePolicy::LowestIndex)
        .stage("sparse attention")?;

    Ok(PassOutcome { sca, ssa, f_init })
}

/// The transform's full result: fused features plus the intermediates needed
/// for evaluation and serialization.
#[derive(Debug, Clone)]
pub struct TransformOutput {
    pub features: FeatureMap,
    pub content_features: FeatureMap,
    pub style_features: FeatureMap,
    pub content_labels: LabelMap,
    pub style_labels: LabelMap,
}

/// Runs the full pipeline and keeps the evaluation intermediates.
pub fn scsa_transform_full(
    quad: &Quadruple,
    cfg: &ScsaConfig,
    codec: &ToyCodec,
    p: &ProjectionSet,
) -> Result<TransformOutput> {
    cfg.validate()?;
    let prep = prepare(quad, cfg, codec)?;
    let mut content = prep.f_c.clone();
    for pass in 0..cfg.passes {
        let out = run_pass(&prep, cfg, p, &content, pass)?;
        // Fusion flavor: the transformer preset blends renormalized and raw
        // content (only its first pass; afterwards the published choice is
        // b = 0), custom does so whenever b is given, and the rest add the
        // pass's renormalized features.
        let b_eff = match cfg.preset {
            Preset::Transformer => {
                if pass == 0 {
                    cfg.b
                } else {
                    Some(0.0)
                }
            }
            Preset::Custom => cfg.b,
            Preset::Cnn | Preset::Diffusion => None,
        };
        content = match b_eff {
            Some(b) => fuse_with_content_blend(
                &out.sca.features,
                &out.ssa.features,
                &out.f_init,
                &content,
                cfg.alpha1,
                cfg.alpha2,
                b,
            )
            .stage("fusion")?,
            None => fuse(
                &out.sca.features,
                &out.ssa.features,
                &out.f_init,
                cfg.alpha1,
                cfg.alpha2,
            )
            .stage("fusion")?,
        };
    }
    Ok(TransformOutput {
        features: content,
        content_features: prep.f_c,
        style_features: prep.f_s,
        content_labels: prep.lc,
        style_labels: prep.ls,
    })
}

/// Runs the full pipeline, returning only the stylized features.
pub fn scsa_transform(
    quad: &Quadruple,
    cfg: &ScsaConfig,
    codec: &ToyCodec,
    p: &ProjectionSet,
) -> Result<FeatureMap> {
    Ok(scsa_transform_full(quad, cfg, codec, p)?.features)
}

/// Transform then decode to an image.
pub fn stylize(
    quad: &Quadruple,
    cfg: &ScsaConfig,
    codec: &ToyCodec,
    p: &ProjectionSet,
) -> Result<RgbImage> {
    let features = scsa_transform(quad, cfg, codec, p)?;
    Ok(codec.decode(&features).stage("image decoding")?.to_rgb8())
}

/// Which attention module's post-softmax weights to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Ua,
    Sca,
    Ssa,
}

/// Post-softmax attention weights of the first pass, for inspection.
pub fn attention_dump(
    quad: &Quadruple,
    cfg: &ScsaConfig,
    codec: &ToyCodec,
    p: &ProjectionSet,
    kind: AttentionKind,
) -> Result<AttentionMatrix> {
    cfg.validate()?;
    if kind == AttentionKind::Ua {
        quad.validate()?;
        let f_c = codec.encode(&quad.content).stage("image encoding")?;
        let f_s = codec.encode(&quad.style).stage("image encoding")?;
        return Ok(universal_attention_full(&f_c, &f_s, p)
            .stage("universal attention")?
            .weights);
    }
    let prep = prepare(quad, cfg, codec)?;
    let out = run_pass(&prep, cfg, p, &prep.f_c.clone(), 0)?;
    Ok(match kind {
        AttentionKind::Sca => out.sca.weights,
        AttentionKind::Ssa => out.ssa.weights,
        AttentionKind::Ua => unreachable!(),
    })
}

/// Deterministic synthetic quadruple for tests, benchmarks, and demos:
/// banded semantic maps (horizontal bands on the content side, vertical on
/// the style side, so every region exists on both sides), bright strongly
/// colored content regions, dark muted style regions, and a little seeded
/// per-pixel jitter so regions carry non-degenerate statistics.
pub fn synthetic_quadruple(size: u32, regions: usize, seed: u64) -> Quadruple {
    const CONTENT_BASES: [[f64; 3]; 4] = [
        [0.95, 0.85, 0.20],
        [0.20, 0.90, 0.95],
        [0.95, 0.30, 0.85],
        [0.55, 0.95, 0.35],
    ];
    const STYLE_BASES: [[f64; 3]; 4] = [
        [0.25, 0.05, 0.05],
        [0.05, 0.10, 0.25],
        [0.05, 0.22, 0.08],
        [0.20, 0.15, 0.05],
    ];
    const SEM_COLORS: [[u8; 3]; 4] = [
        [255, 0, 0],
        [0, 255, 0],
        [0, 0, 255],
        [255, 255, 0],
    ];
    let regions = regions.clamp(1, 4);
    let n = size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = {
        let noise: Vec<f64> = (0..2 * n * n * 3)
            .map(|_| rand::Rng::random_range(&mut rng, -0.04..0.04))
            .collect();
        let mut next = 0usize;
        move || {
            next += 1;
            noise[next - 1]
        }
    };
    let mut paint = |bases: &[[f64; 3]; 4], band_of: &dyn Fn(u32, u32) -> usize| -> RgbImage {
        let mut img = RgbImage::new(size, size);
        for y in 0..size {
            for x in 0..size {
                let base = bases[band_of(x, y)];
                let px = image::Rgb([0, 1, 2].map(|c| {
                    ((base[c] + jitter()).clamp(0.0, 1.0) * 255.0).round() as u8
                }));
                img.put_pixel(x, y, px);
            }
        }
        img
    };
    let content_band = move |_x: u32, y: u32| (y as usize * regions / n).min(regions - 1);
    let style_band = move |x: u32, _y: u32| (x as usize * regions / n).min(regions - 1);
    let content = paint(&CONTENT_BASES, &content_band);
    let style = paint(&STYLE_BASES, &style_band);
    let sem = |band_of: &dyn Fn(u32, u32) -> usize| {
        RgbImage::from_fn(size, size, |x, y| image::Rgb(SEM_COLORS[band_of(x, y)]))
    };
    Quadruple {
        content,
        content_sem: sem(&content_band),
        style,
        style_sem: sem(&style_band),
    }
}
