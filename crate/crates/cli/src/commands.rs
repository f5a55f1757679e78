//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;

use scsa_core::{
    attention_dump, quantize_semantic_maps, scsa_transform_full, semantic_style_loss,
    write_label_png, AttentionKind, Error, FeatureMap, LabelMap, Preset, ProjectionSet, Quadruple,
    Result, ScsaConfig, StageExt, ToyCodec,
};

use crate::config::{self, Resolved, TuningFlags};

/// Honors SCSA_THREADS as a cap on worker threads; unset means machine
/// parallelism.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SCSA_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            Error::InvalidConfig(format!("SCSA_THREADS must be a positive integer, got '{v}'"))
        })?;
        if n == 0 {
            return Err(Error::InvalidConfig(
                "SCSA_THREADS must be a positive integer, got '0'".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn open_image(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(Error::from)
        .stage(&format!("loading {}", path.display()))?
        .to_rgb8())
}

fn load_quadruple(
    content: &Path,
    content_sem: &Path,
    style: &Path,
    style_sem: &Path,
) -> Result<Quadruple> {
    Ok(Quadruple {
        content: open_image(content)?,
        content_sem: open_image(content_sem)?,
        style: open_image(style)?,
        style_sem: open_image(style_sem)?,
    })
}

fn build_codec(r: &Resolved) -> Result<ToyCodec> {
    ToyCodec::new_seeded(r.patch_size, r.channels, r.cfg.seed)
}

fn build_proj(r: &Resolved) -> ProjectionSet {
    if r.identity_proj {
        ProjectionSet::identity(r.channels)
    } else {
        ProjectionSet::seeded(r.channels, r.channels, r.channels, r.cfg.seed)
    }
}

fn write_features(f: &FeatureMap, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_features(path: &Path) -> Result<FeatureMap> {
    FeatureMap::read_from(&mut BufReader::new(File::open(path)?))
        .stage(&format!("reading {}", path.display()))
}

fn write_labels(l: &LabelMap, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    l.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<LabelMap> {
    LabelMap::read_from(&mut BufReader::new(File::open(path)?))
        .stage(&format!("reading {}", path.display()))
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(Error::from)
        .stage(&format!("writing {}", path.display()))
}

#[derive(clap::Args)]
pub struct SegmentArgs {
    /// Content-side semantic map image.
    #[arg(long)]
    content_sem: PathBuf,
    /// Style-side semantic map image.
    #[arg(long)]
    style_sem: PathBuf,
    /// Number of semantic regions to quantize to.
    #[arg(long)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the label previews, label maps, and palette.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn segment(a: SegmentArgs) -> Result<()> {
    let content_sem = open_image(&a.content_sem)?;
    let style_sem = open_image(&a.style_sem)?;
    let (lc, ls, palette) = quantize_semantic_maps(&content_sem, &style_sem, a.clusters, a.seed)
        .stage("semantic quantization")?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_label_png(
        &lc,
        &palette,
        BufWriter::new(File::create(a.out_dir.join("content_labels.png"))?),
    )?;
    write_label_png(
        &ls,
        &palette,
        BufWriter::new(File::create(a.out_dir.join("style_labels.png"))?),
    )?;
    write_labels(&lc, &a.out_dir.join("content_labels.scsal"))?;
    write_labels(&ls, &a.out_dir.join("style_labels.scsal"))?;
    let mut json = serde_json::to_string_pretty(&palette)
        .map_err(|e| Error::BadFormat(e.to_string()))?;
    json.push('\n');
    std::fs::write(a.out_dir.join("palette.json"), json)?;
    eprintln!(
        "segmented into {} regions; wrote 5 files to {}",
        palette.centers.len(),
        a.out_dir.display()
    );
    Ok(())
}

#[derive(clap::Args)]
pub struct TransferArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    content_sem: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    style_sem: PathBuf,
    #[command(flatten)]
    tuning: TuningFlags,
    /// Output image path.
    #[arg(long)]
    out: PathBuf,
    /// Directory for feature/label dumps usable by the ssl subcommand.
    #[arg(long)]
    dump_features: Option<PathBuf>,
}

pub fn transfer(a: TransferArgs) -> Result<()> {
    let r = config::resolve(&a.tuning, Preset::Cnn)?;
    let quad = load_quadruple(&a.content, &a.content_sem, &a.style, &a.style_sem)?;
    let codec = build_codec(&r)?;
    let proj = build_proj(&r);
    let out = scsa_transform_full(&quad, &r.cfg, &codec, &proj)?;
    let img = codec.decode(&out.features).stage("image decoding")?.to_rgb8();
    save_png(&img, &a.out)?;
    if let Some(dir) = &a.dump_features {
        std::fs::create_dir_all(dir)?;
        write_features(&out.features, &dir.join("out_features.scsaf"))?;
        write_features(&out.style_features, &dir.join("style_features.scsaf"))?;
        write_labels(&out.content_labels, &dir.join("out_labels.scsal"))?;
        write_labels(&out.style_labels, &dir.join("style_labels.scsal"))?;
        eprintln!("dumped features and labels to {}", dir.display());
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

#[derive(clap::Args)]
pub struct SslArgs {
    /// Stylized feature map (SCSAF1).
    #[arg(long)]
    stylized_features: PathBuf,
    /// Style feature map (SCSAF1).
    #[arg(long)]
    style_features: PathBuf,
    /// Label map aligned with the stylized features (SCSAL1).
    #[arg(long)]
    labels_out: PathBuf,
    /// Label map aligned with the style features (SCSAL1).
    #[arg(long)]
    labels_style: PathBuf,
}

pub fn ssl(a: SslArgs) -> Result<()> {
    let f_out = read_features(&a.stylized_features)?;
    let f_s = read_features(&a.style_features)?;
    let l_out = read_labels(&a.labels_out)?;
    let l_s = read_labels(&a.labels_style)?;
    let report = semantic_style_loss(&f_out, &f_s, &l_out, &l_s)?;
    for label in &report.skipped {
        eprintln!("warning: region {label} is present on only one side; skipped");
    }
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::BadFormat(e.to_string()))?;
    println!("{json}");
    Ok(())
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Which {
    Ua,
    Sca,
    Ssa,
}

#[derive(clap::Args)]
pub struct DumpAttnArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    content_sem: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    style_sem: PathBuf,
    #[command(flatten)]
    tuning: TuningFlags,
    /// Attention module to dump.
    #[arg(long, value_enum)]
    which: Which,
    /// Output path (SCSAF1, 1 x queries x keys).
    #[arg(long)]
    out: PathBuf,
}

pub fn dump_attn(a: DumpAttnArgs) -> Result<()> {
    let r = config::resolve(&a.tuning, Preset::Cnn)?;
    let quad = load_quadruple(&a.content, &a.content_sem, &a.style, &a.style_sem)?;
    let codec = build_codec(&r)?;
    let proj = build_proj(&r);
    let kind = match a.which {
        Which::Ua => AttentionKind::Ua,
        Which::Sca => AttentionKind::Sca,
        Which::Ssa => AttentionKind::Ssa,
    };
    let weights = attention_dump(&quad, &r.cfg, &codec, &proj, kind)?;
    let map = FeatureMap::new(1, weights.rows, weights.cols, weights.data)?;
    write_features(&map, &a.out)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

#[derive(clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    content_sem: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    style_sem: PathBuf,
    #[command(flatten)]
    tuning: TuningFlags,
    /// Grid axis `key=v1,v2,...` (repeatable). Keys: alpha1, alpha2, b,
    /// t1, t2. Cells take the cartesian product in the order given.
    #[arg(long = "grid", required = true)]
    grid: Vec<String>,
    /// Directory for cell images and the contact sheet.
    #[arg(long)]
    out_dir: PathBuf,
}

const GRID_KEYS: [&str; 5] = ["alpha1", "alpha2", "b", "t1", "t2"];

/// One sweep axis: the key plus parallel value/raw-spelling lists.
struct Axis {
    key: String,
    values: Vec<f64>,
    raws: Vec<String>,
}

fn parse_grid(axis_args: &[String]) -> Result<Vec<Axis>> {
    let mut axes: Vec<Axis> = Vec::new();
    for arg in axis_args {
        let (key, list) = arg.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("grid axis '{arg}' is not of the form key=v1,v2"))
        })?;
        if !GRID_KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!(
                "unknown grid axis '{key}' (expected one of {})",
                GRID_KEYS.join(", ")
            )));
        }
        if axes.iter().any(|a| a.key == key) {
            return Err(Error::InvalidConfig(format!("duplicate grid axis '{key}'")));
        }
        let raws: Vec<String> = list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect();
        if raws.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "grid axis '{key}' has an empty value list"
            )));
        }
        let values = raws
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("grid value '{s}' for '{key}' is not a number"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        axes.push(Axis {
            key: key.to_owned(),
            values,
            raws,
        });
    }
    Ok(axes)
}

fn apply_axis(cfg: &mut ScsaConfig, key: &str, value: f64) {
    match key {
        "alpha1" => cfg.alpha1 = value,
        "alpha2" => cfg.alpha2 = value,
        "b" => cfg.b = Some(value),
        "t1" => cfg.t1 = value,
        "t2" => cfg.t2 = value,
        _ => unreachable!("axis keys are validated at parse time"),
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    // Sweeps default to the custom preset so pinned presets don't reject
    // every off-pin cell.
    let r = config::resolve(&a.tuning, Preset::Custom)?;
    let axes = parse_grid(&a.grid)?;
    let quad = load_quadruple(&a.content, &a.content_sem, &a.style, &a.style_sem)?;
    let codec = build_codec(&r)?;
    let proj = build_proj(&r);

    // Cell index -> per-axis value index, first axis slowest.
    let counts: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    let total: usize = counts.iter().product();
    let cell_indices = |mut cell: usize| -> Vec<usize> {
        let mut idx = vec![0; counts.len()];
        for (i, &count) in counts.iter().enumerate().rev() {
            idx[i] = cell % count;
            cell /= count;
        }
        idx
    };

    let mut configs = Vec::with_capacity(total);
    for cell in 0..total {
        let idx = cell_indices(cell);
        let mut cfg = r.cfg.clone();
        let mut name_parts = Vec::with_capacity(axes.len());
        for (axis, &i) in axes.iter().zip(&idx) {
            apply_axis(&mut cfg, &axis.key, axis.values[i]);
            name_parts.push(format!("{}={}", axis.key, axis.raws[i]));
        }
        cfg.validate()?;
        configs.push((name_parts.join("_"), cfg));
    }

    let rendered: Vec<(String, RgbImage)> = configs
        .par_iter()
        .map(|(name, cfg)| -> Result<(String, RgbImage)> {
            let out = scsa_transform_full(&quad, cfg, &codec, &proj)?;
            let img = codec.decode(&out.features).stage("image decoding")?.to_rgb8();
            Ok((name.clone(), img))
        })
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(&a.out_dir)?;
    for (name, img) in &rendered {
        save_png(img, &a.out_dir.join(format!("{name}.png")))?;
    }

    // Contact sheet: first axis runs down the rows, remaining cells run
    // across the columns in cartesian order.
    let rows = counts[0];
    let cols = total / rows;
    let (cw, ch) = rendered[0].1.dimensions();
    let mut sheet = RgbImage::new(cols as u32 * cw, rows as u32 * ch);
    for (cell, (_, img)) in rendered.iter().enumerate() {
        let (row, col) = (cell / cols, cell % cols);
        for (x, y, p) in img.enumerate_pixels() {
            sheet.put_pixel(col as u32 * cw + x, row as u32 * ch + y, *p);
        }
    }
    save_png(&sheet, &a.out_dir.join("sheet.png"))?;
    eprintln!(
        "wrote {total} cell images and sheet.png to {}",
        a.out_dir.display()
    );
    Ok(())
}
