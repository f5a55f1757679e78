//! Semantic label handling: joint K-Means color quantization of a content and
//! style semantic-map pair, label downsampling, per-label masks, and one-hot
//! embeddings.

use std::collections::HashSet;
use std::io::{Read, Write};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result, Side};
use crate::tensor::FeatureMap;

/// Magic bytes opening a serialized label map.
pub const LABEL_MAGIC: &[u8; 6] = b"SCSAL1";

/// Labels wider than u16 are out of scope.
const MAX_LABELS: usize = u16::MAX as usize;

const MAX_KMEANS_ITERS: usize = 100;

/// Integer semantic label per spatial cell. Content and style maps produced
/// together share one label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_labels: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, num_labels: usize, labels: Vec<u16>) -> Result<LabelMap> {
        if height == 0 || width == 0 || num_labels == 0 {
            return Err(Error::ShapeMismatch {
                context: "label map construction".into(),
                expected: "positive dimensions and label count".into(),
                got: format!("{height}x{width}, {num_labels} labels"),
            });
        }
        if num_labels > MAX_LABELS {
            return Err(Error::InvalidConfig(format!(
                "at most {MAX_LABELS} semantic labels are supported, got {num_labels}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch {
                context: "label map construction".into(),
                expected: format!("{} labels for {height}x{width}", height * width),
                got: labels.len().to_string(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| (l as usize) >= num_labels) {
            return Err(Error::ShapeMismatch {
                context: "label map construction".into(),
                expected: format!("labels < {num_labels}"),
                got: bad.to_string(),
            });
        }
        Ok(LabelMap {
            height,
            width,
            num_labels,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    /// Label at a flat spatial index (`y * width + x`).
    #[inline]
    pub fn at_cell(&self, cell: usize) -> u16 {
        self.labels[cell]
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Flat indices of all cells carrying the given label, in row-major order.
    pub fn cells_with(&self, label: u16) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sorted list of labels that actually occur.
    pub fn present_labels(&self) -> Vec<u16> {
        let mut seen = vec![false; self.num_labels];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..self.num_labels as u16).filter(|&l| seen[l as usize]).collect()
    }

    /// Serializes as magic, three u32 LE (height, width, num_labels), then
    /// u16 LE labels in row-major order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(LABEL_MAGIC)?;
        for dim in [self.height, self.width, self.num_labels] {
            let v = u32::try_from(dim)
                .map_err(|_| Error::BadFormat("label dimension exceeds u32".into()))?;
            w.write_all(&v.to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(self.labels.len() * 2);
        for &l in &self.labels {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<LabelMap> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != LABEL_MAGIC {
            return Err(Error::BadFormat("not a label file (bad magic)".into()));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let [height, width, num_labels] = dims;
        let len = height
            .checked_mul(width)
            .filter(|&v| v <= (1 << 28))
            .ok_or_else(|| Error::BadFormat("label dimensions out of range".into()))?;
        let mut bytes = vec![0u8; len * 2];
        r.read_exact(&mut bytes)?;
        let labels: Vec<u16> = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        LabelMap::new(height, width, num_labels, labels)
            .map_err(|e| Error::BadFormat(format!("label file: {e}")))
    }
}

/// Cluster-index → RGB centroid mapping recorded by quantization, for
/// rendering label maps back to colors.
#[derive(Debug, Clone, Serialize)]
pub struct Palette {
    pub centers: Vec<[f64; 3]>,
}

impl Palette {
    /// Centroids rounded to displayable 8-bit RGB.
    pub fn rgb8(&self) -> Vec<[u8; 3]> {
        self.centers
            .iter()
            .map(|c| c.map(|v| v.round().clamp(0.0, 255.0) as u8))
            .collect()
    }
}

/// Binary region mask; entries are 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

fn nearest_center(p: [f64; 3], centers: &[[f64; 3]]) -> u16 {
    let mut best = 0u16;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        // Strict comparison: ties resolve to the lowest center index.
        if d < best_d {
            best_d = d;
            best = i as u16;
        }
    }
    best
}

/// Joint K-Means over the union of both semantic maps' pixels, so identical
/// colors receive identical labels on both sides. Deterministic for a given
/// seed: the seed picks the first center, the rest come from farthest-point
/// seeding, and Lloyd iterations stop when assignments stabilize (at most
/// 100 rounds). Labels are re-indexed by descending cluster population.
pub fn quantize_semantic_maps(
    csem: &RgbImage,
    ssem: &RgbImage,
    n: usize,
    seed: u64,
) -> Result<(LabelMap, LabelMap, Palette)> {
    if n == 0 {
        return Err(Error::InvalidConfig("cluster count must be at least 1".into()));
    }
    if n > MAX_LABELS {
        return Err(Error::InvalidConfig(format!(
            "at most {MAX_LABELS} clusters are supported, got {n}"
        )));
    }
    if csem.width() == 0 || csem.height() == 0 || ssem.width() == 0 || ssem.height() == 0 {
        return Err(Error::ShapeMismatch {
            context: "semantic map quantization".into(),
            expected: "non-empty images".into(),
            got: "an empty image".into(),
        });
    }

    // Union of pixels, content first, row-major: the fixed order keeps runs
    // bit-reproducible.
    let n_content = (csem.width() * csem.height()) as usize;
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(n_content + (ssem.width() * ssem.height()) as usize);
    for img in [csem, ssem] {
        for p in img.pixels() {
            points.push([p.0[0] as f64, p.0[1] as f64, p.0[2] as f64]);
        }
    }

    let distinct: HashSet<[u8; 3]> = csem
        .pixels()
        .chain(ssem.pixels())
        .map(|p| p.0)
        .collect();
    if n > distinct.len() {
        return Err(Error::TooManyClusters {
            requested: n,
            distinct: distinct.len(),
        });
    }

    // Seeding: the seed draws the first center; each further center is the
    // point farthest from all chosen centers (ties → lowest point index).
    // With n ≤ distinct colors this always yields n distinct centers.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<[f64; 3]> = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < n {
        let mut best = (0usize, -1.0f64);
        for (i, &p) in points.iter().enumerate() {
            let d = centers.iter().map(|&c| dist2(p, c)).fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (i, d);
            }
        }
        centers.push(points[best.0]);
    }

    // Lloyd iterations. The loop shape keeps the final assignment consistent
    // with the final centers whether it converges or hits the iteration cap.
    let assign_all = |centers: &[[f64; 3]]| -> Vec<u16> {
        points.iter().map(|&p| nearest_center(p, centers)).collect()
    };
    let mut assign = assign_all(&centers);
    for _ in 0..MAX_KMEANS_ITERS {
        let mut sums = vec![[0.0f64; 3]; n];
        let mut counts = vec![0usize; n];
        for (&p, &a) in points.iter().zip(&assign) {
            let s = &mut sums[a as usize];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += p[2];
            counts[a as usize] += 1;
        }
        for (i, c) in centers.iter_mut().enumerate() {
            // An emptied cluster keeps its previous center.
            if counts[i] > 0 {
                let k = counts[i] as f64;
                *c = [sums[i][0] / k, sums[i][1] / k, sums[i][2] / k];
            }
        }
        let next = assign_all(&centers);
        if next == assign {
            break;
        }
        assign = next;
    }

    // Re-index labels by descending population (ties → lower old index) so
    // outputs are stable across seeds that find the same clustering.
    let mut counts = vec![0usize; n];
    for &a in &assign {
        counts[a as usize] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(counts[i]), i));
    let mut remap = vec![0u16; n];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new as u16;
    }
    for a in assign.iter_mut() {
        *a = remap[*a as usize];
    }
    let centers: Vec<[f64; 3]> = order.iter().map(|&i| centers[i]).collect();

    let (cpart, spart) = assign.split_at(n_content);
    for label in 0..n as u16 {
        if !cpart.contains(&label) {
            return Err(Error::SemanticCategoryMissing {
                label,
                side: Side::Content,
            });
        }
        if !spart.contains(&label) {
            return Err(Error::SemanticCategoryMissing {
                label,
                side: Side::Style,
            });
        }
    }

    let lc = LabelMap::new(csem.height() as usize, csem.width() as usize, n, cpart.to_vec())?;
    let ls = LabelMap::new(ssem.height() as usize, ssem.width() as usize, n, spart.to_vec())?;
    Ok((lc, ls, Palette { centers }))
}

/// Majority-vote label pooling onto a coarser grid. Each target cell covers
/// the source rectangle `[floor(i·H/th), floor((i+1)·H/th))` per axis; ties
/// break toward the smaller label.
pub fn downsample_labels(l: &LabelMap, target_h: usize, target_w: usize) -> Result<LabelMap> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::ShapeMismatch {
            context: "label downsampling".into(),
            expected: "positive target dimensions".into(),
            got: format!("{target_h}x{target_w}"),
        });
    }
    if target_h > l.height() || target_w > l.width() {
        return Err(Error::ShapeMismatch {
            context: "label downsampling".into(),
            expected: format!("target within {}x{}", l.height(), l.width()),
            got: format!("{target_h}x{target_w}"),
        });
    }
    let (h, w, n) = (l.height(), l.width(), l.num_labels());
    let mut out = Vec::with_capacity(target_h * target_w);
    let mut counts = vec![0usize; n];
    for ty in 0..target_h {
        let y0 = ty * h / target_h;
        let y1 = (ty + 1) * h / target_h;
        for tx in 0..target_w {
            let x0 = tx * w / target_w;
            let x1 = (tx + 1) * w / target_w;
            counts.iter_mut().for_each(|c| *c = 0);
            for y in y0..y1 {
                for x in x0..x1 {
                    counts[l.get(y, x) as usize] += 1;
                }
            }
            // Ascending scan with strict comparison → smaller label on ties.
            let mut best = 0u16;
            let mut best_count = 0usize;
            for (label, &c) in counts.iter().enumerate() {
                if c > best_count {
                    best_count = c;
                    best = label as u16;
                }
            }
            out.push(best);
        }
    }
    LabelMap::new(target_h, target_w, n, out)
}

/// One binary mask per label; the masks partition the grid.
pub fn masks_from_labels(l: &LabelMap) -> Vec<Mask> {
    (0..l.num_labels() as u16)
        .map(|label| Mask {
            height: l.height(),
            width: l.width(),
            data: l.labels().iter().map(|&v| u8::from(v == label)).collect(),
        })
        .collect()
}

/// One-hot embedding of a label map: each cell's channel vector indicates its
/// label, so the embedding is exactly constant within every region.
pub fn semantic_embedding(l: &LabelMap, channels: usize) -> Result<FeatureMap> {
    if channels < l.num_labels() {
        return Err(Error::ChannelsTooFew {
            channels,
            num_labels: l.num_labels(),
        });
    }
    let cells = l.cells();
    let mut data = vec![0.0; channels * cells];
    for (i, &label) in l.labels().iter().enumerate() {
        data[label as usize * cells + i] = 1.0;
    }
    FeatureMap::new(channels, l.height(), l.width(), data)
}

/// Checks the aligned-pair invariant the attention masks rely on: the two
/// maps share a vocabulary and every label occurs on both sides.
pub fn validate_aligned(lc: &LabelMap, ls: &LabelMap) -> Result<()> {
    if lc.num_labels() != ls.num_labels() {
        return Err(Error::ShapeMismatch {
            context: "aligned label maps".into(),
            expected: format!("{} labels on both sides", lc.num_labels()),
            got: ls.num_labels().to_string(),
        });
    }
    let mut seen_c = vec![false; lc.num_labels()];
    let mut seen_s = vec![false; ls.num_labels()];
    for &l in lc.labels() {
        seen_c[l as usize] = true;
    }
    for &l in ls.labels() {
        seen_s[l as usize] = true;
    }
    for label in 0..lc.num_labels() {
        if !seen_c[label] {
            return Err(Error::SemanticCategoryMissing {
                label: label as u16,
                side: Side::Content,
            });
        }
        if !seen_s[label] {
            return Err(Error::SemanticCategoryMissing {
                label: label as u16,
                side: Side::Style,
            });
        }
    }
    Ok(())
}

fn png_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::BadFormat(format!("png encode: {other}")),
    }
}

/// Renders a label map as a PNG using the palette's colors: palette-indexed
/// for ≤256 labels, truecolor above that.
pub fn write_label_png<W: Write>(l: &LabelMap, palette: &Palette, w: W) -> Result<()> {
    if palette.centers.len() != l.num_labels() {
        return Err(Error::ShapeMismatch {
            context: "label rendering".into(),
            expected: format!("{} palette entries", l.num_labels()),
            got: palette.centers.len().to_string(),
        });
    }
    let mut enc = png::Encoder::new(w, l.width() as u32, l.height() as u32);
    enc.set_depth(png::BitDepth::Eight);
    let rgb = palette.rgb8();
    if l.num_labels() <= 256 {
        enc.set_color(png::ColorType::Indexed);
        enc.set_palette(rgb.concat());
        let mut writer = enc.write_header().map_err(png_err)?;
        let data: Vec<u8> = l.labels().iter().map(|&v| v as u8).collect();
        writer.write_image_data(&data).map_err(png_err)?;
    } else {
        enc.set_color(png::ColorType::Rgb);
        let mut writer = enc.write_header().map_err(png_err)?;
        let mut data = Vec::with_capacity(l.cells() * 3);
        for &v in l.labels() {
            data.extend_from_slice(&rgb[v as usize]);
        }
        writer.write_image_data(&data).map_err(png_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use rand::Rng;

    fn two_tone(w: u32, h: u32, split: u32, a: [u8; 3], b: [u8; 3]) -> RgbImage {
        RgbImage::from_fn(w, h, |x, _| if x < split { Rgb(a) } else { Rgb(b) })
    }

    #[test]
    fn black_white_pair_partitions_by_color() {
        let c = two_tone(4, 4, 2, [0, 0, 0], [255, 255, 255]);
        let s = two_tone(4, 4, 3, [255, 255, 255], [0, 0, 0]);
        let (lc, ls, pal) = quantize_semantic_maps(&c, &s, 2, 0).unwrap();
        // Identical colors get identical labels across maps.
        let black = lc.get(0, 0);
        let white = lc.get(0, 3);
        assert_ne!(black, white);
        assert_eq!(ls.get(0, 0), white);
        assert_eq!(ls.get(0, 3), black);
        // Every cell belongs to its color's cluster.
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(lc.get(y, x), if x < 2 { black } else { white });
            }
        }
        assert_eq!(pal.centers.len(), 2);
    }

    #[test]
    fn single_cluster_flattens_everything() {
        let c = RgbImage::from_pixel(3, 3, Rgb([10, 20, 30]));
        let s = two_tone(3, 3, 1, [0, 0, 0], [200, 200, 200]);
        let (lc, ls, _) = quantize_semantic_maps(&c, &s, 1, 7).unwrap();
        assert!(lc.labels().iter().all(|&l| l == 0));
        assert!(ls.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn four_colors_match_nearest_centroid_oracle() {
        let colors = [[0u8, 0, 0], [255, 0, 0], [0, 255, 0], [0, 0, 255]];
        let img = |rot: usize| {
            RgbImage::from_fn(8, 8, move |x, y| {
                let q = (y as usize / 4) * 2 + (x as usize / 4);
                Rgb(colors[(q + rot) % 4])
            })
        };
        let (lc, ls, pal) = quantize_semantic_maps(&img(0), &img(1), 4, 3).unwrap();
        // Well-separated colors: converged assignment must equal the
        // brute-force nearest-centroid rule on the returned centroids.
        for (map, src) in [(&lc, img(0)), (&ls, img(1))] {
            for (x, y, p) in src.enumerate_pixels() {
                let pt = [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64];
                let want = nearest_center(pt, &pal.centers);
                assert_eq!(map.get(y as usize, x as usize), want);
            }
        }
    }

    #[test]
    fn labels_ordered_by_population() {
        // 12 black pixels vs 4 white on the content side, balanced style:
        // black must be label 0.
        let c = two_tone(4, 4, 3, [0, 0, 0], [255, 255, 255]);
        let s = two_tone(4, 4, 2, [0, 0, 0], [255, 255, 255]);
        let (lc, _, pal) = quantize_semantic_maps(&c, &s, 2, 0).unwrap();
        assert_eq!(lc.get(0, 0), 0);
        assert!(pal.centers[0][0] < 1.0);
    }

    #[test]
    fn too_many_clusters_errors() {
        let c = two_tone(4, 4, 2, [0, 0, 0], [255, 255, 255]);
        let err = quantize_semantic_maps(&c, &c, 3, 0).unwrap_err();
        assert!(matches!(err, Error::TooManyClusters { requested: 3, distinct: 2 }));
    }

    #[test]
    fn one_sided_color_errors_with_side() {
        let c = two_tone(4, 4, 2, [0, 0, 0], [255, 255, 255]);
        let s = RgbImage::from_pixel(4, 4, Rgb([0, 0, 0]));
        let err = quantize_semantic_maps(&c, &s, 2, 0).unwrap_err();
        match err {
            Error::SemanticCategoryMissing { side, .. } => assert_eq!(side, Side::Style),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn quantization_is_deterministic() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let img: RgbImage = RgbImage::from_fn(16, 16, |_, _| {
            Rgb([r.random::<u8>() / 64 * 64, r.random::<u8>() / 64 * 64, 0])
        });
        let a = quantize_semantic_maps(&img, &img, 3, 42).unwrap();
        let b = quantize_semantic_maps(&img, &img, 3, 42).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn downsample_identity() {
        let l = LabelMap::new(2, 3, 2, vec![0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(downsample_labels(&l, 2, 3).unwrap(), l);
    }

    #[test]
    fn downsample_majority() {
        let l = LabelMap::new(2, 2, 2, vec![0, 0, 0, 1]).unwrap();
        let d = downsample_labels(&l, 1, 1).unwrap();
        assert_eq!(d.labels(), &[0]);
    }

    #[test]
    fn downsample_tie_takes_smaller_label() {
        let l = LabelMap::new(2, 2, 3, vec![2, 2, 1, 1]).unwrap();
        let d = downsample_labels(&l, 1, 1).unwrap();
        assert_eq!(d.labels(), &[1]);
    }

    #[test]
    fn downsample_matches_histogram_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(13);
        let labels: Vec<u16> = (0..64).map(|_| r.random_range(0..3)).collect();
        let l = LabelMap::new(8, 8, 3, labels).unwrap();
        let d = downsample_labels(&l, 4, 4).unwrap();
        for ty in 0..4 {
            for tx in 0..4 {
                let mut hist = [0usize; 3];
                for y in ty * 2..ty * 2 + 2 {
                    for x in tx * 2..tx * 2 + 2 {
                        hist[l.get(y, x) as usize] += 1;
                    }
                }
                let want = (0..3).max_by_key(|&i| (hist[i], 2usize.wrapping_sub(i))).unwrap();
                assert_eq!(d.get(ty, tx) as usize, want, "cell {ty},{tx}");
            }
        }
    }

    #[test]
    fn masks_match_labels() {
        let l = LabelMap::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
        let m = masks_from_labels(&l);
        assert_eq!(m[0].data, vec![1, 0, 0, 0]);
        assert_eq!(m[1].data, vec![0, 1, 1, 1]);
    }

    #[test]
    fn single_label_mask_is_all_ones() {
        let l = LabelMap::new(2, 3, 1, vec![0; 6]).unwrap();
        let m = masks_from_labels(&l);
        assert_eq!(m.len(), 1);
        assert!(m[0].data.iter().all(|&v| v == 1));
    }

    #[test]
    fn masks_partition_the_grid() {
        let mut r = ChaCha8Rng::seed_from_u64(17);
        let labels: Vec<u16> = (0..30).map(|_| r.random_range(0..4)).collect();
        let l = LabelMap::new(5, 6, 4, labels).unwrap();
        let masks = masks_from_labels(&l);
        for cell in 0..30 {
            let total: u8 = masks.iter().map(|m| m.data[cell]).sum();
            assert_eq!(total, 1);
        }
    }

    #[test]
    fn embedding_is_one_hot() {
        let l = LabelMap::new(1, 2, 2, vec![0, 1]).unwrap();
        let f = semantic_embedding(&l, 2).unwrap();
        assert_eq!(f.cell_vector(0), vec![1.0, 0.0]);
        assert_eq!(f.cell_vector(1), vec![0.0, 1.0]);
    }

    #[test]
    fn embedding_of_uniform_map_is_constant() {
        let l = LabelMap::new(2, 2, 1, vec![0; 4]).unwrap();
        let f = semantic_embedding(&l, 3).unwrap();
        for cell in 1..4 {
            assert_eq!(f.cell_vector(cell), f.cell_vector(0));
        }
    }

    #[test]
    fn embedding_region_variance_is_zero() {
        let mut r = ChaCha8Rng::seed_from_u64(19);
        let labels: Vec<u16> = (0..36).map(|_| r.random_range(0..3)).collect();
        let l = LabelMap::new(6, 6, 3, labels).unwrap();
        let f = semantic_embedding(&l, 5).unwrap();
        for label in 0..3u16 {
            let cells = l.cells_with(label);
            let (_, std) = f.slice_stats(&cells).unwrap();
            assert!(std.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn embedding_needs_enough_channels() {
        let l = LabelMap::new(1, 2, 2, vec![0, 1]).unwrap();
        assert!(matches!(
            semantic_embedding(&l, 1),
            Err(Error::ChannelsTooFew { channels: 1, num_labels: 2 })
        ));
    }

    #[test]
    fn label_file_round_trip() {
        let l = LabelMap::new(2, 3, 4, vec![0, 1, 2, 3, 0, 1]).unwrap();
        let mut buf = Vec::new();
        l.write_to(&mut buf).unwrap();
        assert_eq!(LabelMap::read_from(&mut buf.as_slice()).unwrap(), l);
    }

    #[test]
    fn label_file_bad_magic() {
        let l = LabelMap::new(1, 1, 1, vec![0]).unwrap();
        let mut buf = Vec::new();
        l.write_to(&mut buf).unwrap();
        buf[5] = b'9';
        assert!(LabelMap::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn aligned_validation_catches_missing_side() {
        let lc = LabelMap::new(1, 2, 2, vec![0, 1]).unwrap();
        let ls = LabelMap::new(1, 2, 2, vec![0, 0]).unwrap();
        assert!(validate_aligned(&lc, &lc).is_ok());
        match validate_aligned(&lc, &ls).unwrap_err() {
            Error::SemanticCategoryMissing { label: 1, side } => assert_eq!(side, Side::Style),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn indexed_png_written() {
        let l = LabelMap::new(2, 2, 2, vec![0, 1, 1, 0]).unwrap();
        let pal = Palette {
            centers: vec![[0.0, 0.0, 0.0], [255.0, 255.0, 255.0]],
        };
        let mut buf = Vec::new();
        write_label_png(&l, &pal, &mut buf).unwrap();
        assert_eq!(&buf[1..4], b"PNG");
    }
}
