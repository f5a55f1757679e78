//! The three attention kernels and their semantic mask modulators: Universal
//! Attention (every query sees every key), Semantic Continuous Attention
//! (uniform within the query's region, zero elsewhere), and Semantic Sparse
//! Attention (a single most-similar key within the region).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::semantics::LabelMap;
use crate::tensor::{random_orthonormal, AttentionMatrix, FeatureMap, Mat};

/// Linear map stored as an out×in weight matrix with an optional bias,
/// applied column-wise to channels×cells feature matrices.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub weight: Mat,
    pub bias: Option<Vec<f64>>,
}

impl LinearMap {
    pub fn new(weight: Mat, bias: Option<Vec<f64>>) -> Result<LinearMap> {
        if let Some(pos) = weight.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("projection weight at flat index {pos}"),
            });
        }
        if let Some(b) = &bias {
            if b.len() != weight.rows {
                return Err(Error::ShapeMismatch {
                    context: "projection bias".into(),
                    expected: format!("{} entries", weight.rows),
                    got: b.len().to_string(),
                });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "projection bias".into(),
                });
            }
        }
        Ok(LinearMap { weight, bias })
    }

    pub fn identity(dim: usize) -> LinearMap {
        LinearMap {
            weight: Mat::identity(dim),
            bias: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    /// Applies to a matrix whose rows are input features (in_dim × n).
    pub fn apply(&self, m: &Mat) -> Result<Mat> {
        let mut out = self.weight.matmul(m)?;
        if let Some(b) = &self.bias {
            for r in 0..out.rows {
                let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
                for x in row.iter_mut() {
                    *x += b[r];
                }
            }
        }
        Ok(out)
    }
}

/// The four projections of one attention module: query, key, value, output.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub f_q: LinearMap,
    pub f_k: LinearMap,
    pub f_v: LinearMap,
    pub f_o: LinearMap,
}

impl ProjectionSet {
    pub fn new(f_q: LinearMap, f_k: LinearMap, f_v: LinearMap, f_o: LinearMap) -> Result<ProjectionSet> {
        if f_q.out_dim() != f_k.out_dim() {
            return Err(Error::ShapeMismatch {
                context: "projection set".into(),
                expected: format!("key output dim {}", f_q.out_dim()),
                got: f_k.out_dim().to_string(),
            });
        }
        if f_o.in_dim() != f_v.out_dim() {
            return Err(Error::ShapeMismatch {
                context: "projection set".into(),
                expected: format!("output projection input dim {}", f_v.out_dim()),
                got: f_o.in_dim().to_string(),
            });
        }
        Ok(ProjectionSet { f_q, f_k, f_v, f_o })
    }

    /// All four maps identity; requires equal channel and attention dims.
    pub fn identity(dim: usize) -> ProjectionSet {
        ProjectionSet {
            f_q: LinearMap::identity(dim),
            f_k: LinearMap::identity(dim),
            f_v: LinearMap::identity(dim),
            f_o: LinearMap::identity(dim),
        }
    }

    /// Deterministic pseudo-random projections with orthonormal short sides,
    /// bias-free. The draw order (q, k, v, o) is part of the format: a seed
    /// always denotes the same projections.
    pub fn seeded(d_in: usize, d_attn: usize, d_out: usize, seed: u64) -> ProjectionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_q = LinearMap {
            weight: random_orthonormal(d_attn, d_in, &mut rng),
            bias: None,
        };
        let f_k = LinearMap {
            weight: random_orthonormal(d_attn, d_in, &mut rng),
            bias: None,
        };
        let f_v = LinearMap {
            weight: random_orthonormal(d_attn, d_in, &mut rng),
            bias: None,
        };
        let f_o = LinearMap {
            weight: random_orthonormal(d_out, d_attn, &mut rng),
            bias: None,
        };
        ProjectionSet { f_q, f_k, f_v, f_o }
    }
}

/// Argmax tie resolution for the sparse mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    #[default]
    LowestIndex,
}

/// Post-softmax attention weights together with the projected features.
#[derive(Debug, Clone)]
pub struct AttentionOutcome {
    pub weights: AttentionMatrix,
    pub features: FeatureMap,
}

/// Per-channel instance normalization over all spatial cells: zero mean,
/// unit standard deviation. A bitwise-constant channel maps to exact zeros
/// (rather than amplifying the rounding noise of its mean), and a vanishing
/// standard deviation is guarded so the division is always defined.
pub fn normalize_features(f: &FeatureMap) -> FeatureMap {
    let cells = f.cells();
    let mut data = f.data().to_vec();
    for c in 0..f.channels() {
        let plane = &mut data[c * cells..(c + 1) * cells];
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in plane.iter() {
            min = min.min(x);
            max = max.max(x);
        }
        if min == max {
            plane.fill(0.0);
            continue;
        }
        let n = cells as f64;
        let mean = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let denom = var.sqrt().max(1e-12);
        for x in plane.iter_mut() {
            *x = (*x - mean) / denom;
        }
    }
    // Deviations are bounded by sqrt(cells) times the guarded std, so the
    // result is finite whenever the input is.
    FeatureMap::new(f.channels(), f.height(), f.width(), data).expect("normalized map is finite")
}

fn check_channels(f: &FeatureMap, want: usize, what: &str) -> Result<()> {
    if f.channels() != want {
        return Err(Error::ShapeMismatch {
            context: what.into(),
            expected: format!("{want} channels"),
            got: f.channels().to_string(),
        });
    }
    Ok(())
}

fn check_label_dims(a: &AttentionMatrix, lc: &LabelMap, ls: &LabelMap) -> Result<()> {
    if a.rows != lc.cells() || a.cols != ls.cells() {
        return Err(Error::ShapeMismatch {
            context: "attention masking".into(),
            expected: format!("{}x{} score matrix", lc.cells(), ls.cells()),
            got: format!("{}x{}", a.rows, a.cols),
        });
    }
    Ok(())
}

/// Raw attention scores Qᵀ⊗K from projected feature matrices.
fn scores(q: &Mat, k: &Mat) -> Result<AttentionMatrix> {
    Ok(AttentionMatrix::from_scores(q.transpose().matmul(k)?))
}

/// Applies post-softmax weights to the value matrix and projects the result
/// back to feature space at the query grid's resolution.
fn project_context(
    weights: &AttentionMatrix,
    v: &Mat,
    f_o: &LinearMap,
    height: usize,
    width: usize,
) -> Result<FeatureMap> {
    let w = Mat {
        rows: weights.rows,
        cols: weights.cols,
        data: weights.data.clone(),
    };
    let context = w.matmul(&v.transpose())?;
    let out = f_o.apply(&context.transpose())?;
    FeatureMap::from_mat(out, height, width)
}

/// Cross-region mask: entries whose query and key labels differ become
/// negative infinity. Rows whose label has no style cells error eagerly, so
/// an all-masked row never reaches the softmax.
pub fn g1_mask(a: &AttentionMatrix, lc: &LabelMap, ls: &LabelMap) -> Result<AttentionMatrix> {
    check_label_dims(a, lc, ls)?;
    let mut present = vec![false; ls.num_labels()];
    for &l in ls.labels() {
        present[l as usize] = true;
    }
    let mut out = a.clone();
    for r in 0..a.rows {
        let lq = lc.at_cell(r);
        if !present[lq as usize] {
            return Err(Error::EmptySemanticCorrespondence { row: r });
        }
        let row = &mut out.data[r * a.cols..(r + 1) * a.cols];
        for (k, x) in row.iter_mut().enumerate() {
            if ls.at_cell(k) != lq {
                *x = f64::NEG_INFINITY;
            }
        }
    }
    Ok(out)
}

/// Sparse mask: per row, only the maximal entry among same-label keys
/// survives (ties resolved by the policy); everything else becomes negative
/// infinity. After softmax each row is exactly one-hot.
pub fn g2_mask(
    b: &AttentionMatrix,
    lc: &LabelMap,
    ls: &LabelMap,
    tie: TiePolicy,
) -> Result<AttentionMatrix> {
    check_label_dims(b, lc, ls)?;
    let TiePolicy::LowestIndex = tie;
    let mut out = b.clone();
    for r in 0..b.rows {
        let lq = lc.at_cell(r);
        let row = &b.data[r * b.cols..(r + 1) * b.cols];
        let mut best: Option<(usize, f64)> = None;
        for (k, &x) in row.iter().enumerate() {
            if ls.at_cell(k) != lq {
                continue;
            }
            // Strict comparison keeps the lowest index on ties.
            match best {
                Some((_, bx)) if x <= bx => {}
                _ => best = Some((k, x)),
            }
        }
        let Some((keep, _)) = best else {
            return Err(Error::EmptySemanticCorrespondence { row: r });
        };
        let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
        for (k, x) in orow.iter_mut().enumerate() {
            if k != keep {
                *x = f64::NEG_INFINITY;
            }
        }
    }
    Ok(out)
}

/// Unmasked baseline: queries from normalized content, keys from normalized
/// style, values from raw style, plus a residual content term.
pub fn universal_attention_full(
    fc: &FeatureMap,
    fs: &FeatureMap,
    p: &ProjectionSet,
) -> Result<AttentionOutcome> {
    check_channels(fc, p.f_q.in_dim(), "universal attention query input")?;
    check_channels(fs, p.f_k.in_dim(), "universal attention key input")?;
    check_channels(fs, p.f_v.in_dim(), "universal attention value input")?;
    if p.f_o.out_dim() != fc.channels() {
        return Err(Error::ShapeMismatch {
            context: "universal attention residual".into(),
            expected: format!("output projection to {} channels", fc.channels()),
            got: p.f_o.out_dim().to_string(),
        });
    }
    let q = p.f_q.apply(&normalize_features(fc).to_mat())?;
    let k = p.f_k.apply(&normalize_features(fs).to_mat())?;
    let v = p.f_v.apply(&fs.to_mat())?;
    let weights = scores(&q, &k)?.row_softmax()?;
    let attended = project_context(&weights, &v, &p.f_o, fc.height(), fc.width())?;
    let mut data = attended.data().to_vec();
    for (x, &c) in data.iter_mut().zip(fc.data()) {
        *x += c;
    }
    let features = FeatureMap::new(fc.channels(), fc.height(), fc.width(), data)?;
    Ok(AttentionOutcome { weights, features })
}

pub fn universal_attention(fc: &FeatureMap, fs: &FeatureMap, p: &ProjectionSet) -> Result<FeatureMap> {
    Ok(universal_attention_full(fc, fs, p)?.features)
}

/// Continuous semantic attention over caller-prepared query/key sources
/// (already normalized, and possibly blended). Values come from the raw
/// style features; no residual is added here.
pub fn sca_with_inputs(
    q_src: &FeatureMap,
    k_src: &FeatureMap,
    fs: &FeatureMap,
    lc: &LabelMap,
    ls: &LabelMap,
    p: &ProjectionSet,
) -> Result<AttentionOutcome> {
    check_channels(q_src, p.f_q.in_dim(), "continuous attention query input")?;
    check_channels(k_src, p.f_k.in_dim(), "continuous attention key input")?;
    check_channels(fs, p.f_v.in_dim(), "continuous attention value input")?;
    let q = p.f_q.apply(&q_src.to_mat())?;
    let k = p.f_k.apply(&k_src.to_mat())?;
    let v = p.f_v.apply(&fs.to_mat())?;
    let raw = scores(&q, &k)?;
    let masked = g1_mask(&raw, lc, ls)?;
    let weights = masked.row_softmax()?;
    let features = project_context(&weights, &v, &p.f_o, q_src.height(), q_src.width())?;
    Ok(AttentionOutcome { weights, features })
}

/// Continuous semantic attention on semantic-map features: queries and keys
/// from the normalized embeddings, values from the raw style features.
pub fn sca(
    fcsem: &FeatureMap,
    fssem: &FeatureMap,
    fs: &FeatureMap,
    lc: &LabelMap,
    ls: &LabelMap,
    p: &ProjectionSet,
) -> Result<FeatureMap> {
    let out = sca_with_inputs(
        &normalize_features(fcsem),
        &normalize_features(fssem),
        fs,
        lc,
        ls,
        p,
    )?;
    Ok(out.features)
}

/// Sparse semantic attention over a caller-prepared query source (already
/// normalized, and possibly blended). Keys come from the normalized style
/// features, values from the raw ones; no residual is added here.
pub fn ssa_with_inputs(
    q_src: &FeatureMap,
    fs: &FeatureMap,
    lc: &LabelMap,
    ls: &LabelMap,
    p: &ProjectionSet,
    tie: TiePolicy,
) -> Result<AttentionOutcome> {
    check_channels(q_src, p.f_q.in_dim(), "sparse attention query input")?;
    check_channels(fs, p.f_k.in_dim(), "sparse attention key input")?;
    check_channels(fs, p.f_v.in_dim(), "sparse attention value input")?;
    let q = p.f_q.apply(&q_src.to_mat())?;
    let k = p.f_k.apply(&normalize_features(fs).to_mat())?;
    let v = p.f_v.apply(&fs.to_mat())?;
    let raw = scores(&q, &k)?;
    let masked = g2_mask(&raw, lc, ls, tie)?;
    let weights = masked.row_softmax()?;
    let features = project_context(&weights, &v, &p.f_o, q_src.height(), q_src.width())?;
    Ok(AttentionOutcome { weights, features })
}

/// Sparse semantic attention with the query taken from the normalized
/// (typically region-renormalized) content features.
pub fn ssa(
    fc: &FeatureMap,
    fs: &FeatureMap,
    lc: &LabelMap,
    ls: &LabelMap,
    p: &ProjectionSet,
    tie: TiePolicy,
) -> Result<FeatureMap> {
    Ok(ssa_with_inputs(&normalize_features(fc), fs, lc, ls, p, tie)?.features)
}
