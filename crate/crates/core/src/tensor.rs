//! Dense numeric substrate: row-major matrices, attention matrices with
//! negative-infinity support, feature tensors, and per-slice statistics.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Magic bytes opening a serialized feature tensor.
pub const FEATURE_MAGIC: &[u8; 6] = b"SCSAF1";

/// Upper bound on deserialized element counts, to reject absurd headers.
const MAX_ELEMS: usize = 1 << 28;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "matrix construction".into(),
                expected: format!("{} values for {rows}x{cols}", rows * cols),
                got: data.len().to_string(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product with a fixed row-major accumulation order, so
    /// repeated runs are bit-identical.
    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::MatDimMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: rhs.rows,
                right_cols: rhs.cols,
            });
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lrow = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..rhs.cols {
                let mut acc = 0.0;
                for (k, &l) in lrow.iter().enumerate() {
                    acc += l * rhs.data[k * rhs.cols + j];
                }
                out.data[i * rhs.cols + j] = acc;
            }
        }
        Ok(out)
    }
}

/// (content cells) x (style cells) score/weight matrix. Entries may be
/// negative infinity before the softmax; afterwards they lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl AttentionMatrix {
    pub fn from_scores(m: Mat) -> AttentionMatrix {
        AttentionMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }

    pub fn into_mat(self) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Numerically stabilized softmax per row. The maximum is taken over the
    /// finite entries only, so negative-infinity entries map to exactly 0 and
    /// a lone surviving entry maps to exactly 1.
    pub fn row_softmax(&self) -> Result<AttentionMatrix> {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut max = f64::NEG_INFINITY;
            for &x in row {
                if x.is_nan() || x == f64::INFINITY {
                    return Err(Error::NonFinite {
                        context: format!("attention scores, row {r}"),
                    });
                }
                if x > max {
                    max = x;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(Error::EmptySemanticCorrespondence { row: r });
            }
            let orow = &mut out.data[r * self.cols..(r + 1) * self.cols];
            let mut sum = 0.0;
            for x in orow.iter_mut() {
                *x = if *x == f64::NEG_INFINITY {
                    0.0
                } else {
                    (*x - max).exp()
                };
                sum += *x;
            }
            // The max entry contributes exp(0) = 1, so sum >= 1.
            for x in orow.iter_mut() {
                *x /= sum;
            }
        }
        Ok(out)
    }
}

/// Dense feature tensor in channel-height-width row-major order. Construction
/// rejects non-finite values, so a stored map is always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<FeatureMap> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch {
                context: "feature map construction".into(),
                expected: "positive dimensions".into(),
                got: format!("{channels}x{height}x{width}"),
            });
        }
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch {
                context: "feature map construction".into(),
                expected: format!("{} values for {channels}x{height}x{width}", channels * height * width),
                got: data.len().to_string(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("feature map value at flat index {pos}"),
            });
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> FeatureMap {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of spatial cells (height x width).
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Callers must keep the map finite; serialization and stage boundaries
    /// re-validate through `new`/`from_mat`.
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Channel vector of one spatial cell (flat index `y * width + x`).
    pub fn cell_vector(&self, cell: usize) -> Vec<f64> {
        (0..self.channels)
            .map(|c| self.data[c * self.cells() + cell])
            .collect()
    }

    /// Reinterprets the tensor as a channels x cells matrix. The memory
    /// layouts coincide, so this is a plain copy.
    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.channels,
            cols: self.cells(),
            data: self.data.clone(),
        }
    }

    /// Inverse of `to_mat`; validates finiteness so every stage that rebuilds
    /// a feature map from matrix arithmetic gets a checked result.
    pub fn from_mat(m: Mat, height: usize, width: usize) -> Result<FeatureMap> {
        if m.cols != height * width {
            return Err(Error::ShapeMismatch {
                context: "matrix to feature map".into(),
                expected: format!("{} columns for {height}x{width}", height * width),
                got: m.cols.to_string(),
            });
        }
        FeatureMap::new(m.rows, height, width, m.data)
    }

    /// Per-channel mean and population standard deviation over the given
    /// spatial cells (flat indices `y * width + x`).
    pub fn slice_stats(&self, cellidx: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        if cellidx.is_empty() {
            return Err(Error::EmptyCellSet);
        }
        let cells = self.cells();
        if let Some(&bad) = cellidx.iter().find(|&&i| i >= cells) {
            return Err(Error::ShapeMismatch {
                context: "slice statistics".into(),
                expected: format!("cell index < {cells}"),
                got: bad.to_string(),
            });
        }
        let n = cellidx.len() as f64;
        let mut mean = vec![0.0; self.channels];
        let mut std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let plane = &self.data[c * cells..(c + 1) * cells];
            let mut sum = 0.0;
            for &i in cellidx {
                sum += plane[i];
            }
            let m = sum / n;
            let mut var = 0.0;
            for &i in cellidx {
                let d = plane[i] - m;
                var += d * d;
            }
            mean[c] = m;
            std[c] = (var / n).sqrt();
        }
        Ok((mean, std))
    }

    /// Serializes as magic, three u32 LE dims, then f32 LE values in storage
    /// order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        for dim in [self.channels, self.height, self.width] {
            let v = u32::try_from(dim)
                .map_err(|_| Error::BadFormat("feature dimension exceeds u32".into()))?;
            w.write_all(&v.to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &x in &self.data {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<FeatureMap> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != FEATURE_MAGIC {
            return Err(Error::BadFormat("not a feature file (bad magic)".into()));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let [channels, height, width] = dims;
        let len = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .filter(|&v| v <= MAX_ELEMS)
            .ok_or_else(|| Error::BadFormat("feature dimensions out of range".into()))?;
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes)?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        FeatureMap::new(channels, height, width, data)
            .map_err(|e| Error::BadFormat(format!("feature file: {e}")))
    }
}

/// Random matrix whose shorter side is orthonormal: Gaussian draws passed
/// through modified Gram-Schmidt with one re-orthogonalization sweep.
/// Degenerate draws are redrawn, so the result is always full rank.
pub(crate) fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let (n_vecs, dim, by_rows) = if rows <= cols {
        (rows, cols, true)
    } else {
        (cols, rows, false)
    };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_vecs);
    while vecs.len() < n_vecs {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for u in &vecs {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= dot * ui;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in v.iter_mut() {
                *x /= norm;
            }
            vecs.push(v);
        }
    }
    let mut m = Mat::zeros(rows, cols);
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if by_rows {
                m.data[i * cols + j] = x;
            } else {
                m.data[j * cols + i] = x;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Mat::new(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity_case() {
        let i = Mat::identity(2);
        let b = Mat::new(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(i.matmul(&b).unwrap().data, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_dot_product() {
        let a = Mat::new(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Mat::new(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data, vec![11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut r = rng(1);
        let a = random_mat(5, 7, &mut r);
        let b = random_mat(7, 3, &mut r);
        let got = a.matmul(&b).unwrap();
        // Independent oracle: saxpy accumulation in i-k-j order, the opposite
        // arrangement from the implementation's per-entry dot products.
        let mut want = vec![0.0; 5 * 3];
        for i in 0..5 {
            for k in 0..7 {
                let l = a.get(i, k);
                for j in 0..3 {
                    want[i * 3 + j] += l * b.get(k, j);
                }
            }
        }
        for (g, w) in got.data.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(4, 5);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("2x3") && msg.contains("4x5"), "{msg}");
    }

    #[test]
    fn matmul_right_identity_is_bitwise() {
        let mut r = rng(2);
        let a = random_mat(4, 4, &mut r);
        let prod = a.matmul(&Mat::identity(4)).unwrap();
        for (g, w) in prod.data.iter().zip(&a.data) {
            assert_eq!(g.to_bits(), w.to_bits());
        }
    }

    #[test]
    fn softmax_symmetric_row() {
        let m = AttentionMatrix::from_scores(Mat::new(1, 2, vec![0.0, 0.0]).unwrap());
        assert_eq!(m.row_softmax().unwrap().data, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_single_finite_entry() {
        let m = AttentionMatrix {
            rows: 1,
            cols: 3,
            data: vec![f64::NEG_INFINITY, 3.0, f64::NEG_INFINITY],
        };
        let s = m.row_softmax().unwrap();
        assert_eq!(s.data, vec![0.0, 1.0, 0.0]);
        assert_eq!(s.data[1].to_bits(), 1.0f64.to_bits());
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let m = AttentionMatrix::from_scores(Mat::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        let s = m.row_softmax().unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for (got, x) in s.data.iter().zip([1.0f64, 2.0, 3.0]) {
            assert!((got - x.exp() / z).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_all_masked_row_errors() {
        let m = AttentionMatrix {
            rows: 1,
            cols: 2,
            data: vec![f64::NEG_INFINITY; 2],
        };
        let msg = m.row_softmax().unwrap_err().to_string();
        assert!(msg.contains("empty semantic correspondence"), "{msg}");
    }

    #[test]
    fn softmax_rejects_nan_scores() {
        let m = AttentionMatrix {
            rows: 1,
            cols: 2,
            data: vec![f64::NAN, 0.0],
        };
        assert!(m.row_softmax().unwrap_err().is_numeric());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = rng(3);
        let mut m = AttentionMatrix::from_scores(random_mat(6, 9, &mut r));
        m.set(2, 4, f64::NEG_INFINITY);
        m.set(5, 0, f64::NEG_INFINITY);
        let s = m.row_softmax().unwrap();
        for row in 0..s.rows {
            let sum: f64 = s.row(row).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(s.row(row).iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert_eq!(s.get(2, 4), 0.0);
        assert_eq!(s.get(5, 0), 0.0);
    }

    #[test]
    fn stats_of_two_cells() {
        let f = FeatureMap::new(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let (mean, std) = f.slice_stats(&[0, 1]).unwrap();
        assert_eq!(mean, vec![2.0]);
        assert_eq!(std, vec![1.0]);
    }

    #[test]
    fn stats_of_single_cell() {
        let f = FeatureMap::new(1, 2, 2, vec![5.0, 1.0, 2.0, 3.0]).unwrap();
        let (mean, std) = f.slice_stats(&[0]).unwrap();
        assert_eq!(mean, vec![5.0]);
        assert_eq!(std, vec![0.0]);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let mut r = rng(4);
        let data: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let f = FeatureMap::new(2, 1, 4, data.clone()).unwrap();
        let (mean, std) = f.slice_stats(&[0, 1, 2, 3]).unwrap();
        // Independent oracle: E[x^2] - E[x]^2 form instead of centered sums.
        for c in 0..2 {
            let vals = &data[c * 4..(c + 1) * 4];
            let m: f64 = vals.iter().sum::<f64>() / 4.0;
            let sq: f64 = vals.iter().map(|x| x * x).sum::<f64>() / 4.0;
            assert!((mean[c] - m).abs() < 1e-9);
            assert!((std[c] - (sq - m * m).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_full_extent_equal_whole_map() {
        let mut r = rng(5);
        let data: Vec<f64> = (0..3 * 4 * 5).map(|_| r.random_range(-2.0..2.0)).collect();
        let f = FeatureMap::new(3, 4, 5, data).unwrap();
        let all: Vec<usize> = (0..f.cells()).collect();
        let (mean, std) = f.slice_stats(&all).unwrap();
        for c in 0..3 {
            let plane = &f.data()[c * 20..(c + 1) * 20];
            let m = plane.iter().sum::<f64>() / 20.0;
            let v = plane.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 20.0;
            assert!((mean[c] - m).abs() < 1e-12);
            assert!((std[c] - v.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_reject_empty_cells() {
        let f = FeatureMap::zeros(1, 1, 1);
        assert!(matches!(f.slice_stats(&[]), Err(Error::EmptyCellSet)));
    }

    #[test]
    fn feature_map_rejects_non_finite() {
        let err = FeatureMap::new(1, 1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(err.is_numeric());
    }

    #[test]
    fn feature_file_round_trip() {
        // Values exactly representable in f32 survive the round trip bitwise.
        let data: Vec<f64> = (0..2 * 3 * 2).map(|i| i as f64 / 256.0 - 0.5).collect();
        let f = FeatureMap::new(2, 3, 2, data).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let g = FeatureMap::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn feature_file_bad_magic() {
        let mut buf = Vec::new();
        FeatureMap::zeros(1, 1, 1).write_to(&mut buf).unwrap();
        buf[0] = b'X';
        let msg = FeatureMap::read_from(&mut buf.as_slice()).unwrap_err().to_string();
        assert!(msg.contains("magic"), "{msg}");
    }

    #[test]
    fn feature_file_truncated() {
        let mut buf = Vec::new();
        FeatureMap::zeros(2, 2, 2).write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(FeatureMap::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn orthonormal_rows_when_wide() {
        let m = random_orthonormal(3, 8, &mut rng(6));
        let gram = m.matmul(&m.transpose()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orthonormal_cols_when_tall() {
        let m = random_orthonormal(8, 3, &mut rng(7));
        let gram = m.transpose().matmul(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() < 1e-9);
            }
        }
    }
}
