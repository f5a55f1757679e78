//! Semantic adaptive instance normalization: each content semantic region is
//! re-statisticked to its style counterpart, regions never mixing.

use crate::error::{Error, Result};
use crate::semantics::LabelMap;
use crate::tensor::FeatureMap;

/// Per-channel statistics of one semantic region.
#[derive(Debug, Clone)]
pub struct RegionStats {
    pub label: u16,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn check_dims(f: &FeatureMap, l: &LabelMap, what: &str) -> Result<()> {
    if f.height() != l.height() || f.width() != l.width() {
        return Err(Error::ShapeMismatch {
            context: what.into(),
            expected: format!("labels at {}x{}", f.height(), f.width()),
            got: format!("{}x{}", l.height(), l.width()),
        });
    }
    Ok(())
}

/// Statistics of every label present in the map, ascending by label.
pub fn region_stats(f: &FeatureMap, l: &LabelMap) -> Result<Vec<RegionStats>> {
    check_dims(f, l, "region statistics")?;
    l.present_labels()
        .into_iter()
        .map(|label| {
            let (mean, std) = f.slice_stats(&l.cells_with(label))?;
            Ok(RegionStats { label, mean, std })
        })
        .collect()
}

/// Region-wise AdaIN: for each label, content cells are normalized by their
/// region's statistics (content std guarded by `eps`) and re-scaled to the
/// style region's. A single-cell content region lands exactly on the style
/// mean, since its guarded normalization is identically zero.
pub fn s_adain(
    fc: &FeatureMap,
    fs: &FeatureMap,
    lc: &LabelMap,
    ls: &LabelMap,
    eps: f64,
) -> Result<FeatureMap> {
    check_dims(fc, lc, "region normalization (content)")?;
    check_dims(fs, ls, "region normalization (style)")?;
    if fc.channels() != fs.channels() {
        return Err(Error::ShapeMismatch {
            context: "region normalization".into(),
            expected: format!("{} style channels", fc.channels()),
            got: fs.channels().to_string(),
        });
    }
    let channels = fc.channels();
    let cells = fc.cells();
    let mut data = fc.data().to_vec();
    for label in lc.present_labels() {
        let ccells = lc.cells_with(label);
        let scells = ls.cells_with(label);
        if scells.is_empty() {
            return Err(Error::UnmatchedSemanticRegion { label });
        }
        let (cmean, cstd) = fc.slice_stats(&ccells)?;
        let (smean, sstd) = fs.slice_stats(&scells)?;
        for c in 0..channels {
            let denom = cstd[c] + eps;
            let plane = &mut data[c * cells..(c + 1) * cells];
            for &i in &ccells {
                plane[i] = (plane[i] - cmean[c]) / denom * sstd[c] + smean[c];
            }
        }
    }
    FeatureMap::new(channels, fc.height(), fc.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-5;

    fn random_map(channels: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..channels * h * w).map(|_| r.random_range(-3.0..3.0)).collect();
        FeatureMap::new(channels, h, w, data).unwrap()
    }

    fn random_labels(h: usize, w: usize, n: usize, seed: u64) -> LabelMap {
        // Cell i of the first n cells gets label i, so every label occurs.
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let labels = (0..h * w)
            .map(|i| if i < n { i as u16 } else { r.random_range(0..n as u16) })
            .collect();
        LabelMap::new(h, w, n, labels).unwrap()
    }

    #[test]
    fn identity_pair_is_fixed_point() {
        // The residual error is |x-mean|*eps/(std+eps), so the bound scales
        // with eps; 1e-8 keeps it far below the 1e-5 tolerance.
        let f = random_map(3, 4, 4, 1);
        let l = random_labels(4, 4, 2, 2);
        let out = s_adain(&f, &f, &l, &l, 1e-8).unwrap();
        for (a, b) in out.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn hand_evaluated_region() {
        // Content cells [1,3]: mean 2, std 1. Style cells [-2,2]: mean 0,
        // std 2. With eps=0 the output is (x-2)/1*2+0 = [-2,2].
        let fc = FeatureMap::new(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let fs = FeatureMap::new(1, 1, 2, vec![-2.0, 2.0]).unwrap();
        let l = LabelMap::new(1, 2, 1, vec![0, 0]).unwrap();
        let out = s_adain(&fc, &fs, &l, &l, 0.0).unwrap();
        assert_eq!(out.data(), &[-2.0, 2.0]);
    }

    #[test]
    fn output_regions_carry_style_statistics() {
        let fc = random_map(2, 6, 6, 3);
        let fs = random_map(2, 6, 6, 4);
        let lc = random_labels(6, 6, 3, 5);
        let ls = random_labels(6, 6, 3, 6);
        let out = s_adain(&fc, &fs, &lc, &ls, EPS).unwrap();
        for label in 0..3u16 {
            let (omean, ostd) = out.slice_stats(&lc.cells_with(label)).unwrap();
            let (smean, sstd) = fs.slice_stats(&ls.cells_with(label)).unwrap();
            for c in 0..2 {
                assert!((omean[c] - smean[c]).abs() < 1e-5);
                assert!((ostd[c] - sstd[c]).abs() < 1e-5 * (1.0 + sstd[c]));
            }
        }
    }

    #[test]
    fn single_cell_region_gets_style_mean() {
        let fc = FeatureMap::new(1, 1, 3, vec![7.0, 1.0, 2.0]).unwrap();
        let fs = FeatureMap::new(1, 1, 3, vec![4.0, 10.0, 20.0]).unwrap();
        let lc = LabelMap::new(1, 3, 2, vec![0, 1, 1]).unwrap();
        let ls = LabelMap::new(1, 3, 2, vec![0, 1, 1]).unwrap();
        let out = s_adain(&fc, &fs, &lc, &ls, EPS).unwrap();
        assert_eq!(out.data()[0], 4.0);
    }

    #[test]
    fn unmatched_region_errors() {
        let fc = FeatureMap::zeros(1, 1, 2);
        let fs = FeatureMap::zeros(1, 1, 2);
        let lc = LabelMap::new(1, 2, 2, vec![0, 1]).unwrap();
        let ls = LabelMap::new(1, 2, 2, vec![0, 0]).unwrap();
        let err = s_adain(&fc, &fs, &lc, &ls, EPS).unwrap_err();
        assert!(matches!(err, Error::UnmatchedSemanticRegion { label: 1 }));
    }

    #[test]
    fn regions_do_not_mix() {
        // Two regions with wildly different style stats: each content region
        // must end up at its own region's stats, not a blend.
        let fc = FeatureMap::new(1, 1, 4, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let fs = FeatureMap::new(1, 1, 4, vec![100.0, 102.0, -50.0, -48.0]).unwrap();
        let l = LabelMap::new(1, 4, 2, vec![0, 0, 1, 1]).unwrap();
        let out = s_adain(&fc, &fs, &l, &l, 0.0).unwrap();
        assert!((out.data()[0] - 100.0).abs() < 1e-9);
        assert!((out.data()[1] - 102.0).abs() < 1e-9);
        assert!((out.data()[2] + 50.0).abs() < 1e-9);
        assert!((out.data()[3] + 48.0).abs() < 1e-9);
    }

    #[test]
    fn permutation_within_region_commutes() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let fc = random_map(2, 1, 6, 7);
        let fs = random_map(2, 1, 6, 8);
        let l = LabelMap::new(1, 6, 2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let out = s_adain(&fc, &fs, &l, &l, EPS).unwrap();
        // Swap two cells of region 0 in the input; outputs must swap too.
        let (i, j) = (r.random_range(0..3), r.random_range(0..3));
        let mut permuted = fc.data().to_vec();
        for c in 0..2 {
            permuted.swap(c * 6 + i, c * 6 + j);
        }
        let fc2 = FeatureMap::new(2, 1, 6, permuted).unwrap();
        let out2 = s_adain(&fc2, &fs, &l, &l, EPS).unwrap();
        for c in 0..2 {
            assert_eq!(out.data()[c * 6 + i], out2.data()[c * 6 + j]);
            assert_eq!(out.data()[c * 6 + j], out2.data()[c * 6 + i]);
        }
    }

    #[test]
    fn stats_helper_reports_present_labels() {
        let f = FeatureMap::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let l = LabelMap::new(1, 3, 3, vec![0, 0, 2]).unwrap();
        let stats = region_stats(&f, &l).unwrap();
        let labels: Vec<u16> = stats.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![0, 2]);
        assert_eq!(stats[0].mean, vec![1.5]);
    }
}
