//! Benchmarks for the hot kernels: matrix multiply, row softmax, region
//! renormalization, the two masked attention modules, and the end-to-end
//! transform.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use scsa_bench::{fixture, striped_embedding, striped_labels};
use scsa_core::{
    normalize_features, s_adain, sca_with_inputs, scsa_transform, ssa_with_inputs,
    AttentionMatrix, FeatureMap, Mat, ProjectionSet, TiePolicy,
};

fn deterministic_map(channels: usize, h: usize, w: usize) -> FeatureMap {
    // Cheap LCG features; benchmarks only need stable, non-degenerate data.
    let mut state = 0x2545f4914f6cdd1du64;
    let data = (0..channels * h * w)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        })
        .collect();
    FeatureMap::new(channels, h, w, data).expect("finite data")
}

fn bench_matmul(c: &mut Criterion) {
    let f = deterministic_map(16, 32, 32);
    let a = f.to_mat();
    let b = a.transpose();
    c.bench_function("matmul_16x1024_1024x16", |bench| {
        bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap())
    });
}

fn bench_row_softmax(c: &mut Criterion) {
    let f = deterministic_map(1, 1024, 1024);
    let scores = Mat::new(1024, 1024, f.data().to_vec()).unwrap();
    c.bench_function("row_softmax_1024x1024", |bench| {
        bench.iter(|| {
            AttentionMatrix::from_scores(black_box(scores.clone()))
                .row_softmax()
                .unwrap()
        })
    });
}

fn bench_s_adain(c: &mut Criterion) {
    let fc = deterministic_map(16, 32, 32);
    let fs = deterministic_map(16, 32, 32);
    let l = striped_labels(32, 32, 3);
    c.bench_function("s_adain_16x32x32", |bench| {
        bench.iter(|| s_adain(black_box(&fc), black_box(&fs), &l, &l, 1e-5).unwrap())
    });
}

fn bench_attention(c: &mut Criterion) {
    let proj = ProjectionSet::seeded(16, 16, 16, 0);
    let fs = deterministic_map(16, 32, 32);
    let lc = striped_labels(32, 32, 3);
    let ls = striped_labels(32, 32, 3);
    let q1 = normalize_features(&striped_embedding(32, 32, 3, 16));
    let k1 = normalize_features(&striped_embedding(32, 32, 3, 16));
    c.bench_function("sca_1024_cells", |bench| {
        bench.iter(|| {
            sca_with_inputs(black_box(&q1), black_box(&k1), &fs, &lc, &ls, &proj).unwrap()
        })
    });
    let q2 = normalize_features(&deterministic_map(16, 32, 32));
    c.bench_function("ssa_1024_cells", |bench| {
        bench.iter(|| {
            ssa_with_inputs(black_box(&q2), &fs, &lc, &ls, &proj, TiePolicy::LowestIndex).unwrap()
        })
    });
}

fn bench_transform(c: &mut Criterion) {
    let fx = fixture();
    c.bench_function("transform_64px_cnn", |bench| {
        bench.iter(|| scsa_transform(black_box(&fx.quad), &fx.cfg, &fx.codec, &fx.proj).unwrap())
    });
}

criterion_group!(
    benches,
    bench_matmul,
    bench_row_softmax,
    bench_s_adain,
    bench_attention,
    bench_transform
);
criterion_main!(benches);
