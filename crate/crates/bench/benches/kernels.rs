use std::hint::black_box;

use affectlens_bench::{noisy_image, two_blobs};
use affectlens_core::channels::{gaussian_blur, BlurMode};
use affectlens_core::features::{GistConfig, GistExtractor};
use affectlens_core::learners::{train_lda, train_svm, Kernel, SvmParams, DEFAULT_LDA_SHRINKAGE};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn blur(c: &mut Criterion) {
    let img = noisy_image(640, 360, 1);
    let sigma = 0.2 * 640.0;
    let mut g = c.benchmark_group("blur_640x360");
    g.sample_size(10);
    for (name, mode) in [("exact", BlurMode::Exact), ("downsampled", BlurMode::Auto)] {
        g.bench_function(name, |b| b.iter(|| gaussian_blur(black_box(&img), sigma, mode)));
    }
    g.finish();
}

fn gist(c: &mut Criterion) {
    let extractor = GistExtractor::new(GistConfig::default());
    let img = noisy_image(320, 180, 2);
    c.bench_function("gist_320x180", |b| b.iter(|| extractor.describe(black_box(&img))));
}

fn learners(c: &mut Criterion) {
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    for n in [100, 400] {
        let (x, y) = two_blobs(n / 2, 32, 3);
        let rbf = SvmParams::new(Kernel::Rbf { gamma: 1.0 / 32.0 }, 1.0);
        g.bench_with_input(BenchmarkId::new("smo_rbf", n), &n, |b, _| b.iter(|| train_svm(&x, &y, &rbf).unwrap()));
        g.bench_with_input(BenchmarkId::new("lda", n), &n, |b, _| {
            b.iter(|| train_lda(&x, &y, DEFAULT_LDA_SHRINKAGE).unwrap())
        });
    }
    let (x, y) = two_blobs(25, 512, 4);
    g.bench_function("lda_woodbury_d512_n50", |b| b.iter(|| train_lda(&x, &y, DEFAULT_LDA_SHRINKAGE).unwrap()));
    g.finish();
}

criterion_group!(kernels, blur, gist, learners);
criterion_main!(kernels);
