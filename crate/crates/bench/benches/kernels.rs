use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use openmetrics::dataio::{coco_counts_decode, coco_counts_encode};
use openmetrics::semantic::{accumulate_confusion, soft_counts};
use openmetrics::{build_matrix, Backend, LabelSpec, Method, SensePolicy, Taxonomy};
use openmetrics_bench::{class_raster, ellipse, noisy_copy, random_sim, rng};

fn confusion(c: &mut Criterion) {
    let mut r = rng(1);
    let gt = class_raster(&mut r, 512, 512, 150, 16);
    let pred = noisy_copy(&mut r, &gt, 150, 0.2);
    c.bench_function("confusion_512x512_k150", |b| {
        b.iter(|| accumulate_confusion(&gt, &pred, 150).unwrap())
    });
    let cm = accumulate_confusion(&gt, &pred, 150).unwrap();
    let s = random_sim(&mut r, 150);
    c.bench_function("soft_counts_k150", |b| b.iter(|| soft_counts(&cm, &s).unwrap()));
}

fn masks(c: &mut Criterion) {
    let mut g = c.benchmark_group("mask_iou");
    for side in [64u32, 256, 1024] {
        let f = side as f64;
        let a = ellipse(side, side, 0.45 * f, 0.5 * f, 0.3 * f, 0.35 * f);
        let b = ellipse(side, side, 0.55 * f, 0.5 * f, 0.3 * f, 0.3 * f);
        g.bench_with_input(BenchmarkId::from_parameter(side), &(a, b), |bn, (a, b)| {
            bn.iter(|| a.iou(b).unwrap())
        });
    }
    g.finish();

    let m = ellipse(480, 640, 300.0, 240.0, 200.0, 150.0);
    let text = coco_counts_encode(&m);
    c.bench_function("coco_encode_640x480", |b| b.iter(|| coco_counts_encode(&m)));
    c.bench_function("coco_decode_640x480", |b| {
        b.iter(|| coco_counts_decode(&text, 480, 640).unwrap())
    });
}

fn matrix(c: &mut Criterion) {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let t = Taxonomy::from_dir(data.join("wordnet-3.0")).unwrap();
    let labels: Vec<LabelSpec> = std::fs::read_to_string(data.join("imagenet1k_wnids.txt"))
        .unwrap()
        .lines()
        .take(200)
        .enumerate()
        .map(|(i, w)| LabelSpec::named(i as u32, w).with_wnid(w))
        .collect();
    let mut g = c.benchmark_group("matrix_200_wnids");
    g.sample_size(20);
    for m in [Method::Path, Method::WuPalmer] {
        g.bench_function(m.to_string(), |b| {
            b.iter(|| build_matrix(&labels, Backend::WordNet(&t), m, SensePolicy::MaxSense).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, confusion, masks, matrix);
criterion_main!(benches);
