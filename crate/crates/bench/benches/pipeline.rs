use std::hint::black_box;

use bandspeed::correction::{
    build_peak_index, correct_keypoints, detect_h_maxima, CorrectionConfig, KdTree,
};
use bandspeed::echoes::EchoTrajectory;
use bandspeed::metrics::{evaluate_images, ImageEchoes, OksConfig};
use bandspeed::raster::{AffineTransform, BandPlane, RasterGrid};
use bandspeed::validation::ks_two_sample;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 256;

fn band(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..SIDE * SIDE)
        .map(|_| rng.random_range(0.0..0.05))
        .collect();
    for _ in 0..200 {
        let (cc, cr) = (
            rng.random_range(0..SIDE) as isize,
            rng.random_range(0..SIDE) as isize,
        );
        for dr in -4..=4isize {
            for dc in -4..=4isize {
                let (r, c) = (cr + dr, cc + dc);
                if (0..SIDE as isize).contains(&r) && (0..SIDE as isize).contains(&c) {
                    v[r as usize * SIDE + c as usize] +=
                        0.5 * (-((dr * dr + dc * dc) as f64) / 4.5).exp();
                }
            }
        }
    }
    v
}

fn grid(rng: &mut ChaCha8Rng) -> RasterGrid {
    RasterGrid::with_default_labels(
        SIDE,
        SIDE,
        (0..3).map(|_| BandPlane::new(band(rng)).unwrap()).collect(),
        AffineTransform::north_up(0.0, 0.0, 3.7),
    )
    .unwrap()
}

fn echoes(rng: &mut ChaCha8Rng, n: usize) -> Vec<EchoTrajectory> {
    (0..n)
        .map(|i| {
            let p = [(); 3].map(|_| {
                (
                    rng.random_range(0.0..SIDE as f64),
                    rng.random_range(0.0..SIDE as f64),
                )
            });
            EchoTrajectory::new(i as u64, p, rng.random_range(0.5..1.0)).unwrap()
        })
        .collect()
}

fn benches(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = grid(&mut rng);
    let cfg = CorrectionConfig::default();
    let norm = g.normalized().unwrap();
    let fp = cfg.footprint().unwrap();

    c.bench_function("h_maxima_256", |b| {
        b.iter(|| detect_h_maxima(black_box(&norm.bands()[0]), SIDE, SIDE, cfg.h, &fp).unwrap())
    });

    let pts: Vec<(usize, usize)> = (0..5000)
        .map(|_| (rng.random_range(0..SIDE), rng.random_range(0..SIDE)))
        .collect();
    let tree = KdTree::build(&pts);
    let queries: Vec<(f64, f64)> = (0..1000)
        .map(|_| {
            (
                rng.random_range(0.0..SIDE as f64),
                rng.random_range(0.0..SIDE as f64),
            )
        })
        .collect();
    c.bench_function("kdtree_1000_queries", |b| {
        b.iter(|| {
            for &(x, y) in &queries {
                black_box(tree.nearest(x, y));
            }
        })
    });

    let index = build_peak_index(&g, &cfg).unwrap();
    let es = echoes(&mut rng, 1000);
    c.bench_function("correct_1000_echoes", |b| {
        b.iter(|| correct_keypoints(black_box(&es), &index, &cfg))
    });

    let images: Vec<ImageEchoes> = (0..10)
        .map(|i| {
            let gts = echoes(&mut rng, 50);
            let preds = gts
                .iter()
                .map(|g| {
                    let p = g.positions().map(|(c, r)| {
                        (
                            c + rng.random_range(-2.0..2.0),
                            r + rng.random_range(-2.0..2.0),
                        )
                    });
                    EchoTrajectory::new(g.id + 10_000, p, rng.random_range(0.5..1.0)).unwrap()
                })
                .collect();
            ImageEchoes {
                image_id: i,
                preds,
                gts,
            }
        })
        .collect();
    let oks_cfg = OksConfig::default();
    c.bench_function("map_10x50", |b| {
        b.iter(|| evaluate_images(black_box(&images), &oks_cfg).unwrap())
    });

    let a: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..100.0)).collect();
    let bs: Vec<f64> = (0..10_000).map(|_| rng.random_range(5.0..105.0)).collect();
    c.bench_function("ks_10k", |b| {
        b.iter(|| ks_two_sample(black_box(&a), black_box(&bs)).unwrap())
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
