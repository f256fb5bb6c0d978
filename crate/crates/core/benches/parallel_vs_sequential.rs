use activescout::field::{loss, render_image, FieldGrid, FieldInit, LossWeights, RayTarget, RenderOptions};
use activescout::info::{predictive_information, Ensemble, InfoWeights};
use activescout::par::{with_exec, Exec};
use activescout::scene::{Aabb, CameraIntrinsics, Pose, Vec3, ViewPoint};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn field(res: usize, seed: u64) -> FieldGrid {
    let bounds = Aabb::new(Vec3::zeros(), Vec3::new(8.0, 4.0, 2.5));
    let init = FieldInit {
        density_logit: 0.0,
        ..FieldInit::default()
    };
    FieldGrid::new(bounds, [res; 3], 8, &init, seed).unwrap()
}

fn opts() -> RenderOptions {
    RenderOptions::new(0.05, 9.3, 64).unwrap()
}

fn rays(n: usize) -> Vec<RayTarget> {
    (0..n)
        .map(|i| {
            let a = i as f64 * 0.37;
            RayTarget {
                origin: Vec3::new(1.0, 2.0, 1.2),
                dir: Vec3::new(a.cos(), a.sin(), 0.1 * (a * 0.5).sin()).normalize(),
                rgb: [0.5, 0.4, 0.3],
                depth: 2.0 + (i % 5) as f64 * 0.3,
                category: (i % 8) as u16,
            }
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let f = field(32, 1);
    let intr = CameraIntrinsics::new(32, 32, 90f64.to_radians()).unwrap();
    let pose = Pose::from_yaw(Vec3::new(1.0, 2.0, 1.2), 0.3);
    let batch = rays(256);
    let ensemble = Ensemble::new(vec![field(32, 1), field(16, 2)], vec![1, 2], opts()).unwrap();
    let views: Vec<ViewPoint> = (0..8)
        .map(|i| ViewPoint {
            position: Vec3::new(1.0 + 0.5 * i as f64, 2.0, 1.2),
            yaw: 0.7 * i as f64,
        })
        .collect();
    let intr16 = CameraIntrinsics::new(16, 16, 90f64.to_radians()).unwrap();

    let mut g = c.benchmark_group("render_image_32x32");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_exec(mode, || black_box(render_image(&f, &pose, &intr, &opts()))))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("loss_gradient_256_rays");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_exec(mode, || black_box(loss(&f, &batch, &LossWeights::default(), &opts()).unwrap())))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("candidate_information_8_views");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                with_exec(mode, || {
                    black_box(predictive_information(&ensemble, &views, &intr16, &InfoWeights::default()).unwrap())
                })
            })
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
