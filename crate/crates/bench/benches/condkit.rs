use std::hint::black_box;

use condkit_core::conditioning::{compute, SceneView, Variant, ViewerDepth};
use condkit_core::dataset::{
    parallel_stream, write_shard, DepthGrid, SceneRecord, Shard, StreamOptions, ViewRecord, CAMERA_TO_WORLD,
};
use condkit_core::depth::{scene_scale_agg, DepthMap, QuantileMethod};
use condkit_core::geometry::Pose;
use condkit_core::metrics::{ssim, Image};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn depth(rng: &mut impl Rng, w: usize, h: usize) -> DepthMap {
    let values = (0..w * h).map(|_| rng.random_range(0.5..20.0)).collect();
    let mask = (0..w * h).map(|_| rng.random_bool(0.8)).collect();
    DepthMap::new(w, h, values, mask).unwrap()
}

fn ring_pose(k: usize, n: usize) -> Pose {
    let t = std::f64::consts::TAU * k as f64 / n as f64;
    let eye = Vector3::new(3.0 * t.cos(), 3.0 * t.sin(), 1.0);
    Pose::look_at(eye, Vector3::zeros(), Vector3::z()).unwrap()
}

fn quantile(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("quantile");
    for side in [64, 256] {
        let d = depth(&mut rng, side, side);
        group.throughput(Throughput::Elements((side * side) as u64));
        group.bench_with_input(BenchmarkId::new("p20", side), &d, |b, d| b.iter(|| d.quantile(20.0).unwrap()));
    }
    let maps: Vec<DepthMap> = (0..32).map(|_| depth(&mut rng, 64, 48)).collect();
    group.bench_function("scene_scale_agg/32x64x48", |b| b.iter(|| scene_scale_agg(black_box(&maps)).unwrap()));
    group.finish();
}

fn conditioning(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 8;
    let poses = (0..n).map(|k| ring_pose(k, n)).collect();
    let depths = (0..n)
        .map(|_| DepthMap::dense(64, 48, (0..64 * 48).map(|_| rng.random_range(0.5..20.0)).collect()).unwrap())
        .collect();
    let scene = SceneView::new(poses, depths, 0.9, 0, 3).unwrap();
    let mut group = c.benchmark_group("conditioning");
    for v in Variant::ALL {
        group.bench_function(v.name(), |b| {
            b.iter(|| compute(v, black_box(&scene), ViewerDepth::FromScene, QuantileMethod::Linear).unwrap())
        });
    }
    group.finish();
}

fn ssim_bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = Image::from_fn(256, 256, |_, _, _| rng.random()).unwrap();
    let b = Image::from_fn(256, 256, |_, _, _| rng.random()).unwrap();
    c.bench_function("ssim/256x256", |bench| bench.iter(|| ssim(black_box(&a), black_box(&b)).unwrap()));
}

fn scene(id: String, rng: &mut impl Rng) -> SceneRecord {
    let views = (0..6)
        .map(|k| ViewRecord {
            image_png: vec![0; 4096],
            depth: DepthGrid::from_depth_map(&depth(rng, 64, 64)),
            pose: ViewRecord::pose_from(&ring_pose(k, 6)),
        })
        .collect();
    SceneRecord {
        scene_id: id,
        source: "bench".into(),
        convention: CAMERA_TO_WORLD.into(),
        fov: 0.9,
        intrinsics: None,
        content_scale: None,
        quantile: QuantileMethod::Linear,
        views,
    }
}

fn stream(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shards: Vec<Shard> = (0..4)
        .map(|s| {
            let records: Vec<SceneRecord> = (0..32).map(|k| scene(format!("s{s}-{k}"), &mut rng)).collect();
            write_shard(&records, &dir.path().join(format!("shard-{s:06}.tar"))).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("stream");
    group.sample_size(10);
    group.throughput(Throughput::Elements(4 * 32));
    for workers in [1, 2, 4] {
        group.bench_with_input(BenchmarkId::new("workers", workers), &workers, |b, &w| {
            b.iter(|| {
                let opts = StreamOptions {
                    rate: 4.0,
                    ..StreamOptions::default()
                };
                parallel_stream(&shards, w, opts).unwrap().map(|s| s.unwrap()).count()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, quantile, conditioning, ssim_bench, stream);
criterion_main!(benches);
