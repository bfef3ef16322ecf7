use std::hint::black_box;

use clipverify_bench::{clip_instance, dense_problem, margin_problem};
use clipverify_core::bab::{verify, BabConfig, BranchMode, ClipMode};
use clipverify_core::clipping::{
    coordinate_ascent, relaxed_clip_parallel, relaxed_clip_sequential, tighten_lower_single,
    ClipOrder,
};
use clipverify_core::crown::{compute_bounds, AlphaPolicy};
use clipverify_core::fixtures;
use clipverify_core::geometry::Direction;
use clipverify_core::oracle::lp_box_oracle;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn crown(c: &mut Criterion) {
    let mut g = c.benchmark_group("compute_bounds");
    let (toy, b) = (fixtures::toy_model(), fixtures::toy_box());
    g.bench_function("toy", |bch| {
        bch.iter(|| compute_bounds(black_box(&toy), &b, AlphaPolicy::default(), &[], None).unwrap())
    });
    for width in [16, 64] {
        let (model, p) = dense_problem(1, &[8, width, width, width, 4]);
        g.bench_with_input(BenchmarkId::new("dense", width), &width, |bch, _| {
            bch.iter(|| {
                compute_bounds(&model, &p.input_box, AlphaPolicy::Adaptive, &[], None).unwrap()
            })
        });
    }
    g.finish();
}

fn clipping(c: &mut Criterion) {
    let mut g = c.benchmark_group("clipping");
    for n in [8, 128] {
        let (a, b, cons) = clip_instance(n, 8);
        g.bench_with_input(BenchmarkId::new("dual_single", n), &n, |bch, _| {
            bch.iter(|| tighten_lower_single(black_box(&a), 0.0, &b, &cons[0]).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("coordinate_ascent_m8", n), &n, |bch, _| {
            bch.iter(|| coordinate_ascent(black_box(&a), 0.0, &b, &cons, 1).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("relaxed_parallel_m8", n), &n, |bch, _| {
            bch.iter(|| relaxed_clip_parallel(black_box(&b), &cons))
        });
        g.bench_with_input(BenchmarkId::new("relaxed_reordered_m8", n), &n, |bch, _| {
            bch.iter(|| relaxed_clip_sequential(black_box(&b), &cons, ClipOrder::CentroidDistance))
        });
    }
    let (a, b, cons) = clip_instance(6, 2);
    g.bench_function("lp_oracle_n6_m2", |bch| {
        bch.iter(|| lp_box_oracle(black_box(&a), 0.0, &b, &cons, Direction::Min).unwrap())
    });
    g.finish();
}

fn branch_and_bound(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    let p = margin_problem(3, &[2, 8, 8, 1], 0.01);
    for (name, mode, clip) in [
        ("input_none", BranchMode::Input, ClipMode::None),
        ("input_both", BranchMode::Input, ClipMode::Both),
        ("activation_both", BranchMode::Activation, ClipMode::Both),
    ] {
        let cfg = BabConfig {
            mode,
            clip,
            timeout: 5.0,
            ..BabConfig::default()
        };
        g.bench_function(name, |bch| {
            bch.iter(|| verify(black_box(&p), &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, crown, clipping, branch_and_bound);
criterion_main!(benches);
