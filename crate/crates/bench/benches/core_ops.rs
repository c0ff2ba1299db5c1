use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use horoprod::oracle::ProductBall;
use horoprod::walk::{self, Kernel, StepSampler, DEFAULT_SUPPORT_BUDGET};
use horoprod::{HoroProduct, PointedTreeEnv};

fn dl(p: u32, q: u32) -> HoroProduct {
    HoroProduct::new(
        PointedTreeEnv::homogeneous(p, format!("t{p}")).unwrap(),
        PointedTreeEnv::homogeneous(q, format!("t{q}")).unwrap(),
    )
}

fn distance_formula(c: &mut Criterion) {
    let g = dl(2, 3);
    let ball = ProductBall::materialize(&g, &g.origin(), 5);
    let ids: Vec<u32> = (0..ball.len() as u32).step_by(7).collect();
    c.bench_function("distance_formula_ball5_dl23", |b| {
        b.iter(|| {
            let mut acc = 0u64;
            for &i in &ids {
                for &j in &ids {
                    acc += g.product_distance(ball.vertex(i), ball.vertex(j));
                }
            }
            black_box(acc)
        })
    });
}

fn ball_materialization(c: &mut Criterion) {
    let g = dl(2, 3);
    c.bench_function("materialize_ball5_dl23", |b| {
        b.iter(|| black_box(ProductBall::materialize(&g, &g.origin(), 5).len()))
    });
}

fn nstep_dp(c: &mut Criterion) {
    let g = dl(2, 3);
    c.bench_function("nstep_dp_n8_dl23", |b| {
        b.iter(|| {
            let dp =
                walk::nstep_distribution(&g, &Kernel::Simple, &g.origin(), 8, DEFAULT_SUPPORT_BUDGET)
                    .unwrap();
            black_box(dp.support_size(8))
        })
    });
}

fn path_sampling(c: &mut Criterion) {
    let g = dl(2, 3);
    let mut seed = 0u64;
    c.bench_function("sample_path_10k_dl23", |b| {
        b.iter(|| {
            seed += 1;
            let path = walk::sample_path(&g, &Kernel::Simple, &g.origin(), 10_000, seed).unwrap();
            black_box(path.vertices().len())
        })
    });
    c.bench_function("step_sampler_100k_dl23", |b| {
        b.iter(|| {
            seed += 1;
            let mut s = StepSampler::new(&g, &Kernel::Simple, g.origin(), seed);
            for _ in 0..100_000 {
                s.step().unwrap();
            }
            black_box(s.current().height())
        })
    });
}

criterion_group!(
    benches,
    distance_formula,
    ball_materialization,
    nstep_dp,
    path_sampling
);
criterion_main!(benches);
