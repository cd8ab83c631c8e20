use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stgc_bench::UnitFixture;
use stgc_core::static_gc::GcKind;

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

const FRAMES: [usize; 5] = [16, 24, 32, 48, 64];
const CHANNELS: usize = 64;

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("unit_forward");
    group.sample_size(20);
    for kind in [GcKind::Sts, GcKind::Dstd] {
        for t in FRAMES {
            let f = UnitFixture::new(kind, t, CHANNELS).unwrap();
            group.bench_with_input(BenchmarkId::new(kind.name(), t), &f, |b, f| b.iter(|| f.forward().unwrap()));
        }
    }
    group.finish();
}

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("unit_forward_backward");
    group.sample_size(10);
    for kind in [GcKind::Sts, GcKind::Dstd] {
        for t in [16, 32] {
            let f = UnitFixture::new(kind, t, CHANNELS).unwrap();
            group.bench_with_input(BenchmarkId::new(kind.name(), t), &f, |b, f| {
                b.iter(|| f.forward_backward().unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, forward, forward_backward);
criterion_main!(benches);
