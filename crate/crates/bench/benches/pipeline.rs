use criterion::{criterion_group, criterion_main, Criterion};

use typicality_bench::grid_fixture;
use typicality_core::config::TextPrototype;
use typicality_core::pipeline::{
    combined_grid, evaluate_text_model, evaluate_vision_model, run_stability,
};

fn single_models(c: &mut Criterion) {
    let (store, ratings) = grid_fixture(1, 128).store().unwrap();
    c.bench_function("text_model_27_categories", |b| {
        b.iter(|| evaluate_text_model(&store, &ratings, "text-0", TextPrototype::Mean).unwrap())
    });
    c.bench_function("vision_model_27_categories", |b| {
        b.iter(|| evaluate_vision_model(&store, &ratings, "vision-0").unwrap())
    });
    c.bench_function("stability_100_trials", |b| {
        b.iter(|| run_stability(&store, &ratings, "vision-0", "cat00", 100, 1).unwrap())
    });
}

fn grid(c: &mut Criterion) {
    let fixture = grid_fixture(3, 128);
    let (store, ratings) = fixture.store().unwrap();
    let mut group = c.benchmark_group("grid");
    group.sample_size(20);
    group.bench_function("3x3_27_categories", |b| {
        b.iter(|| {
            combined_grid(
                &store,
                &ratings,
                &fixture.text_models,
                &fixture.vision_models,
                TextPrototype::Mean,
            )
        })
    });
    group.finish();
}

criterion_group!(benches, single_models, grid);
criterion_main!(benches);
