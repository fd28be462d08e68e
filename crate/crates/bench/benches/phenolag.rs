use criterion::{criterion_group, criterion_main};

criterion_group!(benches, phenolag_bench::simulation, phenolag_bench::moments);
criterion_main!(benches);
