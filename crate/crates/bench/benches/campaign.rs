use criterion::{criterion_group, criterion_main, Criterion};
use rally_core::fixtures;
use rally_core::orchestrator::{run_campaign, RunOptions};
use rally_core::simulator::SimulatedPlatform;

fn simulated_campaign(c: &mut Criterion) {
    let mut config = fixtures::standard_config();
    config.groups_per_strategy_per_topic = 10;
    c.bench_function("simulated campaign, 10 groups per arm and topic", |b| {
        b.iter(|| {
            let mut platform = SimulatedPlatform::from_campaign(&config).unwrap();
            run_campaign(&config, &mut platform, RunOptions::default()).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = simulated_campaign
}
criterion_main!(benches);
