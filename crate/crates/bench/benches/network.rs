use convmove::network::{fit_group, group_loglik, ChainSettings, GroupModelSpec, GroupParams, LatentPaths};
use convmove_bench::track;
use criterion::{criterion_group, criterion_main, Criterion};

fn group(c: &mut Criterion) {
    let spec = GroupModelSpec {
        individuals: 3,
        grid_nodes: 150,
        ..GroupModelSpec::default()
    };
    let tracks: Vec<_> = (0..3).map(|j| track(60, 10 + j)).collect();
    let z = LatentPaths::constant(&[[0.0, 0.0], [0.5, 0.0], [3.0, 0.0]], spec.latent_nodes);
    let params = GroupParams {
        meas_var: 1e-4,
        ratio_sq: 400.0,
        range: 0.006,
        origins: vec![[0.0, 0.0]; 3],
    };
    let mut g = c.benchmark_group("group");
    g.sample_size(10);
    g.bench_function("loglik_j3_n60", |b| {
        b.iter(|| group_loglik(&tracks, &z, &params, &spec).unwrap())
    });
    let settings = ChainSettings {
        iterations: 100,
        burn_in: 20,
        ..ChainSettings::default()
    };
    g.bench_function("fit_group_j3_n60_100it", |b| {
        b.iter(|| fit_group(&tracks, &spec, &settings).unwrap())
    });
    g.finish();
}

criterion_group!(benches, group);
criterion_main!(benches);
