use convmove::gp::{marginal_loglik_with, LikelihoodRoute, MovementParams};
use convmove::kernels::{build_basis, KernelSpec, TimeGrid};
use convmove::mcmc::{fit_single, FitConfig};
use convmove::warp::WarpSpec;
use convmove_bench::track;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn basis(c: &mut Criterion) {
    let spec = KernelSpec::gaussian_integrated(0.006).unwrap();
    let warp = WarpSpec::truncated_gaussian(0.5, 0.02, 0.8, (0.0, 1.0)).unwrap();
    let times: Vec<f64> = (0..500).map(|i| i as f64 / 499.0).collect();
    let mut g = c.benchmark_group("build_basis");
    for m in [200usize, 800] {
        let grid = TimeGrid::unit(m).unwrap();
        g.bench_with_input(BenchmarkId::new("warped", m), &grid, |b, grid| {
            b.iter(|| build_basis(&spec, black_box(&times), grid, Some(&warp)).unwrap())
        });
    }
    g.finish();
}

fn loglik(c: &mut Criterion) {
    let spec = KernelSpec::gaussian_integrated(0.006).unwrap();
    let params = MovementParams::new(1e-4, 0.04, 0.006, [0.0, 0.0]).unwrap();
    let mut g = c.benchmark_group("marginal_loglik");
    g.sample_size(20);
    for (n, m) in [(400usize, 100usize), (800, 200)] {
        let t = track(n, 1);
        let h = build_basis(&spec, &t.times, &TimeGrid::unit(m).unwrap(), None).unwrap();
        for (name, route) in [
            ("woodbury", LikelihoodRoute::Woodbury),
            ("dense", LikelihoodRoute::Dense),
        ] {
            g.bench_function(BenchmarkId::new(name, format!("n{n}_m{m}")), |b| {
                b.iter(|| marginal_loglik_with(&t, &h, &params, route).unwrap())
            });
        }
    }
    g.finish();
}

fn chain(c: &mut Criterion) {
    let t = track(200, 2);
    let config = FitConfig {
        phi_grid: vec![0.004, 0.006, 0.008, 0.01],
        grid_nodes: 200,
        iterations: 500,
        burn_in: 100,
        ..FitConfig::default()
    };
    let mut g = c.benchmark_group("fit_single");
    g.sample_size(10);
    g.bench_function("n200_m200_500it", |b| b.iter(|| fit_single(&t, None, &config).unwrap()));
    g.finish();
}

criterion_group!(benches, basis, loglik, chain);
criterion_main!(benches);
