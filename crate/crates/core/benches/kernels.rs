//! The data-parallel kernels, each run under both execution modes.
//! Without the `parallel` feature the two modes coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hypercyclic::cantor::{build_cantor, cover_level_set, CoverConfig};
use hypercyclic::conjugate::holder_ratio_sup;
use hypercyclic::eigenfield::{quadrature_grid, ConstructedFunctions};
use hypercyclic::galerkin::{build_model_on, sample_lambdas_nested, Coupling, ModelConfig, Samples};
use hypercyclic::lacunary::{Gamma, LacunarySeries};
use hypercyclic::orbit::eigen_crowding_report;
use hypercyclic::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn standard() -> ConstructedFunctions {
    let series = LacunarySeries::default();
    let cover = cover_level_set(&series, &CoverConfig::default()).unwrap();
    ConstructedFunctions::new(build_cantor(&cover, 8, 0).unwrap(), series)
}

fn kernels(c: &mut Criterion) {
    let series = LacunarySeries::default();
    let cf = standard();
    let cfg = ModelConfig::default();
    let grid = quadrature_grid(&cf.tree, cfg.graded_levels, cfg.gauss, cfg.max_panel, cfg.bits).unwrap();
    let samples = Samples::new(&cf, grid.clone(), Execution::Parallel);
    let lambdas = sample_lambdas_nested(&cf.tree.endpoints(), 16).unwrap();
    let models: Vec<_> =
        [8, 16].iter().map(|&m| build_model_on(&samples, &lambdas[..m], Coupling::Forced, &cfg).unwrap()).collect();

    let mut g = c.benchmark_group("level_set_cover");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cc = CoverConfig { exec, ..CoverConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cc, |b, cc| b.iter(|| cover_level_set(&series, cc).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("sample_eigenfield");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| b.iter(|| Samples::new(&cf, grid.clone(), exec)));
    }
    g.finish();

    let mut g = c.benchmark_group("holder_ratio_sup");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| holder_ratio_sup(&Gamma(series), 1.0 / 3.0, 20_000, 3, 256, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("orbit_crowding");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| eigen_crowding_report(&models, 2000, 0.05, &[0, 1, 2, 3, 4], exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
