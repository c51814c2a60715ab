use criterion::{criterion_group, criterion_main, Criterion};
use scbm_harness::{parse_scenario, run_experiment_with, run_oracle, Execution, Scenario};

fn preset(name: &str) -> Scenario {
    parse_scenario(name, &format!("preset = \"{name}\"\n")).unwrap()
}

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep");
    for name in ["connections", "q-chain"] {
        let scen = preset(name);
        for (label, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
            g.bench_function(format!("{name}/{label}"), |b| {
                b.iter(|| run_experiment_with(&scen, &scen.managers, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn oracle_grid(c: &mut Criterion) {
    let scen = preset("dirty-rate-jump");
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    for (label, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        g.bench_function(label, |b| b.iter(|| run_oracle(&scen, 150, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, sweeps, oracle_grid);
criterion_main!(benches);
