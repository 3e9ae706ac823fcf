use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gridwelfare::oracle::{optimal_stationary_welfare, price_of_single_price};
use gridwelfare::procurement::{optimal_base_power, ProcurementInputs};
use gridwelfare::user::plan_consumption;
use gridwelfare::{Simulation, Wma, WmaConfig};
use gridwelfare_bench::{instance, planning, renewable, DAY, SMALL};

fn distributions(c: &mut Criterion) {
    let z = renewable(64);
    c.bench_function("quantile_64", |b| b.iter(|| z.quantile(black_box(0.37)).unwrap()));
    c.bench_function("optimal_base_power_64", |b| {
        b.iter(|| optimal_base_power(&ProcurementInputs::new(black_box(12.0), 2.0, 3.5, &z)).unwrap())
    });
}

fn planning_bench(c: &mut Criterion) {
    let inst = instance(&SMALL);
    let user = &inst.model().users()[0];
    let opts = planning();
    c.bench_function("plan_consumption", |b| {
        b.iter(|| plan_consumption(user, black_box(3.3), 1, &opts).unwrap())
    });
    c.bench_function("response_table_day", |b| b.iter(|| instance(black_box(&DAY))));
}

fn controller(c: &mut Criterion) {
    let inst = instance(&DAY);
    let wma = Wma::new(&inst, WmaConfig::new(20.0)).unwrap();
    let q = vec![15.0; inst.users()];
    let weights = wma.cost_weights(0, None);
    c.bench_function("choose_prices_day", |b| {
        b.iter(|| wma.choose_prices(black_box(&q), &weights).unwrap())
    });
    c.bench_function("run_day", |b| {
        b.iter_batched(
            || Simulation::new(Wma::new(&inst, WmaConfig::new(20.0)).unwrap(), 7),
            |mut sim| sim.run_day().unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn oracle(c: &mut Criterion) {
    let small = instance(&SMALL);
    let day = instance(&DAY);
    c.bench_function("stationary_lp_small", |b| b.iter(|| optimal_stationary_welfare(black_box(&small)).unwrap()));
    c.bench_function("stationary_lp_day", |b| b.iter(|| optimal_stationary_welfare(black_box(&day)).unwrap()));
    c.bench_function("posp_small", |b| b.iter(|| price_of_single_price(black_box(&small)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = distributions, planning_bench, controller, oracle
}
criterion_main!(benches);
