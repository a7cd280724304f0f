use criterion::{black_box, criterion_group, criterion_main, Criterion};

use mswitch_core::filtering::approx_estep;
use mswitch_core::mstep::{update_beta, LassoConfig};
use mswitch_core::sim::{make_setting_one, simulate, SimConfig};
use mswitch_core::spectral_norm;

fn bench_estep(c: &mut Criterion) {
    let params = make_setting_one(30).unwrap();
    let series = simulate(
        &SimConfig::new(params.clone(), 1000, 1)
            .unwrap()
            .with_burn_in(500),
    )
    .unwrap()
    .series;
    c.bench_function("approx_estep d30 T1000 s7", |b| {
        b.iter(|| approx_estep(black_box(&series), black_box(&params), 7).unwrap())
    });
}

fn bench_lasso(c: &mut Criterion) {
    let params = make_setting_one(30).unwrap();
    let series = simulate(
        &SimConfig::new(params.clone(), 1000, 2)
            .unwrap()
            .with_burn_in(500),
    )
    .unwrap()
    .series;
    let weights = approx_estep(&series, &params, 7).unwrap();
    c.bench_function("weighted lasso d30 T1000", |b| {
        b.iter(|| {
            update_beta(
                black_box(&series),
                black_box(&weights),
                &LassoConfig::new(0.05).unwrap(),
            )
            .unwrap()
        })
    });
}

fn bench_spectral_norm(c: &mut Criterion) {
    let params = make_setting_one(90).unwrap();
    let m = params.coeff(1).clone();
    c.bench_function("spectral_norm 90x90", |b| {
        b.iter(|| spectral_norm(black_box(m.view())).unwrap())
    });
}

criterion_group!(benches, bench_estep, bench_lasso, bench_spectral_norm);
criterion_main!(benches);
