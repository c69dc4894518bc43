use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use cqed_core::analytic::{dressed_splitting, shifted_raman_resonance};
use cqed_core::experiments::fit_fringe;
use cqed_core::{khz, SystemParams};

fn analytic(c: &mut Criterion) {
    let p = SystemParams::nominal();
    c.bench_function("dressed_splitting_n6", |b| {
        b.iter(|| dressed_splitting(black_box(6), khz(80.0), &p).unwrap())
    });
    c.bench_function("shifted_resonance_n6", |b| {
        b.iter(|| shifted_raman_resonance(black_box(6), p.omega0, p.delta).unwrap())
    });
    let t_r = 100e-6;
    let pts: Vec<(f64, f64)> = (0..=100)
        .map(|k| {
            let nu = -10_000.0 + 200.0 * k as f64;
            (nu, 0.5 - 0.4 * (2.0 * PI * nu * t_r + 0.5).cos())
        })
        .collect();
    c.bench_function("fit_fringe_101", |b| b.iter(|| fit_fringe(black_box(&pts), t_r).unwrap()));
}

criterion_group!(benches, analytic);
criterion_main!(benches);
