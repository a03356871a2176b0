use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hjcs_core::*;
use std::hint::black_box;

fn builtin(name: &str, params: serde_json::Value) -> ProblemInstance {
    builtin_problem(name, params.as_object().unwrap()).unwrap()
}

fn bench_bellman_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("bellman_apply");
    for n in [200usize, 800, 3200] {
        let p = builtin("eikonal1d", serde_json::json!({"N": n}));
        let op = build_operator(&p, 0.1).unwrap();
        let v = vec![0.5; p.num_states()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(op.bellman_apply(black_box(&v))))
        });
    }
    group.finish();
}

fn bench_solve_discounted(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_discounted");
    group.sample_size(10);
    for (name, params, lambda) in [
        ("eikonal1d_n200", serde_json::json!({"N": 200}), 0.1),
        ("switch2_n200", serde_json::json!({"N": 200}), 0.1),
    ] {
        let builtin_name = if name.starts_with("eikonal") { "eikonal1d" } else { "switch2" };
        let p = builtin(builtin_name, params);
        group.bench_function(name, |b| {
            b.iter(|| black_box(solve_discounted(black_box(&p), lambda).unwrap()))
        });
    }
    group.finish();
}

fn bench_green_poisson(c: &mut Criterion) {
    let p = builtin("switch2", serde_json::json!({"N": 100}));
    let v = solve_discounted(&p, 0.1).unwrap();
    c.bench_function("green_poisson_batch_5_anchors", |b| {
        let anchors: Vec<(usize, usize)> = (0..5).map(|j| (j * 20, j % 2)).collect();
        b.iter(|| black_box(green_poisson_batch(&p, &v, black_box(&anchors)).unwrap()))
    });
}

fn bench_normal_form(c: &mut Criterion) {
    // Two coupled pairs plus two isolated diagonal entries, m = 6.
    let m = 6;
    let mut entries = vec![0.0; m * m];
    for &(i, j, w) in &[(0usize, 3usize, 1.0), (1, 4, 2.0)] {
        entries[i * m + i] = w;
        entries[i * m + j] = -w;
        entries[j * m + j] = w;
        entries[j * m + i] = -w;
    }
    entries[2 * m + 2] = 1.5;
    entries[5 * m + 5] = 0.5;
    let b = CouplingMatrix::from_rows(m, entries);
    c.bench_function("normal_form_m6", |bn| {
        bn.iter(|| black_box(black_box(&b).normal_form().unwrap()))
    });
}

fn bench_ergodic_constant(c: &mut Criterion) {
    let mut group = c.benchmark_group("ergodic_constant_scalar");
    group.sample_size(10);
    let p = builtin("eikonal1d", serde_json::json!({"N": 100}));
    let schedule = default_schedule();
    group.bench_function("eikonal1d_n100", |b| {
        b.iter(|| black_box(ergodic_constant_scalar(black_box(&p), &schedule).unwrap()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_bellman_apply,
    bench_solve_discounted,
    bench_green_poisson,
    bench_normal_form,
    bench_ergodic_constant
);
criterion_main!(benches);
