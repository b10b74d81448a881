use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tensorreg::harness::{fit_method, Hyper, MethodSpec};
use tensorreg_bench::linear_problem;

fn fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    let cases: [(&str, Vec<usize>); 5] = [
        ("rls", vec![]),
        ("lrr", vec![6]),
        ("holrr", vec![6, 4, 4, 8]),
        ("lrr@rbf:2", vec![6]),
        ("holrr@rbf:2", vec![6, 4, 4, 8]),
    ];
    for n in [40, 100] {
        let d = linear_problem(n, 1);
        for (m, ranks) in &cases {
            let method: MethodSpec = m.parse().unwrap();
            let hyper = Hyper { gamma: 1e-2, ranks: ranks.clone() };
            group.bench_with_input(BenchmarkId::new(*m, n), &n, |b, _| {
                b.iter(|| fit_method(&method, &d.x_train, &d.y_train, &hyper).unwrap())
            });
        }
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let d = linear_problem(100, 2);
    let method: MethodSpec = "holrr".parse().unwrap();
    let fitted = fit_method(&method, &d.x_train, &d.y_train, &Hyper { gamma: 1e-2, ranks: vec![6, 4, 4, 8] }).unwrap();
    c.bench_function("predict/holrr/100", |b| b.iter(|| fitted.predict(&d.x_test).unwrap()));
}

criterion_group!(benches, fits, predict);
criterion_main!(benches);
