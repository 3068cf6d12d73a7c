//! Criterion benchmarks for the hot paths: basis evaluation, patch assembly and
//! application of the preconditioned multiplier operator.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use dgieti::assembly::{assemble_patch, default_penalty, DgProblem, SourceFn, ZeroData};
use dgieti::bspline::KnotVector;
use dgieti::generators::unit_square_grid;
use dgieti::ieti::IetiDp;

fn source(x: [f64; 2]) -> f64 {
    (3.0 * x[0]).sin() * (2.0 * x[1]).cos()
}

pub fn basis(c: &mut Criterion) {
    let mut group = c.benchmark_group("basis");
    for degree in [2, 4] {
        let kv = KnotVector::uniform(degree, 64).unwrap();
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        group.bench_with_input(BenchmarkId::new("values_and_derivatives", degree), &kv, |b, kv| {
            b.iter(|| {
                for &x in &xs {
                    black_box(kv.eval_basis_deriv(black_box(x)).unwrap());
                }
            })
        });
    }
    group.finish();
}

pub fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    group.sample_size(20);
    for degree in [2, 3] {
        let mp = unit_square_grid(3, 3, degree, 1.0).unwrap().refined(4);
        group.bench_with_input(BenchmarkId::new("interior_patch", degree), &mp, |b, mp| {
            b.iter(|| assemble_patch(mp, 4, default_penalty(degree), &ZeroData).unwrap())
        });
    }
    group.finish();
}

pub fn interface_operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("interface");
    group.sample_size(20);
    for levels in [3, 4] {
        let mp = unit_square_grid(4, 4, 2, 1.0).unwrap().refined(levels);
        let problem = DgProblem::assemble(mp, None, &SourceFn(source)).unwrap();
        let ieti = IetiDp::build(&problem).unwrap();
        let lambda: Vec<f64> = (0..ieti.num_multipliers()).map(|i| (i as f64).sin()).collect();
        group.bench_with_input(BenchmarkId::new("apply_f", levels), &lambda, |b, l| {
            b.iter(|| ieti.apply_f(black_box(l)))
        });
        group.bench_with_input(BenchmarkId::new("apply_preconditioner", levels), &lambda, |b, l| {
            b.iter(|| ieti.apply_preconditioner(black_box(l)))
        });
    }
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    basis(c);
    assembly(c);
    interface_operator(c);
}
