use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use spinlab::clifford::CliffordModule;
use spinlab::construct::{build_solution, sample_points, surviving_chirality, Bpst, TwistorSpec};
use spinlab::fieldcalc::{integrate, QuadDomain};
use spinlab::gauge::{GaugeAlgebra, GaugeRep};
use spinlab::linalg::random_cvec;
use spinlab::par::Exec;
use spinlab::spectral::{assemble, FourierConnection, Truncation};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn spectrum(c: &mut Criterion) {
    let module = CliffordModule::new(3).unwrap();
    let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let omega = FourierConnection::random(&mut rng, 3, rep.algebra().dim(), 1, 0.3);
    let op = assemble(&omega, &Truncation::periodic(3, 2), &module, &rep).unwrap();
    let mut g = c.benchmark_group("truncated-dirac-spectrum");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| black_box(op.spectrum(e)))
        });
    }
    g.finish();
}

fn instanton_quadrature(c: &mut Criterion) {
    let bpst = Bpst::new();
    let domain = QuadDomain::Compactified { dim: 4 };
    let density = |x: &[f64]| bpst.ch2_density(x);
    let mut g = c.benchmark_group("ch2-quadrature-16");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| black_box(integrate(&density, &domain, 16, e).unwrap()))
        });
    }
    g.finish();
}

fn bpst_residuals(c: &mut Criterion) {
    let bpst = Bpst::new();
    let module = CliffordModule::new(4).unwrap();
    let positive = surviving_chirality(&bpst, &module).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = TwistorSpec::chiral(positive, &random_cvec(&mut rng, 4), &random_cvec(&mut rng, 4), &module).unwrap();
    let sol = build_solution(&bpst, &spec).unwrap();
    let points = sample_points(3, 16, 4);
    let mut g = c.benchmark_group("bpst-residual-ladder");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| {
                spinlab::construct::verify_solution(
                    &sol.connection,
                    &sol.curvature,
                    &sol.psi,
                    &points,
                    &[2e-2, 1e-2],
                    4,
                    &sol.module,
                    &sol.rep,
                    e,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, spectrum, instanton_quadrature, bpst_residuals);
criterion_main!(benches);
