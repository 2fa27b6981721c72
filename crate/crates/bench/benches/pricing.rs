use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use informed_bench::{atm_call, chain, market};
use informed_core::diffusion::{feynman_kac_price, ParamCurves};
use informed_core::informed::enhanced_lattice_step;
use informed_core::lattice::{backward_induction, price_on_tree, Lattice, LatticeKind};
use informed_core::{
    bsm_call, implied_surface, BsmInputs, CalibrationProblem, DyConvention, InformedTraderSpec, KsrfForm, McConfig,
    Target, TreeModel,
};

fn trees(c: &mut Criterion) {
    let call = atm_call();
    let mut g = c.benchmark_group("tree");
    for n in [252usize, 2_520, 10_000] {
        let m = market(n);
        g.bench_with_input(BenchmarkId::new("crr", n), &n, |b, &n| {
            b.iter(|| price_on_tree(TreeModel::Crr, 100.0, &m, &call, black_box(n)).unwrap())
        });
        let ksrf = TreeModel::Ksrf {
            p: 0.3,
            form: KsrfForm::FirstOrder,
        };
        g.bench_with_input(BenchmarkId::new("ksrf", n), &n, |b, &n| {
            b.iter(|| price_on_tree(ksrf, 100.0, &m, &call, black_box(n)).unwrap())
        });
    }
    let m = market(10_000).with_mu(0.09).unwrap();
    let step = enhanced_lattice_step(&m, &InformedTraderSpec::new(0.2).unwrap(), 0.5).unwrap();
    g.bench_function("enhanced/10000", |b| {
        b.iter(|| {
            let l = Lattice::uniform(100.0, step, 10_000, m.dt, LatticeKind::KsrfFirstOrder).unwrap();
            backward_induction(&l, &call, m.r).unwrap()
        })
    });
    g.finish();
}

fn closed_form(c: &mut Criterion) {
    let inp = BsmInputs::new(100.0, 100.0, 1.0, 0.01, 0.2, 0.03).unwrap();
    c.bench_function("bsm_call", |b| {
        b.iter(|| bsm_call(black_box(&inp), DyConvention::PdeConsistent).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let curves = ParamCurves::constant(0.06, 0.2, 0.02, 0.5, 0.0, 1.0).unwrap();
    let call = atm_call();
    let mut g = c.benchmark_group("feynman_kac");
    g.sample_size(10);
    g.bench_function("100k_paths_50_steps", |b| {
        let cfg = McConfig {
            paths: 100_000,
            steps: 50,
            seed: 1,
        };
        b.iter(|| feynman_kac_price(100.0, &curves, |_| 0.05, &call, cfg).unwrap())
    });
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let m = market(252);
    let quotes = chain(|k, t| {
        let call = informed_core::OptionSpec::call(k, t).unwrap();
        let n = (t * 252.0).round() as usize;
        let model = TreeModel::Ksrf {
            p: 0.5,
            form: KsrfForm::FirstOrder,
        };
        price_on_tree(model, 100.0, &m.with_mu(0.02).unwrap(), &call, n).unwrap()
    });
    let prob = CalibrationProblem::new(quotes, m, Target::Mu);
    let mut g = c.benchmark_group("calibration");
    g.sample_size(10);
    g.bench_function("implied_mu_surface_9_quotes", |b| b.iter(|| implied_surface(&prob).unwrap()));
    g.finish();
}

criterion_group!(benches, trees, closed_form, monte_carlo, calibration);
criterion_main!(benches);
