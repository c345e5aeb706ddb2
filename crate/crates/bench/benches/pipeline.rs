use criterion::{criterion_group, criterion_main, Criterion};
use resopf_core::acpf::{newton_pf, PfDispatch};
use resopf_core::datagen::generate_ac;
use resopf_core::dcopf::{build_dc, solve_dc};
use resopf_core::fixtures;
use resopf_core::gnn::{prepare_scenario, Forward, GraphBatch, ModelConfig, ModelParams};

fn bench_solve_dc(c: &mut Criterion) {
    let six = fixtures::six_bus();
    let ieee57 = fixtures::ieee57_shaped();
    c.bench_function("solve_dc/six_bus", |b| {
        let sys = build_dc(&six);
        b.iter(|| solve_dc(&sys, &six).unwrap())
    });
    c.bench_function("solve_dc/ieee57_shaped", |b| {
        let sys = build_dc(&ieee57);
        b.iter(|| solve_dc(&sys, &ieee57).unwrap())
    });
}

fn bench_newton_pf(c: &mut Criterion) {
    let net = fixtures::ieee57_shaped();
    let sys = build_dc(&net);
    let sol = solve_dc(&sys, &net).unwrap();
    let dispatch = PfDispatch::with_midpoint_voltages(&net, sol.p_g_dc.clone());
    c.bench_function("newton_pf/ieee57_shaped", |b| {
        b.iter(|| newton_pf(&net, &dispatch).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let net = fixtures::six_bus();
    let graph = prepare_scenario(&net, None).unwrap();
    let config = ModelConfig::default();
    let params = ModelParams::init(config.clone());
    let batch = GraphBatch::new(vec![graph], config.y_dc_width).unwrap();
    c.bench_function("forward/six_bus_default_model", |b| {
        b.iter(|| {
            let mut tape = resopf_core::autodiff::Tape::new();
            let fwd = Forward::new(&mut tape, &params);
            fwd.run(&mut tape, &batch, config.layers)
        })
    });
}

fn bench_generate_ac(c: &mut Criterion) {
    let net = fixtures::six_bus();
    let params = ModelParams::init(ModelConfig::default());
    c.bench_function("generate_ac/six_bus", |b| {
        b.iter(|| generate_ac(&params, &net).unwrap())
    });
}

criterion_group!(
    benches,
    bench_solve_dc,
    bench_newton_pf,
    bench_forward,
    bench_generate_ac
);
criterion_main!(benches);
